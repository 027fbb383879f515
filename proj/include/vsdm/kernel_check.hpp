#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vsdm {

struct CheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_error <= tolerance; }
};

struct KernelCheckReport {
  std::vector<CheckResult> checks;
  bool passed() const;
  std::string format() const;
};

// Cross-validates the transition kernel against the moment-ODE integrator, the
// diagonal closed form, finite-difference scores and the scalar VP formulas on
// random commuting drifts (d <= 4). `corrupt_symmetrization` perturbs every
// computed covariance off its symmetric form, which must make the run fail.
KernelCheckReport run_kernel_check(int instances, std::uint64_t seed,
                                   bool corrupt_symmetrization = false);

}  // namespace vsdm
