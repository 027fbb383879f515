#pragma once

namespace vsdm {

// Noise rate beta(t) = beta_min + (t/T)^alpha (beta_max - beta_min) on [0, T],
// discretized into `steps` uniform cells of width h = T / steps.
struct BetaSchedule {
  double beta_min = 0.1;
  double beta_max = 10.0;
  double horizon = 1.0;
  double alpha = 1.0;
  int steps = 100;

  void validate() const;

  double step() const { return horizon / steps; }
  double time_at(int n) const { return n * step(); }

  // Grid index for t, or -1 when t is not (within 1e-9 relative) a grid point.
  int grid_index(double t) const;
};

double beta_at(const BetaSchedule& schedule, double t);

// sigma^2(t) = int_0^t beta(s) ds, in closed form.
double sigma2_at(const BetaSchedule& schedule, double t);

}  // namespace vsdm
