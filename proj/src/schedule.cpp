#include "vsdm/schedule.hpp"

#include <cmath>
#include <string>

#include "vsdm/errors.hpp"

namespace vsdm {

namespace {

double normalized_time(const BetaSchedule& s, double t, const char* op) {
  const double slack = 1e-12 * s.horizon;
  if (!(t >= -slack && t <= s.horizon + slack)) {
    throw DomainError(std::string(op) + ": t=" + std::to_string(t) + " outside [0, " +
                      std::to_string(s.horizon) + "]");
  }
  if (t <= 0.0) return 0.0;
  if (t >= s.horizon) return 1.0;
  return t / s.horizon;
}

}  // namespace

void BetaSchedule::validate() const {
  if (!(beta_min > 0.0)) throw DomainError("schedule: beta_min must be positive");
  if (!(beta_max >= beta_min)) throw DomainError("schedule: beta_max must be >= beta_min");
  if (!(horizon > 0.0)) throw DomainError("schedule: horizon must be positive");
  if (!(alpha >= 1.0)) throw DomainError("schedule: alpha must be >= 1");
  if (steps < 2) throw DomainError("schedule: steps must be >= 2");
}

int BetaSchedule::grid_index(double t) const {
  const double pos = t / step();
  const double n = std::round(pos);
  if (n < 0 || n > steps) return -1;
  if (std::abs(pos - n) > 1e-9 * std::max(1.0, n)) return -1;
  return static_cast<int>(n);
}

double beta_at(const BetaSchedule& s, double t) {
  const double u = normalized_time(s, t, "beta_at");
  return s.beta_min + std::pow(u, s.alpha) * (s.beta_max - s.beta_min);
}

double sigma2_at(const BetaSchedule& s, double t) {
  const double u = normalized_time(s, t, "sigma2_at");
  return s.horizon * (u * s.beta_min +
                      std::pow(u, s.alpha + 1.0) / (s.alpha + 1.0) * (s.beta_max - s.beta_min));
}

}  // namespace vsdm
