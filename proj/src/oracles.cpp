#include "vsdm/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vsdm/errors.hpp"
#include "vsdm/transition_kernel.hpp"

namespace vsdm {

namespace {

Eigen::LDLT<Eigen::MatrixXd> factor_covariance(const Eigen::MatrixXd& cov) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-300) {
    throw DomainError("gaussian marginal: covariance is singular");
  }
  return ldlt;
}

}  // namespace

GaussianMarginal propagate_gaussian(const Eigen::VectorXd& m0, const Eigen::MatrixXd& s0,
                                    const BetaSchedule& schedule, const DriftMatrixGrid& drift,
                                    double t) {
  if (schedule.grid_index(t) < 0) throw DomainError("propagate_gaussian: t is not a grid point");
  return propagate_gaussian_at(m0, s0, schedule, drift, t);
}

GaussianMarginal propagate_gaussian_at(const Eigen::VectorXd& m0, const Eigen::MatrixXd& s0,
                                       const BetaSchedule& schedule, const DriftMatrixGrid& drift,
                                       double t) {
  if (m0.size() != drift.dim() || s0.rows() != drift.dim() || s0.cols() != drift.dim()) {
    throw DomainError("propagate_gaussian: dimension mismatch");
  }
  const KernelMoments k = kernel_moments(schedule, drift, t);
  GaussianMarginal out;
  out.mean = k.mean_map * m0;
  out.covariance = k.mean_map * s0 * k.mean_map.transpose() + k.covariance;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

Eigen::VectorXd gaussian_score(const GaussianMarginal& g, const Eigen::VectorXd& x) {
  if (x.size() != g.mean.size()) throw DomainError("gaussian_score: dimension mismatch");
  return -factor_covariance(g.covariance).solve(x - g.mean);
}

Eigen::MatrixXd gaussian_score_batch(const GaussianMarginal& g, const Eigen::MatrixXd& x) {
  if (x.rows() != g.mean.size()) throw DomainError("gaussian_score: dimension mismatch");
  return -factor_covariance(g.covariance).solve(x.colwise() - g.mean);
}

double gaussian_log_density(const GaussianMarginal& g, const Eigen::VectorXd& x) {
  const auto ldlt = factor_covariance(g.covariance);
  const Eigen::VectorXd r = x - g.mean;
  const double quad = r.dot(ldlt.solve(r));
  const double logdet = ldlt.vectorD().array().log().sum();
  const double d = static_cast<double>(x.size());
  return -0.5 * (quad + logdet + d * std::log(2.0 * std::numbers::pi));
}

MomentSolution integrate_moment_odes(const BetaSchedule& s, const DriftMatrixGrid& drift, double t,
                                     const Eigen::MatrixXd& s0, int min_substeps) {
  s.validate();
  if (s.grid_index(t) < 0) throw DomainError("integrate_moment_odes: t is not a grid point");
  const Eigen::Index d = drift.dim();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
  MomentSolution sol{id, s0};
  const int last = s.grid_index(t);
  const double h = s.step();

  for (int n = 0; n < last; ++n) {
    const Eigen::MatrixXd& dm = drift.d_at(n);
    const double rate = s.beta_max * std::max(1.0, dm.cwiseAbs().rowwise().sum().maxCoeff());
    const int sub = std::max(min_substeps, static_cast<int>(std::ceil(rate * h / 0.02)));
    const double dt = h / sub;

    auto f_mean = [&](double tau, const Eigen::MatrixXd& m) -> Eigen::MatrixXd {
      return -0.5 * beta_at(s, tau) * dm * m;
    };
    auto f_cov = [&](double tau, const Eigen::MatrixXd& c) -> Eigen::MatrixXd {
      const double b = beta_at(s, tau);
      return -0.5 * b * (dm * c + c * dm.transpose()) + b * id;
    };

    for (int k = 0; k < sub; ++k) {
      const double t0 = n * h + k * dt;
      const double tm = t0 + 0.5 * dt;
      const double t1 = std::min(t0 + dt, (n + 1) * h);
      {
        const Eigen::MatrixXd& m = sol.mean_map;
        const Eigen::MatrixXd k1 = f_mean(t0, m);
        const Eigen::MatrixXd k2 = f_mean(tm, m + 0.5 * dt * k1);
        const Eigen::MatrixXd k3 = f_mean(tm, m + 0.5 * dt * k2);
        const Eigen::MatrixXd k4 = f_mean(t1, m + dt * k3);
        sol.mean_map = m + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      {
        const Eigen::MatrixXd& c = sol.covariance;
        const Eigen::MatrixXd k1 = f_cov(t0, c);
        const Eigen::MatrixXd k2 = f_cov(tm, c + 0.5 * dt * k1);
        const Eigen::MatrixXd k3 = f_cov(tm, c + 0.5 * dt * k2);
        const Eigen::MatrixXd k4 = f_cov(t1, c + dt * k3);
        Eigen::MatrixXd next = c + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        sol.covariance = 0.5 * (next + next.transpose());
      }
    }
  }
  return sol;
}

}  // namespace vsdm
