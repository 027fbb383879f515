#include "vsdm/kernel_check.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "vsdm/oracles.hpp"
#include "vsdm/rng.hpp"
#include "vsdm/transition_kernel.hpp"

namespace vsdm {

namespace {

double rel_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-300);
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

struct Instance {
  BetaSchedule schedule;
  DriftMatrixGrid drift;
  double t = 0.0;
};

Eigen::MatrixXd random_spd(Rng& rng, int d, double lo, double hi) {
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(standard_normal_matrix(rng, d, d));
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd lambda(d);
  for (int i = 0; i < d; ++i) lambda(i) = uniform(rng, lo, hi);
  return q * lambda.asDiagonal() * q.transpose();
}

Instance random_instance(Rng& rng, int d, DriftMode mode) {
  Instance in;
  in.schedule.beta_min = uniform(rng, 0.05, 0.5);
  in.schedule.beta_max = uniform(rng, 1.0, 20.0);
  in.schedule.alpha = 1.0 + 0.5 * uniform_index(rng, 0, 2);
  in.schedule.horizon = uniform(rng, 0.5, 2.0);
  in.schedule.steps = uniform_index(rng, 4, 20);
  in.drift = DriftMatrixGrid::identity(d, mode, in.schedule.steps);
  for (int s = 0; s < in.drift.slots(); ++s) {
    if (is_diagonal(mode)) {
      Eigen::VectorXd diag(d);
      for (int i = 0; i < d; ++i) diag(i) = uniform(rng, 0.2, 3.0);
      in.drift.set_d_slot(s, diag.asDiagonal());
    } else {
      const Eigen::MatrixXd g = standard_normal_matrix(rng, d, d);
      in.drift.set_d_slot(s, random_spd(rng, d, 0.2, 3.0) + 0.15 * (g - g.transpose()));
    }
  }
  in.t = in.schedule.time_at(uniform_index(rng, 1, in.schedule.steps));
  return in;
}

double log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd w = llt.matrixL().solve(x - mean);
  return -0.5 * w.squaredNorm();
}

}  // namespace

bool KernelCheckReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed(); });
}

std::string KernelCheckReport::format() const {
  std::ostringstream out;
  out << std::scientific << std::setprecision(3);
  for (const auto& c : checks) {
    out << (c.passed() ? "PASS " : "FAIL ") << std::left << std::setw(30) << c.name
        << " max_error=" << c.max_error << " tolerance=" << c.tolerance << "\n";
  }
  return out.str();
}

KernelCheckReport run_kernel_check(int instances, std::uint64_t seed, bool corrupt_symmetrization) {
  std::map<std::string, CheckResult> results;
  const auto record = [&](const std::string& name, double err, double tol) {
    auto& r = results[name];
    r.name = name;
    r.tolerance = tol;
    r.max_error = std::max(r.max_error, std::isfinite(err) ? err : HUGE_VAL);
  };

  Rng rng = make_stream(seed, 0);
  const DriftMode modes[] = {DriftMode::diagonal_invariant, DriftMode::diagonal_varying,
                             DriftMode::full_invariant};
  for (int k = 0; k < instances; ++k) {
    const int d = k == 0 ? 2 : uniform_index(rng, 1, 4);
    const DriftMode mode = modes[uniform_index(rng, 0, 2)];
    const Instance in = random_instance(rng, d, mode);
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(d, d);

    const Eigen::MatrixXd mean = mean_map(in.schedule, in.drift, in.t);
    CovarianceParts cov = covariance_general(in.schedule, in.drift, in.t, zero);
    if (corrupt_symmetrization && d >= 2) cov.sigma(0, 1) += 1e-6 * cov.sigma.norm();
    const MomentSolution ode = integrate_moment_odes(in.schedule, in.drift, in.t, zero);
    record("kernel_vs_ode_mean", rel_error(mean, ode.mean_map), 1e-6);
    record("kernel_vs_ode_covariance", rel_error(cov.sigma, ode.covariance), 1e-6);
    record("covariance_symmetry", (cov.sigma - cov.sigma.transpose()).cwiseAbs().maxCoeff(), 1e-12);

    const Eigen::MatrixXd s0 = random_spd(rng, d, 0.1, 2.0);
    const CovarianceParts from_s0 = covariance_general(in.schedule, in.drift, in.t, s0);
    const MomentSolution ode_s0 = integrate_moment_odes(in.schedule, in.drift, in.t, s0);
    record("kernel_vs_ode_initial_cov", rel_error(from_s0.sigma, ode_s0.covariance), 1e-6);

    if (mode == DriftMode::diagonal_invariant) {
      const Eigen::VectorXd lambda = in.drift.d_slot(0).diagonal();
      const DiagonalKernel diag = covariance_diagonal(in.schedule, lambda, in.t);
      const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(cov.sigma).matrixL();
      record("diagonal_vs_general", rel_error(Eigen::MatrixXd(diag.chol_diag.asDiagonal()), chol), 1e-10);
      record("diagonal_mean_vs_general", rel_error(Eigen::MatrixXd(diag.mean_diag.asDiagonal()), mean), 1e-10);
    }

    const TransitionKernel kernel = TransitionKernel::from_moments(in.t, mean, cov.sigma);
    record("cholesky_reconstruction",
           rel_error(kernel.cholesky * kernel.cholesky.transpose(), kernel.covariance), 1e-10);

    for (int j = 0; j < 4; ++j) {
      const Eigen::VectorXd x0 = standard_normal_vector(rng, d);
      const Eigen::VectorXd eps = standard_normal_vector(rng, d);
      const Eigen::VectorXd xt = conditional_sample(kernel, x0, eps);
      const Eigen::VectorXd score = conditional_score(kernel, xt, x0);
      record("whitened_noise_identity", rel_error(score, -kernel.inv_chol_t * eps), 1e-9);

      const Eigen::VectorXd mu = kernel.mean_map * x0;
      Eigen::VectorXd fd(d);
      for (int i = 0; i < d; ++i) {
        const double step = 1e-5 * std::max(1.0, std::abs(xt(i)));
        Eigen::VectorXd up = xt, down = xt;
        up(i) += step;
        down(i) -= step;
        fd(i) = (log_density(up, mu, kernel.covariance) - log_density(down, mu, kernel.covariance)) /
                (2.0 * step);
      }
      record("score_vs_finite_difference", rel_error(score, fd), 1e-5);
    }

    // Plain VP diffusion on the same schedule.
    const DriftMatrixGrid identity = DriftMatrixGrid::identity(d, mode, in.schedule.steps);
    const double s2 = sigma2_at(in.schedule, in.t);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
    record("vp_mean_closed_form",
           rel_error(mean_map(in.schedule, identity, in.t), std::exp(-0.5 * s2) * eye), 1e-10);
    record("vp_covariance_closed_form",
           rel_error(covariance_general(in.schedule, identity, in.t, zero).sigma,
                     -std::expm1(-s2) * eye),
           1e-10);
  }

  KernelCheckReport report;
  for (auto& [name, r] : results) report.checks.push_back(r);
  return report;
}

}  // namespace vsdm
