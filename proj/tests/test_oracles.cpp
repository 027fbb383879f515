#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "vsdm/errors.hpp"
#include "vsdm/kernel_check.hpp"
#include "vsdm/oracles.hpp"
#include "vsdm/rng.hpp"
#include "vsdm/transition_kernel.hpp"

using namespace vsdm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("propagate_gaussian reduces to the kernel and to the initial law") {
  const BetaSchedule s{0.1, 10.0, 1.0, 1.0, 20};
  auto g = DriftMatrixGrid::identity(2, DriftMode::diagonal_varying, 20);
  for (int n = 0; n < 20; ++n) g.set_d_slot(n, MatrixXd(Eigen::Vector2d(0.5 + 0.05 * n, 1.5).asDiagonal()));
  VectorXd x0(2);
  x0 << 1.0, -2.0;
  const double t = s.time_at(13);
  const GaussianMarginal p = propagate_gaussian(x0, MatrixXd::Zero(2, 2), s, g, t);
  const TransitionKernel k = build_kernel(s, g, t);
  CHECK(testing::rel_error(p.mean, k.mean_map * x0) < 1e-14);
  CHECK(testing::rel_error(p.covariance, k.covariance) < 1e-14);

  MatrixXd s0(2, 2);
  s0 << 2.0, 0.5, 0.5, 1.0;
  const GaussianMarginal z = propagate_gaussian(x0, s0, s, g, 0.0);
  CHECK(z.mean == x0);
  CHECK(z.covariance == s0);
  CHECK_THROWS_AS(propagate_gaussian(x0, s0, s, g, 0.033), DomainError);
}

TEST_CASE("propagated variance against forward Monte Carlo") {
  // beta = 1, T = 1, D = I: sigma^2(1) = 1; exact variance 4 e^-1 + (1 - e^-1)
  const BetaSchedule s{1.0, 1.0, 1.0, 1.0, 10};
  const auto g = DriftMatrixGrid::identity(1, DriftMode::diagonal_invariant, 10);
  const GaussianMarginal p = propagate_gaussian(VectorXd::Zero(1), MatrixXd::Constant(1, 1, 4.0), s, g, 1.0);
  CHECK(p.covariance(0, 0) == doctest::Approx(2.1036).epsilon(1e-4));

  Rng rng = make_stream(17, 0);
  const int paths = 100000, steps = 200;
  const double h = 1.0 / steps;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < paths; ++i) {
    double x = 2.0 * standard_normal(rng);
    for (int k = 0; k < steps; ++k) x += -0.5 * x * h + std::sqrt(h) * standard_normal(rng);
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / paths;
  const double var = sum2 / paths - mean * mean;
  CHECK(std::abs(var - p.covariance(0, 0)) / p.covariance(0, 0) < 0.02);
  // mean within 3 standard errors of zero
  CHECK(std::abs(mean) < 3.0 * std::sqrt(p.covariance(0, 0) / paths));
}

TEST_CASE("Monte Carlo moments of a 2-d anisotropic forward process") {
  const BetaSchedule s{0.5, 4.0, 1.0, 1.0, 8};
  auto g = DriftMatrixGrid::identity(2, DriftMode::full_invariant, 8);
  MatrixXd d(2, 2);
  d << 1.5, 0.3, 0.3, 0.6;
  g.set_d_slot(0, d);
  VectorXd m0(2);
  m0 << 1.0, -1.0;
  MatrixXd s0(2, 2);
  s0 << 1.0, 0.2, 0.2, 0.5;
  const GaussianMarginal p = propagate_gaussian(m0, s0, s, g, 1.0);

  Rng rng = make_stream(18, 0);
  const int paths = 100000, steps = 400;
  const double h = 1.0 / steps;
  const MatrixXd l0 = Eigen::LLT<MatrixXd>(s0).matrixL();
  MatrixXd x = l0 * standard_normal_matrix(rng, 2, paths);
  x.colwise() += m0;
  for (int k = 0; k < steps; ++k) {
    const double beta = beta_at(s, (k + 0.5) * h);
    x += -0.5 * beta * h * (d * x) + std::sqrt(beta * h) * standard_normal_matrix(rng, 2, paths);
  }
  const VectorXd mean = x.rowwise().mean();
  const MatrixXd centered = x.colwise() - mean;
  const MatrixXd cov = centered * centered.transpose() / (paths - 1);
  for (int i = 0; i < 2; ++i) {
    const double se = std::sqrt(p.covariance(i, i) / paths);
    CHECK(std::abs(mean(i) - p.mean(i)) < 3.0 * se + 2e-3);
    for (int j = 0; j < 2; ++j) {
      const double se_cov =
          std::sqrt((p.covariance(i, i) * p.covariance(j, j) + p.covariance(i, j) * p.covariance(i, j)) / paths);
      CHECK(std::abs(cov(i, j) - p.covariance(i, j)) < 3.0 * se_cov + 2e-3);
    }
  }
}

TEST_CASE("gaussian score") {
  GaussianMarginal g{VectorXd::Zero(2), MatrixXd::Zero(2, 2)};
  g.covariance.diagonal() << 1.0, 4.0;
  VectorXd x(2);
  x << 1.0, 4.0;
  CHECK(testing::rel_error(gaussian_score(g, x), Eigen::Vector2d(-1, -1)) < 1e-15);
  CHECK(gaussian_score(g, g.mean).isZero(0.0));

  Rng rng = make_stream(19, 0);
  GaussianMarginal h{standard_normal_vector(rng, 3), MatrixXd::Identity(3, 3)};
  const MatrixXd a = standard_normal_matrix(rng, 3, 3);
  h.covariance = a * a.transpose() + 0.5 * MatrixXd::Identity(3, 3);
  for (int k = 0; k < 10; ++k) {
    const VectorXd p = standard_normal_vector(rng, 3);
    const VectorXd fd = testing::fd_gradient([&](const VectorXd& y) { return gaussian_log_density(h, y); }, p);
    CHECK(testing::rel_error(gaussian_score(h, p), fd) <= 1e-6);
    // exactly affine
    const VectorXd delta = standard_normal_vector(rng, 3);
    const VectorXd diff = gaussian_score(h, p + delta) - gaussian_score(h, p);
    CHECK(testing::rel_error(diff, -h.covariance.ldlt().solve(delta)) < 1e-12);
  }
  const MatrixXd pts = standard_normal_matrix(rng, 3, 4);
  CHECK((gaussian_score_batch(h, pts).col(1) - gaussian_score(h, pts.col(1))).norm() < 1e-13);

  GaussianMarginal singular{VectorXd::Zero(2), MatrixXd::Zero(2, 2)};
  CHECK_THROWS_AS(gaussian_score(singular, x), DomainError);
}

TEST_CASE("moment ODEs reproduce the scalar VP formulas") {
  const BetaSchedule s{0.1, 10.0, 1.0, 1.0, 50};
  const auto g = DriftMatrixGrid::identity(3, DriftMode::diagonal_varying, 50);
  for (int n : {5, 25, 50}) {
    const double t = s.time_at(n);
    const MomentSolution m = integrate_moment_odes(s, g, t, MatrixXd::Zero(3, 3));
    const double s2 = sigma2_at(s, t);
    CHECK(testing::rel_error(m.mean_map, std::exp(-0.5 * s2) * MatrixXd::Identity(3, 3)) <= 1e-8);
    CHECK(testing::rel_error(m.covariance, -std::expm1(-s2) * MatrixXd::Identity(3, 3)) <= 1e-8);
  }
}

TEST_CASE("moment ODE covariance stays symmetric") {
  const BetaSchedule s{0.1, 10.0, 1.0, 1.0, 20};
  auto g = DriftMatrixGrid::identity(3, DriftMode::full_varying, 20);
  Rng rng = make_stream(20, 0);
  for (int n = 0; n < 20; ++n) g.set_d_slot(n, MatrixXd::Identity(3, 3) + 0.3 * standard_normal_matrix(rng, 3, 3));
  const MomentSolution m = integrate_moment_odes(s, g, 1.0, MatrixXd::Identity(3, 3));
  CHECK((m.covariance - m.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("kernel and moment ODEs agree on 50 random commuting instances") {
  const KernelCheckReport r = run_kernel_check(50, 7);
  for (const auto& c : r.checks) {
    CAPTURE(c.name);
    CHECK(c.max_error <= c.tolerance);
  }
  CHECK(r.passed());
  CHECK_FALSE(run_kernel_check(5, 7, true).passed());
}
