#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "vsdm/errors.hpp"
#include "vsdm/metrics.hpp"
#include "vsdm/oracles.hpp"
#include "vsdm/sampler.hpp"

using namespace vsdm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const ScoreFn zero_score = [](const MatrixXd& x, double) { return MatrixXd(MatrixXd::Zero(x.rows(), x.cols())); };

ScoreFn constant_score(double v) {
  return [v](const MatrixXd& x, double) { return MatrixXd(MatrixXd::Constant(x.rows(), x.cols(), v)); };
}

MatrixXd sample_cov(const MatrixXd& x) {
  const MatrixXd c = x.colwise() - x.rowwise().mean();
  return c * c.transpose() / static_cast<double>(x.cols() - 1);
}

}  // namespace

TEST_CASE("prior samples") {
  const BetaSchedule s{0.1, 10.0, 1.0, 1.0, 100};
  auto g = DriftMatrixGrid::identity(2, DriftMode::full_invariant, 100);
  MatrixXd d(2, 2);
  d << 0.3, 0.1, 0.1, 0.2;
  g.set_d_slot(0, d);
  const TransitionKernel k = build_kernel(s, g, s.time_at(99));
  CHECK((k.cholesky * VectorXd::Zero(2)).isZero(0.0));

  Rng rng = make_stream(1, 0);
  MatrixXd draws(2, 100000);
  for (int i = 0; i < draws.cols(); ++i) draws.col(i) = prior_sample(k, rng);
  const MatrixXd c = sample_cov(draws);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double scale = std::sqrt(k.covariance(i, i) * k.covariance(j, j));
      CHECK(std::abs(c(i, j) - k.covariance(i, j)) <= 0.03 * scale);
    }
  }

  // isotropic drift, sigma^2 large: approximately standard normal
  const auto iso = DriftMatrixGrid::identity(2, DriftMode::diagonal_invariant, 100);
  const TransitionKernel ki = build_kernel(s, iso, s.time_at(99));
  for (int i = 0; i < draws.cols(); ++i) draws.col(i) = prior_sample(ki, rng);
  CHECK((sample_cov(draws) - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 0.03);
}

TEST_CASE("single backward steps") {
  const BetaSchedule s{1.0, 1.0, 1.0, 1.0, 10};
  const auto g = DriftMatrixGrid::identity(1, DriftMode::diagonal_invariant, 10);
  VectorXd x(1);
  x << 2.0;
  const VectorXd xi = VectorXd::Zero(1);
  // (beta=1, D=1, x=2, s=-1, h=0.1): 2 + (1 - 1) 0.1 = 2
  CHECK(em_backward_step(x, 3, g, s, constant_score(-1.0), xi)(0) == doctest::Approx(2.0).epsilon(1e-15));
  // score-free step expands by 1 + beta h / 2 (reverse time)
  CHECK(em_backward_step(x, 3, g, s, zero_score, xi)(0) == doctest::Approx(2.0 * (1 + 0.05)).epsilon(1e-15));
  CHECK(ode_backward_step(x, 3, g, s, zero_score)(0) == doctest::Approx(2.0 * (1 + 0.05)).epsilon(1e-15));
  // probability flow halves the score term: 2 + (1 - 0.5) 0.1
  CHECK(ode_backward_step(x, 3, g, s, constant_score(-1.0))(0) == doctest::Approx(2.05).epsilon(1e-15));
  VectorXd noise(1);
  noise << 1.5;
  CHECK(em_backward_step(x, 3, g, s, zero_score, noise)(0) ==
        doctest::Approx(2.1 + std::sqrt(0.1) * 1.5).epsilon(1e-15));

  CHECK_THROWS_AS(em_backward_step(x, 0, g, s, zero_score, xi), DomainError);
  CHECK_THROWS_AS(em_backward_step(x, 3, g, s, constant_score(std::nan("")), xi), SamplerError);
  CHECK_THROWS_AS(ode_backward_step(x, 10, g, s, zero_score), DomainError);
}

TEST_CASE("batch sampler matches single steps on the time grid") {
  const BetaSchedule s{0.1, 10.0, 1.0, 1.0, 10};
  auto g = DriftMatrixGrid::identity(2, DriftMode::diagonal_varying, 10);
  for (int n = 0; n < 10; ++n) g.set_d_slot(n, MatrixXd(Eigen::Vector2d(1.0 + 0.1 * n, 0.7).asDiagonal()));
  const ScoreFn score = [](const MatrixXd& x, double t) { return MatrixXd(-x * (1.0 + t)); };
  SamplerConfig cfg{SamplerMode::ode_euler, 0, 3, true};
  const SampleBatch b = sample_batch(4, cfg, s, g, score);
  CHECK(b.states.size() == 10);
  VectorXd x = b.states.front().col(2);
  for (int n = 9; n >= 1; --n) x = ode_backward_step(x, n, g, s, score);
  CHECK((x - b.samples.col(2)).norm() < 1e-12);
}

TEST_CASE("counting contract and determinism") {
  const BetaSchedule s{0.1, 10.0, 1.0, 1.0, 100};
  const auto g = DriftMatrixGrid::identity(2, DriftMode::diagonal_invariant, 100);
  const ScoreFn score = [](const MatrixXd& x, double) { return MatrixXd(-x); };

  SamplerConfig cfg{SamplerMode::ode_euler, 8, 5, true};
  SampleBatch b = sample_batch(6, cfg, s, g, score);
  CHECK(b.score_evaluations == 8);
  CHECK(b.times.size() == 9);
  CHECK(b.states.size() == 9);
  cfg.mode = SamplerMode::ode_heun;
  CHECK(sample_batch(6, cfg, s, g, score).score_evaluations == 15);
  cfg.mode = SamplerMode::sde;
  CHECK(sample_batch(6, cfg, s, g, score).score_evaluations == 8);

  cfg = SamplerConfig{SamplerMode::sde, 0, 5, true};
  b = sample_batch(6, cfg, s, g, score);
  CHECK(b.score_evaluations == 99);
  CHECK(b.states.size() == 100);
  for (int k = 1; k < b.times.size(); ++k) CHECK(b.times(k) < b.times(k - 1));
  CHECK(b.times(0) == doctest::Approx(0.99));
  CHECK(b.times(99) == 0.0);
  for (const auto& st : b.states) CHECK(st.allFinite());

  CHECK(sample_batch(6, cfg, s, g, score).checksum() == b.checksum());
  cfg.seed = 6;
  CHECK(sample_batch(6, cfg, s, g, score).checksum() != b.checksum());

  // chains depend only on (seed, chain), not on the batch size
  cfg.seed = 5;
  const SampleBatch wide = sample_batch(10, cfg, s, g, score);
  CHECK((wide.samples.leftCols(6) - b.samples).norm() == 0.0);

  const SampleBatch empty = sample_batch(0, cfg, s, g, score);
  CHECK(empty.count() == 0);
  CHECK(empty.samples.rows() == 2);
}

TEST_CASE("oracle score recovers Gaussian data") {
  const BetaSchedule s{0.1, 10.0, 1.0, 1.0, 100};
  const auto g = DriftMatrixGrid::identity(2, DriftMode::diagonal_invariant, 100);
  VectorXd m0(2);
  m0 << 1.0, -0.5;
  MatrixXd s0(2, 2);
  s0 << 4.0, 0.6, 0.6, 1.0;
  const ScoreFn oracle = gaussian_oracle_score(m0, s0, s, g);
  MatrixXd moments[2];
  VectorXd means[2];
  int i = 0;
  for (SamplerMode mode : {SamplerMode::sde, SamplerMode::ode_euler}) {
    // start from the exact marginal at (N-1)h so the finite-horizon prior mismatch does not enter
    const GaussianMarginal start = propagate_gaussian(m0, s0, s, g, s.time_at(99));
    Rng rng = make_stream(31, 0);
    MatrixXd init = MatrixXd(Eigen::LLT<MatrixXd>(start.covariance).matrixL()) * standard_normal_matrix(rng, 2, 10000);
    init.colwise() += start.mean;
    const SampleBatch b = sample_batch(10000, SamplerConfig{mode, 0, 32, false}, s, g, oracle, &init);
    means[i] = b.samples.rowwise().mean();
    moments[i] = sample_cov(b.samples);
    for (int r = 0; r < 2; ++r) {
      CHECK(std::abs(means[i](r) - m0(r)) <= 0.05 * std::sqrt(s0(r, r)));
      for (int c = 0; c < 2; ++c) CHECK(std::abs(moments[i](r, c) - s0(r, c)) <= 0.05 * std::sqrt(s0(r, r) * s0(c, c)));
    }
    ++i;
  }
  // ODE and SDE terminal moments agree
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c)
      CHECK(std::abs(moments[0](r, c) - moments[1](r, c)) <= 0.05 * std::sqrt(s0(r, r) * s0(c, c)));
  }
}

TEST_CASE("matched Gaussian gives straight probability flow") {
  // D = 2 keeps N(0, 1/2) stationary, so the exact flow is constant in time
  const BetaSchedule s{0.1, 10.0, 1.0, 1.0, 100};
  auto g = DriftMatrixGrid::identity(1, DriftMode::diagonal_invariant, 100);
  g.set_d_slot(0, MatrixXd::Constant(1, 1, 2.0));
  const ScoreFn oracle = gaussian_oracle_score(VectorXd::Zero(1), MatrixXd::Constant(1, 1, 0.5), s, g);
  const SampleBatch b = sample_batch(500, SamplerConfig{SamplerMode::ode_heun, 0, 8, true}, s, g, oracle);
  CHECK(straightness(b.states, s.step())(0) <= 0.05);
  CHECK(testing::rel_error(b.samples, b.states.front()) < 1e-6);
}

TEST_CASE("sampler errors") {
  const BetaSchedule s{0.1, 10.0, 1.0, 1.0, 10};
  const auto g = DriftMatrixGrid::identity(1, DriftMode::diagonal_invariant, 10);
  CHECK_THROWS_AS(sample_batch(3, SamplerConfig{}, s, g, constant_score(std::nan(""))), SamplerError);
  CHECK_THROWS_AS(sample_batch(-1, SamplerConfig{}, s, g, zero_score), DomainError);
  const auto other = DriftMatrixGrid::identity(1, DriftMode::diagonal_invariant, 12);
  CHECK_THROWS_AS(sample_batch(3, SamplerConfig{}, s, other, zero_score), DomainError);
  CHECK(parse_sampler_mode("ode-heun") == SamplerMode::ode_heun);
  CHECK_THROWS_AS(parse_sampler_mode("rk45"), DomainError);
}
