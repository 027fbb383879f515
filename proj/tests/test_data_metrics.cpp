#include <doctest.h>

#include <cmath>

#include "vsdm/datasets.hpp"
#include "vsdm/errors.hpp"
#include "vsdm/metrics.hpp"
#include "vsdm/rng.hpp"

using namespace vsdm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Dataset shape(DatasetKind kind, double sx = 1.0, double sy = 1.0) {
  Dataset d;
  d.kind = kind;
  d.stretch = Eigen::Vector2d(sx, sy);
  return d;
}

std::vector<MatrixXd> paths_from(const std::function<double(double, int)>& f, int nodes, int chains, double h) {
  std::vector<MatrixXd> states;
  for (int k = 0; k < nodes; ++k) {
    MatrixXd m(1, chains);
    for (int c = 0; c < chains; ++c) m(0, c) = f(k * h, c);
    states.push_back(m);
  }
  return states;
}

}  // namespace

TEST_CASE("generators are standardized and deterministic") {
  for (DatasetKind kind : {DatasetKind::spiral, DatasetKind::checkerboard}) {
    Rng a = make_stream(1, 0), b = make_stream(1, 0);
    const MatrixXd x = generate(shape(kind), 100000, a);
    CHECK(x == generate(shape(kind), 100000, b));
    const VectorXd mean = x.rowwise().mean();
    const MatrixXd c = x.colwise() - mean;
    const VectorXd sd = (c.array().square().rowwise().sum() / (x.cols() - 1)).sqrt();
    CHECK(mean.cwiseAbs().maxCoeff() < 0.02);
    CHECK((sd.array() - 1.0).abs().maxCoeff() < 0.02);
  }
  Rng r = make_stream(2, 0);
  CHECK(generate(shape(DatasetKind::spiral), 0, r).cols() == 0);
  CHECK(generate(shape(DatasetKind::spiral), 0, r).rows() == 2);
}

TEST_CASE("stretch is a coordinatewise scale") {
  Rng a = make_stream(3, 0), b = make_stream(3, 0);
  const MatrixXd base = generate(shape(DatasetKind::spiral), 5000, a);
  const MatrixXd tall = generate(shape(DatasetKind::spiral, 1.0, 8.0), 5000, b);
  CHECK((tall.row(0) - base.row(0)).norm() == 0.0);
  CHECK((tall.row(1) - 8.0 * base.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  const auto sd = [](const Eigen::RowVectorXd& v) { return std::sqrt((v.array() - v.mean()).square().mean()); };
  CHECK(sd(tall.row(1)) == doctest::Approx(8.0 * sd(base.row(1))).epsilon(1e-12));
}

TEST_CASE("checkerboard-6X support") {
  Rng rng = make_stream(4, 0);
  const MatrixXd x = generate(shape(DatasetKind::checkerboard, 6.0, 1.0), 50000, rng);
  // base board [-2, 2] divided by its standard deviation sqrt(4/3)
  const double base_extent = 2.0 / std::sqrt(4.0 / 3.0);
  CHECK(x.row(0).cwiseAbs().maxCoeff() == doctest::Approx(6.0 * base_extent).epsilon(0.01));
  CHECK(x.row(1).cwiseAbs().maxCoeff() == doctest::Approx(base_extent).epsilon(0.01));
  CHECK(x.row(0).cwiseAbs().maxCoeff() <= 6.0 * base_extent);
}

TEST_CASE("gaussian dataset") {
  Dataset d;
  d.kind = DatasetKind::gaussian;
  d.mean = Eigen::Vector2d(1.0, -1.0);
  d.covariance = MatrixXd::Zero(2, 2);
  d.covariance.diagonal() << 4.0, 1.0;
  d.stretch = VectorXd::Ones(2);
  Rng rng = make_stream(5, 0);
  const MatrixXd x = generate(d, 100000, rng);
  CHECK(x.row(0).mean() == doctest::Approx(1.0).epsilon(0.02));
  const MatrixXd c = x.colwise() - x.rowwise().mean();
  const MatrixXd cov = c * c.transpose() / (x.cols() - 1.0);
  CHECK(cov(0, 0) == doctest::Approx(4.0).epsilon(0.02));
  CHECK(std::abs(cov(0, 1)) < 0.03);
  d.covariance(0, 0) = -1.0;
  CHECK_THROWS_AS(d.validate(), DomainError);
}

TEST_CASE("straightness of affine and quadratic paths") {
  const double h = 1.0 / 99.0;
  const auto affine = paths_from([](double t, int c) { return 3.0 - 2.5 * t * (c + 1); }, 100, 4, h);
  CHECK(straightness(affine, h)(0) <= 1e-9);

  const auto quad = paths_from([](double t, int) { return t * t; }, 100, 2, h);
  CHECK(std::abs(straightness(quad, h)(0) - 2.0) <= 0.02);
  for (int nodes : {3, 11, 1000}) {
    const double hh = 1.0 / (nodes - 1);
    CHECK(straightness(paths_from([](double t, int) { return t * t; }, nodes, 1, hh), hh)(0) ==
          doctest::Approx(2.0).epsilon(1e-9));
  }

  // translation invariant, linear under scaling
  const auto wavy = paths_from([](double t, int c) { return std::sin(3 * t + c); }, 50, 3, 0.02);
  auto shifted = wavy, scaled = wavy;
  for (auto& m : shifted) m.array() += 7.0;
  for (auto& m : scaled) m *= -2.5;
  const double base = straightness(wavy, 0.02)(0);
  CHECK(straightness(shifted, 0.02)(0) == doctest::Approx(base).epsilon(1e-9));
  CHECK(straightness(scaled, 0.02)(0) == doctest::Approx(2.5 * base).epsilon(1e-12));

  MatrixXd path(2, 3);
  path << 0, 1, 4, 0, 1, 2;
  const VectorXd per_axis = straightness(path, 1.0);
  CHECK(per_axis(0) == doctest::Approx(2.0 * 2.0));
  CHECK(per_axis(1) == 0.0);
  CHECK_THROWS_AS(straightness(MatrixXd(1, 2), 1.0), DomainError);
}

TEST_CASE("energy distance") {
  Rng rng = make_stream(6, 0);
  const MatrixXd a = standard_normal_matrix(rng, 2, 300);
  CHECK(energy_distance(a, a) <= 1e-12);
  const MatrixXd b = standard_normal_matrix(rng, 2, 200);
  CHECK(energy_distance(a, b) == doctest::Approx(energy_distance(b, a)).epsilon(1e-12));
  CHECK_THROWS_AS(energy_distance(a, MatrixXd(2, 0)), DomainError);

  // brute-force V-statistic
  const MatrixXd p = standard_normal_matrix(rng, 1, 40), q = standard_normal_matrix(rng, 1, 30);
  const auto mean_dist = [](const MatrixXd& u, const MatrixXd& v) {
    double s = 0.0;
    for (int i = 0; i < u.cols(); ++i)
      for (int j = 0; j < v.cols(); ++j) s += (u.col(i) - v.col(j)).norm();
    return s / (u.cols() * v.cols());
  };
  const double brute = 2 * mean_dist(p, q) - mean_dist(p, p) - mean_dist(q, q);
  CHECK(energy_distance(p, q) == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("energy permutation test at n = 10^4") {
  Rng rng = make_stream(7, 0);
  const MatrixXd x = standard_normal_matrix(rng, 1, 10000);
  const MatrixXd y = standard_normal_matrix(rng, 1, 10000);
  MatrixXd z = standard_normal_matrix(rng, 1, 10000);
  z.array() += 5.0;
  Rng perm = make_stream(7, 1);
  const PermutationTest same = energy_permutation_test(x, y, 200, perm);
  CHECK(same.statistic < same.threshold);
  const PermutationTest apart = energy_permutation_test(x, z, 200, perm);
  CHECK(apart.statistic > apart.threshold);
  CHECK(apart.statistic > 5.0);
  CHECK(apart.p_value < 0.01);
}

TEST_CASE("outer fraction") {
  MatrixXd x(2, 10);
  x.row(0) << 0, 0.5, 1, 5, 5, 5, 5, 9.2, 10, 12;
  x.row(1).setZero();
  // outer tenth of [0, 10] is [0, 1] and [9, 10], plus anything outside
  CHECK(outer_fraction(x, 0, 0.0, 10.0) == doctest::Approx(0.6));
  CHECK(outer_fraction(x, 1, -1.0, 1.0) == 0.0);
  CHECK_THROWS_AS(outer_fraction(x, 2, 0.0, 1.0), DomainError);
}
