#include "vsdm/datasets.hpp"

#include <cmath>
#include <numbers>

#include "vsdm/errors.hpp"

namespace vsdm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kThetaLo = kPi;
constexpr double kThetaHi = 4.0 * kPi;

// Composite Simpson over [kThetaLo, kThetaHi] of f(theta) weighted by the uniform density.
template <class F>
double spiral_expectation(F f) {
  constexpr int kPanels = 20000;
  const double h = (kThetaHi - kThetaLo) / kPanels;
  double sum = f(kThetaLo) + f(kThetaHi);
  for (int i = 1; i < kPanels; ++i) sum += (i % 2 == 1 ? 4.0 : 2.0) * f(kThetaLo + i * h);
  return sum * h / 3.0 / (kThetaHi - kThetaLo);
}

Eigen::MatrixXd raw_checkerboard(int count, Rng& rng) {
  Eigen::MatrixXd out(2, count);
  for (int j = 0; j < count; ++j) {
    const int cell = uniform_index(rng, 0, 7);
    const int row = cell / 2;
    const int col = 2 * (cell % 2) + (row % 2);  // (row + col) even
    out(0, j) = -2.0 + col + uniform01(rng);
    out(1, j) = -2.0 + row + uniform01(rng);
  }
  return out;
}

}  // namespace

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::checkerboard: return "checkerboard";
    case DatasetKind::gaussian: return "gaussian";
    default: return "spiral";
  }
}

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "spiral") return DatasetKind::spiral;
  if (name == "checkerboard") return DatasetKind::checkerboard;
  if (name == "gaussian") return DatasetKind::gaussian;
  throw DomainError("unknown dataset '" + std::string(name) + "'");
}

int Dataset::dim() const {
  return kind == DatasetKind::gaussian ? static_cast<int>(mean.size()) : 2;
}

void Dataset::validate() const {
  const int d = dim();
  if (d < 1) throw DomainError("dataset dimension must be positive");
  if (stretch.size() != d) throw DomainError("stretch must have one entry per axis");
  if (!((stretch.array() > 0.0).all() && stretch.allFinite()))
    throw DomainError("stretch entries must be positive");
  if (!(noise >= 0.0)) throw DomainError("noise must be nonnegative");
  if (kind == DatasetKind::gaussian) {
    if (covariance.rows() != d || covariance.cols() != d)
      throw DomainError("gaussian covariance shape does not match the mean");
    Eigen::LLT<Eigen::MatrixXd> llt(covariance);
    if (llt.info() != Eigen::Success) throw DomainError("gaussian covariance must be positive definite");
  }
}

AxisMoments spiral_moments(double noise) {
  const double mx = spiral_expectation([](double t) { return t / kPi * std::cos(t); });
  const double my = spiral_expectation([](double t) { return t / kPi * std::sin(t); });
  const double qx = spiral_expectation([](double t) {
    const double c = t / kPi * std::cos(t);
    return c * c;
  });
  const double qy = spiral_expectation([](double t) {
    const double s = t / kPi * std::sin(t);
    return s * s;
  });
  AxisMoments m;
  m.mean = {mx, my};
  m.stddev = {std::sqrt(qx - mx * mx + noise * noise), std::sqrt(qy - my * my + noise * noise)};
  return m;
}

Eigen::MatrixXd generate(const Dataset& dataset, int count, Rng& rng) {
  dataset.validate();
  if (count < 0) throw DomainError("sample count must be nonnegative");
  const int d = dataset.dim();
  Eigen::MatrixXd out(d, count);
  switch (dataset.kind) {
    case DatasetKind::spiral: {
      const AxisMoments m = spiral_moments(dataset.noise);
      for (int j = 0; j < count; ++j) {
        const double theta = kThetaLo + (kThetaHi - kThetaLo) * uniform01(rng);
        const double r = theta / kPi;
        const double ex = standard_normal(rng);
        const double ey = standard_normal(rng);
        out(0, j) = (r * std::cos(theta) + dataset.noise * ex - m.mean(0)) / m.stddev(0);
        out(1, j) = (r * std::sin(theta) + dataset.noise * ey - m.mean(1)) / m.stddev(1);
      }
      break;
    }
    case DatasetKind::checkerboard:
      out = raw_checkerboard(count, rng) / std::sqrt(4.0 / 3.0);
      break;
    case DatasetKind::gaussian: {
      const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(dataset.covariance).matrixL();
      out = (l * standard_normal_matrix(rng, d, count)).colwise() + dataset.mean;
      break;
    }
  }
  return dataset.stretch.asDiagonal() * out;
}

}  // namespace vsdm
