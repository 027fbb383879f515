#pragma once

#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "vsdm/rng.hpp"

namespace vsdm {

enum class DatasetKind { spiral, checkerboard, gaussian };

std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view name);

// Synthetic 2-D shapes, standardized to zero mean and unit per-axis standard
// deviation, then multiplied coordinatewise by `stretch`. The gaussian kind draws
// N(mean, covariance) of any dimension before stretching.
struct Dataset {
  DatasetKind kind = DatasetKind::spiral;
  Eigen::VectorXd stretch = Eigen::VectorXd::Ones(2);
  double noise = 0.05;  // spiral only
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd covariance = Eigen::MatrixXd::Identity(2, 2);

  int dim() const;
  void validate() const;
};

// d x count matrix of samples.
Eigen::MatrixXd generate(const Dataset& dataset, int count, Rng& rng);

// Mean and standard deviation of the raw spiral (arm r = theta/pi, theta ~ U[pi, 4pi],
// isotropic noise), by quadrature.
struct AxisMoments {
  Eigen::Vector2d mean;
  Eigen::Vector2d stddev;
};
AxisMoments spiral_moments(double noise);

}  // namespace vsdm
