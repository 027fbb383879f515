#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vsdm/sampler.hpp"

namespace vsdm {

// Numeric CSV with a mandatory header row. Lines starting with '#' are comments;
// a "# config_hash=<hex>" comment is picked up.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::string config_hash;

  int column(const std::string& name) const;  // -1 if absent
};

// Throws ParseError carrying the offending line number.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);

// Columns n, t, x_0..x_{d-1}, chain. Samples are written with n = 0 at t = 0;
// trajectories with n counting down the remaining steps.
void write_samples_csv(const std::filesystem::path& path, const SampleBatch& batch,
                       const std::string& config_hash);
void write_trajectories_csv(const std::filesystem::path& path, const SampleBatch& batch,
                            const std::string& config_hash);

// Plain matrix of data points in the same layout (n = 0, t = 0).
void write_points_csv(const std::filesystem::path& path, const Eigen::MatrixXd& points,
                      const std::string& config_hash);

// d x count points from a samples file.
Eigen::MatrixXd points_from_csv(const CsvTable& table);

struct TrajectorySet {
  std::vector<Eigen::MatrixXd> states;  // per time, d x chains
  Eigen::VectorXd times;
};
// Rebuilds per-time states; every chain must cover the same times.
TrajectorySet trajectories_from_csv(const CsvTable& table);

}  // namespace vsdm
