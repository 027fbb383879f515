#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vsdm/drift_grid.hpp"
#include "vsdm/schedule.hpp"

namespace vsdm {

// eta_k = amplitude / (k^exponent + offset), exponent in (1/2, 1].
struct StepSizeSchedule {
  double amplitude = 0.01;
  double offset = 0.0;
  double exponent = 0.75;

  void validate() const;
  double at(std::uint64_t k) const;
};

enum class Parametrization { diagonal_direct, svd };
enum class AveragingMode { none, polyak, ema };

std::string_view to_string(Parametrization p);
std::string_view to_string(AveragingMode m);
Parametrization parse_parametrization(std::string_view name);
AveragingMode parse_averaging(std::string_view name);

// Running average of matrix iterates A^{(1)}, A^{(2)}, ...:
//   polyak: Abar_k = (1 - 1/k) Abar_{k-1} + (1/k) A_k
//   ema:    Abar_k = (1 - rate) Abar_{k-1} + rate A_k, Abar_1 = A_1
class IterateAverager {
 public:
  IterateAverager() = default;
  IterateAverager(AveragingMode mode, double rate) : mode_(mode), rate_(rate) {}

  void push(const Eigen::MatrixXd& a);
  std::uint64_t count() const { return count_; }
  const Eigen::MatrixXd& value() const { return value_; }
  AveragingMode mode() const { return mode_; }
  void restore(std::uint64_t count, Eigen::MatrixXd value) {
    count_ = count;
    value_ = std::move(value);
  }

 private:
  AveragingMode mode_ = AveragingMode::none;
  double rate_ = 0.0;
  std::uint64_t count_ = 0;
  Eigen::MatrixXd value_;
};

// Gamma_zeta = 1/2 |z_fwd|^2 + div_fwd + zeta <z_fwd, z_bwd>.
double gamma_zeta(const Eigen::VectorXd& z_fwd, double div_fwd, const Eigen::VectorXd& z_bwd,
                  double zeta);

// Forward drift -1/2 beta x + beta A x = -1/2 beta D x at grid index n.
Eigen::VectorXd forward_drift(const DriftMatrixGrid& drift, int n, const Eigen::VectorXd& x,
                              const BetaSchedule& schedule);

struct VariationalConfig {
  DriftMode mode = DriftMode::diagonal_varying;
  Parametrization parametrization = Parametrization::diagonal_direct;
  double lambda_min = 1e-3;
  double zeta = 0.75;
  StepSizeSchedule step_size{};
  AveragingMode averaging = AveragingMode::none;
  double averaging_rate = 0.1;

  void validate() const;
};

// The time-indexed linear forward score A_t = (I - D_t) / 2 together with its
// stochastic-approximation state.
//
// Per slot (one per grid cell, or a single shared slot in time-invariant modes)
// the free parameters are
//   diagonal_direct: diag(A) (d values);
//   svd:             Householder vectors v_1..v_d and rho (d^2 + d values), with
//                    D = U diag(lambda_min + softplus(rho)) U^T, U = H(v_1)...H(v_d).
//
// The per-time loss is the batch mean of Gamma_zeta with z_fwd = sqrt(beta) A x,
// div_fwd = beta tr(A) + beta d / 2 and z_bwd supplied by the caller.
class VariationalScore {
 public:
  VariationalScore() = default;
  VariationalScore(int dim, int steps, VariationalConfig cfg);

  const VariationalConfig& config() const { return cfg_; }
  int dim() const { return grid_.dim(); }
  int slots() const { return grid_.slots(); }
  int slot_of(int n) const { return grid_.slot_of(n); }
  std::size_t parameter_count() const;

  const DriftMatrixGrid& raw_grid() const { return grid_; }
  // Averaged grid when averaging is enabled and a slot has iterates, else the raw grid.
  DriftMatrixGrid effective_drift_grid() const;

  std::span<const double> parameters(int slot) const { return params_.at(slot); }
  void set_parameters(int slot, std::span<const double> p);

  // A for a parameter vector of this parametrization.
  Eigen::MatrixXd a_from_parameters(std::span<const double> p) const;

  // Batch-mean Gamma_zeta at grid index n for the current parameters (or `p`).
  // Columns of x and z_bwd are samples.
  double loss(int n, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z_bwd,
              const BetaSchedule& schedule) const;
  double loss(int n, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z_bwd,
              const BetaSchedule& schedule, std::span<const double> p) const;

  // Gradient of loss() with respect to the slot parameters.
  std::vector<double> loss_grad(int n, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z_bwd,
                                const BetaSchedule& schedule) const;

  // Gradient with respect to the matrix A itself (before the parametrization).
  Eigen::MatrixXd loss_grad_matrix(int n, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z_bwd,
                                   const BetaSchedule& schedule) const;

  // theta <- theta - eta_{k+1} grad on `slot`, projection of D onto the lambda_min
  // floor, k <- k + 1, and an averaging update.
  void sa_update(int slot, std::span<const double> grad);

  std::uint64_t step_count(int slot) const { return steps_taken_.at(slot); }
  const IterateAverager& averager(int slot) const { return averagers_.at(slot); }

  // Checkpoint restore.
  void restore_slot(int slot, std::vector<double> params, std::uint64_t steps,
                    std::uint64_t avg_count, Eigen::MatrixXd avg_value);

 private:
  Eigen::MatrixXd project_parameters(std::vector<double>& p) const;
  void refresh_slot(int slot);

  VariationalConfig cfg_{};
  DriftMatrixGrid grid_;
  std::vector<std::vector<double>> params_;
  std::vector<std::uint64_t> steps_taken_;
  std::vector<IterateAverager> averagers_;
};

}  // namespace vsdm
