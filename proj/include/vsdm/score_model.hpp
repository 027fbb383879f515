#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vsdm/rng.hpp"
#include "vsdm/transition_kernel.hpp"

namespace vsdm {

// Over-aligned parameter storage; Eigen's summation order depends on buffer alignment.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

// Fully connected score network s_theta(x, t): input [x, sinusoidal features of t/T],
// `layers` hidden layers of width `hidden` with SiLU, linear output of size dim.
struct ModelLayout {
  int dim = 2;
  int time_features = 64;
  int hidden = 128;
  int layers = 3;

  void validate() const;
  int input_size() const { return dim + time_features; }
  std::size_t parameter_count() const;
  bool operator==(const ModelLayout&) const = default;
};

class ScoreModel {
 public:
  ScoreModel() = default;
  // All parameters zero.
  ScoreModel(ModelLayout layout, double horizon);

  // Hidden layers uniform in +-1/sqrt(fan_in); output layer zero, so s = 0 initially.
  static ScoreModel initialize(ModelLayout layout, double horizon, Rng& rng);

  const ModelLayout& layout() const { return layout_; }
  double horizon() const { return horizon_; }
  std::span<const double> parameters() const { return theta_; }
  std::span<double> parameters() { return theta_; }
  void set_parameters(std::span<const double> theta);

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x, double t) const;
  // Columns of x are points, all at time t.
  Eigen::MatrixXd evaluate_batch(const Eigen::MatrixXd& x, double t) const;
  // Per-column times.
  Eigen::MatrixXd evaluate_batch(const Eigen::MatrixXd& x, const Eigen::VectorXd& t) const;

  // Forward pass on columns of x at per-column times t, then accumulates into `grad`
  // the parameter gradient of sum_j <out_grad(x_j), s(x_j, t_j)> where out_grad is
  // computed from the forward output by `seed`. Returns the forward output.
  Eigen::MatrixXd forward_backward(
      const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
      const std::function<Eigen::MatrixXd(const Eigen::MatrixXd& out)>& seed,
      std::span<double> grad) const;

  std::uint64_t checksum() const;

 private:
  struct LayerView;
  Eigen::MatrixXd features(const Eigen::MatrixXd& x, const Eigen::VectorXd& t) const;

  ModelLayout layout_{};
  double horizon_ = 1.0;
  ParamVector theta_;
};

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Mean over the batch of || -L^{-T} eps_j - s(M x0_j + L eps_j, t_{n_j}) ||^2 and its
// exact parameter gradient. Columns of x0/eps are samples; n_j in [1, N-1].
LossAndGrad dsm_loss_and_grad(const ScoreModel& model, const KernelTable& table,
                              const BetaSchedule& schedule, const Eigen::MatrixXd& x0,
                              const Eigen::MatrixXd& eps, std::span<const int> n);

// Single grid index for the whole batch.
LossAndGrad dsm_loss_and_grad(const ScoreModel& model, const KernelTable& table,
                              const BetaSchedule& schedule, const Eigen::MatrixXd& x0,
                              const Eigen::MatrixXd& eps, int n);

struct TrainConfig {
  int batch_size = 256;
  int rounds = 1000;  // optimizer steps per call to train_round
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double ema_rate = 0.999;  // 0 disables the parameter EMA
  std::uint64_t seed = 0;

  void validate() const;
};

using DataSampler = std::function<Eigen::MatrixXd(int count, Rng& rng)>;

// Model, Adam moments and parameter EMA. The EMA decay at update k is
// min(ema_rate, (1 + k) / (10 + k)).
class ScoreTrainer {
 public:
  ScoreTrainer() = default;
  ScoreTrainer(ScoreModel model, TrainConfig cfg);

  const ScoreModel& model() const { return model_; }
  ScoreModel& model() { return model_; }
  // Model carrying the EMA parameters (the raw model when the EMA is disabled).
  ScoreModel ema_model() const;
  const TrainConfig& config() const { return cfg_; }
  void set_config(const TrainConfig& cfg);

  std::uint64_t step_count() const { return step_; }

  // cfg.rounds steps of: x0 batch, per-sample grid index in [1, N-1], eps, one Adam step.
  // Returns the per-step loss trace.
  std::vector<double> train_round(const BetaSchedule& schedule, const KernelTable& table,
                                  const DataSampler& data, Rng& rng);

  // One Adam step on a precomputed gradient.
  void apply_gradient(std::span<const double> grad);

  // Raw state, for checkpoints.
  std::span<const double> adam_m() const { return m_; }
  std::span<const double> adam_v() const { return v_; }
  std::span<const double> ema_parameters() const { return ema_; }
  void restore(std::uint64_t step, std::vector<double> m, std::vector<double> v,
               std::vector<double> ema);

 private:
  ScoreModel model_;
  TrainConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<double> m_, v_, ema_;
};

}  // namespace vsdm
