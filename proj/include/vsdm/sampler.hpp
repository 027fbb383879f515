#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vsdm/drift_grid.hpp"
#include "vsdm/rng.hpp"
#include "vsdm/schedule.hpp"
#include "vsdm/score_model.hpp"
#include "vsdm/transition_kernel.hpp"

namespace vsdm {

enum class SamplerMode { sde, ode_euler, ode_heun };

std::string_view to_string(SamplerMode mode);
SamplerMode parse_sampler_mode(std::string_view name);

// Score of the backward process at time t for the columns of x.
using ScoreFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& x, double t)>;

ScoreFn model_score(const ScoreModel& model);

// Exact marginal score when the data law is N(m0, s0).
ScoreFn gaussian_oracle_score(const Eigen::VectorXd& m0, const Eigen::MatrixXd& s0,
                              const BetaSchedule& schedule, const DriftMatrixGrid& drift);

// L eps with eps standard normal, for the kernel at the start time of sampling.
Eigen::VectorXd prior_sample(const TransitionKernel& kernel, Rng& rng);

// One step of the reverse-time SDE from nh to (n-1)h:
//   x + (1/2 beta D x + beta s(x, nh)) h + sqrt(beta h) xi
Eigen::VectorXd em_backward_step(const Eigen::VectorXd& x, int n, const DriftMatrixGrid& drift,
                                 const BetaSchedule& schedule, const ScoreFn& score,
                                 const Eigen::VectorXd& xi);

// Euler step of the probability flow ODE from nh to (n-1)h:
//   x + (1/2 beta D x + 1/2 beta s(x, nh)) h
Eigen::VectorXd ode_backward_step(const Eigen::VectorXd& x, int n, const DriftMatrixGrid& drift,
                                  const BetaSchedule& schedule, const ScoreFn& score);

struct SamplerConfig {
  SamplerMode mode = SamplerMode::sde;
  // Number of integration steps from (N-1)h down to 0; 0 means N-1 (the time grid).
  int nfe = 0;
  std::uint64_t seed = 0;
  bool keep_trajectories = false;
};

struct SampleBatch {
  Eigen::MatrixXd samples;               // d x count, states at t = 0
  Eigen::VectorXd times;                 // integration times, decreasing, last is 0
  std::vector<Eigen::MatrixXd> states;   // per time (d x count) when trajectories are kept
  std::uint64_t score_evaluations = 0;   // per sample

  int count() const { return static_cast<int>(samples.cols()); }
  // d x times.size() path of one chain.
  Eigen::MatrixXd trajectory(int chain) const;
  std::uint64_t checksum() const;
};

// `count` chains integrated backward. Chain c draws its prior and noise from its own
// engine seeded by (seed, c), so results per chain do not depend on the batch size.
// `initial` (d x count) replaces the prior draw when given.
SampleBatch sample_batch(int count, const SamplerConfig& cfg, const BetaSchedule& schedule,
                         const DriftMatrixGrid& drift, const ScoreFn& score,
                         const Eigen::MatrixXd* initial = nullptr);

}  // namespace vsdm
