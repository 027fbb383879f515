#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vsdm/config.hpp"
#include "vsdm/sampler.hpp"
#include "vsdm/score_model.hpp"
#include "vsdm/transition_kernel.hpp"
#include "vsdm/variational_score.hpp"

namespace vsdm {

struct StageRecord {
  int stage = 0;
  double dsm_loss = 0.0;       // mean over the stage's rounds
  Eigen::VectorXd d_scale;     // beta_max * diag(D) averaged over grid cells
  double seconds = 0.0;
};

struct SaRecord {
  int stage = 0;
  int iteration = 0;
  double change = 0.0;         // |A^{(k+1)} - A^{(k)}| (Frobenius, all cells)
  Eigen::VectorXd d_scale;
};

// The staged training loop: per stage, kernel tables from the effective drift grid,
// DSM training of the score, then (VSDM only, every update_every stages and never
// after the last) a_iters_per_stage SA updates of the drift, each driven by a fresh
// batch of backward SDE trajectories. The SGM baseline is the same loop with the
// drift frozen at A = 0.
//
// Every stage draws from streams derived from (seed, stage), so a run resumed from
// a stage boundary reproduces the uninterrupted run exactly.
class TrainingRun {
 public:
  explicit TrainingRun(RunConfig cfg);

  const RunConfig& config() const { return cfg_; }
  int stages_done() const { return stages_done_; }
  bool finished() const { return stages_done_ >= cfg_.stages; }

  void run_stage();
  void run();

  const ScoreTrainer& trainer() const { return trainer_; }
  const VariationalScore& variational() const { return variational_; }
  DriftMatrixGrid drift_grid() const { return variational_.effective_drift_grid(); }
  ScoreModel sampling_model() const { return trainer_.ema_model(); }

  const std::vector<StageRecord>& stage_log() const { return stage_log_; }
  const std::vector<SaRecord>& sa_log() const { return sa_log_; }

  // Samples from the current model and effective drift.
  SampleBatch sample(int count, const SamplerConfig& sampler) const;

  // Checkpoint I/O. Loading restores model, optimizer, drift, SA counters, averaging
  // buffers and the stage counter; logs are not part of the checkpoint.
  std::string serialize() const;
  static TrainingRun deserialize(const std::string& bytes);
  void save(const std::filesystem::path& path) const;
  static TrainingRun load(const std::filesystem::path& path);

 private:
  void sa_iteration(int stage, int iteration, std::uint64_t seed, const ScoreModel& model);

  RunConfig cfg_;
  ScoreTrainer trainer_;
  VariationalScore variational_;
  int stages_done_ = 0;
  std::vector<StageRecord> stage_log_;
  std::vector<SaRecord> sa_log_;
};

// beta_max * diag(D) averaged over cells.
Eigen::VectorXd drift_scale(const DriftMatrixGrid& drift, double beta_max);

}  // namespace vsdm
