#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "vsdm/datasets.hpp"
#include "vsdm/sampler.hpp"
#include "vsdm/schedule.hpp"
#include "vsdm/score_model.hpp"
#include "vsdm/variational_score.hpp"

namespace vsdm {

// Everything a run needs, read from an INI file:
//
//   [run]          name, seed, out, checkpoint_every
//   [data]         kind, stretch, noise, mean, covariance (row-major)
//   [schedule]     beta_min, beta_max, horizon, alpha, steps
//   [drift]        method (vsdm | sgm), mode, parametrization, lambda_min, zeta,
//                  sa_amplitude, sa_offset, sa_exponent, averaging, averaging_rate,
//                  update_every, stages, a_iters_per_stage, sa_batch
//   [model]        time_features, hidden, layers
//   [train]        batch_size, rounds, learning_rate, adam_beta1, adam_beta2,
//                  adam_eps, ema_rate
//   [sample]       mode, nfe, count, trajectories
//   [eval]         data_count, permutations
//   [kernel_check] instances, corrupt_symmetrization
//
// Vectors are comma separated. Unknown sections or keys are rejected.
struct RunConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  std::string out = "out";
  int checkpoint_every = 0;  // 0: only the final checkpoint

  Dataset data{};
  BetaSchedule schedule{};

  bool adaptive = true;  // false: A = 0 throughout, no SA (the SGM baseline)
  VariationalConfig variational{};
  int stages = 20;
  int update_every = 1;
  int sa_iters = 100;
  int sa_batch = 256;

  ModelLayout layout{};
  TrainConfig train{};  // train.rounds is per stage; train.seed mirrors `seed`

  SamplerConfig sampler{};
  int sample_count = 1000;

  int eval_data_count = 1000;
  int eval_permutations = 200;

  int check_instances = 50;
  bool corrupt_symmetrization = false;

  void validate() const;
  // Sets the run seed and the training and sampling seeds derived from it.
  void set_seed(std::uint64_t value);
  // INI dump of every field except the output directory, in a fixed order. Parsing
  // it gives back an equal configuration; the hash is FNV-1a of it.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace vsdm
