#include "vsdm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <string>

#include "vsdm/errors.hpp"
#include "vsdm/hash.hpp"
#include "vsdm/oracles.hpp"

namespace vsdm {

namespace {

int cell_of(const BetaSchedule& s, const DriftMatrixGrid& drift, double t) {
  const int n = static_cast<int>(std::floor(t / s.step() + 1e-9));
  return std::clamp(n, 0, drift.steps() - 1);
}

// Backward drift 1/2 beta D x + w beta s, with w = 1 (SDE) or 1/2 (ODE).
Eigen::MatrixXd backward_drift(const Eigen::MatrixXd& x, const Eigen::MatrixXd& s, double beta,
                               const Eigen::MatrixXd& d, double score_weight) {
  return 0.5 * beta * (d * x) + score_weight * beta * s;
}

Eigen::MatrixXd checked_score(const ScoreFn& score, const Eigen::MatrixXd& x, double t) {
  Eigen::MatrixXd s = score(x, t);
  if (s.rows() != x.rows() || s.cols() != x.cols())
    throw SamplerError("score function returned the wrong shape");
  if (!s.allFinite()) throw SamplerError("non-finite score at t=" + std::to_string(t));
  return s;
}

}  // namespace

std::string_view to_string(SamplerMode mode) {
  switch (mode) {
    case SamplerMode::ode_euler: return "ode-euler";
    case SamplerMode::ode_heun: return "ode-heun";
    default: return "sde";
  }
}

SamplerMode parse_sampler_mode(std::string_view name) {
  if (name == "sde") return SamplerMode::sde;
  if (name == "ode-euler") return SamplerMode::ode_euler;
  if (name == "ode-heun") return SamplerMode::ode_heun;
  throw DomainError("unknown sampler mode '" + std::string(name) + "'");
}

ScoreFn model_score(const ScoreModel& model) {
  return [&model](const Eigen::MatrixXd& x, double t) { return model.evaluate_batch(x, t); };
}

ScoreFn gaussian_oracle_score(const Eigen::VectorXd& m0, const Eigen::MatrixXd& s0,
                              const BetaSchedule& schedule, const DriftMatrixGrid& drift) {
  auto cache = std::make_shared<std::map<double, GaussianMarginal>>();
  return [=](const Eigen::MatrixXd& x, double t) {
    auto it = cache->find(t);
    if (it == cache->end())
      it = cache->emplace(t, propagate_gaussian_at(m0, s0, schedule, drift, t)).first;
    return gaussian_score_batch(it->second, x);
  };
}

Eigen::VectorXd prior_sample(const TransitionKernel& kernel, Rng& rng) {
  return kernel.cholesky * standard_normal_vector(rng, kernel.dim());
}

Eigen::VectorXd em_backward_step(const Eigen::VectorXd& x, int n, const DriftMatrixGrid& drift,
                                 const BetaSchedule& schedule, const ScoreFn& score,
                                 const Eigen::VectorXd& xi) {
  if (n < 1 || n >= drift.steps()) throw DomainError("backward step needs 1 <= n <= N-1");
  const double t = schedule.time_at(n);
  const double h = schedule.step();
  const double beta = beta_at(schedule, t);
  const Eigen::MatrixXd s = checked_score(score, x, t);
  Eigen::VectorXd out = x + h * backward_drift(x, s, beta, drift.d_at(n), 1.0) +
                        std::sqrt(beta * h) * xi;
  if (!out.allFinite()) throw SamplerError("non-finite state in backward SDE step");
  return out;
}

Eigen::VectorXd ode_backward_step(const Eigen::VectorXd& x, int n, const DriftMatrixGrid& drift,
                                  const BetaSchedule& schedule, const ScoreFn& score) {
  if (n < 1 || n >= drift.steps()) throw DomainError("backward step needs 1 <= n <= N-1");
  const double t = schedule.time_at(n);
  const double beta = beta_at(schedule, t);
  const Eigen::MatrixXd s = checked_score(score, x, t);
  Eigen::VectorXd out = x + schedule.step() * backward_drift(x, s, beta, drift.d_at(n), 0.5);
  if (!out.allFinite()) throw SamplerError("non-finite state in probability flow step");
  return out;
}

Eigen::MatrixXd SampleBatch::trajectory(int chain) const {
  if (states.empty()) throw DomainError("trajectories were not kept");
  Eigen::MatrixXd path(samples.rows(), static_cast<Eigen::Index>(states.size()));
  for (std::size_t k = 0; k < states.size(); ++k)
    path.col(static_cast<Eigen::Index>(k)) = states[k].col(chain);
  return path;
}

std::uint64_t SampleBatch::checksum() const {
  Fnv1a h;
  h.update(samples);
  for (const auto& s : states) h.update(s);
  return h.digest();
}

SampleBatch sample_batch(int count, const SamplerConfig& cfg, const BetaSchedule& schedule,
                         const DriftMatrixGrid& drift, const ScoreFn& score,
                         const Eigen::MatrixXd* initial) {
  schedule.validate();
  if (count < 0) throw DomainError("sample count must be nonnegative");
  if (drift.steps() != schedule.steps) throw DomainError("drift grid and schedule disagree on N");
  if (cfg.nfe < 0) throw DomainError("nfe must be nonnegative");
  const int d = drift.dim();
  const int n_steps = cfg.nfe == 0 ? schedule.steps - 1 : cfg.nfe;
  const double t_start = schedule.time_at(schedule.steps - 1);
  const double dt = t_start / n_steps;

  SampleBatch out;
  out.times.resize(n_steps + 1);
  for (int k = 0; k <= n_steps; ++k) out.times(k) = t_start - k * dt;
  out.times(n_steps) = 0.0;
  if (count == 0) {
    out.samples.resize(d, 0);
    return out;
  }

  std::vector<Rng> engines;
  engines.reserve(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) engines.push_back(make_stream(cfg.seed, static_cast<std::uint64_t>(c)));

  Eigen::MatrixXd x(d, count);
  if (initial != nullptr) {
    if (initial->rows() != d || initial->cols() != count)
      throw DomainError("initial states have the wrong shape");
    x = *initial;
  } else {
    const TransitionKernel prior = build_kernel(schedule, drift, t_start);
    for (int c = 0; c < count; ++c) x.col(c) = prior_sample(prior, engines[static_cast<std::size_t>(c)]);
  }
  if (cfg.keep_trajectories) out.states.push_back(x);

  const double weight = cfg.mode == SamplerMode::sde ? 1.0 : 0.5;
  std::uint64_t evaluations = 0;
  auto drift_at = [&](const Eigen::MatrixXd& y, double t) {
    ++evaluations;
    const Eigen::MatrixXd s = checked_score(score, y, t);
    return backward_drift(y, s, beta_at(schedule, t), drift.d_at(cell_of(schedule, drift, t)), weight);
  };

  for (int k = 0; k < n_steps; ++k) {
    const double t = out.times(k);
    const double t_next = out.times(k + 1);
    const double h = t - t_next;
    const Eigen::MatrixXd f = drift_at(x, t);
    switch (cfg.mode) {
      case SamplerMode::sde: {
        const double root = std::sqrt(beta_at(schedule, t) * h);
        x += h * f;
        for (int c = 0; c < count; ++c)
          x.col(c) += root * standard_normal_vector(engines[static_cast<std::size_t>(c)], d);
        break;
      }
      case SamplerMode::ode_euler:
        x += h * f;
        break;
      case SamplerMode::ode_heun: {
        const Eigen::MatrixXd predictor = x + h * f;
        if (k + 1 < n_steps) {
          x += 0.5 * h * (f + drift_at(predictor, t_next));
        } else {
          x = predictor;
        }
        break;
      }
    }
    if (!x.allFinite()) throw SamplerError("non-finite state at t=" + std::to_string(t_next));
    if (cfg.keep_trajectories) out.states.push_back(x);
  }
  out.samples = std::move(x);
  out.score_evaluations = evaluations;
  return out;
}

}  // namespace vsdm
