#include "vsdm/score_model.hpp"

#include <algorithm>
#include <cmath>

#include "vsdm/errors.hpp"
#include "vsdm/hash.hpp"

namespace vsdm {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Shape {
  int in;
  int out;
  std::size_t offset;  // W (row-major out x in) followed by b (out)
};

std::vector<Shape> shapes(const ModelLayout& l) {
  std::vector<Shape> s;
  std::size_t off = 0;
  int in = l.input_size();
  for (int i = 0; i <= l.layers; ++i) {
    const int out = i == l.layers ? l.dim : l.hidden;
    s.push_back({in, out, off});
    off += static_cast<std::size_t>(in) * out + out;
    in = out;
  }
  return s;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

void ModelLayout::validate() const {
  if (dim < 1) throw DomainError("model: dim must be positive");
  if (time_features < 0 || time_features % 2 != 0) {
    throw DomainError("model: time_features must be a nonnegative even number");
  }
  if (hidden < 1 || layers < 1) throw DomainError("model: hidden and layers must be positive");
}

std::size_t ModelLayout::parameter_count() const {
  const auto s = shapes(*this);
  return s.back().offset + static_cast<std::size_t>(s.back().in) * s.back().out + s.back().out;
}

ScoreModel::ScoreModel(ModelLayout layout, double horizon) : layout_(layout), horizon_(horizon) {
  layout_.validate();
  if (!(horizon > 0.0)) throw DomainError("model: horizon must be positive");
  theta_.assign(layout_.parameter_count(), 0.0);
}

ScoreModel ScoreModel::initialize(ModelLayout layout, double horizon, Rng& rng) {
  ScoreModel m(layout, horizon);
  const auto s = shapes(m.layout_);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s[i].in));
    const std::size_t count = static_cast<std::size_t>(s[i].in) * s[i].out + s[i].out;
    for (std::size_t k = 0; k < count; ++k) {
      m.theta_[s[i].offset + k] = bound * (2.0 * uniform01(rng) - 1.0);
    }
  }
  return m;
}

void ScoreModel::set_parameters(std::span<const double> theta) {
  if (theta.size() != theta_.size()) throw DomainError("model: parameter count mismatch");
  std::copy(theta.begin(), theta.end(), theta_.begin());
}

Eigen::MatrixXd ScoreModel::features(const Eigen::MatrixXd& x, const Eigen::VectorXd& t) const {
  if (x.rows() != layout_.dim) throw DomainError("model: input dimension mismatch");
  if (t.size() != x.cols()) throw DomainError("model: one time per column required");
  if (!x.allFinite() || !t.allFinite()) throw DomainError("model: non-finite input");
  const int half = layout_.time_features / 2;
  Eigen::MatrixXd f(layout_.input_size(), x.cols());
  f.topRows(layout_.dim) = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (t(j) < -1e-12 * horizon_ || t(j) > horizon_ * (1 + 1e-12)) {
      throw DomainError("model: time outside [0, T]");
    }
    const double scaled = 1000.0 * t(j) / horizon_;
    for (int k = 0; k < half; ++k) {
      const double freq =
          half > 1 ? std::exp(-std::log(10000.0) * k / static_cast<double>(half - 1)) : 1.0;
      f(layout_.dim + k, j) = std::sin(scaled * freq);
      f(layout_.dim + half + k, j) = std::cos(scaled * freq);
    }
  }
  return f;
}

Eigen::VectorXd ScoreModel::evaluate(const Eigen::VectorXd& x, double t) const {
  return evaluate_batch(Eigen::MatrixXd(x), t).col(0);
}

Eigen::MatrixXd ScoreModel::evaluate_batch(const Eigen::MatrixXd& x, double t) const {
  return evaluate_batch(x, Eigen::VectorXd::Constant(x.cols(), t));
}

Eigen::MatrixXd ScoreModel::evaluate_batch(const Eigen::MatrixXd& x, const Eigen::VectorXd& t) const {
  Eigen::MatrixXd a = features(x, t);
  const auto s = shapes(layout_);
  for (std::size_t i = 0; i < s.size(); ++i) {
    Eigen::Map<const RowMajor> w(theta_.data() + s[i].offset, s[i].out, s[i].in);
    Eigen::Map<const Eigen::VectorXd> b(theta_.data() + s[i].offset + std::size_t(s[i].out) * s[i].in,
                                        s[i].out);
    Eigen::MatrixXd z = w * a;
    z.colwise() += b;
    if (i + 1 < s.size()) {
      a = z.unaryExpr([](double v) { return v * sigmoid(v); });
    } else {
      a = std::move(z);
    }
  }
  return a;
}

Eigen::MatrixXd ScoreModel::forward_backward(
    const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
    const std::function<Eigen::MatrixXd(const Eigen::MatrixXd& out)>& seed,
    std::span<double> grad) const {
  if (grad.size() != theta_.size()) throw DomainError("model: gradient buffer size mismatch");
  const auto s = shapes(layout_);
  std::vector<Eigen::MatrixXd> acts;  // inputs to each layer
  std::vector<Eigen::MatrixXd> pre;   // pre-activations of hidden layers
  acts.reserve(s.size());
  pre.reserve(s.size());
  acts.push_back(features(x, t));
  Eigen::MatrixXd out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    Eigen::Map<const RowMajor> w(theta_.data() + s[i].offset, s[i].out, s[i].in);
    Eigen::Map<const Eigen::VectorXd> b(theta_.data() + s[i].offset + std::size_t(s[i].out) * s[i].in,
                                        s[i].out);
    Eigen::MatrixXd z = w * acts.back();
    z.colwise() += b;
    if (i + 1 < s.size()) {
      acts.push_back(z.unaryExpr([](double v) { return v * sigmoid(v); }));
      pre.push_back(std::move(z));
    } else {
      out = std::move(z);
    }
  }

  Eigen::MatrixXd delta = seed(out);
  for (std::size_t ii = s.size(); ii-- > 0;) {
    const Shape& sh = s[ii];
    Eigen::Map<RowMajor> gw(grad.data() + sh.offset, sh.out, sh.in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + sh.offset + std::size_t(sh.out) * sh.in, sh.out);
    gw.noalias() += delta * acts[ii].transpose();
    gb += delta.rowwise().sum();
    if (ii == 0) break;
    Eigen::Map<const RowMajor> w(theta_.data() + sh.offset, sh.out, sh.in);
    Eigen::MatrixXd back = w.transpose() * delta;
    const Eigen::MatrixXd& z = pre[ii - 1];
    delta = back.cwiseProduct(z.unaryExpr([](double v) {
      const double sg = sigmoid(v);
      return sg * (1.0 + v * (1.0 - sg));
    }));
  }
  return out;
}

std::uint64_t ScoreModel::checksum() const {
  Fnv1a h;
  h.update(std::span<const double>(theta_));
  return h.digest();
}

LossAndGrad dsm_loss_and_grad(const ScoreModel& model, const KernelTable& table,
                              const BetaSchedule& schedule, const Eigen::MatrixXd& x0,
                              const Eigen::MatrixXd& eps, std::span<const int> n) {
  const Eigen::Index batch = x0.cols();
  if (batch == 0) throw DomainError("dsm_loss: empty batch");
  if (eps.cols() != batch || eps.rows() != x0.rows() || static_cast<Eigen::Index>(n.size()) != batch) {
    throw DomainError("dsm_loss: batch shape mismatch");
  }
  const int d = model.layout().dim;
  Eigen::MatrixXd xt(d, batch);
  Eigen::MatrixXd target(d, batch);
  Eigen::VectorXd times(batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const int idx = n[static_cast<std::size_t>(j)];
    if (idx <= 0 || idx >= table.size()) {
      throw DomainError("dsm_loss: grid index " + std::to_string(idx) +
                        " outside [1, N-1] (the kernel is singular at n = 0)");
    }
    const TransitionKernel& k = table.at(idx);
    xt.col(j) = k.mean_map * x0.col(j) + k.cholesky * eps.col(j);
    target.col(j) = -(k.inv_chol_t * eps.col(j));
    times(j) = schedule.time_at(idx);
  }

  LossAndGrad out;
  out.grad.assign(model.parameters().size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch);
  double loss = 0.0;
  model.forward_backward(
      xt, times,
      [&](const Eigen::MatrixXd& s) {
        const Eigen::MatrixXd r = s - target;
        loss = r.squaredNorm() * inv_b;
        return Eigen::MatrixXd(2.0 * inv_b * r);
      },
      out.grad);
  out.loss = loss;
  return out;
}

LossAndGrad dsm_loss_and_grad(const ScoreModel& model, const KernelTable& table,
                              const BetaSchedule& schedule, const Eigen::MatrixXd& x0,
                              const Eigen::MatrixXd& eps, int n) {
  const std::vector<int> idx(static_cast<std::size_t>(x0.cols()), n);
  return dsm_loss_and_grad(model, table, schedule, x0, eps, idx);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw DomainError("train: batch_size must be positive");
  if (rounds < 0) throw DomainError("train: rounds must be nonnegative");
  if (!(learning_rate > 0.0)) throw DomainError("train: learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw DomainError("train: Adam moment rates must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw DomainError("train: adam_eps must be positive");
  if (!(ema_rate >= 0.0 && ema_rate < 1.0)) throw DomainError("train: ema_rate must lie in [0, 1)");
}

ScoreTrainer::ScoreTrainer(ScoreModel model, TrainConfig cfg)
    : model_(std::move(model)), cfg_(cfg) {
  cfg_.validate();
  const std::size_t p = model_.parameters().size();
  m_.assign(p, 0.0);
  v_.assign(p, 0.0);
  ema_.assign(model_.parameters().begin(), model_.parameters().end());
}

void ScoreTrainer::set_config(const TrainConfig& cfg) {
  cfg.validate();
  cfg_ = cfg;
}

ScoreModel ScoreTrainer::ema_model() const {
  if (cfg_.ema_rate <= 0.0) return model_;
  ScoreModel m = model_;
  m.set_parameters(ema_);
  return m;
}

void ScoreTrainer::apply_gradient(std::span<const double> grad) {
  auto theta = model_.parameters();
  if (grad.size() != theta.size()) throw DomainError("trainer: gradient size mismatch");
  ++step_;
  const double b1 = cfg_.adam_beta1;
  const double b2 = cfg_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double lr = cfg_.learning_rate;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    theta[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.adam_eps);
  }
  if (cfg_.ema_rate > 0.0) {
    const double k = static_cast<double>(step_);
    const double decay = std::min(cfg_.ema_rate, (1.0 + k) / (10.0 + k));
    for (std::size_t i = 0; i < theta.size(); ++i) ema_[i] = decay * ema_[i] + (1.0 - decay) * theta[i];
  } else {
    std::copy(theta.begin(), theta.end(), ema_.begin());
  }
}

std::vector<double> ScoreTrainer::train_round(const BetaSchedule& schedule, const KernelTable& table,
                                              const DataSampler& data, Rng& rng) {
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(cfg_.rounds));
  const int d = model_.layout().dim;
  std::vector<int> idx(static_cast<std::size_t>(cfg_.batch_size));
  for (int r = 0; r < cfg_.rounds; ++r) {
    const Eigen::MatrixXd x0 = data(cfg_.batch_size, rng);
    for (auto& i : idx) i = uniform_index(rng, 1, table.size() - 1);
    const Eigen::MatrixXd eps = standard_normal_matrix(rng, d, cfg_.batch_size);
    LossAndGrad lg = dsm_loss_and_grad(model_, table, schedule, x0, eps, idx);
    if (!std::isfinite(lg.loss)) throw TrainingError("train_round: non-finite DSM loss");
    apply_gradient(lg.grad);
    trace.push_back(lg.loss);
  }
  return trace;
}

void ScoreTrainer::restore(std::uint64_t step, std::vector<double> m, std::vector<double> v,
                           std::vector<double> ema) {
  const std::size_t p = model_.parameters().size();
  if (m.size() != p || v.size() != p || ema.size() != p) {
    throw DomainError("trainer: optimizer state size mismatch");
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
  ema_ = std::move(ema);
}

}  // namespace vsdm
