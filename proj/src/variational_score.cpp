#include "vsdm/variational_score.hpp"

#include <cmath>
#include <string>

#include "vsdm/errors.hpp"

namespace vsdm {

namespace {

double softplus(double r) { return r > 30.0 ? r : std::log1p(std::exp(r)); }
double sigmoid(double r) { return 1.0 / (1.0 + std::exp(-r)); }
double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

Eigen::MatrixXd householder(const Eigen::VectorXd& v) {
  const double c = v.squaredNorm();
  return Eigen::MatrixXd::Identity(v.size(), v.size()) - (2.0 / c) * v * v.transpose();
}

struct SvdFactors {
  std::vector<Eigen::MatrixXd> reflections;
  Eigen::MatrixXd u;
  Eigen::VectorXd lambda;
  Eigen::VectorXd rho;
};

SvdFactors svd_factors(std::span<const double> p, int d, double lambda_min) {
  SvdFactors f;
  f.u = Eigen::MatrixXd::Identity(d, d);
  for (int k = 0; k < d; ++k) {
    const Eigen::Map<const Eigen::VectorXd> v(p.data() + static_cast<std::ptrdiff_t>(k) * d, d);
    if (!(v.squaredNorm() > 0.0)) throw TrainingError("degenerate reflection vector");
    f.reflections.push_back(householder(v));
    f.u = f.u * f.reflections.back();
  }
  f.rho = Eigen::Map<const Eigen::VectorXd>(p.data() + static_cast<std::ptrdiff_t>(d) * d, d);
  f.lambda.resize(d);
  for (int i = 0; i < d; ++i) f.lambda(i) = lambda_min + softplus(f.rho(i));
  return f;
}

void check_batch(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z_bwd, int d) {
  if (x.cols() == 0) throw DomainError("variational loss needs a nonempty batch");
  if (x.rows() != d || z_bwd.rows() != d || z_bwd.cols() != x.cols())
    throw DomainError("variational loss: batch shape mismatch");
}

}  // namespace

void StepSizeSchedule::validate() const {
  if (!(amplitude > 0.0)) throw DomainError("step size amplitude must be positive");
  if (!(offset >= 0.0)) throw DomainError("step size offset must be nonnegative");
  if (!(exponent > 0.5 && exponent <= 1.0)) throw DomainError("step size exponent must lie in (1/2, 1]");
}

double StepSizeSchedule::at(std::uint64_t k) const {
  if (k == 0) throw DomainError("step sizes are indexed from k = 1");
  return amplitude / (std::pow(static_cast<double>(k), exponent) + offset);
}

std::string_view to_string(Parametrization p) {
  return p == Parametrization::svd ? "svd" : "diagonal-direct";
}

std::string_view to_string(AveragingMode m) {
  switch (m) {
    case AveragingMode::polyak: return "polyak";
    case AveragingMode::ema: return "ema";
    default: return "none";
  }
}

Parametrization parse_parametrization(std::string_view name) {
  if (name == "diagonal-direct") return Parametrization::diagonal_direct;
  if (name == "svd") return Parametrization::svd;
  throw DomainError("unknown parametrization '" + std::string(name) + "'");
}

AveragingMode parse_averaging(std::string_view name) {
  if (name == "none") return AveragingMode::none;
  if (name == "polyak") return AveragingMode::polyak;
  if (name == "ema") return AveragingMode::ema;
  throw DomainError("unknown averaging mode '" + std::string(name) + "'");
}

void IterateAverager::push(const Eigen::MatrixXd& a) {
  ++count_;
  if (count_ == 1 || mode_ == AveragingMode::none) {
    value_ = a;
    return;
  }
  const double w = mode_ == AveragingMode::polyak ? 1.0 / static_cast<double>(count_) : rate_;
  value_ = (1.0 - w) * value_ + w * a;
}

double gamma_zeta(const Eigen::VectorXd& z_fwd, double div_fwd, const Eigen::VectorXd& z_bwd,
                  double zeta) {
  return 0.5 * z_fwd.squaredNorm() + div_fwd + zeta * z_fwd.dot(z_bwd);
}

Eigen::VectorXd forward_drift(const DriftMatrixGrid& drift, int n, const Eigen::VectorXd& x,
                              const BetaSchedule& schedule) {
  const double beta = beta_at(schedule, schedule.time_at(n));
  return -0.5 * beta * (drift.d_at(n) * x);
}

void VariationalConfig::validate() const {
  if (!(lambda_min > 0.0 && lambda_min < 1.0)) throw DomainError("lambda_min must lie in (0, 1)");
  if (!std::isfinite(zeta)) throw DomainError("zeta must be finite");
  step_size.validate();
  if (averaging == AveragingMode::ema && !(averaging_rate > 0.0 && averaging_rate < 1.0))
    throw DomainError("ema rate must lie in (0, 1)");
  if (is_diagonal(mode) != (parametrization == Parametrization::diagonal_direct))
    throw DomainError("diagonal drift modes use diagonal-direct, full modes use svd");
}

VariationalScore::VariationalScore(int dim, int steps, VariationalConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  grid_ = DriftMatrixGrid::identity(dim, cfg_.mode, steps);
  const int slots = grid_.slots();
  std::vector<double> init;
  if (cfg_.parametrization == Parametrization::diagonal_direct) {
    init.assign(static_cast<std::size_t>(dim), 0.0);
  } else {
    // v_k = e_k gives U = -I; rho places every eigenvalue at 1.
    init.assign(static_cast<std::size_t>(dim) * (dim + 1), 0.0);
    for (int k = 0; k < dim; ++k) init[static_cast<std::size_t>(k) * dim + k] = 1.0;
    const double rho = softplus_inverse(1.0 - cfg_.lambda_min);
    for (int i = 0; i < dim; ++i) init[static_cast<std::size_t>(dim) * dim + i] = rho;
  }
  params_.assign(static_cast<std::size_t>(slots), init);
  steps_taken_.assign(static_cast<std::size_t>(slots), 0);
  averagers_.assign(static_cast<std::size_t>(slots),
                    IterateAverager(cfg_.averaging, cfg_.averaging_rate));
  for (int s = 0; s < slots; ++s) refresh_slot(s);
}

std::size_t VariationalScore::parameter_count() const {
  const auto d = static_cast<std::size_t>(dim());
  return cfg_.parametrization == Parametrization::diagonal_direct ? d : d * (d + 1);
}

DriftMatrixGrid VariationalScore::effective_drift_grid() const {
  if (cfg_.averaging == AveragingMode::none) return grid_;
  DriftMatrixGrid out = grid_;
  for (int s = 0; s < out.slots(); ++s) {
    const auto& avg = averagers_[static_cast<std::size_t>(s)];
    if (avg.count() > 0) out.set_a_slot(s, avg.value());
  }
  return out;
}

void VariationalScore::set_parameters(int slot, std::span<const double> p) {
  if (p.size() != parameter_count()) throw DomainError("parameter vector has the wrong size");
  params_.at(static_cast<std::size_t>(slot)).assign(p.begin(), p.end());
  refresh_slot(slot);
}

Eigen::MatrixXd VariationalScore::a_from_parameters(std::span<const double> p) const {
  const int d = dim();
  if (p.size() != parameter_count()) throw DomainError("parameter vector has the wrong size");
  if (cfg_.parametrization == Parametrization::diagonal_direct) {
    return Eigen::Map<const Eigen::VectorXd>(p.data(), d).asDiagonal();
  }
  const SvdFactors f = svd_factors(p, d, cfg_.lambda_min);
  const Eigen::MatrixXd dm = f.u * f.lambda.asDiagonal() * f.u.transpose();
  return a_from_d(dm);
}

double VariationalScore::loss(int n, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z_bwd,
                              const BetaSchedule& schedule) const {
  return loss(n, x, z_bwd, schedule, params_.at(static_cast<std::size_t>(slot_of(n))));
}

double VariationalScore::loss(int n, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z_bwd,
                              const BetaSchedule& schedule, std::span<const double> p) const {
  const int d = dim();
  check_batch(x, z_bwd, d);
  const Eigen::MatrixXd a = a_from_parameters(p);
  const double beta = beta_at(schedule, schedule.time_at(n));
  const double root = std::sqrt(beta);
  const double div = beta * a.trace() + 0.5 * beta * d;
  double total = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd z_fwd = root * (a * x.col(j));
    total += gamma_zeta(z_fwd, div, z_bwd.col(j), cfg_.zeta);
  }
  return total / static_cast<double>(x.cols());
}

Eigen::MatrixXd VariationalScore::loss_grad_matrix(int n, const Eigen::MatrixXd& x,
                                                   const Eigen::MatrixXd& z_bwd,
                                                   const BetaSchedule& schedule) const {
  const int d = dim();
  check_batch(x, z_bwd, d);
  const double inv_b = 1.0 / static_cast<double>(x.cols());
  const Eigen::MatrixXd sxx = inv_b * (x * x.transpose());
  const Eigen::MatrixXd szx = inv_b * (z_bwd * x.transpose());
  const double beta = beta_at(schedule, schedule.time_at(n));
  const Eigen::MatrixXd a = grid_.a_at(n);
  return beta * a * sxx + beta * Eigen::MatrixXd::Identity(d, d) + cfg_.zeta * std::sqrt(beta) * szx;
}

std::vector<double> VariationalScore::loss_grad(int n, const Eigen::MatrixXd& x,
                                                const Eigen::MatrixXd& z_bwd,
                                                const BetaSchedule& schedule) const {
  const int d = dim();
  const Eigen::MatrixXd g_a = loss_grad_matrix(n, x, z_bwd, schedule);
  std::vector<double> grad(parameter_count(), 0.0);
  if (cfg_.parametrization == Parametrization::diagonal_direct) {
    for (int i = 0; i < d; ++i) grad[static_cast<std::size_t>(i)] = g_a(i, i);
    return grad;
  }

  const auto& p = params_.at(static_cast<std::size_t>(slot_of(n)));
  const SvdFactors f = svd_factors(p, d, cfg_.lambda_min);
  const Eigen::MatrixXd g_d = -0.5 * g_a;
  const Eigen::MatrixXd rotated = f.u.transpose() * g_d * f.u;
  for (int i = 0; i < d; ++i)
    grad[static_cast<std::size_t>(d) * d + i] = rotated(i, i) * sigmoid(f.rho(i));

  const Eigen::MatrixXd g_u = (g_d + g_d.transpose()) * f.u * f.lambda.asDiagonal();
  // U = P_k H_k Q_k with P_k = H_1..H_{k-1}, Q_k = H_{k+1}..H_d.
  std::vector<Eigen::MatrixXd> suffix(static_cast<std::size_t>(d) + 1);
  suffix[static_cast<std::size_t>(d)] = Eigen::MatrixXd::Identity(d, d);
  for (int k = d - 1; k >= 0; --k)
    suffix[static_cast<std::size_t>(k)] =
        f.reflections[static_cast<std::size_t>(k)] * suffix[static_cast<std::size_t>(k) + 1];
  Eigen::MatrixXd prefix = Eigen::MatrixXd::Identity(d, d);
  for (int k = 0; k < d; ++k) {
    const Eigen::MatrixXd g_h =
        prefix.transpose() * g_u * suffix[static_cast<std::size_t>(k) + 1].transpose();
    const Eigen::Map<const Eigen::VectorXd> v(p.data() + static_cast<std::ptrdiff_t>(k) * d, d);
    const double c = v.squaredNorm();
    const Eigen::VectorXd gv =
        (-2.0 / c) * ((g_h + g_h.transpose()) * v) + (4.0 * v.dot(g_h * v) / (c * c)) * v;
    for (int i = 0; i < d; ++i) grad[static_cast<std::size_t>(k) * d + i] = gv(i);
    prefix = prefix * f.reflections[static_cast<std::size_t>(k)];
  }
  return grad;
}

Eigen::MatrixXd VariationalScore::project_parameters(std::vector<double>& p) const {
  const int d = dim();
  if (cfg_.parametrization == Parametrization::diagonal_direct) {
    Eigen::MatrixXd dm = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
      auto& a = p[static_cast<std::size_t>(i)];
      double di = 1.0 - 2.0 * a;
      if (di < cfg_.lambda_min) {
        di = cfg_.lambda_min;
        a = 0.5 * (1.0 - di);
      }
      dm(i, i) = di;
    }
    return dm;
  }
  // Eigenvalues are lambda_min + softplus(rho) > lambda_min by construction.
  const SvdFactors f = svd_factors(p, d, cfg_.lambda_min);
  Eigen::MatrixXd dm = f.u * f.lambda.asDiagonal() * f.u.transpose();
  return 0.5 * (dm + dm.transpose());
}

void VariationalScore::refresh_slot(int slot) {
  auto& p = params_.at(static_cast<std::size_t>(slot));
  for (double v : p)
    if (!std::isfinite(v)) throw TrainingError("non-finite variational parameter");
  grid_.set_d_slot(slot, project_parameters(p));
}

void VariationalScore::sa_update(int slot, std::span<const double> grad) {
  auto& p = params_.at(static_cast<std::size_t>(slot));
  if (grad.size() != p.size()) throw DomainError("gradient has the wrong size");
  auto& k = steps_taken_.at(static_cast<std::size_t>(slot));
  const double eta = cfg_.step_size.at(k + 1);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= eta * grad[i];
  refresh_slot(slot);
  ++k;
  averagers_.at(static_cast<std::size_t>(slot)).push(grid_.a_slot(slot));
}

void VariationalScore::restore_slot(int slot, std::vector<double> params, std::uint64_t steps,
                                    std::uint64_t avg_count, Eigen::MatrixXd avg_value) {
  if (params.size() != parameter_count()) throw CheckpointError("variational slot size mismatch");
  params_.at(static_cast<std::size_t>(slot)) = std::move(params);
  refresh_slot(slot);
  steps_taken_.at(static_cast<std::size_t>(slot)) = steps;
  averagers_.at(static_cast<std::size_t>(slot)).restore(avg_count, std::move(avg_value));
}

}  // namespace vsdm
