#include "vsdm/transition_kernel.hpp"

#include <algorithm>
#include <cmath>

#include "vsdm/errors.hpp"
#include "vsdm/hash.hpp"
#include "vsdm/matrix_exp.hpp"

namespace vsdm {

namespace {

struct BlockState {
  Eigen::MatrixXd mean_map;
  Eigen::MatrixXd c;
  Eigen::MatrixXd h;
};

Eigen::MatrixXd block_generator(const Eigen::MatrixXd& bd, double bi) {
  const Eigen::Index d = bd.rows();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  g.topLeftCorner(d, d) = -0.5 * bd;
  g.topRightCorner(d, d) = bi * Eigen::MatrixXd::Identity(d, d);
  g.bottomRightCorner(d, d) = 0.5 * bd.transpose();
  return g;
}

void check_compatible(const BetaSchedule& s, const DriftMatrixGrid& drift) {
  if (drift.steps() != s.steps) {
    throw DomainError("drift grid has " + std::to_string(drift.steps()) +
                      " cells but the schedule has " + std::to_string(s.steps));
  }
}

void require_grid(const BetaSchedule& s, double t, const char* op) {
  if (s.grid_index(t) < 0) {
    throw DomainError(std::string(op) + ": t=" + std::to_string(t) + " is not a grid point");
  }
}

// Advances (M; C; H) across cell n from time t_lo to t_hi (t_hi <= (n+1)h).
void advance_cell(const BetaSchedule& s, const DriftMatrixGrid& drift, int n, double t_lo,
                  double t_hi, BlockState& st) {
  const Eigen::Index d = drift.dim();
  const double ds = sigma2_at(s, t_hi) - sigma2_at(s, t_lo);
  const Eigen::MatrixXd e = expm(block_generator(ds * drift.d_at(n), ds));
  st.mean_map = e.topLeftCorner(d, d) * st.mean_map;
  const Eigen::MatrixXd c = e.topLeftCorner(d, d) * st.c + e.topRightCorner(d, d) * st.h;
  st.h = e.bottomRightCorner(d, d) * st.h;
  st.c = c;
}

BlockState propagate(const BetaSchedule& s, const DriftMatrixGrid& drift, double t,
                     const Eigen::MatrixXd& sigma0, KernelMethod method) {
  s.validate();
  check_compatible(s, drift);
  const Eigen::Index d = drift.dim();
  if (sigma0.rows() != d || sigma0.cols() != d) throw DomainError("sigma0 shape mismatch");
  // Range check via sigma2_at.
  (void)sigma2_at(s, t);
  t = std::clamp(t, 0.0, s.horizon);

  BlockState st{Eigen::MatrixXd::Identity(d, d), sigma0, Eigen::MatrixXd::Identity(d, d)};
  const double h = s.step();
  if (method == KernelMethod::cellwise) {
    for (int n = 0; n < s.steps; ++n) {
      const double lo = n * h;
      if (lo >= t) break;
      advance_cell(s, drift, n, lo, std::min(t, (n + 1) * h), st);
    }
    return st;
  }

  Eigen::MatrixXd bd = Eigen::MatrixXd::Zero(d, d);
  for (int n = 0; n < s.steps; ++n) {
    const double lo = n * h;
    if (lo >= t) break;
    const double hi = std::min(t, (n + 1) * h);
    bd += (sigma2_at(s, hi) - sigma2_at(s, lo)) * drift.d_at(n);
  }
  const Eigen::MatrixXd e = expm(block_generator(bd, sigma2_at(s, t)));
  st.mean_map = e.topLeftCorner(d, d);
  st.c = e.topLeftCorner(d, d) * sigma0 + e.topRightCorner(d, d);
  st.h = e.bottomRightCorner(d, d);
  return st;
}

Eigen::MatrixXd solve_sigma(const Eigen::MatrixXd& c, const Eigen::MatrixXd& h) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h);
  const auto& sv = svd.singularValues();
  if (!h.allFinite() || !c.allFinite() || sv(sv.size() - 1) <= 1e-13 * sv(0)) {
    throw KernelError("transition kernel: H_t is numerically singular");
  }
  // C H^{-1} = (H^{-T} C^T)^T
  const Eigen::MatrixXd sigma = h.transpose().partialPivLu().solve(c.transpose()).transpose();
  return 0.5 * (sigma + sigma.transpose());
}

}  // namespace

Eigen::MatrixXd beta_d_integral(const BetaSchedule& s, const DriftMatrixGrid& drift, double t) {
  s.validate();
  check_compatible(s, drift);
  require_grid(s, t, "beta_d_integral");
  const int last = s.grid_index(t);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(drift.dim(), drift.dim());
  for (int n = 0; n < last; ++n) {
    out += (sigma2_at(s, s.time_at(n + 1)) - sigma2_at(s, s.time_at(n))) * drift.d_at(n);
  }
  return out;
}

Eigen::MatrixXd mean_map(const BetaSchedule& s, const DriftMatrixGrid& drift, double t,
                         KernelMethod method) {
  require_grid(s, t, "mean_map");
  if (method == KernelMethod::integrated) return expm(-0.5 * beta_d_integral(s, drift, t));
  return propagate(s, drift, t, Eigen::MatrixXd::Zero(drift.dim(), drift.dim()), method).mean_map;
}

CovarianceParts covariance_general(const BetaSchedule& s, const DriftMatrixGrid& drift, double t,
                                   const Eigen::MatrixXd& sigma0, KernelMethod method) {
  require_grid(s, t, "covariance_general");
  BlockState st = propagate(s, drift, t, sigma0, method);
  CovarianceParts out;
  out.sigma = solve_sigma(st.c, st.h);
  out.c = std::move(st.c);
  out.h = std::move(st.h);
  return out;
}

DiagonalKernel covariance_diagonal(const BetaSchedule& s, const Eigen::VectorXd& lambda, double t,
                                   double lambda_min) {
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (!(lambda(i) >= lambda_min)) {
      throw DomainError("covariance_diagonal: lambda[" + std::to_string(i) + "]=" +
                        std::to_string(lambda(i)) + " below floor " + std::to_string(lambda_min));
    }
  }
  const double s2 = sigma2_at(s, t);
  DiagonalKernel k;
  k.mean_diag = (-0.5 * s2 * lambda.array()).exp().matrix();
  k.chol_diag.resize(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    k.chol_diag(i) = std::sqrt(-std::expm1(-s2 * lambda(i)) / lambda(i));
  }
  return k;
}

KernelMoments kernel_moments(const BetaSchedule& s, const DriftMatrixGrid& drift, double t,
                             KernelMethod method) {
  const Eigen::Index d = drift.dim();
  BlockState st = propagate(s, drift, t, Eigen::MatrixXd::Zero(d, d), method);
  return {std::move(st.mean_map), solve_sigma(st.c, st.h)};
}

TransitionKernel TransitionKernel::from_moments(double t, Eigen::MatrixXd mean_map,
                                                Eigen::MatrixXd sigma) {
  TransitionKernel k;
  k.time = t;
  const Eigen::Index d = sigma.rows();
  k.mean_map = std::move(mean_map);
  if (t <= 0.0 || sigma.isZero(0.0)) {
    k.covariance = Eigen::MatrixXd::Zero(d, d);
    k.cholesky = Eigen::MatrixXd::Zero(d, d);
    return k;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-12 * sigma.trace() / static_cast<double>(d);
    llt.compute(sigma + jitter * Eigen::MatrixXd::Identity(d, d));
    if (llt.info() != Eigen::Success) {
      throw KernelError("transition kernel: Cholesky failed at t=" + std::to_string(t));
    }
  }
  k.cholesky = llt.matrixL();
  k.inv_chol_t = k.cholesky.triangularView<Eigen::Lower>()
                     .solve(Eigen::MatrixXd::Identity(d, d))
                     .transpose();
  k.covariance = std::move(sigma);
  return k;
}

TransitionKernel build_kernel(const BetaSchedule& s, const DriftMatrixGrid& drift, double t) {
  KernelMoments m = kernel_moments(s, drift, t);
  return TransitionKernel::from_moments(t, std::move(m.mean_map), std::move(m.covariance));
}

Eigen::VectorXd conditional_sample(const TransitionKernel& k, const Eigen::VectorXd& x0,
                                   const Eigen::VectorXd& eps) {
  if (x0.size() != k.dim() || eps.size() != k.dim()) {
    throw DomainError("conditional_sample: dimension mismatch");
  }
  return k.mean_map * x0 + k.cholesky * eps;
}

Eigen::VectorXd conditional_score(const TransitionKernel& k, const Eigen::VectorXd& xt,
                                  const Eigen::VectorXd& x0) {
  if (k.degenerate()) throw DomainError("conditional_score: Sigma_{t|0} is singular at t=0");
  if (xt.size() != k.dim() || x0.size() != k.dim()) {
    throw DomainError("conditional_score: dimension mismatch");
  }
  const Eigen::VectorXd r = xt - k.mean_map * x0;
  // -L^{-T} L^{-1} r
  const Eigen::VectorXd w = k.cholesky.triangularView<Eigen::Lower>().solve(r);
  return -(k.inv_chol_t * w);
}

KernelTable KernelTable::build(const BetaSchedule& s, const DriftMatrixGrid& drift) {
  s.validate();
  check_compatible(s, drift);
  const Eigen::Index d = drift.dim();
  KernelTable table;
  table.kernels_.reserve(static_cast<std::size_t>(s.steps));
  BlockState st{Eigen::MatrixXd::Identity(d, d), Eigen::MatrixXd::Zero(d, d),
                Eigen::MatrixXd::Identity(d, d)};
  table.kernels_.push_back(
      TransitionKernel::from_moments(0.0, st.mean_map, Eigen::MatrixXd::Zero(d, d)));
  for (int n = 1; n < s.steps; ++n) {
    advance_cell(s, drift, n - 1, s.time_at(n - 1), s.time_at(n), st);
    table.kernels_.push_back(
        TransitionKernel::from_moments(s.time_at(n), st.mean_map, solve_sigma(st.c, st.h)));
  }
  return table;
}

std::uint64_t KernelTable::checksum() const {
  Fnv1a h;
  for (const auto& k : kernels_) h.update(k.cholesky);
  return h.digest();
}

}  // namespace vsdm
