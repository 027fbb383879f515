#include "vsdm/drift_grid.hpp"

#include <algorithm>
#include <limits>

#include "vsdm/errors.hpp"

namespace vsdm {

std::string_view to_string(DriftMode mode) {
  switch (mode) {
    case DriftMode::diagonal_invariant: return "diagonal-time-invariant";
    case DriftMode::diagonal_varying: return "diagonal-time-varying";
    case DriftMode::full_invariant: return "full-time-invariant";
    case DriftMode::full_varying: return "full-time-varying";
  }
  return "unknown";
}

DriftMode parse_drift_mode(std::string_view name) {
  for (auto m : {DriftMode::diagonal_invariant, DriftMode::diagonal_varying,
                 DriftMode::full_invariant, DriftMode::full_varying}) {
    if (name == to_string(m)) return m;
  }
  throw DomainError("unknown drift mode '" + std::string(name) + "'");
}

DriftMatrixGrid DriftMatrixGrid::identity(int dim, DriftMode mode, int steps) {
  if (dim < 1) throw DomainError("drift grid: dim must be positive");
  if (steps < 1) throw DomainError("drift grid: steps must be positive");
  DriftMatrixGrid g;
  g.dim_ = dim;
  g.steps_ = steps;
  g.mode_ = mode;
  g.d_.assign(is_time_varying(mode) ? steps : 1, Eigen::MatrixXd::Identity(dim, dim));
  return g;
}

int DriftMatrixGrid::slot_of(int n) const {
  if (n < 0 || n >= steps_) {
    throw DomainError("drift grid: index " + std::to_string(n) + " outside [0, " +
                      std::to_string(steps_ - 1) + "]");
  }
  return is_time_varying(mode_) ? n : 0;
}

Eigen::MatrixXd DriftMatrixGrid::a_at(int n) const { return a_from_d(d_at(n)); }

Eigen::MatrixXd DriftMatrixGrid::a_slot(int slot) const { return a_from_d(d_slot(slot)); }

void DriftMatrixGrid::set_d_slot(int slot, const Eigen::MatrixXd& d) {
  if (d.rows() != dim_ || d.cols() != dim_) throw DomainError("drift grid: shape mismatch");
  if (!d.allFinite()) throw DomainError("drift grid: non-finite drift matrix");
  if (is_diagonal(mode_)) {
    d_.at(slot) = d.diagonal().asDiagonal();
  } else {
    d_.at(slot) = d;
  }
}

void DriftMatrixGrid::set_a_slot(int slot, const Eigen::MatrixXd& a) { set_d_slot(slot, d_from_a(a)); }

double DriftMatrixGrid::min_eigenvalue() const {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& d : d_) lo = std::min(lo, symmetric_min_eigenvalue(d));
  return lo;
}

bool DriftMatrixGrid::operator==(const DriftMatrixGrid& o) const {
  if (dim_ != o.dim_ || steps_ != o.steps_ || mode_ != o.mode_ || d_.size() != o.d_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < d_.size(); ++i) {
    if (d_[i] != o.d_[i]) return false;
  }
  return true;
}

Eigen::MatrixXd a_from_d(const Eigen::MatrixXd& d) {
  return 0.5 * (Eigen::MatrixXd::Identity(d.rows(), d.cols()) - d);
}

Eigen::MatrixXd d_from_a(const Eigen::MatrixXd& a) {
  return Eigen::MatrixXd::Identity(a.rows(), a.cols()) - 2.0 * a;
}

double symmetric_min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.isDiagonal(0.0)) return m.diagonal().minCoeff();
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

Eigen::MatrixXd project_to_floor(const Eigen::MatrixXd& d, double lambda_min) {
  if (d.isDiagonal(0.0)) {
    Eigen::MatrixXd out = d;
    for (Eigen::Index i = 0; i < d.rows(); ++i) out(i, i) = std::max(out(i, i), lambda_min);
    return out;
  }
  const Eigen::MatrixXd sym = 0.5 * (d + d.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.eigenvalues().minCoeff() >= lambda_min) return d;
  const Eigen::VectorXd clamped = es.eigenvalues().cwiseMax(lambda_min);
  const Eigen::MatrixXd sym_proj =
      es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  return sym_proj + 0.5 * (d - d.transpose());
}

}  // namespace vsdm
