#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace vsdm {

enum class DriftMode { diagonal_invariant, diagonal_varying, full_invariant, full_varying };

std::string_view to_string(DriftMode mode);
DriftMode parse_drift_mode(std::string_view name);

inline bool is_diagonal(DriftMode m) {
  return m == DriftMode::diagonal_invariant || m == DriftMode::diagonal_varying;
}
inline bool is_time_varying(DriftMode m) {
  return m == DriftMode::diagonal_varying || m == DriftMode::full_varying;
}

// Piecewise-constant drift matrices D_{nh} = I - 2 A_{nh}, one per grid cell
// [nh, (n+1)h), n = 0..N-1. Time-invariant modes store a single matrix.
class DriftMatrixGrid {
 public:
  DriftMatrixGrid() = default;

  // D = I in every cell (the plain VP diffusion).
  static DriftMatrixGrid identity(int dim, DriftMode mode, int steps);

  int dim() const { return dim_; }
  int steps() const { return steps_; }
  DriftMode mode() const { return mode_; }

  // Number of independent matrices: 1 (time-invariant) or N.
  int slots() const { return static_cast<int>(d_.size()); }
  int slot_of(int n) const;

  const Eigen::MatrixXd& d_at(int n) const { return d_[slot_of(n)]; }
  Eigen::MatrixXd a_at(int n) const;

  const Eigen::MatrixXd& d_slot(int slot) const { return d_.at(slot); }
  Eigen::MatrixXd a_slot(int slot) const;
  // In diagonal modes only the diagonal of `d` is kept.
  void set_d_slot(int slot, const Eigen::MatrixXd& d);
  void set_a_slot(int slot, const Eigen::MatrixXd& a);

  // Smallest eigenvalue of the symmetric part of D over all slots.
  double min_eigenvalue() const;

  bool operator==(const DriftMatrixGrid& other) const;

 private:
  int dim_ = 0;
  int steps_ = 0;
  DriftMode mode_ = DriftMode::diagonal_invariant;
  std::vector<Eigen::MatrixXd> d_;
};

// A = (I - D) / 2 and its inverse.
Eigen::MatrixXd a_from_d(const Eigen::MatrixXd& d);
Eigen::MatrixXd d_from_a(const Eigen::MatrixXd& a);

// Smallest eigenvalue of (M + M^T) / 2.
double symmetric_min_eigenvalue(const Eigen::MatrixXd& m);

// Raise the eigenvalues of the symmetric part of D to at least lambda_min.
// Diagonal matrices are clamped entrywise; the antisymmetric part is preserved.
Eigen::MatrixXd project_to_floor(const Eigen::MatrixXd& d, double lambda_min);

}  // namespace vsdm
