#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "vsdm/drift_grid.hpp"
#include "vsdm/schedule.hpp"

namespace vsdm {

inline constexpr double kDefaultLambdaMin = 1e-3;

// How the linear ODE for (C_t; H_t) is solved over [0, t].
//   cellwise:   product of per-cell block exponentials. Exact for any
//               piecewise-constant drift, commuting or not.
//   integrated: a single exponential of the integrated generator
//               [[-1/2 [bD]_t, [bI]_t], [0, 1/2 [bD^T]_t]]. Exact only when
//               the drift is time-invariant.
enum class KernelMethod { cellwise, integrated };

// [beta D]_t = int_0^t beta_s D_s ds with D constant on each cell. t must be a grid point.
Eigen::MatrixXd beta_d_integral(const BetaSchedule& schedule, const DriftMatrixGrid& drift, double t);

// M_t with mu_{t|0} = M_t x0. t must be a grid point.
Eigen::MatrixXd mean_map(const BetaSchedule& schedule, const DriftMatrixGrid& drift, double t,
                         KernelMethod method = KernelMethod::cellwise);

struct CovarianceParts {
  Eigen::MatrixXd c;      // C_t
  Eigen::MatrixXd h;      // H_t
  Eigen::MatrixXd sigma;  // C_t H_t^{-1}, symmetrized
};

// Covariance of x_t started from N(., sigma0). With sigma0 = 0 this is Sigma_{t|0}.
// t must be a grid point. Throws KernelError if H_t is numerically singular.
CovarianceParts covariance_general(const BetaSchedule& schedule, const DriftMatrixGrid& drift,
                                   double t, const Eigen::MatrixXd& sigma0,
                                   KernelMethod method = KernelMethod::cellwise);

struct DiagonalKernel {
  Eigen::VectorXd mean_diag;  // exp(-1/2 sigma_t^2 lambda_i)
  Eigen::VectorXd chol_diag;  // sqrt((1 - exp(-sigma_t^2 lambda_i)) / lambda_i)
};

// Closed form for D = diag(lambda) constant in time; no matrix exponential.
DiagonalKernel covariance_diagonal(const BetaSchedule& schedule, const Eigen::VectorXd& lambda,
                                   double t, double lambda_min = kDefaultLambdaMin);

// Mean map and Sigma_{t|0} at any t in [0, T] (partial cells integrate beta exactly).
struct KernelMoments {
  Eigen::MatrixXd mean_map;
  Eigen::MatrixXd covariance;
};
KernelMoments kernel_moments(const BetaSchedule& schedule, const DriftMatrixGrid& drift, double t,
                             KernelMethod method = KernelMethod::cellwise);

struct TransitionKernel {
  double time = 0.0;
  Eigen::MatrixXd mean_map;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd cholesky;    // lower triangular, L L^T = Sigma
  Eigen::MatrixXd inv_chol_t;  // L^{-T}; empty at t = 0

  int dim() const { return static_cast<int>(mean_map.rows()); }
  bool degenerate() const { return inv_chol_t.size() == 0; }

  // Factorizes sigma. A failed Cholesky is retried once with 1e-12 tr(sigma)/d jitter.
  static TransitionKernel from_moments(double t, Eigen::MatrixXd mean_map, Eigen::MatrixXd sigma);
};

TransitionKernel build_kernel(const BetaSchedule& schedule, const DriftMatrixGrid& drift, double t);

// M_t x0 + L_t eps.
Eigen::VectorXd conditional_sample(const TransitionKernel& kernel, const Eigen::VectorXd& x0,
                                   const Eigen::VectorXd& eps);

// -Sigma^{-1} (x_t - M_t x0). Throws DomainError for a degenerate (t = 0) kernel.
Eigen::VectorXd conditional_score(const TransitionKernel& kernel, const Eigen::VectorXd& xt,
                                  const Eigen::VectorXd& x0);

// Kernels at every grid index n = 0..N-1, built once per drift grid.
class KernelTable {
 public:
  KernelTable() = default;
  static KernelTable build(const BetaSchedule& schedule, const DriftMatrixGrid& drift);

  const TransitionKernel& at(int n) const { return kernels_.at(static_cast<std::size_t>(n)); }
  int size() const { return static_cast<int>(kernels_.size()); }
  bool empty() const { return kernels_.empty(); }

  // FNV-1a over the bytes of every L_t; changes whenever the tables are rebuilt
  // from a different drift grid.
  std::uint64_t checksum() const;

 private:
  std::vector<TransitionKernel> kernels_;
};

}  // namespace vsdm
