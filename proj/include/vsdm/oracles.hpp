#pragma once

#include <Eigen/Dense>

#include "vsdm/drift_grid.hpp"
#include "vsdm/schedule.hpp"

namespace vsdm {

// Ground truth for linear forward processes started from Gaussian data. Nothing
// here depends on the kernel tables or on the score model.

struct GaussianMarginal {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Law of x_t when x_0 ~ N(m0, s0): mean M_t m0, covariance M_t s0 M_t^T + Sigma_{t|0}.
// t must be a grid point.
GaussianMarginal propagate_gaussian(const Eigen::VectorXd& m0, const Eigen::MatrixXd& s0,
                                    const BetaSchedule& schedule, const DriftMatrixGrid& drift,
                                    double t);

// Same, for any t in [0, T].
GaussianMarginal propagate_gaussian_at(const Eigen::VectorXd& m0, const Eigen::MatrixXd& s0,
                                       const BetaSchedule& schedule, const DriftMatrixGrid& drift,
                                       double t);

// -Sigma^{-1} (x - m). Throws DomainError for a singular covariance.
Eigen::VectorXd gaussian_score(const GaussianMarginal& marginal, const Eigen::VectorXd& x);

// Batched score; columns of x are points.
Eigen::MatrixXd gaussian_score_batch(const GaussianMarginal& marginal, const Eigen::MatrixXd& x);

double gaussian_log_density(const GaussianMarginal& marginal, const Eigen::VectorXd& x);

struct MomentSolution {
  Eigen::MatrixXd mean_map;
  Eigen::MatrixXd covariance;
};

// RK4 in physical time for dM/dt = -1/2 beta D M and
// dS/dt = -1/2 beta (D S + S D^T) + beta I, from (I, s0) at t = 0.
// Each cell gets max(min_substeps, ...) substeps so that beta*|D|*dt stays small;
// S is symmetrized after every substep.
MomentSolution integrate_moment_odes(const BetaSchedule& schedule, const DriftMatrixGrid& drift,
                                     double t, const Eigen::MatrixXd& s0, int min_substeps = 20);

}  // namespace vsdm
