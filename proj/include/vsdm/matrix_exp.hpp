#pragma once

#include <Eigen/Dense>

namespace vsdm {

// exp(A) by scaling and squaring with a degree-13 diagonal Pade approximant.
// The scaling exponent is chosen from the 1-norm so that ||A / 2^s||_1 <= theta_13.
Eigen::MatrixXd expm(const Eigen::MatrixXd& a);

}  // namespace vsdm
