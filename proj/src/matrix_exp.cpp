#include "vsdm/matrix_exp.hpp"

#include <cmath>

#include "vsdm/errors.hpp"

namespace vsdm {

namespace {

constexpr double kTheta13 = 5.371920351148152;

constexpr double kPade13[14] = {64764752532480000.0,
                                32382376266240000.0,
                                7771770303897600.0,
                                1187353796428800.0,
                                129060195264000.0,
                                10559470521600.0,
                                670442572800.0,
                                33522128640.0,
                                1323241920.0,
                                40840800.0,
                                960960.0,
                                16380.0,
                                182.0,
                                1.0};

}  // namespace

Eigen::MatrixXd expm(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw DomainError("expm: matrix must be square");
  const Eigen::Index n = a.rows();
  if (n == 0) return a;
  if (!a.allFinite()) throw DomainError("expm: non-finite input");

  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  if (norm1 > kTheta13) s = static_cast<int>(std::ceil(std::log2(norm1 / kTheta13)));
  const Eigen::MatrixXd x = a * std::ldexp(1.0, -s);

  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd x2 = x * x;
  const Eigen::MatrixXd x4 = x2 * x2;
  const Eigen::MatrixXd x6 = x4 * x2;
  const auto& b = kPade13;

  Eigen::MatrixXd u_inner = x6 * (b[13] * x6 + b[11] * x4 + b[9] * x2);
  u_inner += b[7] * x6 + b[5] * x4 + b[3] * x2 + b[1] * id;
  const Eigen::MatrixXd u = x * u_inner;
  Eigen::MatrixXd v = x6 * (b[12] * x6 + b[10] * x4 + b[8] * x2);
  v += b[6] * x6 + b[4] * x4 + b[2] * x2 + b[0] * id;

  Eigen::MatrixXd r = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < s; ++i) r = r * r;
  return r;
}

}  // namespace vsdm
