#pragma once

// Independent dense oracles shared by the unit and acceptance tests.

#include <Eigen/Dense>
#include <random>

namespace slidewin::testing {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = dist(gen);
  return M;
}

inline Eigen::VectorXd singular_values(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return Eigen::VectorXd();
  return Eigen::BDCSVD<Eigen::MatrixXd>(M).singularValues();
}

inline double sigma_max(const Eigen::MatrixXd& M) {
  const auto s = singular_values(M);
  return s.size() ? s(0) : 0.0;
}

/// Haar-ish orthonormal m x k frame.
inline Eigen::MatrixXd orthonormal(Eigen::Index m, Eigen::Index k, std::mt19937_64& gen) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(m, k, gen));
  return qr.householderQ() * Eigen::MatrixXd::Identity(m, k);
}

/// A (m_x x k) and B (m_y x k) with A B^T = Ux diag(sigma) Uy^T exactly.
struct Prescribed {
  Eigen::MatrixXd A, B;
};

inline Prescribed with_singular_values(Eigen::Index m_x, Eigen::Index m_y, const Eigen::VectorXd& sigma,
                                       std::mt19937_64& gen) {
  const Eigen::Index k = sigma.size();
  const Eigen::MatrixXd Ux = orthonormal(m_x, k, gen);
  const Eigen::MatrixXd Uy = orthonormal(m_y, k, gen);
  // Mix the columns so the buffers are not already aligned.
  const Eigen::MatrixXd W = orthonormal(k, k, gen);
  const Eigen::VectorXd root = sigma.cwiseSqrt();
  return {Ux * root.asDiagonal() * W, Uy * root.asDiagonal() * W};
}

}  // namespace slidewin::testing
