#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "mboot/error.hpp"

namespace mboot {

// A^{-1/2} for symmetric positive semidefinite A via eigendecomposition;
// eigenvalues below 1e-12 * lambda_max are floored to that value.
inline Eigen::MatrixXd symmetric_inverse_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  if (eig.info() != Eigen::Success) throw SingularMatrix("eigendecomposition failed");
  const double top = eig.eigenvalues().maxCoeff();
  if (!(top > 0.0)) throw SingularMatrix("matrix is not positive definite");
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(1e-12 * top);
  return eig.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

// ||M|| = max |eigenvalue| for symmetric M.
inline double spectral_norm_symmetric(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

// ||H^{-1} B^2 H^{-1}|| with H the symmetric square root of H^2.
inline double smb_value(const Eigen::MatrixXd& h2, const Eigen::MatrixXd& b2) {
  if (b2.isZero(0.0)) return 0.0;
  const Eigen::MatrixXd hinv = symmetric_inverse_sqrt(h2);
  Eigen::MatrixXd m = hinv * b2 * hinv;
  m = 0.5 * (m + m.transpose());
  return spectral_norm_symmetric(m);
}

}  // namespace mboot
