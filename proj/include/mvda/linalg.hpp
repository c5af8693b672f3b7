#pragma once

// Small dense helpers shared by the scatter, eigen and subspace code.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace mvda::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// (M + M^T) / 2, exactly symmetric.
inline Matrix symmetrize(const Matrix& m) {
  Matrix out = 0.5 * (m + m.transpose());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index k = r + 1; k < out.cols(); ++k) out(k, r) = out(r, k);
  }
  return out;
}

inline Vector symmetric_eigenvalues(const Matrix& m) {
  if (m.size() == 0) return Vector();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();  // ascending
}

// max |M - M^T|, zero for exactly symmetric input.
inline double asymmetry(const Matrix& m) {
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

// Largest singular value. Symmetric inputs take the cheaper eigenvalue route.
inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == m.cols() && asymmetry(m) == 0.0) {
    const Vector ev = symmetric_eigenvalues(m);
    return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
  }
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double min_eigenvalue(const Matrix& m) {
  const Vector ev = symmetric_eigenvalues(m);
  return ev.size() ? ev(0) : 0.0;
}

inline Eigen::Index numerical_rank(const Matrix& m, double relative_tol = 1e-10) {
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s(0) == 0.0) return 0;
  return (s.array() > relative_tol * s(0)).count();
}

}  // namespace mvda::linalg
