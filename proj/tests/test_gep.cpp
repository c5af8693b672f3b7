#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "mvda/gep.hpp"
#include "mvda/linalg.hpp"
#include "test_util.hpp"

using namespace mvda;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace {

// Eigenvalues of (S + eps I)^{-1} D by a general (nonsymmetric) solver,
// descending.
std::vector<double> inverse_oracle(const Matrix& D, const Matrix& S, double eps) {
  Matrix B = S;
  B.diagonal().array() += eps;
  const Matrix M = B.inverse() * D;
  Eigen::EigenSolver<Matrix> es(M, false);
  std::vector<double> out;
  for (Eigen::Index k = 0; k < M.rows(); ++k) out.push_back(es.eigenvalues()(k).real());
  std::sort(out.rbegin(), out.rend());
  return out;
}

}  // namespace

TEST(Gep, IdentityPair) {
  const Matrix I = Matrix::Identity(4, 4);
  const auto sol = gep::solve_regularized(I, I, 0.1, 2);
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_NEAR(sol.eigenvalues(k), 1.0 / 1.1, 1e-14);
  EXPECT_EQ(sol.top().cols(), 2);
  EXPECT_NEAR(sol.whitened_spread, 0.0, 1e-14);
}

TEST(Gep, DiagonalPair) {
  Matrix D = Matrix::Zero(2, 2);
  D.diagonal() << 2.0, 1.0;
  const auto sol = gep::solve_regularized(D, Matrix::Identity(2, 2), 1e-12, 1);
  EXPECT_NEAR(sol.eigenvalues(0), 2.0, 1e-10);
  EXPECT_NEAR(sol.eigenvalues(1), 1.0, 1e-10);
  EXPECT_NEAR(std::abs(sol.vectors(0, 0)), 1.0, 1e-10);
  EXPECT_NEAR(sol.vectors(1, 0), 0.0, 1e-10);
  EXPECT_GT(sol.vectors(0, 0), 0.0);
}

TEST(Gep, AgreesWithExplicitInverseOracle) {
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index n = 8 + (t * 7) % 13;
    const Matrix D = testutil::random_psd(n, n, 500 + t);
    const Matrix S = testutil::random_psd(n, n, 900 + t) + Matrix::Identity(n, n);
    const double eps = 1e-3;
    const auto sol = gep::solve_regularized(D, S, eps, 3);
    const auto oracle = inverse_oracle(D, S, eps);
    for (Eigen::Index k = 0; k < n; ++k) {
      EXPECT_NEAR(sol.eigenvalues(k), oracle[static_cast<std::size_t>(k)],
                  1e-8 * std::abs(oracle[static_cast<std::size_t>(k)]))
          << "trial " << t << " k " << k;
    }
    EXPECT_LE(gep::relative_residuals(D, S, sol).maxCoeff(), 1e-10);
  }
}

TEST(Gep, ResidualsAndNormalization) {
  const Matrix D = testutil::random_psd(15, 4, 1);
  const Matrix S = testutil::random_psd(15, 10, 2);
  const double eps = 1e-4;
  const auto sol = gep::solve_regularized(D, S, eps, 4);
  Matrix B = S;
  B.diagonal().array() += eps;
  const Matrix gram = sol.vectors.transpose() * B * sol.vectors;
  EXPECT_LE((gram - Matrix::Identity(15, 15)).cwiseAbs().maxCoeff(), 1e-8);
  const double scale = linalg::spectral_norm(D) + sol.eigenvalues(0) * linalg::spectral_norm(B);
  for (Eigen::Index k = 0; k < 15; ++k) {
    const Vector z = sol.vectors.col(k);
    EXPECT_LE((D * z - sol.eigenvalues(k) * (B * z)).norm(), 1e-6 * scale * z.norm());
  }
  for (Eigen::Index k = 1; k < 15; ++k) EXPECT_GE(sol.eigenvalues(k - 1), sol.eigenvalues(k));
}

TEST(Gep, ScaleInvariance) {
  const Matrix D = testutil::random_psd(10, 3, 3);
  const Matrix S = testutil::random_psd(10, 10, 4);
  const auto a = gep::solve_regularized(D, S, 1e-3, 3);
  const auto b = gep::solve_regularized(7.0 * D, 7.0 * S, 7e-3, 3);
  for (Eigen::Index k = 0; k < 10; ++k) {
    EXPECT_NEAR(a.eigenvalues(k), b.eigenvalues(k), 1e-9 * std::max(1.0, a.eigenvalues(0)));
  }
  for (Eigen::Index k = 0; k < 3; ++k) {
    EXPECT_LE((a.vectors.col(k) - std::sqrt(7.0) * b.vectors.col(k)).norm(), 1e-7 * a.vectors.col(k).norm());
  }
}

TEST(Gep, EigenvaluesDecreaseWithRegularizer) {
  const Matrix D = testutil::random_psd(12, 5, 5);
  const Matrix S = testutil::random_psd(12, 8, 6);
  Vector previous;
  for (double eps : {1e-6, 1e-4, 1e-2, 1.0, 100.0}) {
    const auto sol = gep::solve_regularized(D, S, eps, 1);
    if (previous.size()) {
      for (Eigen::Index k = 0; k < 12; ++k) {
        EXPECT_LE(sol.eigenvalues(k), previous(k) + 1e-9 * previous(0));
      }
    }
    previous = sol.eigenvalues;
  }
}

TEST(Gep, InputValidation) {
  const Matrix I = Matrix::Identity(3, 3);
  EXPECT_THROW(gep::solve_regularized(I, I, 0.0, 1), ValidationError);
  EXPECT_THROW(gep::solve_regularized(I, I, 0.1, 0), ValidationError);
  EXPECT_THROW(gep::solve_regularized(I, I, 0.1, 4), ValidationError);
  EXPECT_THROW(gep::solve_regularized(I, Matrix::Identity(2, 2), 0.1, 1), DimensionError);
  Matrix A = I;
  A(0, 1) = 1.0;
  EXPECT_THROW(gep::solve_regularized(A, I, 0.1, 1), ValidationError);
  EXPECT_THROW(gep::solve_regularized(I, -2.0 * I, 0.1, 1), NumericalError);
  const auto sol = gep::solve_regularized(I, I, 0.1, 1);
  EXPECT_THROW(sol.view_slice(0), ValidationError);
}

TEST(Gep, CrawfordExamples) {
  const Matrix I = Matrix::Identity(3, 3);
  const auto c1 = gep::crawford_estimate(I, I);
  EXPECT_NEAR(c1.value, std::numbers::sqrt2, 1e-8);
  EXPECT_TRUE(c1.definite);
  EXPECT_NEAR(gep::crawford_lower_bound(I, I), std::numbers::sqrt2, 1e-12);

  Matrix A = Matrix::Zero(2, 2);
  Matrix B = Matrix::Zero(2, 2);
  A(0, 0) = 1.0;
  B(1, 1) = 1.0;
  const auto c2 = gep::crawford_estimate(A, B);
  EXPECT_NEAR(c2.value, 1.0 / std::numbers::sqrt2, 1e-6);
  EXPECT_NEAR(c2.minimizer.norm(), 1.0, 1e-12);

  const auto c3 = gep::crawford_estimate(Matrix::Zero(3, 3), Matrix::Zero(3, 3));
  EXPECT_EQ(c3.value, 0.0);
  EXPECT_FALSE(c3.definite);

  // Indefinite pair: x = (1, 1)/sqrt 2 annihilates both forms.
  Matrix P = Matrix::Zero(2, 2);
  P.diagonal() << 1.0, -1.0;
  Matrix Q = Matrix::Zero(2, 2);
  Q.diagonal() << 2.0, -2.0;
  const auto c4 = gep::crawford_estimate(P, Q);
  EXPECT_LE(c4.value, 1e-6);
  EXPECT_EQ(gep::crawford_lower_bound(P, Q), 0.0);
}

TEST(Gep, CrawfordEstimateDominatesLowerBound) {
  for (int t = 0; t < 5; ++t) {
    const Matrix A = testutil::random_psd(6, 3, 40 + t);
    const Matrix B = testutil::random_psd(6, 6, 60 + t) + 0.1 * Matrix::Identity(6, 6);
    const auto est = gep::crawford_estimate(A, B, {8, 1e-10, 400, static_cast<std::uint64_t>(t)});
    const double lower = gep::crawford_lower_bound(A, B);
    EXPECT_GE(est.value, lower - 1e-9);
    EXPECT_TRUE(est.definite);
    // The minimizer is feasible, so its objective is an upper bound.
    const Vector x = est.minimizer;
    EXPECT_NEAR(est.value, std::hypot(x.dot(A * x), x.dot(B * x)), 1e-9 * est.value);
  }
}

TEST(Gep, ChordalDistance) {
  EXPECT_EQ(gep::chordal_distance(1.0, 1.0), 0.0);
  EXPECT_NEAR(gep::chordal_distance(0.0, 1.0), 1.0 / std::numbers::sqrt2, 1e-15);
  EXPECT_NEAR(gep::chordal_distance(gep::EigenPair{1.0, 0.0}, gep::EigenPair{0.0, 1.0}), 1.0, 1e-15);
  EXPECT_NEAR(gep::chordal_distance(gep::EigenPair{2.0, 2.0}, gep::EigenPair{1.0, 1.0}), 0.0, 1e-15);
  EXPECT_NEAR(gep::chordal_distance(3.0, -2.0), gep::chordal_distance(-2.0, 3.0), 1e-15);
  EXPECT_THROW(gep::chordal_distance(gep::EigenPair{0.0, 0.0}, gep::EigenPair{1.0, 1.0}), ValidationError);
}

TEST(Gep, Eigengap) {
  Vector exact(3);
  Vector approx(3);
  exact << 3.0, 2.0, 1.0;
  approx << 2.9, 2.1, 0.5;
  const auto g2 = gep::eigengap_delta(exact, approx, 2);
  EXPECT_DOUBLE_EQ(g2.delta, 1.5);
  EXPECT_TRUE(g2.applicable);
  EXPECT_NEAR(gep::eigengap_delta(exact, approx, 1).delta, 0.9, 1e-15);
  Vector e2(2);
  Vector a2(2);
  e2 << 1.0, 0.5;
  a2 << 1.2, 1.1;
  const auto bad = gep::eigengap_delta(e2, a2, 1);
  EXPECT_FALSE(bad.applicable);
  EXPECT_NEAR(bad.delta, -0.1, 1e-15);
}
