#pragma once

// Regularized symmetric-definite generalized eigenproblem
//
//     D z = lambda (S + eps I) z,
//
// solved by whitening with the symmetric inverse square root of S + eps I.
// Also: Crawford-number estimation, chordal distance between eigenvalue
// pairs, and the eigengap used by the regularized perturbation bound.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mvda/dataio.hpp"
#include "mvda/error.hpp"
#include "mvda/linalg.hpp"
#include "mvda/rng.hpp"
#include "mvda/scatter.hpp"

namespace mvda::gep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct EigenSolution {
  Vector eigenvalues;  // descending
  Matrix vectors;      // column i pairs with eigenvalues(i); z^T (S + eps I) z = 1
  double epsilon = 0.0;
  std::size_t l = 0;   // number of leading pairs selected
  // Max minus min eigenvalue of the whitened operator. Near zero means the
  // problem carries no discriminant information.
  double whitened_spread = 0.0;
  std::optional<dataio::ViewLayout> layout;

  Eigen::Index size() const { return eigenvalues.size(); }

  // Leading l columns.
  Matrix top() const { return vectors.leftCols(static_cast<Eigen::Index>(l)); }

  // Rows of view j in the leading l columns (kernel-space solutions only).
  Matrix view_slice(std::size_t j) const {
    if (!layout) throw ValidationError("solution has no view layout");
    return vectors.block(static_cast<Eigen::Index>(layout->view_offset(j)), 0,
                         static_cast<Eigen::Index>(layout->n_j(j)),
                         static_cast<Eigen::Index>(l));
  }
};

// 1e-6 * trace(S) / n, or 1e-6 when S has zero trace.
inline double default_epsilon(const Matrix& S) {
  if (S.rows() == 0) return 1e-6;
  const double mean_diag = S.trace() / static_cast<double>(S.rows());
  return mean_diag > 0.0 ? 1e-6 * mean_diag : 1e-6;
}

namespace detail {

inline void require_symmetric(const Matrix& m, const char* name) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (linalg::asymmetry(m) > 1e-10 * scale) {
    throw ValidationError(std::string(name) + " is not symmetric");
  }
}

// Flips v so its first coordinate above 1e-12 * max|v| is positive.
inline void canonicalize_sign(Eigen::Ref<Vector> v) {
  const double cutoff = 1e-12 * v.cwiseAbs().maxCoeff();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (std::abs(v(k)) > cutoff) {
      if (v(k) < 0.0) v = -v;
      return;
    }
  }
}

}  // namespace detail

inline EigenSolution solve_regularized(const Matrix& D, const Matrix& S, double epsilon,
                                       std::size_t l) {
  if (D.rows() != D.cols() || S.rows() != S.cols() || D.rows() != S.rows()) {
    throw DimensionError("D and S must be square and of equal size");
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ValidationError("regularizer epsilon must be > 0");
  }
  const Eigen::Index n = D.rows();
  if (l < 1 || static_cast<Eigen::Index>(l) > n) {
    throw ValidationError("subspace dimension l must lie in [1, " + std::to_string(n) + "]");
  }
  detail::require_symmetric(D, "D");
  detail::require_symmetric(S, "S");

  Matrix B = linalg::symmetrize(S);
  B.diagonal().array() += epsilon;
  Eigen::SelfAdjointEigenSolver<Matrix> b_eig(B);
  if (b_eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of S + eps I failed");
  const double b_min = b_eig.eigenvalues()(0);
  if (!(b_min > 0.0)) {
    throw NumericalError("S + eps I is not positive definite (smallest eigenvalue " +
                         std::to_string(b_min) + ")");
  }
  const Matrix& U = b_eig.eigenvectors();
  const Matrix inv_sqrt =
      U * b_eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * U.transpose();
  const Matrix whitened = linalg::symmetrize(inv_sqrt * linalg::symmetrize(D) * inv_sqrt);

  Eigen::SelfAdjointEigenSolver<Matrix> w_eig(whitened);
  if (w_eig.info() != Eigen::Success) throw NumericalError("whitened eigendecomposition failed");
  const Vector& mu = w_eig.eigenvalues();
  Matrix Z = inv_sqrt * w_eig.eigenvectors();
  for (Eigen::Index k = 0; k < n; ++k) detail::canonicalize_sign(Z.col(k));

  // Descending eigenvalue; exact ties fall back to lexicographic order of
  // the sign-canonical eigenvectors.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (mu(a) != mu(b)) return mu(a) > mu(b);
    return std::lexicographical_compare(Z.col(b).begin(), Z.col(b).end(), Z.col(a).begin(),
                                        Z.col(a).end());
  });

  EigenSolution sol;
  sol.epsilon = epsilon;
  sol.l = l;
  sol.eigenvalues.resize(n);
  sol.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    sol.eigenvalues(k) = mu(order[static_cast<std::size_t>(k)]);
    sol.vectors.col(k) = Z.col(order[static_cast<std::size_t>(k)]);
  }
  sol.whitened_spread = mu(n - 1) - mu(0);
  return sol;
}

inline EigenSolution solve_regularized(const scatter::ScatterPair& pair, double epsilon,
                                       std::size_t l,
                                       std::optional<dataio::ViewLayout> layout = std::nullopt) {
  EigenSolution sol = solve_regularized(pair.D, pair.S, epsilon, l);
  sol.layout = std::move(layout);
  return sol;
}

// Per-pair relative residual |D z - lambda (S + eps I) z| /
// ((|D| + lambda |S + eps I|) |z|).
inline Vector relative_residuals(const Matrix& D, const Matrix& S, const EigenSolution& sol) {
  Matrix B = S;
  B.diagonal().array() += sol.epsilon;
  const double norm_D = linalg::spectral_norm(linalg::symmetrize(D));
  const double norm_B = linalg::spectral_norm(linalg::symmetrize(B));
  Vector out(sol.size());
  for (Eigen::Index k = 0; k < sol.size(); ++k) {
    const auto z = sol.vectors.col(k);
    const double lambda = sol.eigenvalues(k);
    const double scale = (norm_D + std::abs(lambda) * norm_B) * z.norm();
    out(k) = (D * z - lambda * (B * z)).norm() / (scale > 0.0 ? scale : 1.0);
  }
  return out;
}

// --- Crawford number -------------------------------------------------------

struct CrawfordEstimate {
  double value = 0.0;   // best objective found; an upper bound on C(A, B)
  bool definite = false;
  Vector minimizer;
};

struct CrawfordOptions {
  std::size_t restarts = 8;
  double tol = 1e-10;
  std::size_t max_iterations = 400;
  std::uint64_t seed = 0;
};

// min over |x| = 1 of sqrt((x^T A x)^2 + (x^T B x)^2), by projected gradient
// descent with Armijo step halving on the sphere. Starts: `restarts` random unit
// vectors plus the extreme eigenvectors of A, B, A + B and A - B. Local
// search only: the result may exceed the true minimum.
inline CrawfordEstimate crawford_estimate(const Matrix& A, const Matrix& B,
                                          const CrawfordOptions& opt = {}) {
  if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows()) {
    throw DimensionError("Crawford estimate needs square matrices of equal size");
  }
  const Eigen::Index n = A.rows();
  CrawfordEstimate best;
  best.value = std::numeric_limits<double>::infinity();
  if (n == 0) return {0.0, false, Vector()};
  const Matrix As = linalg::symmetrize(A);
  const Matrix Bs = linalg::symmetrize(B);
  const double scale = std::max(linalg::spectral_norm(As), linalg::spectral_norm(Bs));
  if (scale == 0.0) return {0.0, false, Vector::Unit(n, 0)};

  std::vector<Vector> starts;
  const rng::CounterStream stream(rng::derive(opt.seed, {rng::kTagCrawford}));
  for (std::size_t s = 0; s < opt.restarts; ++s) {
    Vector x(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      x(k) = stream.normal(static_cast<std::uint64_t>(s) * static_cast<std::uint64_t>(n) +
                           static_cast<std::uint64_t>(k));
    }
    starts.push_back(x.normalized());
  }
  for (const Matrix& M : {Matrix(As), Matrix(Bs), Matrix(As + Bs), Matrix(As - Bs)}) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(M);
    starts.push_back(eig.eigenvectors().col(0));
    starts.push_back(eig.eigenvectors().col(n - 1));
  }

  auto objective = [&](const Vector& x, double& a, double& b) {
    a = x.dot(As * x);
    b = x.dot(Bs * x);
    return a * a + b * b;
  };

  for (const Vector& start : starts) {
    Vector x = start;
    double a = 0.0;
    double b = 0.0;
    double g = objective(x, a, b);
    double step = 1.0 / (scale * scale);
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
      const Vector grad = 4.0 * (a * (As * x) + b * (Bs * x));
      const Vector tangent = grad - x.dot(grad) * x;
      if (tangent.norm() <= opt.tol * scale * scale) break;
      bool moved = false;
      while (step * scale * scale > opt.tol) {
        const Vector candidate = (x - step * tangent).normalized();
        double ca = 0.0;
        double cb = 0.0;
        const double cg = objective(candidate, ca, cb);
        if (cg <= g - 0.1 * step * tangent.squaredNorm() && cg < g) {
          moved = g - cg > opt.tol * opt.tol * scale * scale * scale * scale;
          x = candidate;
          a = ca;
          b = cb;
          g = cg;
          step *= 2.0;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    const double value = std::sqrt(g);
    if (value < best.value) {
      best.value = value;
      best.minimizer = x;
    }
  }
  best.definite = best.value > 1e-12 * scale;
  return best;
}

// Certified lower bound: for a definite pair the Crawford number is at least
// max over t of lambda_min(A cos t + B sin t). Evaluated on a grid of
// `samples` angles; returns max(0, best).
inline double crawford_lower_bound(const Matrix& A, const Matrix& B, std::size_t samples = 360) {
  const Matrix As = linalg::symmetrize(A);
  const Matrix Bs = linalg::symmetrize(B);
  double best = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(s) / static_cast<double>(samples);
    best = std::max(best, linalg::min_eigenvalue(std::cos(t) * As + std::sin(t) * Bs));
  }
  return best;
}

// --- chordal distance and eigengap -----------------------------------------

// A generalized eigenvalue as a homogeneous pair (alpha, beta); the
// eigenvalues of the regularized problem are (lambda, 1).
struct EigenPair {
  double alpha = 0.0;
  double beta = 1.0;
};

inline double chordal_distance(EigenPair p1, EigenPair p2) {
  const double n1 = std::hypot(p1.alpha, p1.beta);
  const double n2 = std::hypot(p2.alpha, p2.beta);
  if (n1 == 0.0 || n2 == 0.0) throw ValidationError("chordal distance of the zero pair");
  return std::min(1.0, std::abs(p1.alpha * p2.beta - p2.alpha * p1.beta) / (n1 * n2));
}

inline double chordal_distance(double lambda1, double lambda2) {
  return chordal_distance(EigenPair{lambda1, 1.0}, EigenPair{lambda2, 1.0});
}

struct Eigengap {
  double delta = 0.0;
  bool applicable = false;  // delta > 0
};

// lambda_l - lambda_hat_{l+1} (1-based l) for descending eigenvalue lists.
inline Eigengap eigengap_delta(const Vector& exact, const Vector& approx, std::size_t l) {
  if (exact.size() != approx.size()) throw DimensionError("eigenvalue lists differ in length");
  if (l < 1 || static_cast<Eigen::Index>(l) >= exact.size()) {
    throw ValidationError("eigengap needs 1 <= l < n");
  }
  const double delta = exact(static_cast<Eigen::Index>(l) - 1) - approx(static_cast<Eigen::Index>(l));
  return {delta, delta > 0.0};
}

inline Eigengap eigengap_delta(const EigenSolution& exact, const EigenSolution& approx,
                               std::size_t l) {
  return eigengap_delta(exact.eigenvalues, approx.eigenvalues, l);
}

}  // namespace mvda::gep
