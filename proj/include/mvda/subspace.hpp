#pragma once

// Eigenspace comparison (principal angles, gap metric, projector distances)
// and evaluators for the RFF perturbation bounds.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "mvda/error.hpp"
#include "mvda/gep.hpp"
#include "mvda/linalg.hpp"

namespace mvda::subspace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Orthonormal column basis of a subspace of R^n.
class SubspaceBasis {
 public:
  SubspaceBasis() = default;

  const Matrix& matrix() const { return basis_; }
  Eigen::Index ambient_dim() const { return basis_.rows(); }
  Eigen::Index dim() const { return basis_.cols(); }
  Matrix projector() const { return basis_ * basis_.transpose(); }

  // Wraps columns already known to be orthonormal.
  static SubspaceBasis from_orthonormal(Matrix columns) {
    SubspaceBasis b;
    b.basis_ = std::move(columns);
    return b;
  }

 private:
  Matrix basis_;
};

// Orthonormal basis of the column space of Z via the thin SVD. Columns whose
// singular value is at most 1e-10 times the largest count as deficient.
inline SubspaceBasis orthonormalize(const Matrix& Z) {
  if (Z.cols() == 0 || Z.rows() < Z.cols()) {
    throw ValidationError("orthonormalize needs an n x l matrix with 1 <= l <= n");
  }
  Eigen::BDCSVD<Matrix> svd(Z, Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  const Eigen::Index deficient = (s.array() <= 1e-10 * s(0)).count();
  if (s(0) == 0.0 || deficient > 0) {
    throw NumericalError("rank-deficient basis: " +
                         std::to_string(s(0) == 0.0 ? Z.cols() : deficient) + " of " +
                         std::to_string(Z.cols()) + " columns are dependent");
  }
  return SubspaceBasis::from_orthonormal(svd.matrixU());
}

struct PrincipalAngles {
  Vector theta;  // ascending, in [0, pi/2]
  double sin_spectral = 0.0;   // max_k sin theta_k
  double sin_frobenius = 0.0;  // sqrt(sum_k sin^2 theta_k)
};

// Cosines are the singular values of B1^T B2 (clamped to [0, 1]); sines are
// the singular values of (I - B1 B1^T) B2, which keeps small angles accurate.
// theta_k = atan2(sin_k, cos_k) pairs ascending sines with descending cosines.
inline PrincipalAngles principal_angles(const SubspaceBasis& b1, const SubspaceBasis& b2) {
  if (b1.ambient_dim() != b2.ambient_dim() || b1.dim() != b2.dim()) {
    throw DimensionError("principal angles need bases of equal shape");
  }
  const Matrix& Q1 = b1.matrix();
  const Matrix& Q2 = b2.matrix();
  const Matrix cross = Q1.transpose() * Q2;
  Eigen::BDCSVD<Matrix> cos_svd(cross);
  Vector cosines = cos_svd.singularValues().cwiseMin(1.0).cwiseMax(0.0);  // descending
  const Matrix residual = Q2 - Q1 * cross;
  Eigen::BDCSVD<Matrix> sin_svd(residual);
  Vector sines = sin_svd.singularValues().cwiseMin(1.0).cwiseMax(0.0);  // descending
  std::reverse(sines.begin(), sines.end());                             // ascending

  PrincipalAngles out;
  const Eigen::Index l = cosines.size();
  out.theta.resize(l);
  for (Eigen::Index k = 0; k < l; ++k) out.theta(k) = std::atan2(sines(k), cosines(k));
  out.sin_spectral = l ? sines(l - 1) : 0.0;
  out.sin_frobenius = sines.norm();
  return out;
}

// Spectral and Frobenius norms of P1 - P2 for the orthogonal projectors.
struct ProjectorDistance {
  double spectral = 0.0;
  double frobenius = 0.0;
};

inline ProjectorDistance projector_distance(const SubspaceBasis& b1, const SubspaceBasis& b2) {
  if (b1.ambient_dim() != b2.ambient_dim()) {
    throw DimensionError("projector distance needs equal ambient dimension");
  }
  const Matrix diff = linalg::symmetrize(b1.projector() - b2.projector());
  return {linalg::spectral_norm(diff), diff.norm()};
}

// Gap between subspaces, |P1 - P2| in the spectral norm. Subspaces of
// unequal dimension are allowed here.
inline double gap_metric(const SubspaceBasis& b1, const SubspaceBasis& b2) {
  return projector_distance(b1, b2).spectral;
}

// --- bound evaluators ------------------------------------------------------

enum class BoundStatus { ok, vacuous, inapplicable };

inline std::string to_string(BoundStatus s) {
  switch (s) {
    case BoundStatus::ok: return "ok";
    case BoundStatus::vacuous: return "vacuous";
    case BoundStatus::inapplicable: return "inapplicable";
  }
  return "unknown";
}

// A bound on |sin Theta|. Values above 1 are kept (not clamped) and marked
// vacuous, since |sin Theta| <= 1 always.
struct BoundValue {
  double value = 0.0;
  BoundStatus status = BoundStatus::inapplicable;
  std::string reason;

  bool usable() const { return status == BoundStatus::ok; }
};

inline BoundValue classify_bound(double value) {
  return {value, value > 1.0 ? BoundStatus::vacuous : BoundStatus::ok, {}};
}

namespace detail {
inline void require_probability(double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw ValidationError("eta must lie in (0, 1)");
}
}  // namespace detail

// High-probability bound on |K_hat - K| for an n x n Gram estimate from m
// random features, failure probability eta:
//   2n log(2n/eta) / (3m) + sqrt(4n^2 log^2(2n/eta) + 18 m n |K| log(2n/eta)) / (3m)
inline double bound_lemma2(double n, double m, double eta, double K_norm) {
  detail::require_probability(eta);
  if (!(n > 0.0 && m > 0.0 && K_norm >= 0.0)) {
    throw ValidationError("bound_lemma2 needs n, m > 0 and |K| >= 0");
  }
  const double L = std::log(2.0 * n / eta);
  return 2.0 * n * L / (3.0 * m) +
         std::sqrt(4.0 * n * n * L * L + 18.0 * m * n * K_norm * L) / (3.0 * m);
}

// Per-view union-bound version over v views (n = total sample count,
// per-view failure probability 1 - (1 - eta)^(1/v)):
//   2n log((2n/v)/p) / (3vm)
//   + sqrt(4(n/v)^2 log^2(2n/p) + (18/v) m n |K*| log((2n/v)/p)) / (3m)
// with p = 1 - (1 - eta)^(1/v). The second logarithm's argument is 2n/p,
// not (2n/v)/p; the formula is evaluated as published.
inline double bound_xi(double n_total, double v, double m, double eta, double K_star_norm) {
  detail::require_probability(eta);
  if (!(n_total > 0.0 && v > 0.0 && m > 0.0 && K_star_norm >= 0.0)) {
    throw ValidationError("bound_xi needs positive n, v, m and |K*| >= 0");
  }
  const double p = 1.0 - std::pow(1.0 - eta, 1.0 / v);
  const double log_view = std::log((2.0 * n_total / v) / p);
  const double log_total = std::log(2.0 * n_total / p);
  const double n_view = n_total / v;
  return 2.0 * n_total * log_view / (3.0 * v * m) +
         std::sqrt(4.0 * n_view * n_view * log_total * log_total +
                   (18.0 / v) * m * n_total * K_star_norm * log_view) /
             (3.0 * m);
}

inline double q_factor(double gamma) { return gamma != 0.0 ? 2.0 * std::numbers::sqrt2 : 2.0; }

// p(alpha, delta, gamma) = q(gamma) [(alpha+delta) sqrt(1-alpha^2)
//                          + alpha sqrt(1-(alpha+delta)^2)] / (2 alpha + delta)
inline double p_factor(double alpha, double delta, double gamma) {
  const double ad = alpha + delta;
  return q_factor(gamma) *
         (ad * std::sqrt(1.0 - alpha * alpha) + alpha * std::sqrt(std::max(0.0, 1.0 - ad * ad))) /
         (2.0 * alpha + delta);
}

struct Thm2Inputs {
  double alpha = 0.0;
  double delta = 0.0;
  double gamma = 0.0;
  double crawford_exact = 0.0;
  double crawford_approx = 0.0;
  double K_star = 0.0;
  double K_hat_star = 0.0;
  double xi = 0.0;
};

// p(alpha, delta, gamma) |K*|^2 xi / (C(D,S) C(D_hat,S_hat)) * (|K*| + |K_hat*|) / delta
inline BoundValue bound_thm2(const Thm2Inputs& in) {
  if (in.alpha + in.delta > 1.0 + 1e-15) {
    throw ValidationError("separation requires alpha + delta <= 1");
  }
  if (!(in.delta > 0.0) || in.alpha < 0.0) {
    return {0.0, BoundStatus::inapplicable, "separation needs alpha >= 0 and delta > 0"};
  }
  if (!(in.crawford_exact > 0.0) || !(in.crawford_approx > 0.0)) {
    return {0.0, BoundStatus::inapplicable, "pair not certified definite"};
  }
  const double value = p_factor(in.alpha, in.delta, in.gamma) * in.K_star * in.K_star * in.xi /
                       (in.crawford_exact * in.crawford_approx) *
                       (in.K_star + in.K_hat_star) / in.delta;
  return classify_bound(value);
}

inline constexpr double kGoldenRatio = std::numbers::phi;  // (1 + sqrt 5) / 2

struct Thm3Terms {
  double quadratic = 0.0;  // (xi/delta) C |K*|^2 (|K*| + |K_hat*|) / eps^2
  double linear = 0.0;     // (xi/delta) (|K*| + |K_hat*|) / eps
};

inline Thm3Terms bound_thm3_terms(double xi, double epsilon, double K_star, double K_hat_star,
                                  double delta) {
  const double sum = K_star + K_hat_star;
  return {xi / delta * kGoldenRatio * K_star * K_star * sum / (epsilon * epsilon),
          xi / delta * sum / epsilon};
}

// (xi/delta) { C |K*|^2 (|K*| + |K_hat*|) / eps^2 + (|K*| + |K_hat*|) / eps }
inline BoundValue bound_thm3(double xi, double epsilon, double K_star, double K_hat_star,
                             double delta) {
  if (!(delta > 0.0)) return {0.0, BoundStatus::inapplicable, "eigengap not positive"};
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
  const auto t = bound_thm3_terms(xi, epsilon, K_star, K_hat_star, delta);
  return classify_bound(t.quadratic + t.linear);
}

// --- eigenvalue separation -------------------------------------------------

struct Separation {
  double alpha = 0.0;
  double delta = 0.0;
  double gamma = 0.0;
  bool feasible = false;
  // (alpha+delta) sqrt(1-alpha^2) - alpha sqrt(1-(alpha+delta)^2)
  double sin_theta_g = 0.0;
};

inline double separation_sine(double alpha, double delta) {
  const double ad = alpha + delta;
  return ad * std::sqrt(1.0 - alpha * alpha) - alpha * std::sqrt(std::max(0.0, 1.0 - ad * ad));
}

// Searches gamma over 257 evenly spaced points on [min - 1, max + 1] (over
// both lists) plus gamma = 0. For each gamma: alpha = max chordal distance
// from gamma to the leading l exact eigenvalues; delta = min chordal
// distance from gamma to the approximate eigenvalues after the l-th, minus
// alpha. Returns the gamma with the largest delta; feasible iff delta > 0.
inline Separation separation_report(const Vector& exact, const Vector& approx, std::size_t l) {
  const auto L = static_cast<Eigen::Index>(l);
  if (L < 1 || L > exact.size()) throw ValidationError("separation needs 1 <= l <= |exact|");
  if (L >= approx.size()) throw ValidationError("separation needs an approximate tail after l");
  const Vector top = exact.head(L);
  const Vector tail = approx.tail(approx.size() - L);
  const double lo = std::min(top.minCoeff(), tail.minCoeff()) - 1.0;
  const double hi = std::max(top.maxCoeff(), tail.maxCoeff()) + 1.0;

  std::vector<double> grid;
  constexpr int kPoints = 257;
  for (int k = 0; k < kPoints; ++k) grid.push_back(lo + (hi - lo) * k / (kPoints - 1));
  grid.push_back(0.0);

  Separation best;
  best.delta = -std::numeric_limits<double>::infinity();
  for (double gamma : grid) {
    double alpha = 0.0;
    for (double lambda : top) alpha = std::max(alpha, gep::chordal_distance(lambda, gamma));
    double nearest = 1.0;
    for (double lambda : tail) nearest = std::min(nearest, gep::chordal_distance(lambda, gamma));
    const double delta = nearest - alpha;
    if (delta > best.delta) {
      best.alpha = alpha;
      best.delta = delta;
      best.gamma = gamma;
    }
  }
  best.feasible = best.delta > 0.0;
  best.sin_theta_g = best.feasible ? separation_sine(best.alpha, best.delta) : 0.0;
  return best;
}

}  // namespace mvda::subspace
