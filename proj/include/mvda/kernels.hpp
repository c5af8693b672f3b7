#pragma once

// Exact linear/RBF Gram matrices and random Fourier features for the RBF
// kernel k(x, y) = exp(-|x - y|^2 / (2 sigma^2)).
//
// An RFF embedding row is sqrt(2/m) * cos(W x + b), with W (m x d) drawn
// N(0, 1/sigma^2) entrywise and b ~ U[0, 2 pi). The 1/sqrt(m) factor lives
// in the features, so the unbiased kernel estimate is simply Phi Phi^T.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvda/error.hpp"
#include "mvda/linalg.hpp"
#include "mvda/rng.hpp"

namespace mvda::kernels {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class KernelKind { linear, rbf, rff };

inline std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::linear: return "linear";
    case KernelKind::rbf: return "rbf";
    case KernelKind::rff: return "rff";
  }
  return "unknown";
}

inline KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "linear") return KernelKind::linear;
  if (name == "rbf") return KernelKind::rbf;
  if (name == "rff") return KernelKind::rff;
  throw ValidationError("unknown kernel kind '" + name + "'");
}

struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  double sigma = 1.0;       // RBF / RFF bandwidth
  std::size_t m = 0;        // RFF feature count
  std::uint64_t seed = 0;   // RFF map seed
  bool normalize = true;    // RFF rows scaled to unit norm

  static KernelSpec linear() { return {}; }
  static KernelSpec rbf(double sigma) { return {KernelKind::rbf, sigma, 0, 0, true}; }
  static KernelSpec rff(double sigma, std::size_t m, std::uint64_t seed, bool normalize = true) {
    return {KernelKind::rff, sigma, m, seed, normalize};
  }

  void validate() const {
    if (kind != KernelKind::linear && !(sigma > 0.0 && std::isfinite(sigma))) {
      throw ValidationError("kernel bandwidth sigma must be > 0");
    }
    if (kind == KernelKind::rff && m < 1) throw ValidationError("RFF feature count m must be >= 1");
  }

  bool operator==(const KernelSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const KernelSpec& k) {
  j = {{"kind", to_string(k.kind)}};
  if (k.kind != KernelKind::linear) j["sigma"] = k.sigma;
  if (k.kind == KernelKind::rff) {
    j["m"] = k.m;
    j["seed"] = k.seed;
    j["normalize"] = k.normalize;
  }
}

inline void from_json(const nlohmann::json& j, KernelSpec& k) {
  k = KernelSpec{};
  k.kind = kernel_kind_from_string(j.at("kind").get<std::string>());
  k.sigma = j.value("sigma", 1.0);
  k.m = j.value("m", std::size_t{0});
  k.seed = j.value("seed", std::uint64_t{0});
  k.normalize = j.value("normalize", true);
}

// Pairwise squared distances via |x|^2 + |y|^2 - 2 x.y, clamped at 0.
inline Matrix squared_distances(const Matrix& X, const Matrix& Y) {
  if (X.cols() != Y.cols()) {
    throw DimensionError("feature dimension mismatch: " + std::to_string(X.cols()) + " vs " +
                         std::to_string(Y.cols()));
  }
  const Vector xn = X.rowwise().squaredNorm();
  const Vector yn = Y.rowwise().squaredNorm();
  Matrix d2 = -2.0 * (X * Y.transpose());
  d2.colwise() += xn;
  d2.rowwise() += yn.transpose();
  return d2.cwiseMax(0.0);
}

// Exact Gram matrix k(X_a, Y_b) for the linear or RBF kernel.
inline Matrix gram(const Matrix& X, const Matrix& Y, const KernelSpec& spec) {
  spec.validate();
  if (X.cols() != Y.cols()) {
    throw DimensionError("feature dimension mismatch: " + std::to_string(X.cols()) + " vs " +
                         std::to_string(Y.cols()));
  }
  const bool same = &X == &Y;
  switch (spec.kind) {
    case KernelKind::linear: {
      Matrix k = X * Y.transpose();
      return same ? linalg::symmetrize(k) : k;
    }
    case KernelKind::rbf: {
      Matrix d2 = squared_distances(X, Y);
      if (same) {
        d2 = linalg::symmetrize(d2);
        d2.diagonal().setZero();
      }
      const double scale = -1.0 / (2.0 * spec.sigma * spec.sigma);
      return (scale * d2.array()).exp().matrix();
    }
    case KernelKind::rff:
      throw ValidationError("gram() computes exact kernels only; use rff_transform for RFF");
  }
  return {};
}

inline Matrix gram(const Matrix& X, const KernelSpec& spec) { return gram(X, X, spec); }

struct RffMap {
  Matrix W;  // m x d frequencies
  Vector b;  // m phases
  double sigma = 1.0;
  std::uint64_t seed = 0;
  std::size_t view = 0;

  std::size_t m() const { return static_cast<std::size_t>(W.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(W.cols()); }
};

// W and b are pure functions of (seed, view, sigma, m, d).
inline RffMap rff_sample(std::size_t d, const KernelSpec& spec, std::size_t view = 0) {
  spec.validate();
  if (spec.kind != KernelKind::rff) throw ValidationError("rff_sample needs an RFF kernel spec");
  if (d < 1) throw ValidationError("input dimension must be >= 1");
  RffMap map;
  map.sigma = spec.sigma;
  map.seed = spec.seed;
  map.view = view;
  const rng::CounterStream freq(rng::derive(spec.seed, {rng::kTagRffFrequency, view}));
  const rng::CounterStream phase(rng::derive(spec.seed, {rng::kTagRffPhase, view}));
  const auto m = static_cast<Eigen::Index>(spec.m);
  const auto dd = static_cast<Eigen::Index>(d);
  map.W.resize(m, dd);
  map.b.resize(m);
  const double inv_sigma = 1.0 / spec.sigma;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index k = 0; k < dd; ++k) {
      map.W(i, k) = inv_sigma * freq.normal(static_cast<std::uint64_t>(i * dd + k));
    }
    map.b(i) = 2.0 * std::numbers::pi * phase.uniform(static_cast<std::uint64_t>(i));
  }
  return map;
}

inline void to_json(nlohmann::json& j, const RffMap& map) {
  j = {{"sigma", map.sigma}, {"seed", map.seed}, {"m", map.m()}, {"d", map.d()}, {"view", map.view}};
}

// Regenerates a map from its JSON record (W and b are not stored).
inline RffMap rff_map_from_json(const nlohmann::json& j) {
  const auto spec = KernelSpec::rff(j.at("sigma").get<double>(), j.at("m").get<std::size_t>(),
                                    j.at("seed").get<std::uint64_t>());
  return rff_sample(j.at("d").get<std::size_t>(), spec, j.at("view").get<std::size_t>());
}

// n x m feature matrix. Unnormalized rows are sqrt(2/m) cos(W x + b);
// with `normalize` each row is rescaled to unit Euclidean norm.
inline Matrix rff_transform(const Matrix& X, const RffMap& map, bool normalize) {
  if (static_cast<std::size_t>(X.cols()) != map.d()) {
    throw DimensionError("RFF map expects dimension " + std::to_string(map.d()) + ", got " +
                         std::to_string(X.cols()));
  }
  Matrix phi = X * map.W.transpose();
  phi.rowwise() += map.b.transpose();
  const double scale = std::sqrt(2.0 / static_cast<double>(map.m()));
  phi = (scale * phi.array().cos()).matrix();
  if (normalize) {
    for (Eigen::Index r = 0; r < phi.rows(); ++r) {
      const double norm = phi.row(r).norm();
      if (norm > 0.0) phi.row(r) /= norm;
    }
  }
  return phi;
}

// Kernel estimate Phi Phi^T, exactly symmetric.
inline Matrix approx_gram(const Matrix& phi) {
  const auto n = phi.rows();
  Matrix k = Matrix::Zero(n, n);
  k.selfadjointView<Eigen::Lower>().rankUpdate(phi);
  return k.selfadjointView<Eigen::Lower>();
}

// One Gram block per view: exact for linear/RBF, Phi_j Phi_j^T for RFF with
// an independent map per view.
inline std::vector<Matrix> view_grams(const std::vector<Matrix>& views, const KernelSpec& spec) {
  std::vector<Matrix> out;
  out.reserve(views.size());
  for (std::size_t j = 0; j < views.size(); ++j) {
    if (spec.kind == KernelKind::rff) {
      const RffMap map = rff_sample(static_cast<std::size_t>(views[j].cols()), spec, j);
      out.push_back(approx_gram(rff_transform(views[j], map, spec.normalize)));
    } else {
      out.push_back(gram(views[j], spec));
    }
  }
  return out;
}

}  // namespace mvda::kernels
