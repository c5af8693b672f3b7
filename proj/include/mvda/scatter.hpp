#pragma once

// Structure matrices H^D, H^S and the scatter pair (D, S) of multi-view
// discriminant analysis, in linear space and in kernel space.
//
// With E^i the n-vector indicating class i across all views (views stacked
// in order, each view class-grouped):
//
//   H^D = sum_i (1/n_i) E^i E^i^T - (1/n) 1 1^T
//   H^S = I - sum_i (1/n_i) E^i E^i^T
//
// whose (j, r) blocks are the per-view-pair structure matrices. Kernel
// scatter is D = K H^D K, S = K H^S K with K = diag(K_1, ..., K_v).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mvda/dataio.hpp"
#include "mvda/error.hpp"
#include "mvda/linalg.hpp"

namespace mvda::scatter {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using dataio::ViewLayout;

struct StructureMatrices {
  Matrix HD;
  Matrix HS;
  ViewLayout layout;

  Matrix block_D(std::size_t j, std::size_t r) const { return block(HD, j, r); }
  Matrix block_S(std::size_t j, std::size_t r) const { return block(HS, j, r); }

 private:
  Matrix block(const Matrix& m, std::size_t j, std::size_t r) const {
    return m.block(static_cast<Eigen::Index>(layout.view_offset(j)),
                   static_cast<Eigen::Index>(layout.view_offset(r)),
                   static_cast<Eigen::Index>(layout.n_j(j)),
                   static_cast<Eigen::Index>(layout.n_j(r)));
  }
};

enum class ScatterMode { linear_space, kernel_space };

struct ScatterPair {
  Matrix D;  // between-class
  Matrix S;  // within-class
  ScatterMode mode = ScatterMode::kernel_space;
};

inline StructureMatrices build_structure(const ViewLayout& layout) {
  for (std::size_t i = 0; i < layout.c; ++i) {
    if (layout.n_i(i) == 0) {
      throw ValidationError("class '" + layout.class_order.at(i) + "' is empty (n_i = 0)");
    }
  }
  const auto n = static_cast<Eigen::Index>(layout.n());
  StructureMatrices H;
  H.layout = layout;
  const double inv_n = 1.0 / static_cast<double>(n);
  H.HD = Matrix::Constant(n, n, -inv_n);
  H.HS = Matrix::Identity(n, n);

  // Stacked row positions of class i, over all views.
  std::vector<std::vector<Eigen::Index>> members(layout.c);
  for (std::size_t j = 0; j < layout.v; ++j) {
    const std::size_t base = layout.view_offset(j);
    for (std::size_t i = 0; i < layout.c; ++i) {
      const std::size_t start = base + layout.class_offset(i, j);
      for (std::size_t k = 0; k < layout.n_ij(i, j); ++k) {
        members[i].push_back(static_cast<Eigen::Index>(start + k));
      }
    }
  }
  for (std::size_t i = 0; i < layout.c; ++i) {
    const double w = 1.0 / static_cast<double>(layout.n_i(i));
    const double hd = w - inv_n;
    for (Eigen::Index a : members[i]) {
      for (Eigen::Index b : members[i]) {
        H.HD(a, b) = hd;
        H.HS(a, b) -= w;
      }
    }
  }
  return H;
}

// D = K^T H^D K and S = K^T H^S K for K = diag(K_blocks), symmetrized.
inline ScatterPair build_kernel_scatter(const std::vector<Matrix>& K_blocks,
                                        const StructureMatrices& H) {
  const auto& L = H.layout;
  if (K_blocks.size() != L.v) {
    throw DimensionError("expected " + std::to_string(L.v) + " kernel blocks, got " +
                         std::to_string(K_blocks.size()));
  }
  for (std::size_t j = 0; j < L.v; ++j) {
    const auto nj = static_cast<Eigen::Index>(L.n_j(j));
    if (K_blocks[j].rows() != nj || K_blocks[j].cols() != nj) {
      throw DimensionError("kernel block " + std::to_string(j) + " must be " +
                           std::to_string(nj) + " x " + std::to_string(nj));
    }
  }
  const auto n = static_cast<Eigen::Index>(L.n());
  ScatterPair pair;
  pair.mode = ScatterMode::kernel_space;
  pair.D.resize(n, n);
  pair.S.resize(n, n);
  for (std::size_t j = 0; j < L.v; ++j) {
    const auto rj = static_cast<Eigen::Index>(L.view_offset(j));
    const auto nj = static_cast<Eigen::Index>(L.n_j(j));
    for (std::size_t r = 0; r < L.v; ++r) {
      const auto rr = static_cast<Eigen::Index>(L.view_offset(r));
      const auto nr = static_cast<Eigen::Index>(L.n_j(r));
      pair.D.block(rj, rr, nj, nr) = K_blocks[j].transpose() * H.block_D(j, r) * K_blocks[r];
      pair.S.block(rj, rr, nj, nr) = K_blocks[j].transpose() * H.block_S(j, r) * K_blocks[r];
    }
  }
  pair.D = linalg::symmetrize(pair.D);
  pair.S = linalg::symmetrize(pair.S);
  return pair;
}

// Linear-space scatter from explicit per-view features (rows = samples),
// assembled from class means u_ij by direct summation. Block (j, r) is
// d_j x d_r.
inline ScatterPair build_linear_scatter(const std::vector<Matrix>& views, const ViewLayout& L) {
  if (views.size() != L.v) throw DimensionError("view count does not match layout");
  for (std::size_t i = 0; i < L.c; ++i) {
    for (std::size_t j = 0; j < L.v; ++j) {
      if (L.n_ij(i, j) == 0) {
        throw ValidationError("class '" + L.class_order.at(i) + "' has no samples in view " +
                              std::to_string(j) + " (n_ij = 0)");
      }
    }
  }
  std::vector<Eigen::Index> offset(L.v + 1, 0);
  for (std::size_t j = 0; j < L.v; ++j) offset[j + 1] = offset[j] + views[j].cols();
  const Eigen::Index total = offset[L.v];
  const double n = static_cast<double>(L.n());

  // means[j].row(i) = u_ij; sums[j] = sum_i n_ij u_ij.
  std::vector<Matrix> means(L.v);
  std::vector<Vector> sums(L.v);
  for (std::size_t j = 0; j < L.v; ++j) {
    means[j].resize(static_cast<Eigen::Index>(L.c), views[j].cols());
    sums[j] = Vector::Zero(views[j].cols());
    for (std::size_t i = 0; i < L.c; ++i) {
      const auto start = static_cast<Eigen::Index>(L.class_offset(i, j));
      const auto count = static_cast<Eigen::Index>(L.n_ij(i, j));
      const Vector mu = views[j].middleRows(start, count).colwise().mean();
      means[j].row(static_cast<Eigen::Index>(i)) = mu.transpose();
      sums[j] += static_cast<double>(count) * mu;
    }
  }

  ScatterPair pair;
  pair.mode = ScatterMode::linear_space;
  pair.D = Matrix::Zero(total, total);
  pair.S = Matrix::Zero(total, total);
  for (std::size_t j = 0; j < L.v; ++j) {
    for (std::size_t r = 0; r < L.v; ++r) {
      Matrix Djr = Matrix::Zero(views[j].cols(), views[r].cols());
      Matrix Sjr = Matrix::Zero(views[j].cols(), views[r].cols());
      for (std::size_t i = 0; i < L.c; ++i) {
        const double w = static_cast<double>(L.n_ij(i, j)) * static_cast<double>(L.n_ij(i, r)) /
                         static_cast<double>(L.n_i(i));
        const Matrix outer = means[j].row(static_cast<Eigen::Index>(i)).transpose() *
                             means[r].row(static_cast<Eigen::Index>(i));
        Djr += w * outer;
        Sjr -= w * outer;
      }
      Djr -= (1.0 / n) * sums[j] * sums[r].transpose();
      if (j == r) Sjr += views[j].transpose() * views[j];
      pair.D.block(offset[j], offset[r], Djr.rows(), Djr.cols()) = Djr;
      pair.S.block(offset[j], offset[r], Sjr.rows(), Sjr.cols()) = Sjr;
    }
  }
  pair.D = linalg::symmetrize(pair.D);
  pair.S = linalg::symmetrize(pair.S);
  return pair;
}

inline ScatterPair build_linear_scatter(const dataio::MultiViewDataset& ds) {
  return build_linear_scatter(ds.views, ds.layout);
}

struct SpectrumCheck {
  std::string name;
  double value = 0.0;
  double expected = 0.0;
  bool pass = false;
};

struct SpectrumReport {
  bool balanced = false;
  std::size_t v = 0;
  std::size_t c = 0;
  std::size_t n = 0;
  // Indexed [j][r].
  std::vector<std::vector<double>> block_norm_D;
  std::vector<std::vector<double>> block_norm_S;
  std::vector<std::vector<Eigen::Index>> block_rank_D;
  std::vector<std::vector<Eigen::Index>> block_rank_S;
  double norm_HD = 0.0;
  double norm_HS = 0.0;
  Vector eigenvalues_HD;  // ascending
  Vector eigenvalues_HS;  // ascending
  double psd_margin_HD = 0.0;  // smallest eigenvalue
  double psd_margin_HS = 0.0;
  std::size_t unit_eigenvalues_HD = 0;   // |lambda - 1| <= tol
  std::size_t zero_eigenvalues_HD = 0;   // |lambda| <= tol
  std::size_t unit_eigenvalues_HS = 0;
  std::size_t zero_eigenvalues_HS = 0;
  // Closed-form balanced-layout values; empty when the layout is unbalanced.
  std::vector<SpectrumCheck> checks;
  std::vector<std::string> notes;

  bool all_checks_pass() const {
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return balanced;
  }
};

// Norms, ranks and spectra of H^D, H^S and their blocks. For balanced
// layouts the report also compares against the closed forms:
// |H^D_jr| = 1/v, |H^S_jj| = 1, |H^S_jr| = 1/v (j != r), |H^D| = |H^S| = 1,
// c - 1 unit eigenvalues of H^D, and spectrum(H^S) = {0^c, 1^(n-c)}.
inline SpectrumReport structure_spectrum_report(const StructureMatrices& H, double tol = 1e-8) {
  const auto& L = H.layout;
  SpectrumReport rep;
  rep.balanced = L.balanced();
  rep.v = L.v;
  rep.c = L.c;
  rep.n = L.n();
  rep.block_norm_D.assign(L.v, std::vector<double>(L.v));
  rep.block_norm_S.assign(L.v, std::vector<double>(L.v));
  rep.block_rank_D.assign(L.v, std::vector<Eigen::Index>(L.v));
  rep.block_rank_S.assign(L.v, std::vector<Eigen::Index>(L.v));
  for (std::size_t j = 0; j < L.v; ++j) {
    for (std::size_t r = 0; r < L.v; ++r) {
      const Matrix bd = H.block_D(j, r);
      const Matrix bs = H.block_S(j, r);
      rep.block_norm_D[j][r] = linalg::spectral_norm(bd);
      rep.block_norm_S[j][r] = linalg::spectral_norm(bs);
      rep.block_rank_D[j][r] = linalg::numerical_rank(bd);
      rep.block_rank_S[j][r] = linalg::numerical_rank(bs);
    }
  }
  rep.eigenvalues_HD = linalg::symmetric_eigenvalues(H.HD);
  rep.eigenvalues_HS = linalg::symmetric_eigenvalues(H.HS);
  rep.norm_HD = rep.eigenvalues_HD.cwiseAbs().maxCoeff();
  rep.norm_HS = rep.eigenvalues_HS.cwiseAbs().maxCoeff();
  rep.psd_margin_HD = rep.eigenvalues_HD(0);
  rep.psd_margin_HS = rep.eigenvalues_HS(0);
  for (double e : rep.eigenvalues_HD) {
    if (std::abs(e - 1.0) <= tol) ++rep.unit_eigenvalues_HD;
    if (std::abs(e) <= tol) ++rep.zero_eigenvalues_HD;
  }
  for (double e : rep.eigenvalues_HS) {
    if (std::abs(e - 1.0) <= tol) ++rep.unit_eigenvalues_HS;
    if (std::abs(e) <= tol) ++rep.zero_eigenvalues_HS;
  }
  if (!rep.balanced) {
    rep.notes.push_back("balanced-only checks skipped");
    return rep;
  }
  const double inv_v = 1.0 / static_cast<double>(L.v);
  auto check = [&](std::string name, double value, double expected) {
    rep.checks.push_back({std::move(name), value, expected, std::abs(value - expected) <= tol});
  };
  for (std::size_t j = 0; j < L.v; ++j) {
    for (std::size_t r = 0; r < L.v; ++r) {
      const std::string tag = "(" + std::to_string(j) + "," + std::to_string(r) + ")";
      check("|H^D" + tag + "|", rep.block_norm_D[j][r], inv_v);
      check("|H^S" + tag + "|", rep.block_norm_S[j][r], j == r ? 1.0 : inv_v);
    }
  }
  check("|H^D|", rep.norm_HD, 1.0);
  check("|H^S|", rep.norm_HS, 1.0);
  check("unit eigenvalues of H^D", static_cast<double>(rep.unit_eigenvalues_HD),
        static_cast<double>(L.c - 1));
  check("zero eigenvalues of H^D", static_cast<double>(rep.zero_eigenvalues_HD),
        static_cast<double>(rep.n - (L.c - 1)));
  check("zero eigenvalues of H^S", static_cast<double>(rep.zero_eigenvalues_HS),
        static_cast<double>(L.c));
  check("unit eigenvalues of H^S", static_cast<double>(rep.unit_eigenvalues_HS),
        static_cast<double>(rep.n - L.c));
  return rep;
}

}  // namespace mvda::scatter
