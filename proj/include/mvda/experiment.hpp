#pragma once

// Exact-vs-RFF eigenspace perturbation experiments.
//
// For every (m, trial) the exact RBF pipeline and an RFF pipeline built from
// unnormalized features are solved with the same regularizer, and the
// report records empirical subspace distances next to the evaluated bounds.

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvda/dataio.hpp"
#include "mvda/gep.hpp"
#include "mvda/kernels.hpp"
#include "mvda/linalg.hpp"
#include "mvda/parallel.hpp"
#include "mvda/rng.hpp"
#include "mvda/scatter.hpp"
#include "mvda/subspace.hpp"

namespace mvda::subspace {

// One solved kernel pipeline: per-view Grams, scatter pair and eigenpairs.
struct KernelPipeline {
  std::vector<Matrix> grams;
  scatter::ScatterPair pair;
  gep::EigenSolution solution;
  double K_star = 0.0;  // max_j |K_j|
};

inline KernelPipeline solve_pipeline(std::vector<Matrix> grams, const scatter::StructureMatrices& H,
                                     double epsilon, std::size_t l) {
  KernelPipeline p;
  p.grams = std::move(grams);
  p.pair = scatter::build_kernel_scatter(p.grams, H);
  p.solution = gep::solve_regularized(p.pair, epsilon, l, H.layout);
  for (const auto& k : p.grams) p.K_star = std::max(p.K_star, linalg::spectral_norm(k));
  return p;
}

struct PerturbationReport {
  std::size_t m = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;  // RFF seed of this trial
  double eta = 0.0;
  double epsilon = 0.0;
  std::size_t l = 0;

  double sin_theta_spectral = 0.0;
  double sin_theta_frobenius = 0.0;
  double gap = 0.0;
  double proj_dist_spectral = 0.0;
  double proj_dist_frobenius = 0.0;

  double kernel_error = 0.0;  // max_j |K_hat_j - K_j|
  double K_star = 0.0;
  double K_hat_star = 0.0;
  double xi = 0.0;

  // Crawford estimates for (D, S) and (D, S + eps I), exact and approximate.
  double crawford_exact = 0.0;
  double crawford_approx = 0.0;
  double crawford_exact_reg = 0.0;
  double crawford_approx_reg = 0.0;

  gep::Eigengap eigengap;
  Separation separation;
  BoundValue bound_thm2;
  BoundValue bound_thm3;
};

struct ComparisonOptions {
  double eta = 0.1;
  gep::CrawfordOptions crawford{4, 1e-10, 200, 0};
  bool with_crawford = true;
};

// Cached exact-side Crawford numbers, so trials do not recompute them.
struct ExactCrawford {
  double plain = 0.0;
  double regularized = 0.0;
};

inline ExactCrawford exact_crawford(const KernelPipeline& exact, const ComparisonOptions& opt) {
  if (!opt.with_crawford) return {};
  Matrix reg = exact.pair.S;
  reg.diagonal().array() += exact.solution.epsilon;
  return {gep::crawford_estimate(exact.pair.D, exact.pair.S, opt.crawford).value,
          gep::crawford_estimate(exact.pair.D, reg, opt.crawford).value};
}

// Compares the leading l-dimensional eigenspaces of two solved pipelines
// built over the same layout and regularizer.
inline PerturbationReport compare_pipelines(const KernelPipeline& exact, const KernelPipeline& approx,
                                            std::size_t m, const ComparisonOptions& opt,
                                            const ExactCrawford& cached) {
  const auto& se = exact.solution;
  const auto& sa = approx.solution;
  PerturbationReport rep;
  rep.m = m;
  rep.eta = opt.eta;
  rep.epsilon = se.epsilon;
  rep.l = se.l;

  const SubspaceBasis b_exact = orthonormalize(se.top());
  const SubspaceBasis b_approx = orthonormalize(sa.top());
  const PrincipalAngles angles = principal_angles(b_exact, b_approx);
  const ProjectorDistance proj = projector_distance(b_exact, b_approx);
  rep.sin_theta_spectral = angles.sin_spectral;
  rep.sin_theta_frobenius = angles.sin_frobenius;
  rep.proj_dist_spectral = proj.spectral;
  rep.proj_dist_frobenius = proj.frobenius;
  rep.gap = proj.spectral;

  for (std::size_t j = 0; j < exact.grams.size(); ++j) {
    rep.kernel_error =
        std::max(rep.kernel_error, linalg::spectral_norm(approx.grams[j] - exact.grams[j]));
  }
  rep.K_star = exact.K_star;
  rep.K_hat_star = approx.K_star;
  const auto& layout = *se.layout;
  rep.xi = bound_xi(static_cast<double>(layout.n()), static_cast<double>(layout.v),
                    static_cast<double>(m), opt.eta, rep.K_star);

  if (opt.with_crawford) {
    Matrix reg = approx.pair.S;
    reg.diagonal().array() += sa.epsilon;
    rep.crawford_exact = cached.plain;
    rep.crawford_exact_reg = cached.regularized;
    rep.crawford_approx = gep::crawford_estimate(approx.pair.D, approx.pair.S, opt.crawford).value;
    rep.crawford_approx_reg = gep::crawford_estimate(approx.pair.D, reg, opt.crawford).value;
  }

  rep.eigengap = gep::eigengap_delta(se, sa, rep.l);
  rep.bound_thm3 = bound_thm3(rep.xi, rep.epsilon, rep.K_star, rep.K_hat_star, rep.eigengap.delta);

  rep.separation = separation_report(se.eigenvalues, sa.eigenvalues, rep.l);
  if (!rep.separation.feasible) {
    rep.bound_thm2 = {0.0, BoundStatus::inapplicable, "no separating gamma found"};
  } else if (!opt.with_crawford) {
    rep.bound_thm2 = {0.0, BoundStatus::inapplicable, "Crawford numbers not computed"};
  } else {
    rep.bound_thm2 = bound_thm2({rep.separation.alpha, rep.separation.delta, rep.separation.gamma,
                                 rep.crawford_exact, rep.crawford_approx, rep.K_star,
                                 rep.K_hat_star, rep.xi});
  }
  return rep;
}

struct PerturbationConfig {
  double sigma = 1.0;
  double epsilon = 0.0;        // absolute; <= 0 selects the relative default below
  double epsilon_rel = 1e-6;   // epsilon = epsilon_rel * trace(S) / n of the exact pair
  std::size_t l = 1;
  std::vector<std::size_t> m_grid{64, 256, 1024, 4096};
  std::size_t trials = 10;
  double eta = 0.1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool with_crawford = true;
};

// Regularizer for an exact scatter pair under `cfg`.
inline double resolve_epsilon(const PerturbationConfig& cfg, const Matrix& S) {
  if (cfg.epsilon > 0.0) return cfg.epsilon;
  const double mean_diag = S.rows() ? S.trace() / static_cast<double>(S.rows()) : 0.0;
  return mean_diag > 0.0 ? cfg.epsilon_rel * mean_diag : cfg.epsilon_rel;
}

// RFF seed for trial `trial` at grid position `m_index`.
inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t m_index, std::size_t trial) {
  return rng::derive(seed, {rng::kTagTrial, m_index, trial});
}

// Reports ordered by m (grid order), then trial.
inline std::vector<PerturbationReport> perturbation_experiment(const dataio::MultiViewDataset& ds,
                                                               const PerturbationConfig& cfg) {
  if (cfg.m_grid.empty() || cfg.trials == 0) {
    throw ValidationError("perturbation experiment needs a nonempty m grid and trials >= 1");
  }
  const auto H = scatter::build_structure(ds.layout);
  const auto rbf = kernels::KernelSpec::rbf(cfg.sigma);
  auto exact_grams = kernels::view_grams(ds.views, rbf);
  const auto exact_pair = scatter::build_kernel_scatter(exact_grams, H);
  const double epsilon = resolve_epsilon(cfg, exact_pair.S);
  const KernelPipeline exact = solve_pipeline(std::move(exact_grams), H, epsilon, cfg.l);

  ComparisonOptions opt;
  opt.eta = cfg.eta;
  opt.with_crawford = cfg.with_crawford;
  opt.crawford.seed = cfg.seed;
  const ExactCrawford cached = exact_crawford(exact, opt);

  const std::size_t total = cfg.m_grid.size() * cfg.trials;
  std::vector<PerturbationReport> reports(total);
  parallel_for(total, cfg.threads, [&](std::size_t idx) {
    const std::size_t mi = idx / cfg.trials;
    const std::size_t trial = idx % cfg.trials;
    const std::uint64_t seed = trial_seed(cfg.seed, mi, trial);
    const auto spec = kernels::KernelSpec::rff(cfg.sigma, cfg.m_grid[mi], seed, false);
    const KernelPipeline approx =
        solve_pipeline(kernels::view_grams(ds.views, spec), H, epsilon, cfg.l);
    ComparisonOptions local = opt;
    local.crawford.seed = seed;
    PerturbationReport rep = compare_pipelines(exact, approx, cfg.m_grid[mi], local, cached);
    rep.trial = trial;
    rep.seed = seed;
    reports[idx] = std::move(rep);
  });
  return reports;
}

inline double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

struct MedianRow {
  std::size_t m = 0;
  double sin_theta_spectral = 0.0;
  double sin_theta_frobenius = 0.0;
  double kernel_error = 0.0;
  double xi = 0.0;
  std::size_t trials = 0;
  std::size_t thm3_usable = 0;
  std::size_t thm3_vacuous = 0;
  std::size_t thm3_inapplicable = 0;
};

// Per-m medians, in order of first appearance of each m.
inline std::vector<MedianRow> median_by_m(const std::vector<PerturbationReport>& reports) {
  std::vector<MedianRow> rows;
  std::vector<std::size_t> ms;
  for (const auto& r : reports) {
    if (std::find(ms.begin(), ms.end(), r.m) == ms.end()) ms.push_back(r.m);
  }
  for (std::size_t m : ms) {
    MedianRow row;
    row.m = m;
    std::vector<double> sp, fro, err, xi;
    for (const auto& r : reports) {
      if (r.m != m) continue;
      ++row.trials;
      sp.push_back(r.sin_theta_spectral);
      fro.push_back(r.sin_theta_frobenius);
      err.push_back(r.kernel_error);
      xi.push_back(r.xi);
      switch (r.bound_thm3.status) {
        case BoundStatus::ok: ++row.thm3_usable; break;
        case BoundStatus::vacuous: ++row.thm3_vacuous; break;
        case BoundStatus::inapplicable: ++row.thm3_inapplicable; break;
      }
    }
    row.sin_theta_spectral = median(sp);
    row.sin_theta_frobenius = median(fro);
    row.kernel_error = median(err);
    row.xi = median(xi);
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json to_json(const BoundValue& b) {
  nlohmann::json j = {{"value", b.value}, {"status", to_string(b.status)}};
  if (!b.reason.empty()) j["reason"] = b.reason;
  return j;
}

inline nlohmann::json to_json(const PerturbationReport& r) {
  return {{"m", r.m},
          {"trial", r.trial},
          {"seed", r.seed},
          {"eta", r.eta},
          {"epsilon", r.epsilon},
          {"l", r.l},
          {"sin_theta_sp", r.sin_theta_spectral},
          {"sin_theta_fro", r.sin_theta_frobenius},
          {"gap", r.gap},
          {"proj_dist_sp", r.proj_dist_spectral},
          {"proj_dist_fro", r.proj_dist_frobenius},
          {"kernel_error", r.kernel_error},
          {"K_star", r.K_star},
          {"K_hat_star", r.K_hat_star},
          {"xi", r.xi},
          {"crawford_exact", r.crawford_exact},
          {"crawford_approx", r.crawford_approx},
          {"crawford_exact_reg", r.crawford_exact_reg},
          {"crawford_approx_reg", r.crawford_approx_reg},
          {"delta", r.eigengap.delta},
          {"separation",
           {{"alpha", r.separation.alpha},
            {"delta", r.separation.delta},
            {"gamma", r.separation.gamma},
            {"feasible", r.separation.feasible},
            {"sin_theta_g", r.separation.sin_theta_g}}},
          {"bound_thm2", to_json(r.bound_thm2)},
          {"bound_thm3", to_json(r.bound_thm3)}};
}

// Flat CSV schema, one row per (m, trial).
inline const char* kPerturbationCsvHeader =
    "m,trial,sin_theta_sp,sin_theta_fro,gap,delta,xi,bound_thm3,bound_thm2,crawford_exact,"
    "crawford_approx,vacuous_flags";

// vacuous_flags: two characters for (thm3, thm2); 'o' ok, 'v' vacuous,
// 'i' inapplicable.
inline std::string vacuous_flags(const PerturbationReport& r) {
  auto flag = [](BoundStatus s) {
    switch (s) {
      case BoundStatus::ok: return 'o';
      case BoundStatus::vacuous: return 'v';
      case BoundStatus::inapplicable: return 'i';
    }
    return '?';
  };
  return {flag(r.bound_thm3.status), flag(r.bound_thm2.status)};
}

inline std::string to_csv_row(const PerturbationReport& r) {
  using dataio::format_double;
  return std::to_string(r.m) + "," + std::to_string(r.trial) + "," +
         format_double(r.sin_theta_spectral) + "," + format_double(r.sin_theta_frobenius) + "," +
         format_double(r.gap) + "," + format_double(r.eigengap.delta) + "," +
         format_double(r.xi) + "," + format_double(r.bound_thm3.value) + "," +
         format_double(r.bound_thm2.value) + "," + format_double(r.crawford_exact) + "," +
         format_double(r.crawford_approx) + "," + vacuous_flags(r);
}

}  // namespace mvda::subspace
