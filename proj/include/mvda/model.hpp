#pragma once

// Fit, project and classify with kernel multi-view discriminant analysis.
//
// Kernel mode stores the top-l eigenvector slices Z^j (n_j x l) and projects
// y through k(y, X_j) Z^j. With an RFF kernel the test-time kernel columns
// are Phi(y) Phi_j^T, using the same normalization flag as training.
// Feature-space mode treats the RFF features as explicit data and learns
// per-view m x l projection blocks directly.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvda/dataio.hpp"
#include "mvda/error.hpp"
#include "mvda/gep.hpp"
#include "mvda/kernels.hpp"
#include "mvda/linalg.hpp"
#include "mvda/parallel.hpp"
#include "mvda/rng.hpp"
#include "mvda/scatter.hpp"

namespace mvda::model {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using kernels::KernelKind;
using kernels::KernelSpec;

enum class FitMode { kernel, feature_space };

inline std::string to_string(FitMode m) { return m == FitMode::kernel ? "kernel" : "feature_space"; }

inline FitMode fit_mode_from_string(const std::string& s) {
  if (s == "kernel") return FitMode::kernel;
  if (s == "feature_space") return FitMode::feature_space;
  throw ValidationError("unknown fit mode '" + s + "'");
}

// Regularizer: absolute value, or a multiple of trace(S) / n.
struct Regularizer {
  double value = 1e-6;
  bool relative = true;

  static Regularizer absolute(double eps) { return {eps, false}; }
  static Regularizer relative_to_trace(double factor) { return {factor, true}; }

  double resolve(const Matrix& S) const {
    if (!(value > 0.0) || !std::isfinite(value)) throw ValidationError("epsilon must be > 0");
    if (!relative) return value;
    const double mean_diag = S.rows() ? S.trace() / static_cast<double>(S.rows()) : 0.0;
    return mean_diag > 0.0 ? value * mean_diag : value;
  }
};

struct ProjectionModel {
  KernelSpec kernel;
  FitMode mode = FitMode::kernel;
  double epsilon = 0.0;
  std::size_t l = 0;
  dataio::ViewLayout layout;
  Vector eigenvalues;                 // leading l, descending
  std::vector<Matrix> blocks;         // Z^j (n_j x l) or m x l in feature-space mode
  std::vector<Matrix> train_views;    // kernel mode only
  std::vector<kernels::RffMap> maps;  // RFF only
  std::vector<Matrix> rff_lift;       // RFF kernel mode: Phi_j^T Z^j (m x l)

  std::size_t views() const { return blocks.size(); }

  // Same model restricted to the leading `dim` directions.
  ProjectionModel truncated(std::size_t dim) const {
    if (dim < 1 || dim > l) {
      throw ValidationError("cannot truncate an l=" + std::to_string(l) + " model to " +
                            std::to_string(dim));
    }
    ProjectionModel out = *this;
    const auto k = static_cast<Eigen::Index>(dim);
    out.l = dim;
    out.eigenvalues = eigenvalues.head(k);
    for (auto& b : out.blocks) b = Matrix(b.leftCols(k));
    for (auto& b : out.rff_lift) b = Matrix(b.leftCols(k));
    return out;
  }
};

namespace detail {

inline std::vector<Matrix> rff_features(const std::vector<Matrix>& views,
                                        const std::vector<kernels::RffMap>& maps, bool normalize) {
  std::vector<Matrix> out;
  out.reserve(views.size());
  for (std::size_t j = 0; j < views.size(); ++j) {
    out.push_back(kernels::rff_transform(views[j], maps[j], normalize));
  }
  return out;
}

inline void compute_rff_lift(ProjectionModel& model) {
  model.rff_lift.clear();
  if (model.kernel.kind != KernelKind::rff || model.mode != FitMode::kernel) return;
  const auto phi = rff_features(model.train_views, model.maps, model.kernel.normalize);
  for (std::size_t j = 0; j < phi.size(); ++j) {
    model.rff_lift.push_back(phi[j].transpose() * model.blocks[j]);
  }
}

inline void check_degenerate(const Matrix& D, double scale, const gep::EigenSolution& sol) {
  if (D.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
    throw NumericalError("between-class scatter is zero");
  }
  if (sol.whitened_spread < 1e-10) {
    throw NumericalError("degenerate kernel: whitened eigenvalue spread " +
                         dataio::format_double(sol.whitened_spread) + " below 1e-10");
  }
}

}  // namespace detail

inline ProjectionModel fit(const dataio::MultiViewDataset& train, const KernelSpec& kernel,
                           const Regularizer& reg, std::size_t l,
                           FitMode mode = FitMode::kernel) {
  kernel.validate();
  const auto& L = train.layout;
  if (L.c < 2) throw NumericalError("between-class scatter is zero");
  if (mode == FitMode::feature_space && kernel.kind != KernelKind::rff) {
    throw ValidationError("feature-space mode needs an RFF kernel");
  }
  ProjectionModel model;
  model.kernel = kernel;
  model.mode = mode;
  model.layout = L;
  if (kernel.kind == KernelKind::rff) {
    for (std::size_t j = 0; j < L.v; ++j) model.maps.push_back(kernels::rff_sample(train.d(j), kernel, j));
  }

  scatter::ScatterPair pair;
  double scale = 0.0;
  std::vector<Eigen::Index> block_rows;
  if (mode == FitMode::kernel) {
    if (l < 1 || l > L.n()) throw ValidationError("projection dimension l must lie in [1, n]");
    std::vector<Matrix> grams;
    if (kernel.kind == KernelKind::rff) {
      for (const auto& phi : detail::rff_features(train.views, model.maps, kernel.normalize)) {
        grams.push_back(kernels::approx_gram(phi));
      }
    } else {
      grams = kernels::view_grams(train.views, kernel);
    }
    for (const auto& k : grams) {
      scale = std::max(scale, std::pow(k.cwiseAbs().maxCoeff(), 2.0));
      block_rows.push_back(k.rows());
    }
    pair = scatter::build_kernel_scatter(grams, scatter::build_structure(L));
    model.train_views = train.views;
  } else {
    const auto phi = detail::rff_features(train.views, model.maps, kernel.normalize);
    const std::size_t total = kernel.m * L.v;
    if (l < 1 || l > total) throw ValidationError("projection dimension l must lie in [1, v m]");
    for (const auto& p : phi) {
      scale = std::max(scale, std::pow(p.cwiseAbs().maxCoeff(), 2.0));
      block_rows.push_back(p.cols());
    }
    pair = scatter::build_linear_scatter(phi, L);
  }
  scale = std::max(scale, std::numeric_limits<double>::min());

  model.epsilon = reg.resolve(pair.S);
  const auto sol = gep::solve_regularized(pair.D, pair.S, model.epsilon, l);
  detail::check_degenerate(pair.D, scale, sol);
  model.l = l;
  model.eigenvalues = sol.eigenvalues.head(static_cast<Eigen::Index>(l));
  const Matrix top = sol.top();
  Eigen::Index offset = 0;
  for (Eigen::Index rows : block_rows) {
    model.blocks.push_back(top.middleRows(offset, rows));
    offset += rows;
  }
  detail::compute_rff_lift(model);
  return model;
}

// Common-space coordinates (rows x l) of samples Y from view j.
inline Matrix project(const ProjectionModel& model, std::size_t j, const Matrix& Y) {
  if (j >= model.views()) {
    throw ValidationError("unknown view index " + std::to_string(j) + " (model has " +
                          std::to_string(model.views()) + " views)");
  }
  if (model.kernel.kind == KernelKind::rff) {
    const Matrix phi = kernels::rff_transform(Y, model.maps[j], model.kernel.normalize);
    return model.mode == FitMode::kernel ? Matrix(phi * model.rff_lift[j]) : Matrix(phi * model.blocks[j]);
  }
  const Matrix& X = model.train_views[j];
  if (Y.cols() != X.cols()) {
    throw DimensionError("view " + std::to_string(j) + " expects dimension " +
                         std::to_string(X.cols()) + ", got " + std::to_string(Y.cols()));
  }
  return kernels::gram(Y, X, model.kernel) * model.blocks[j];
}

// Index of the Euclidean nearest gallery row for every probe row; ties go to
// the lowest gallery index.
inline std::vector<std::size_t> nearest_neighbors(const Matrix& probe, const Matrix& gallery) {
  if (gallery.rows() == 0) throw ValidationError("gallery is empty");
  if (probe.cols() != gallery.cols()) throw DimensionError("probe/gallery dimension mismatch");
  std::vector<std::size_t> out(static_cast<std::size_t>(probe.rows()));
  for (Eigen::Index p = 0; p < probe.rows(); ++p) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = 0;
    for (Eigen::Index g = 0; g < gallery.rows(); ++g) {
      const double d = (probe.row(p) - gallery.row(g)).squaredNorm();
      if (d < best) {
        best = d;
        arg = g;
      }
    }
    out[static_cast<std::size_t>(p)] = static_cast<std::size_t>(arg);
  }
  return out;
}

struct EvalParams {
  KernelKind kind = KernelKind::linear;
  double sigma = 0.0;
  std::size_t m = 0;
  std::size_t l = 0;
  double epsilon = 0.0;
};

struct EvalResult {
  std::size_t probe_view = 0;
  std::size_t gallery_view = 0;
  double rate = 0.0;  // percent
  std::vector<std::size_t> predicted;
  EvalParams params;
};

struct ViewSamples {
  std::size_t view = 0;
  Matrix samples;
  std::vector<std::size_t> labels;
};

inline EvalParams params_of(const ProjectionModel& model) {
  return {model.kernel.kind, model.kernel.kind == KernelKind::linear ? 0.0 : model.kernel.sigma,
          model.kernel.kind == KernelKind::rff ? model.kernel.m : 0, model.l, model.epsilon};
}

// Rank-1 evaluation on already projected coordinates.
inline EvalResult rank1(const Matrix& probe, const std::vector<std::size_t>& probe_labels,
                        const Matrix& gallery, const std::vector<std::size_t>& gallery_labels) {
  if (static_cast<std::size_t>(probe.rows()) != probe_labels.size() ||
      static_cast<std::size_t>(gallery.rows()) != gallery_labels.size()) {
    throw DimensionError("label count does not match sample count");
  }
  if (probe.rows() == 0) throw ValidationError("probe set is empty");
  EvalResult r;
  const auto nn = nearest_neighbors(probe, gallery);
  std::size_t correct = 0;
  r.predicted.reserve(nn.size());
  for (std::size_t p = 0; p < nn.size(); ++p) {
    r.predicted.push_back(gallery_labels[nn[p]]);
    if (r.predicted.back() == probe_labels[p]) ++correct;
  }
  r.rate = 100.0 * static_cast<double>(correct) / static_cast<double>(nn.size());
  return r;
}

inline EvalResult classify_cross_view(const ProjectionModel& model, const ViewSamples& probe,
                                      const ViewSamples& gallery) {
  if (gallery.samples.rows() == 0) throw ValidationError("gallery is empty");
  EvalResult r = rank1(project(model, probe.view, probe.samples), probe.labels,
                       project(model, gallery.view, gallery.samples), gallery.labels);
  r.probe_view = probe.view;
  r.gallery_view = gallery.view;
  r.params = params_of(model);
  return r;
}

// v x v rank-1 table on a test dataset; the diagonal is NaN.
inline Matrix cross_view_table_from_coords(const std::vector<Matrix>& coords,
                                           const dataio::MultiViewDataset& test) {
  const auto v = static_cast<Eigen::Index>(coords.size());
  Matrix t = Matrix::Constant(v, v, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index p = 0; p < v; ++p) {
    for (Eigen::Index g = 0; g < v; ++g) {
      if (p == g) continue;
      t(p, g) = rank1(coords[static_cast<std::size_t>(p)], test.labels[static_cast<std::size_t>(p)],
                      coords[static_cast<std::size_t>(g)], test.labels[static_cast<std::size_t>(g)])
                    .rate;
    }
  }
  return t;
}

inline std::vector<Matrix> project_all(const ProjectionModel& model,
                                       const dataio::MultiViewDataset& ds) {
  if (ds.views.size() != model.views()) {
    throw DimensionError("dataset has " + std::to_string(ds.views.size()) + " views, model has " +
                         std::to_string(model.views()));
  }
  std::vector<Matrix> coords;
  for (std::size_t j = 0; j < ds.views.size(); ++j) coords.push_back(project(model, j, ds.views[j]));
  return coords;
}

inline Matrix cross_view_table(const ProjectionModel& model, const dataio::MultiViewDataset& test) {
  return cross_view_table_from_coords(project_all(model, test), test);
}

// Mean of the off-diagonal entries.
inline double mean_off_diagonal(const Matrix& t) {
  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index p = 0; p < t.rows(); ++p) {
    for (Eigen::Index g = 0; g < t.cols(); ++g) {
      if (p != g) {
        sum += t(p, g);
        ++count;
      }
    }
  }
  return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepConfig {
  std::vector<KernelKind> kinds{KernelKind::linear, KernelKind::rbf, KernelKind::rff};
  std::vector<double> sigmas{1.0};
  std::vector<std::size_t> ls{1};
  std::vector<std::size_t> ms{256};
  Regularizer reg;
  std::size_t rff_seeds = 10;
  std::uint64_t seed = 0;
  bool normalize = true;
  FitMode rff_mode = FitMode::kernel;
  std::size_t threads = 1;
};

struct SweepRow {
  KernelKind kind = KernelKind::linear;
  double sigma = 0.0;  // 0 for linear
  std::size_t m = 0;   // 0 unless RFF
  std::size_t l = 0;
  std::size_t seed_index = 0;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  double rate = 0.0;   // mean off-diagonal rank-1 rate
  Matrix table;        // v x v, NaN diagonal
};

// One (kind, sigma, m, l) grid point; RFF rates are the median over seeds and
// `representative` indexes the row (lower-median seed) whose table is shown.
struct SweepPoint {
  KernelKind kind = KernelKind::linear;
  double sigma = 0.0;
  std::size_t m = 0;
  std::size_t l = 0;
  double rate = 0.0;
  std::size_t representative = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepPoint> points;
  std::vector<SweepPoint> best;  // one per kernel kind, in config order
};

inline std::uint64_t sweep_seed(std::uint64_t seed, std::size_t seed_index) {
  return rng::derive(seed, {rng::kTagTrial, seed_index});
}

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t h = xs.size() / 2;
  return xs.size() % 2 ? xs[h] : 0.5 * (xs[h - 1] + xs[h]);
}

inline SweepResult sweep(const dataio::MultiViewDataset& train, const dataio::MultiViewDataset& test,
                         const SweepConfig& cfg) {
  if (cfg.kinds.empty() || cfg.ls.empty()) throw ValidationError("sweep grids must be nonempty");
  for (auto kind : cfg.kinds) {
    if (kind != KernelKind::linear && cfg.sigmas.empty()) throw ValidationError("sigma grid is empty");
    if (kind == KernelKind::rff && (cfg.ms.empty() || cfg.rff_seeds == 0)) {
      throw ValidationError("RFF sweep needs a nonempty m grid and at least one seed");
    }
  }
  const std::size_t l_max = *std::max_element(cfg.ls.begin(), cfg.ls.end());
  if (*std::min_element(cfg.ls.begin(), cfg.ls.end()) < 1) throw ValidationError("l must be >= 1");

  struct FitPoint {
    KernelSpec spec;
    std::size_t seed_index = 0;
  };
  std::vector<FitPoint> fits;
  for (auto kind : cfg.kinds) {
    if (kind == KernelKind::linear) {
      fits.push_back({KernelSpec::linear(), 0});
    } else if (kind == KernelKind::rbf) {
      for (double s : cfg.sigmas) fits.push_back({KernelSpec::rbf(s), 0});
    } else {
      for (double s : cfg.sigmas) {
        for (std::size_t m : cfg.ms) {
          for (std::size_t t = 0; t < cfg.rff_seeds; ++t) {
            fits.push_back({KernelSpec::rff(s, m, sweep_seed(cfg.seed, t), cfg.normalize), t});
          }
        }
      }
    }
  }

  std::vector<std::vector<SweepRow>> per_fit(fits.size());
  parallel_for(fits.size(), cfg.threads, [&](std::size_t k) {
    const auto& fp = fits[k];
    const FitMode mode = fp.spec.kind == KernelKind::rff ? cfg.rff_mode : FitMode::kernel;
    const ProjectionModel full = fit(train, fp.spec, cfg.reg, l_max, mode);
    const auto coords = project_all(full, test);
    for (std::size_t l : cfg.ls) {
      std::vector<Matrix> sliced;
      for (const auto& c : coords) sliced.push_back(c.leftCols(static_cast<Eigen::Index>(l)));
      SweepRow row;
      row.kind = fp.spec.kind;
      row.sigma = fp.spec.kind == KernelKind::linear ? 0.0 : fp.spec.sigma;
      row.m = fp.spec.kind == KernelKind::rff ? fp.spec.m : 0;
      row.l = l;
      row.seed_index = fp.seed_index;
      row.seed = fp.spec.kind == KernelKind::rff ? fp.spec.seed : 0;
      row.epsilon = full.epsilon;
      row.table = cross_view_table_from_coords(sliced, test);
      row.rate = mean_off_diagonal(row.table);
      per_fit[k].push_back(std::move(row));
    }
  });

  // Rows ordered (kind, sigma, m, l, seed).
  SweepResult res;
  std::size_t k = 0;
  while (k < fits.size()) {
    std::size_t end = k + 1;
    const auto& s0 = fits[k].spec;
    while (end < fits.size() && fits[end].spec.kind == s0.kind && fits[end].spec.sigma == s0.sigma &&
           fits[end].spec.m == s0.m && s0.kind == KernelKind::rff) {
      ++end;
    }
    for (std::size_t li = 0; li < cfg.ls.size(); ++li) {
      const std::size_t first_row = res.rows.size();
      std::vector<std::pair<double, std::size_t>> rates;
      for (std::size_t f = k; f < end; ++f) {
        rates.emplace_back(per_fit[f][li].rate, res.rows.size());
        res.rows.push_back(per_fit[f][li]);
      }
      const auto& r0 = res.rows[first_row];
      SweepPoint pt{r0.kind, r0.sigma, r0.m, r0.l, 0.0, first_row};
      std::vector<double> values;
      for (const auto& [rate, idx] : rates) values.push_back(rate);
      pt.rate = median_of(values);
      std::stable_sort(rates.begin(), rates.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      pt.representative = rates[(rates.size() - 1) / 2].second;
      res.points.push_back(pt);
    }
    k = end;
  }

  for (auto kind : cfg.kinds) {
    std::optional<SweepPoint> best;
    for (const auto& pt : res.points) {
      if (pt.kind == kind && (!best || pt.rate > best->rate)) best = pt;
    }
    if (best) res.best.push_back(*best);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Persistence: model.json plus round-trip CSV blocks.

inline void save(const ProjectionModel& model, const std::filesystem::path& dir,
                 const std::string& header_comment = {}) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["format"] = "mvda-model";
  j["version"] = 1;
  j["kernel"] = model.kernel;
  j["mode"] = to_string(model.mode);
  j["epsilon"] = model.epsilon;
  j["l"] = model.l;
  j["layout"] = {{"views", model.layout.v},
                 {"classes", model.layout.class_order},
                 {"counts", model.layout.counts}};
  std::vector<double> ev(model.eigenvalues.data(), model.eigenvalues.data() + model.eigenvalues.size());
  j["eigenvalues"] = ev;
  j["rff_maps"] = nlohmann::json::array();
  for (const auto& m : model.maps) j["rff_maps"].push_back(m);
  j["blocks"] = nlohmann::json::array();
  j["train_views"] = nlohmann::json::array();
  for (std::size_t v = 0; v < model.blocks.size(); ++v) {
    const std::string name = "block_" + std::to_string(v) + ".csv";
    dataio::write_matrix_csv(dir / name, model.blocks[v], header_comment);
    j["blocks"].push_back(name);
  }
  for (std::size_t v = 0; v < model.train_views.size(); ++v) {
    const std::string name = "train_" + std::to_string(v) + ".csv";
    dataio::write_matrix_csv(dir / name, model.train_views[v], header_comment);
    j["train_views"].push_back(name);
  }
  std::ofstream out(dir / "model.json");
  if (!out) throw IoError("cannot write " + (dir / "model.json").string());
  out << j.dump(2) << '\n';
}

inline ProjectionModel load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw IoError("cannot open " + (dir / "model.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model.json: " + std::string(e.what()));
  }
  if (j.value("format", "") != "mvda-model") throw ParseError("model.json: not a model file");
  ProjectionModel model;
  try {
    model.kernel = j.at("kernel").get<KernelSpec>();
    model.mode = fit_mode_from_string(j.at("mode").get<std::string>());
    model.epsilon = j.at("epsilon").get<double>();
    model.l = j.at("l").get<std::size_t>();
    const auto& lay = j.at("layout");
    model.layout.v = lay.at("views").get<std::size_t>();
    model.layout.class_order = lay.at("classes").get<std::vector<std::string>>();
    model.layout.c = model.layout.class_order.size();
    model.layout.counts = lay.at("counts").get<std::vector<std::vector<std::size_t>>>();
    const auto ev = j.at("eigenvalues").get<std::vector<double>>();
    model.eigenvalues = Eigen::Map<const Vector>(ev.data(), static_cast<Eigen::Index>(ev.size()));
    for (const auto& m : j.at("rff_maps")) model.maps.push_back(kernels::rff_map_from_json(m));
    for (const auto& name : j.at("blocks")) {
      model.blocks.push_back(dataio::read_matrix_csv(dir / name.get<std::string>()));
    }
    for (const auto& name : j.at("train_views")) {
      model.train_views.push_back(dataio::read_matrix_csv(dir / name.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model.json: " + std::string(e.what()));
  }
  detail::compute_rff_lift(model);
  return model;
}

}  // namespace mvda::model
