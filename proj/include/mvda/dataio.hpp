#pragma once

// Multi-view datasets: layout bookkeeping, CSV/manifest I/O, synthetic
// generation and class-disjoint splits.
//
// Rows of every view are stored grouped by class, in one canonical class
// order shared by all views. Downstream code relies on this: the indicator
// vector of class i in view j is the contiguous row range
// [layout.class_offset(i, j), layout.class_offset(i, j) + n_ij).

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvda/error.hpp"
#include "mvda/rng.hpp"

namespace mvda::dataio {

using Matrix = Eigen::MatrixXd;

struct ViewLayout {
  std::size_t v = 0;
  std::size_t c = 0;
  // counts[i][j] = n_ij, samples of class i in view j.
  std::vector<std::vector<std::size_t>> counts;
  std::vector<std::string> class_order;

  std::size_t n_ij(std::size_t i, std::size_t j) const { return counts.at(i).at(j); }

  std::size_t n_i(std::size_t i) const {
    const auto& row = counts.at(i);
    return std::accumulate(row.begin(), row.end(), std::size_t{0});
  }

  std::size_t n_j(std::size_t j) const {
    std::size_t total = 0;
    for (const auto& row : counts) total += row.at(j);
    return total;
  }

  std::size_t n() const {
    std::size_t total = 0;
    for (std::size_t i = 0; i < c; ++i) total += n_i(i);
    return total;
  }

  // First row of class i inside view j.
  std::size_t class_offset(std::size_t i, std::size_t j) const {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < i; ++k) offset += counts.at(k).at(j);
    return offset;
  }

  // First row of view j inside the stacked n-vector (views in order).
  std::size_t view_offset(std::size_t j) const {
    std::size_t offset = 0;
    for (std::size_t r = 0; r < j; ++r) offset += n_j(r);
    return offset;
  }

  bool balanced() const {
    if (c == 0 || v == 0) return false;
    const std::size_t first = counts[0][0];
    for (const auto& row : counts) {
      for (std::size_t value : row) {
        if (value != first) return false;
      }
    }
    return true;
  }

  bool operator==(const ViewLayout&) const = default;
};

struct MultiViewDataset {
  std::vector<Matrix> views;                      // view j: n_j x d_j
  std::vector<std::vector<std::size_t>> labels;   // class indices into layout.class_order
  ViewLayout layout;
  // Load-time remarks, e.g. classes absent from a view.
  std::vector<std::string> notes;

  std::size_t d(std::size_t j) const { return static_cast<std::size_t>(views.at(j).cols()); }

  bool operator==(const MultiViewDataset& other) const {
    if (layout != other.layout || labels != other.labels) return false;
    if (views.size() != other.views.size()) return false;
    for (std::size_t j = 0; j < views.size(); ++j) {
      if (views[j].rows() != other.views[j].rows() ||
          views[j].cols() != other.views[j].cols() || views[j] != other.views[j]) {
        return false;
      }
    }
    return true;
  }
};

struct SynthesisConfig {
  std::size_t classes = 4;
  std::size_t views = 2;
  std::size_t per_class = 10;           // samples per class per view
  std::vector<std::size_t> dims{8, 8};  // one entry per view, or one shared entry
  std::size_t latent_dim = 3;
  double noise = 0.1;
  bool nonlinear = false;
  std::uint64_t seed = 0;

  std::size_t dim(std::size_t j) const { return dims.size() == 1 ? dims[0] : dims.at(j); }

  void validate() const {
    if (classes < 1) throw ValidationError("synthesis: classes must be >= 1");
    if (views < 1) throw ValidationError("synthesis: views must be >= 1");
    if (per_class < 1) throw ValidationError("synthesis: per_class must be >= 1");
    if (latent_dim < 1) throw ValidationError("synthesis: latent_dim must be >= 1");
    if (!(noise >= 0.0) || !std::isfinite(noise)) {
      throw ValidationError("synthesis: noise must be finite and >= 0");
    }
    if (dims.size() != 1 && dims.size() != views) {
      throw ValidationError("synthesis: dims must have 1 or `views` entries");
    }
    for (std::size_t d : dims) {
      if (d < 1) throw ValidationError("synthesis: every view dimension must be >= 1");
    }
  }
};

// --- layout -----------------------------------------------------------------

// Recomputes counts from per-view labels. Throws if any class has no sample.
inline ViewLayout layout_from_labels(const std::vector<std::vector<std::size_t>>& labels,
                                     std::vector<std::string> class_order) {
  ViewLayout layout;
  layout.v = labels.size();
  layout.c = class_order.size();
  layout.class_order = std::move(class_order);
  layout.counts.assign(layout.c, std::vector<std::size_t>(layout.v, 0));
  for (std::size_t j = 0; j < layout.v; ++j) {
    for (std::size_t label : labels[j]) {
      if (label >= layout.c) throw ValidationError("label index out of range");
      ++layout.counts[label][j];
    }
  }
  for (std::size_t i = 0; i < layout.c; ++i) {
    if (layout.n_i(i) == 0) {
      throw ValidationError("class '" + layout.class_order[i] + "' has no samples in any view");
    }
  }
  return layout;
}

// Stable regrouping of each view's rows by class index. Idempotent.
inline MultiViewDataset canonicalize(std::vector<Matrix> views,
                                     std::vector<std::vector<std::size_t>> labels,
                                     std::vector<std::string> class_order) {
  if (views.size() != labels.size()) {
    throw ValidationError("view count does not match label-file count");
  }
  MultiViewDataset ds;
  for (std::size_t j = 0; j < views.size(); ++j) {
    if (static_cast<std::size_t>(views[j].rows()) != labels[j].size()) {
      throw ValidationError("view " + std::to_string(j) + ": " +
                            std::to_string(views[j].rows()) + " rows but " +
                            std::to_string(labels[j].size()) + " labels");
    }
    std::vector<std::size_t> order(labels[j].size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return labels[j][a] < labels[j][b];
    });
    Matrix sorted(views[j].rows(), views[j].cols());
    std::vector<std::size_t> sorted_labels(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      sorted.row(static_cast<Eigen::Index>(r)) = views[j].row(static_cast<Eigen::Index>(order[r]));
      sorted_labels[r] = labels[j][order[r]];
    }
    ds.views.push_back(std::move(sorted));
    ds.labels.push_back(std::move(sorted_labels));
  }
  ds.layout = layout_from_labels(ds.labels, std::move(class_order));
  for (std::size_t i = 0; i < ds.layout.c; ++i) {
    for (std::size_t j = 0; j < ds.layout.v; ++j) {
      if (ds.layout.n_ij(i, j) == 0) {
        ds.notes.push_back("class '" + ds.layout.class_order[i] + "' absent from view " +
                           std::to_string(j) + " (n_ij = 0)");
      }
    }
  }
  return ds;
}

inline void check_layout_identities(const MultiViewDataset& ds) {
  const auto& L = ds.layout;
  std::size_t by_view = 0;
  std::size_t by_class = 0;
  for (std::size_t j = 0; j < L.v; ++j) {
    by_view += L.n_j(j);
    if (static_cast<std::size_t>(ds.views.at(j).rows()) != L.n_j(j)) {
      throw ValidationError("layout/view row mismatch in view " + std::to_string(j));
    }
  }
  for (std::size_t i = 0; i < L.c; ++i) by_class += L.n_i(i);
  if (by_view != L.n() || by_class != L.n()) throw ValidationError("layout counts inconsistent");
}

// --- CSV --------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace detail

// Reads a header-less numeric CSV. Lines starting with '#' are skipped.
inline Matrix read_matrix_csv(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    std::size_t count = 0;
    while (true) {
      const std::size_t comma = text.find(',');
      std::string_view cell = detail::trim(text.substr(0, comma));
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed cell '" +
                         std::string(cell) + "'");
      }
      if (!std::isfinite(value)) {
        throw ParseError("non-finite value at (" + std::to_string(rows) + "," +
                         std::to_string(count) + ") in " + path.string());
      }
      values.push_back(value);
      ++count;
      if (comma == std::string_view::npos) break;
      text.remove_prefix(comma + 1);
    }
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(cols) + " columns, found " + std::to_string(count));
    }
    ++rows;
  }
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < cols; ++k) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = values[r * cols + k];
    }
  }
  return out;
}

inline std::vector<std::string> read_labels(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view token = detail::trim(line);
    if (token.empty() || token.front() == '#') continue;
    labels.emplace_back(token);
  }
  return labels;
}

// Shortest decimal form that round-trips to the same double.
inline std::string format_double(double value) {
  char buffer[32];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, ptr);
}

inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      if (k) out << ',';
      out << format_double(m(r, k));
    }
    out << '\n';
  }
}

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                             const std::string& header_comment = {}) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  write_matrix_csv(out, m);
}

// --- loading ----------------------------------------------------------------

// Class order: first appearance in view 0's labels, then any class first seen
// in a later view, in order of appearance.
inline MultiViewDataset load_multiview(const std::vector<std::filesystem::path>& view_paths,
                                       const std::vector<std::filesystem::path>& label_paths) {
  if (view_paths.empty()) throw ValidationError("no views given");
  if (view_paths.size() != label_paths.size()) {
    throw ValidationError("need one label file per view");
  }
  std::vector<Matrix> views;
  std::vector<std::vector<std::string>> raw_labels;
  for (std::size_t j = 0; j < view_paths.size(); ++j) {
    views.push_back(read_matrix_csv(view_paths[j]));
    raw_labels.push_back(read_labels(label_paths[j]));
    if (static_cast<std::size_t>(views.back().rows()) != raw_labels.back().size()) {
      throw ValidationError("view " + std::to_string(j) + ": " +
                            std::to_string(views.back().rows()) + " rows but " +
                            std::to_string(raw_labels.back().size()) + " labels");
    }
  }
  std::vector<std::string> class_order;
  std::map<std::string, std::size_t> index;
  for (const auto& view_labels : raw_labels) {
    for (const auto& label : view_labels) {
      if (index.emplace(label, class_order.size()).second) class_order.push_back(label);
    }
  }
  std::vector<std::vector<std::size_t>> labels;
  for (const auto& view_labels : raw_labels) {
    std::vector<std::size_t> ids;
    ids.reserve(view_labels.size());
    for (const auto& label : view_labels) ids.push_back(index.at(label));
    labels.push_back(std::move(ids));
  }
  return canonicalize(std::move(views), std::move(labels), std::move(class_order));
}

struct ManifestEntry {
  std::string name;
  std::filesystem::path data;
  std::filesystem::path labels;
};

// Manifest: {"views": [{"name": "...", "data": "view_0.csv", "labels": "labels_0.csv"}, ...]}
// Relative paths resolve against the manifest's directory.
inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("views") || !doc["views"].is_array()) {
    throw ParseError(path.string() + ": manifest needs a 'views' array");
  }
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  for (const auto& item : doc["views"]) {
    if (!item.contains("data") || !item.contains("labels")) {
      throw ParseError(path.string() + ": each view needs 'data' and 'labels'");
    }
    ManifestEntry entry;
    entry.name = item.value("name", "view_" + std::to_string(entries.size()));
    entry.data = base / item["data"].get<std::string>();
    entry.labels = base / item["labels"].get<std::string>();
    entries.push_back(std::move(entry));
  }
  return entries;
}

inline MultiViewDataset load_manifest(const std::filesystem::path& path) {
  const auto entries = read_manifest(path);
  std::vector<std::filesystem::path> data;
  std::vector<std::filesystem::path> labels;
  for (const auto& e : entries) {
    data.push_back(e.data);
    labels.push_back(e.labels);
  }
  return load_multiview(data, labels);
}

// Writes manifest.json, view_<j>.csv and labels_<j>.csv into `dir`. A
// nonempty header becomes a leading '#' line in each CSV and the manifest's
// "generator" field.
inline void write_dataset(const std::filesystem::path& dir, const MultiViewDataset& ds,
                          const std::string& header_comment = {}) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  if (!header_comment.empty()) manifest["generator"] = header_comment;
  manifest["views"] = nlohmann::json::array();
  for (std::size_t j = 0; j < ds.views.size(); ++j) {
    const std::string data = "view_" + std::to_string(j) + ".csv";
    const std::string labels = "labels_" + std::to_string(j) + ".csv";
    write_matrix_csv(dir / data, ds.views[j], header_comment);
    std::ofstream out(dir / labels);
    if (!out) throw IoError("cannot write " + (dir / labels).string());
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    for (std::size_t label : ds.labels[j]) out << ds.layout.class_order.at(label) << '\n';
    manifest["views"].push_back({{"name", "view_" + std::to_string(j)}, {"data", data}, {"labels", labels}});
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest");
  out << manifest.dump(2) << '\n';
}

// --- synthesis --------------------------------------------------------------

// Coordinatewise fold applied to views 1..v-1 when `nonlinear` is set; view
// 0 stays linear in the latent point. The fold makes the cross-view
// correspondence non-linear, which linear projections cannot undo.
inline double synthetic_warp(double t) { return std::abs(t); }

struct SyntheticDraw {
  MultiViewDataset dataset;
  Matrix centers;               // c x latent_dim
  std::vector<Matrix> latent;   // per view, n_j x latent_dim, rows aligned with dataset
};

// Latent class centers ~ N(0, I). Each sample is its class center plus
// isotropic latent noise, pushed through a per-view Gaussian map A_j
// (d_j x latent, entries N(0, 1/latent)) and, optionally, the fold.
inline SyntheticDraw generate_synthetic_with_latent(const SynthesisConfig& cfg) {
  cfg.validate();
  const auto c = static_cast<Eigen::Index>(cfg.classes);
  const auto q = static_cast<Eigen::Index>(cfg.latent_dim);
  const auto per = static_cast<Eigen::Index>(cfg.per_class);

  SyntheticDraw draw;
  const rng::CounterStream center_stream(rng::derive(cfg.seed, {rng::kTagSynthCenters}));
  draw.centers.resize(c, q);
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index k = 0; k < q; ++k) {
      draw.centers(i, k) = center_stream.normal(static_cast<std::uint64_t>(i * q + k));
    }
  }

  std::vector<Matrix> views;
  std::vector<std::vector<std::size_t>> labels;
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(q));
  for (std::size_t j = 0; j < cfg.views; ++j) {
    const auto d = static_cast<Eigen::Index>(cfg.dim(j));
    const rng::CounterStream map_stream(rng::derive(cfg.seed, {rng::kTagSynthMap, j}));
    const rng::CounterStream noise_stream(rng::derive(cfg.seed, {rng::kTagSynthNoise, j}));
    Matrix map(d, q);
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index k = 0; k < q; ++k) {
        map(r, k) = map_scale * map_stream.normal(static_cast<std::uint64_t>(r * q + k));
      }
    }
    Matrix latent(c * per, q);
    for (Eigen::Index i = 0; i < c; ++i) {
      for (Eigen::Index s = 0; s < per; ++s) {
        const Eigen::Index row = i * per + s;
        for (Eigen::Index k = 0; k < q; ++k) {
          latent(row, k) = draw.centers(i, k) +
                           cfg.noise * noise_stream.normal(static_cast<std::uint64_t>(row * q + k));
        }
      }
    }
    Matrix x = latent * map.transpose();
    if (cfg.nonlinear && j > 0) x = x.unaryExpr([](double t) { return synthetic_warp(t); });
    std::vector<std::size_t> view_labels(static_cast<std::size_t>(c * per));
    for (Eigen::Index row = 0; row < c * per; ++row) {
      view_labels[static_cast<std::size_t>(row)] = static_cast<std::size_t>(row / per);
    }
    views.push_back(std::move(x));
    labels.push_back(std::move(view_labels));
    draw.latent.push_back(std::move(latent));
  }
  std::vector<std::string> class_order;
  for (std::size_t i = 0; i < cfg.classes; ++i) class_order.push_back("c" + std::to_string(i));
  draw.dataset = canonicalize(std::move(views), std::move(labels), std::move(class_order));
  return draw;
}

inline MultiViewDataset generate_synthetic(const SynthesisConfig& cfg) {
  return generate_synthetic_with_latent(cfg).dataset;
}

// --- splitting --------------------------------------------------------------

// Restricts a dataset to the classes [first, last) of its class order.
inline MultiViewDataset select_classes(const MultiViewDataset& ds, std::size_t first,
                                       std::size_t last) {
  const auto& L = ds.layout;
  std::vector<Matrix> views;
  std::vector<std::vector<std::size_t>> labels;
  for (std::size_t j = 0; j < L.v; ++j) {
    const auto begin = static_cast<Eigen::Index>(L.class_offset(first, j));
    const auto end = static_cast<Eigen::Index>(L.class_offset(last, j));
    views.push_back(ds.views[j].middleRows(begin, end - begin));
    std::vector<std::size_t> sub(ds.labels[j].begin() + begin, ds.labels[j].begin() + end);
    for (auto& label : sub) label -= first;
    labels.push_back(std::move(sub));
  }
  std::vector<std::string> order(L.class_order.begin() + static_cast<std::ptrdiff_t>(first),
                                 L.class_order.begin() + static_cast<std::ptrdiff_t>(last));
  return canonicalize(std::move(views), std::move(labels), std::move(order));
}

// Class-disjoint split: the first `train_classes` classes train, the rest test.
inline std::pair<MultiViewDataset, MultiViewDataset> split_by_class(const MultiViewDataset& ds,
                                                                    std::size_t train_classes) {
  if (train_classes < 1 || train_classes >= ds.layout.c) {
    throw ValidationError("train_classes must lie in [1, " + std::to_string(ds.layout.c) +
                          "), got " + std::to_string(train_classes));
  }
  return {select_classes(ds, 0, train_classes), select_classes(ds, train_classes, ds.layout.c)};
}

// --- benchmarks -------------------------------------------------------------

// A named synthetic benchmark: `train_classes` training classes followed by
// the same number of held-out classes from the same generator. Because the
// generator is counter-based, the training part equals the dataset drawn
// with classes = train_classes.
struct BenchmarkSpec {
  SynthesisConfig synthesis;
  std::size_t train_classes = 0;
};

// Standard: 8 classes (4 train, 4 held out), v = 2, 10 per class per view
// (training n = 80), linear views.
inline BenchmarkSpec standard_benchmark(std::uint64_t seed) {
  BenchmarkSpec b;
  b.synthesis.classes = 8;
  b.synthesis.views = 2;
  b.synthesis.per_class = 10;
  b.synthesis.dims = {8, 8};
  b.synthesis.latent_dim = 3;
  b.synthesis.noise = 0.1;
  b.synthesis.nonlinear = false;
  b.synthesis.seed = seed;
  b.train_classes = 4;
  return b;
}

// Nonlinear: 20 classes (10 train, 10 held out), v = 2, 6 per class per view,
// views after the first folded.
inline BenchmarkSpec nonlinear_benchmark(std::uint64_t seed, std::size_t views = 2) {
  BenchmarkSpec b;
  b.synthesis.classes = 20;
  b.synthesis.views = views;
  b.synthesis.per_class = 6;
  b.synthesis.dims = {8};
  b.synthesis.latent_dim = 2;
  b.synthesis.noise = 0.05;
  b.synthesis.nonlinear = true;
  b.synthesis.seed = seed;
  b.train_classes = 10;
  return b;
}

inline std::pair<MultiViewDataset, MultiViewDataset> make_benchmark(const BenchmarkSpec& b) {
  return split_by_class(generate_synthetic(b.synthesis), b.train_classes);
}

}  // namespace mvda::dataio
