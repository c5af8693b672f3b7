#pragma once

// mvda-kit command implementations. The executable in tools/ only parses
// flags; everything here is callable from tests.
//
// A run is described by a RunConfig: one JSON object (unknown keys are
// rejected) plus flag overrides. Every output file starts with a header that
// carries the tool version and a hash of the resolved config; the hash
// ignores `threads`, `out` and `force`, which never change file contents.
//
// Seeds: the top-level `seed` drives synthesis directly, RFF maps of fit and
// dump use it as the map seed, sweep seed t uses derive(seed, trial, t) and
// perturbation trial (k, t) uses derive(seed, trial, k, t).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvda/dataio.hpp"
#include "mvda/error.hpp"
#include "mvda/experiment.hpp"
#include "mvda/gep.hpp"
#include "mvda/kernels.hpp"
#include "mvda/model.hpp"
#include "mvda/parallel.hpp"
#include "mvda/scatter.hpp"

namespace mvda::cli {

inline constexpr const char* kToolName = "mvda-kit";
inline constexpr const char* kToolVersion = "0.1.0";

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"gen", "fit", "eval", "bench", "sweep", "perturb", "dump"};
  return names;
}

struct RunConfig {
  std::string command;

  // Data: a manifest, a named benchmark, or an inline synthesis block.
  std::string manifest;
  std::string test_manifest;
  std::string benchmark;  // "standard" | "nonlinear"
  std::optional<dataio::SynthesisConfig> synthesis;
  std::size_t train_classes = 0;  // 0: no class split

  std::string kernel = "rbf";
  double sigma = 1.0;
  std::size_t m = 256;
  bool normalize = true;
  std::string rff_mode = "kernel";
  double epsilon = 0.0;       // absolute when > 0
  double epsilon_rel = 1e-6;  // otherwise epsilon_rel * trace(S) / n
  std::size_t l = 3;

  std::vector<std::string> kinds{"linear", "rbf", "rff"};
  std::vector<double> sigma_grid;
  std::vector<std::size_t> l_grid;
  std::vector<std::size_t> m_grid;
  std::size_t rff_seeds = 10;
  std::size_t trials = 10;
  double eta = 0.1;
  bool with_crawford = true;

  std::string model;  // model directory for eval
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: MVDA_KIT_THREADS, else 1
  std::string out = "out";
  bool force = false;

  std::size_t worker_count() const { return threads ? threads : default_thread_count(); }

  model::Regularizer regularizer() const {
    return epsilon > 0.0 ? model::Regularizer::absolute(epsilon)
                         : model::Regularizer::relative_to_trace(epsilon_rel);
  }

  std::vector<double> sigmas() const { return sigma_grid.empty() ? std::vector<double>{sigma} : sigma_grid; }
  std::vector<std::size_t> ls() const { return l_grid.empty() ? std::vector<std::size_t>{l} : l_grid; }
  std::vector<std::size_t> ms() const { return m_grid.empty() ? std::vector<std::size_t>{m} : m_grid; }

  kernels::KernelSpec kernel_spec() const {
    const auto kind = kernels::kernel_kind_from_string(kernel);
    switch (kind) {
      case kernels::KernelKind::linear: return kernels::KernelSpec::linear();
      case kernels::KernelKind::rbf: return kernels::KernelSpec::rbf(sigma);
      case kernels::KernelKind::rff: return kernels::KernelSpec::rff(sigma, m, seed, normalize);
    }
    return {};
  }

  void validate() const {
    bool known = false;
    for (const auto& c : commands()) known = known || c == command;
    if (!known) throw ValidationError("unknown command '" + command + "'");
    const int sources = !manifest.empty() + !benchmark.empty() + synthesis.has_value();
    if (command != "eval" && sources != 1) {
      throw ValidationError("exactly one of 'manifest', 'benchmark' or 'synthesis' is required");
    }
    if (command == "eval" && model.empty()) throw ValidationError("eval needs 'model'");
    if (!benchmark.empty() && benchmark != "standard" && benchmark != "nonlinear") {
      throw ValidationError("unknown benchmark '" + benchmark + "'");
    }
    if (synthesis) synthesis->validate();
    kernel_spec().validate();
    for (const auto& k : kinds) kernels::kernel_kind_from_string(k);
    model::fit_mode_from_string(rff_mode);
    if (l < 1) throw ValidationError("l must be >= 1");
    for (auto x : l_grid) if (x < 1) throw ValidationError("l_grid entries must be >= 1");
    for (auto x : m_grid) if (x < 1) throw ValidationError("m_grid entries must be >= 1");
    for (auto x : sigma_grid) {
      if (!(x > 0.0)) throw ValidationError("sigma_grid entries must be > 0");
    }
    if (!(epsilon >= 0.0) || !(epsilon_rel > 0.0)) throw ValidationError("epsilon must be positive");
    if (!(eta > 0.0 && eta < 1.0)) throw ValidationError("eta must lie in (0, 1)");
    if (trials < 1 || rff_seeds < 1) throw ValidationError("trials and rff_seeds must be >= 1");
  }
};

// --- JSON -------------------------------------------------------------------

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
  if (!j.is_object()) throw ParseError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ValidationError("unknown config key '" + where + key + "'");
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline nlohmann::json synthesis_to_json(const dataio::SynthesisConfig& s) {
  return {{"classes", s.classes},       {"views", s.views}, {"per_class", s.per_class},
          {"dims", s.dims},             {"latent_dim", s.latent_dim},
          {"noise", s.noise},           {"nonlinear", s.nonlinear}};
}

inline dataio::SynthesisConfig synthesis_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"classes", "views", "per_class", "dims", "latent_dim", "noise", "nonlinear"},
                         "synthesis.");
  dataio::SynthesisConfig s;
  detail::read_key(j, "classes", s.classes);
  detail::read_key(j, "views", s.views);
  detail::read_key(j, "per_class", s.per_class);
  detail::read_key(j, "dims", s.dims);
  detail::read_key(j, "latent_dim", s.latent_dim);
  detail::read_key(j, "noise", s.noise);
  detail::read_key(j, "nonlinear", s.nonlinear);
  return s;
}

inline nlohmann::json to_json(const RunConfig& c, bool for_hash = false) {
  nlohmann::json j{{"command", c.command},
                   {"manifest", c.manifest},
                   {"test_manifest", c.test_manifest},
                   {"benchmark", c.benchmark},
                   {"train_classes", c.train_classes},
                   {"kernel", c.kernel},
                   {"sigma", c.sigma},
                   {"m", c.m},
                   {"normalize", c.normalize},
                   {"rff_mode", c.rff_mode},
                   {"epsilon", c.epsilon},
                   {"epsilon_rel", c.epsilon_rel},
                   {"l", c.l},
                   {"kinds", c.kinds},
                   {"sigma_grid", c.sigma_grid},
                   {"l_grid", c.l_grid},
                   {"m_grid", c.m_grid},
                   {"rff_seeds", c.rff_seeds},
                   {"trials", c.trials},
                   {"eta", c.eta},
                   {"with_crawford", c.with_crawford},
                   {"model", c.model},
                   {"seed", c.seed}};
  if (c.synthesis) j["synthesis"] = synthesis_to_json(*c.synthesis);
  if (!for_hash) {
    j["threads"] = c.threads;
    j["out"] = c.out;
    j["force"] = c.force;
  }
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(
      j,
      {"command", "manifest", "test_manifest", "benchmark", "synthesis", "train_classes", "kernel",
       "sigma", "m", "normalize", "rff_mode", "epsilon", "epsilon_rel", "l", "kinds", "sigma_grid",
       "l_grid", "m_grid", "rff_seeds", "trials", "eta", "with_crawford", "model", "seed", "threads",
       "out", "force"},
      "");
  RunConfig c;
  detail::read_key(j, "command", c.command);
  detail::read_key(j, "manifest", c.manifest);
  detail::read_key(j, "test_manifest", c.test_manifest);
  detail::read_key(j, "benchmark", c.benchmark);
  if (j.contains("synthesis")) c.synthesis = synthesis_from_json(j.at("synthesis"));
  detail::read_key(j, "train_classes", c.train_classes);
  detail::read_key(j, "kernel", c.kernel);
  detail::read_key(j, "sigma", c.sigma);
  detail::read_key(j, "m", c.m);
  detail::read_key(j, "normalize", c.normalize);
  detail::read_key(j, "rff_mode", c.rff_mode);
  detail::read_key(j, "epsilon", c.epsilon);
  detail::read_key(j, "epsilon_rel", c.epsilon_rel);
  detail::read_key(j, "l", c.l);
  detail::read_key(j, "kinds", c.kinds);
  detail::read_key(j, "sigma_grid", c.sigma_grid);
  detail::read_key(j, "l_grid", c.l_grid);
  detail::read_key(j, "m_grid", c.m_grid);
  detail::read_key(j, "rff_seeds", c.rff_seeds);
  detail::read_key(j, "trials", c.trials);
  detail::read_key(j, "eta", c.eta);
  detail::read_key(j, "with_crawford", c.with_crawford);
  detail::read_key(j, "model", c.model);
  detail::read_key(j, "seed", c.seed);
  detail::read_key(j, "threads", c.threads);
  detail::read_key(j, "out", c.out);
  detail::read_key(j, "force", c.force);
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const RunConfig& c) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << fnv1a(to_json(c, true).dump());
  return s.str();
}

inline std::string header_line(const RunConfig& c) {
  return std::string(kToolName) + " " + kToolVersion + " command=" + c.command +
         " config=" + config_hash(c);
}

inline std::string error_json(const std::string& kind, const std::string& message) {
  return nlohmann::json{{"error", {{"kind", kind}, {"message", message}}}}.dump();
}

// --- data -------------------------------------------------------------------

struct Data {
  dataio::MultiViewDataset full;
  dataio::MultiViewDataset train;
  dataio::MultiViewDataset test;
};

inline Data load_data(const RunConfig& c) {
  Data d;
  std::size_t split = c.train_classes;
  if (!c.manifest.empty()) {
    d.full = dataio::load_manifest(c.manifest);
  } else if (!c.benchmark.empty()) {
    const auto b = c.benchmark == "standard" ? dataio::standard_benchmark(c.seed)
                                             : dataio::nonlinear_benchmark(c.seed);
    d.full = dataio::generate_synthetic(b.synthesis);
    if (split == 0) split = b.train_classes;
  } else {
    auto s = *c.synthesis;
    s.seed = c.seed;
    d.full = dataio::generate_synthetic(s);
  }
  if (split > 0) {
    std::tie(d.train, d.test) = dataio::split_by_class(d.full, split);
  } else {
    d.train = d.full;
    d.test = d.full;
  }
  if (!c.test_manifest.empty()) d.test = dataio::load_manifest(c.test_manifest);
  return d;
}

// --- output helpers -----------------------------------------------------------

class OutputDir {
 public:
  explicit OutputDir(const RunConfig& c) : dir_(c.out), header_(header_line(c)) {
    namespace fs = std::filesystem;
    if (fs::exists(dir_) && !fs::is_directory(dir_)) {
      throw IoError("output path " + dir_.string() + " is not a directory");
    }
    if (fs::exists(dir_) && !fs::is_empty(dir_) && !c.force) {
      throw IoError("output directory " + dir_.string() + " is not empty (use --force to overwrite)");
    }
    fs::create_directories(dir_);
  }

  const std::filesystem::path& path() const { return dir_; }
  const std::string& header() const { return header_; }

  std::ofstream csv(const std::string& name) {
    std::ofstream out = open(name);
    out << "# " << header_ << '\n';
    return out;
  }

  void json(const std::string& name, nlohmann::json body) {
    body["generator"] = header_;
    std::ofstream out = open(name);
    out << body.dump(2) << '\n';
  }

  void matrix(const std::string& name, const Eigen::MatrixXd& m) {
    written_.push_back(name);
    dataio::write_matrix_csv(dir_ / name, m, header_);
  }

  const std::vector<std::string>& written() const { return written_; }

 private:
  std::ofstream open(const std::string& name) {
    std::ofstream out(dir_ / name);
    if (!out) throw IoError("cannot write " + (dir_ / name).string());
    written_.push_back(name);
    return out;
  }

  std::filesystem::path dir_;
  std::string header_;
  std::vector<std::string> written_;
};

inline std::string cell(double x) {
  return std::isnan(x) ? std::string("-") : dataio::format_double(x);
}

// --- commands -----------------------------------------------------------------

inline void cmd_gen(const RunConfig& c, std::ostream& log) {
  const Data d = load_data(c);
  OutputDir out(c);
  dataio::write_dataset(out.path(), d.full, out.header());
  log << "wrote " << d.full.layout.v << " views, " << d.full.layout.c << " classes, n = "
      << d.full.layout.n() << " to " << out.path().string() << '\n';
}

inline model::SweepConfig sweep_config(const RunConfig& c) {
  model::SweepConfig s;
  s.kinds.clear();
  for (const auto& k : c.kinds) s.kinds.push_back(kernels::kernel_kind_from_string(k));
  s.sigmas = c.sigmas();
  s.ls = c.ls();
  s.ms = c.ms();
  s.reg = c.regularizer();
  s.rff_seeds = c.rff_seeds;
  s.seed = c.seed;
  s.normalize = c.normalize;
  s.rff_mode = model::fit_mode_from_string(c.rff_mode);
  s.threads = c.worker_count();
  return s;
}

inline void cmd_fit(const RunConfig& c, std::ostream& log) {
  const Data d = load_data(c);
  const auto m = model::fit(d.train, c.kernel_spec(), c.regularizer(), c.l,
                            model::fit_mode_from_string(c.rff_mode));
  OutputDir out(c);
  model::save(m, out.path(), out.header());
  log << "fitted " << kernels::to_string(m.kernel.kind) << " model, l = " << m.l
      << ", epsilon = " << dataio::format_double(m.epsilon) << '\n';
}

inline nlohmann::json eval_record(const model::EvalResult& r) {
  return {{"probe_view", r.probe_view},
          {"gallery_view", r.gallery_view},
          {"rate", r.rate},
          {"predicted", r.predicted},
          {"kernel", kernels::to_string(r.params.kind)},
          {"sigma", r.params.sigma},
          {"m", r.params.m},
          {"l", r.params.l},
          {"epsilon", r.params.epsilon}};
}

inline void cmd_eval(const RunConfig& c, std::ostream& log) {
  const auto m = model::load(c.model);
  dataio::MultiViewDataset test;
  if (!c.test_manifest.empty()) {
    test = dataio::load_manifest(c.test_manifest);
  } else {
    test = load_data(c).test;
  }
  const auto coords = model::project_all(m, test);
  OutputDir out(c);
  auto csv = out.csv("eval.csv");
  csv << "probe,gallery,rate\n";
  nlohmann::json results = nlohmann::json::array();
  for (std::size_t p = 0; p < coords.size(); ++p) {
    for (std::size_t g = 0; g < coords.size(); ++g) {
      if (p == g) continue;
      auto r = model::rank1(coords[p], test.labels[p], coords[g], test.labels[g]);
      r.probe_view = p;
      r.gallery_view = g;
      r.params = model::params_of(m);
      csv << p << ',' << g << ',' << dataio::format_double(r.rate) << '\n';
      results.push_back(eval_record(r));
    }
  }
  out.json("eval.json", {{"results", results}, {"classes", test.layout.class_order}});
  log << "evaluated " << results.size() << " probe/gallery pairs\n";
}

inline void write_sweep_rows(OutputDir& out, const model::SweepResult& r) {
  auto csv = out.csv("sweep.csv");
  csv << "kernel,sigma,m,l,seed,rate\n";
  for (const auto& row : r.rows) {
    csv << kernels::to_string(row.kind) << ',' << dataio::format_double(row.sigma) << ',' << row.m
        << ',' << row.l << ',' << row.seed_index << ',' << dataio::format_double(row.rate) << '\n';
  }
  auto pts = out.csv("sweep_points.csv");
  pts << "kernel,sigma,m,l,rate\n";
  for (const auto& p : r.points) {
    pts << kernels::to_string(p.kind) << ',' << dataio::format_double(p.sigma) << ',' << p.m << ','
        << p.l << ',' << dataio::format_double(p.rate) << '\n';
  }
}

inline nlohmann::json point_record(const model::SweepPoint& p) {
  return {{"kernel", kernels::to_string(p.kind)}, {"sigma", p.sigma}, {"m", p.m},
          {"l", p.l}, {"rate", p.rate}};
}

inline void cmd_sweep(const RunConfig& c, std::ostream& log) {
  const Data d = load_data(c);
  const auto r = model::sweep(d.train, d.test, sweep_config(c));
  OutputDir out(c);
  write_sweep_rows(out, r);
  nlohmann::json best = nlohmann::json::array();
  for (const auto& b : r.best) best.push_back(point_record(b));
  out.json("sweep_best.json", {{"best", best}});
  log << "swept " << r.rows.size() << " rows\n";
}

inline void cmd_bench(const RunConfig& c, std::ostream& log) {
  const Data d = load_data(c);
  const auto r = model::sweep(d.train, d.test, sweep_config(c));
  OutputDir out(c);
  write_sweep_rows(out, r);
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& b : r.best) {
    const auto& row = r.rows[b.representative];
    const std::string kind = kernels::to_string(b.kind);
    auto csv = out.csv("bench_" + kind + ".csv");
    csv << "probe\\gallery";
    for (Eigen::Index g = 0; g < row.table.cols(); ++g) csv << ",view_" << g;
    csv << '\n';
    nlohmann::json cells = nlohmann::json::array();
    for (Eigen::Index p = 0; p < row.table.rows(); ++p) {
      csv << "view_" << p;
      nlohmann::json line = nlohmann::json::array();
      for (Eigen::Index g = 0; g < row.table.cols(); ++g) {
        csv << ',' << cell(row.table(p, g));
        if (p == g) {
          line.push_back("-");
        } else {
          line.push_back(row.table(p, g));
        }
      }
      csv << '\n';
      cells.push_back(line);
    }
    auto rec = point_record(b);
    rec["table"] = cells;
    rec["table_seed_index"] = row.seed_index;
    rec["mean_off_diagonal"] = row.rate;
    tables.push_back(rec);
  }
  out.json("bench.json", {{"tables", tables}});
  log << "bench tables for " << r.best.size() << " kernel kinds\n";
}

inline subspace::PerturbationConfig perturbation_config(const RunConfig& c) {
  subspace::PerturbationConfig p;
  p.sigma = c.sigma;
  p.epsilon = c.epsilon;
  p.epsilon_rel = c.epsilon_rel;
  p.l = c.l;
  p.m_grid = c.m_grid.empty() ? std::vector<std::size_t>{64, 256, 1024, 4096} : c.m_grid;
  p.trials = c.trials;
  p.eta = c.eta;
  p.seed = c.seed;
  p.threads = c.worker_count();
  p.with_crawford = c.with_crawford;
  return p;
}

inline void cmd_perturb(const RunConfig& c, std::ostream& log) {
  const Data d = load_data(c);
  const auto reports = subspace::perturbation_experiment(d.train, perturbation_config(c));
  OutputDir out(c);
  auto csv = out.csv("perturb.csv");
  csv << subspace::kPerturbationCsvHeader << '\n';
  for (const auto& r : reports) csv << subspace::to_csv_row(r) << '\n';
  auto med = out.csv("perturb_medians.csv");
  med << "m,trials,median_sin_theta_sp,median_sin_theta_fro,median_kernel_error,median_xi,"
         "thm3_usable,thm3_vacuous,thm3_inapplicable\n";
  for (const auto& m : subspace::median_by_m(reports)) {
    med << m.m << ',' << m.trials << ',' << dataio::format_double(m.sin_theta_spectral) << ','
        << dataio::format_double(m.sin_theta_frobenius) << ','
        << dataio::format_double(m.kernel_error) << ',' << dataio::format_double(m.xi) << ','
        << m.thm3_usable << ',' << m.thm3_vacuous << ',' << m.thm3_inapplicable << '\n';
  }
  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : reports) all.push_back(subspace::to_json(r));
  out.json("perturb.json", {{"reports", all}});
  log << "perturbation reports: " << reports.size() << '\n';
}

inline void cmd_dump(const RunConfig& c, std::ostream& log) {
  const Data d = load_data(c);
  const auto spec = c.kernel_spec();
  const auto H = scatter::build_structure(d.train.layout);
  const auto grams = kernels::view_grams(d.train.views, spec);
  const auto pair = scatter::build_kernel_scatter(grams, H);
  const double eps = c.regularizer().resolve(pair.S);
  const auto sol = gep::solve_regularized(pair, eps, std::min<std::size_t>(c.l, d.train.layout.n()),
                                          d.train.layout);
  OutputDir out(c);
  out.matrix("HD.csv", H.HD);
  out.matrix("HS.csv", H.HS);
  for (std::size_t j = 0; j < grams.size(); ++j) out.matrix("K_" + std::to_string(j) + ".csv", grams[j]);
  out.matrix("D.csv", pair.D);
  out.matrix("S.csv", pair.S);
  out.matrix("eigenvalues.csv", sol.eigenvalues);
  out.matrix("eigenvectors.csv", sol.vectors);
  log << "dumped " << out.written().size() << " matrices, epsilon = " << dataio::format_double(eps)
      << '\n';
}

inline void run(const RunConfig& c, std::ostream& log) {
  c.validate();
  if (c.command == "gen") return cmd_gen(c, log);
  if (c.command == "fit") return cmd_fit(c, log);
  if (c.command == "eval") return cmd_eval(c, log);
  if (c.command == "bench") return cmd_bench(c, log);
  if (c.command == "sweep") return cmd_sweep(c, log);
  if (c.command == "perturb") return cmd_perturb(c, log);
  if (c.command == "dump") return cmd_dump(c, log);
}

// Runs a command and maps failures to (exit code, JSON error record).
inline int run_guarded(const RunConfig& c, std::ostream& log, std::ostream& err) {
  try {
    run(c, log);
    return 0;
  } catch (const Error& e) {
    err << error_json(e.kind(), e.what()) << '\n';
    return e.kind() == "validation" || e.kind() == "parse" ? 2 : 1;
  } catch (const std::exception& e) {
    err << error_json("internal", e.what()) << '\n';
    return 1;
  }
}

}  // namespace mvda::cli
