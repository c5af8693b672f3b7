// mvda-kit: command-line front end for the mvda library.
//
//   mvda_kit <gen|fit|eval|bench|sweep|perturb|dump> [--config FILE] [flags]
//
// Flags override the config file. --sigma, --m and --l collapse the matching
// grid to a single point. MVDA_KIT_THREADS sets the default worker count.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mvda/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Kernel multi-view discriminant analysis toolkit", "mvda_kit"};
  app.set_version_flag("--version", std::string(mvda::cli::kToolVersion));

  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool force = false;
  std::optional<std::size_t> threads;
  std::optional<double> sigma;
  std::optional<std::size_t> m;
  std::optional<std::size_t> l;
  std::optional<double> epsilon;
  std::optional<double> eta;
  std::optional<std::size_t> trials;

  app.add_option("command", command, "gen | fit | eval | bench | sweep | perturb | dump")->required();
  app.add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "top-level seed");
  app.add_option("--out", out, "output directory");
  app.add_flag("--force", force, "overwrite a nonempty output directory");
  app.add_option("--threads", threads, "worker threads (default: MVDA_KIT_THREADS or 1)");
  app.add_option("--sigma", sigma, "RBF/RFF bandwidth (collapses sigma_grid)");
  app.add_option("--m", m, "RFF feature count (collapses m_grid)");
  app.add_option("--l", l, "projection dimension (collapses l_grid)");
  app.add_option("--epsilon", epsilon, "absolute regularizer");
  app.add_option("--eta", eta, "failure probability for the bounds");
  app.add_option("--trials", trials, "perturbation trials per m");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << mvda::cli::error_json("usage", e.what()) << '\n';
    return 2;
  }

  mvda::cli::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = mvda::cli::load_config(config_path);
  } catch (const mvda::Error& e) {
    std::cerr << mvda::cli::error_json(e.kind(), e.what()) << '\n';
    return 2;
  }
  cfg.command = command;
  if (seed) cfg.seed = *seed;
  if (out) cfg.out = *out;
  if (force) cfg.force = true;
  if (threads) cfg.threads = *threads;
  if (sigma) {
    cfg.sigma = *sigma;
    cfg.sigma_grid = {*sigma};
  }
  if (m) {
    cfg.m = *m;
    cfg.m_grid = {*m};
  }
  if (l) {
    cfg.l = *l;
    cfg.l_grid = {*l};
  }
  if (epsilon) cfg.epsilon = *epsilon;
  if (eta) cfg.eta = *eta;
  if (trials) cfg.trials = *trials;

  return mvda::cli::run_guarded(cfg, std::cout, std::cerr);
}
