// icl-lab: command-line front end for the experiment drivers.
//
//   icl-lab <subcommand> [--config FILE] [--preset NAME] [--L 0.5,2]
//           [--seed N] [--trials K] [--jobs J] [--out DIR]
//
// Exit status: 0 when every configured check passed and all files were
// written, 1 when a check failed or output is partial, 2 on a usage or
// config error.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icl/config.hpp"
#include "icl/experiments.hpp"

namespace {

std::vector<double> parse_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw icl::ConfigError(icl::ErrorKind::ParseError, key, "not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw icl::ConfigError(icl::ErrorKind::ParseError, key, "empty list");
  return out;
}

struct Options {
  std::string config_path;
  std::string preset;
  std::string L;
  std::int64_t seed = -1;
  std::size_t trials = 0;
  int jobs = 1;
  std::string out;
};

int run(icl::Subcommand sub, const Options& opt) {
  icl::ExperimentConfig config;
  const std::string fallback = opt.preset.empty() ? icl::default_preset(sub) : opt.preset;
  if (!opt.config_path.empty()) {
    // --preset only fills in when the file names no preset of its own.
    config = icl::load_config(opt.config_path, fallback);
  } else {
    config = icl::preset_config(fallback);
  }
  if (!opt.L.empty()) config.L = parse_list(opt.L, "L");
  if (opt.seed >= 0) {
    if (config.seeds.empty()) config.seeds.push_back(0);
    config.seeds.front() = static_cast<std::uint64_t>(opt.seed);
  }
  if (opt.trials > 0) {
    const std::uint64_t first = config.seeds.front();
    config.seeds.clear();
    for (std::size_t i = 0; i < opt.trials; ++i) config.seeds.push_back(first + i);
  }
  icl::validate_config(config);

  icl::RunOptions run_opts;
  run_opts.out_dir = icl::resolve_out_dir(opt.out, config);
  run_opts.jobs = opt.jobs;
  const icl::RunReport report = icl::run_experiment(sub, config, run_opts);

  for (const auto& c : report.checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  }
  if (!report.error.empty()) std::cerr << "error: " << report.error << '\n';
  if (!report.complete) std::cerr << "output is partial, see manifest.json\n";
  std::cout << "wrote " << report.files.size() + 1 << " files under " << run_opts.out_dir.string() << '\n';
  return report.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-context regression laboratory for one-layer softmax attention"};
  app.require_subcommand(1);
  Options opt;

  std::string presets;
  for (const auto& p : icl::preset_names()) presets += (presets.empty() ? "" : ", ") + p;

  const std::vector<std::pair<icl::Subcommand, const char*>> subs = {
      {icl::Subcommand::Train, "Pretrain M and record norm / error traces"},
      {icl::Subcommand::Sweep, "Bandwidth sweep for M = wI and exponent fit"},
      {icl::Subcommand::LowRank, "Pretrain on low-rank task classes and track rho(M, B)"},
      {icl::Subcommand::Transfer, "Pretrain on one class, evaluate on another"},
      {icl::Subcommand::Theory, "Numerical checks of the analytic bounds"},
      {icl::Subcommand::GradCheck, "Analytic vs finite-difference gradients"},
  };
  std::vector<std::pair<icl::Subcommand, CLI::App*>> handles;
  for (const auto& [sub, help] : subs) {
    CLI::App* s = app.add_subcommand(icl::to_string(sub), help);
    s->add_option("--config", opt.config_path, "JSON config file")->check(CLI::ExistingFile);
    s->add_option("--preset", opt.preset, "Preset (" + presets + ")");
    s->add_option("--L", opt.L, "Comma-separated Lipschitz values, e.g. 0.5,2");
    s->add_option("--seed", opt.seed, "Replace the first seed")->check(CLI::NonNegativeNumber);
    s->add_option("--trials", opt.trials, "Run K seeds starting at the first seed")->check(CLI::PositiveNumber);
    s->add_option("--jobs", opt.jobs, "Parallel workers; 1 is the reference mode")->check(CLI::PositiveNumber);
    s->add_option("--out", opt.out, "Output directory (default: config out, $ICL_LAB_OUT, runs)");
    handles.emplace_back(sub, s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  for (const auto& [sub, handle] : handles) {
    if (!handle->parsed()) continue;
    try {
      return run(sub, opt);
    } catch (const icl::Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return e.kind() == icl::ErrorKind::IoError ? 1 : 2;
    }
  }
  return 2;
}
