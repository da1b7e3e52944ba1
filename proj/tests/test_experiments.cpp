#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "icl/experiments.hpp"

using namespace icl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "icl_lab_tests" / name;
  fs::remove_all(p);
  return p;
}

std::map<std::string, std::string> csv_bodies(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.path().extension() == ".csv") out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

ExperimentConfig tiny_train() {
  ExperimentConfig c = preset_config("fig-L");
  c.d = 3;
  c.n = {8};
  c.tasks = {"relu"};
  c.covariates = {"uniform"};
  c.iterations = 40;
  c.eval_every = 10;
  c.eval_tasks = 20;
  c.seeds = {0, 1};
  return c;
}

}  // namespace

TEST_CASE("train writes per-seed and aggregate traces with fixed headers") {
  const fs::path out = scratch("train");
  const ExperimentConfig c = tiny_train();
  const RunReport r = run_experiment(Subcommand::Train, c, {out, 1});
  CHECK(r.complete);
  CHECK(r.error.empty());
  for (const auto& cell : expand_cells(c)) {
    for (auto seed : c.seeds) {
      const auto rows = lines(slurp(out / cell.label() / ("seed_" + std::to_string(seed)) / "trace.csv"));
      REQUIRE(rows.size() == 1 + 5);
      CHECK(rows[0] == "iteration,norm_M,test_error,rho");
    }
    CHECK(lines(slurp(out / cell.label() / "trace.csv")).size() == 6);
  }
  CHECK(lines(slurp(out / "summary.csv")).size() == 1 + expand_cells(c).size());

  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["subcommand"] == "train");
  CHECK(manifest["config_hash"] == config_hash(c));
  CHECK(manifest["seeds"] == nlohmann::json(c.seeds));
  CHECK(manifest["status"] == "complete");
  CHECK(manifest["build"] == build_id());
  CHECK(manifest["files"].size() == r.files.size());
}

TEST_CASE("reruns and parallel workers reproduce the CSV bodies exactly") {
  const ExperimentConfig c = tiny_train();
  const fs::path a = scratch("det_a"), b = scratch("det_b"), p = scratch("det_par");
  run_experiment(Subcommand::Train, c, {a, 1});
  run_experiment(Subcommand::Train, c, {b, 1});
  run_experiment(Subcommand::Train, c, {p, 3});
  const auto ca = csv_bodies(a);
  CHECK(ca.size() == 7);
  CHECK(ca == csv_bodies(b));
  CHECK(ca == csv_bodies(p));
}

TEST_CASE("checks that do not belong to the subcommand fail the run") {
  ExperimentConfig c = tiny_train();
  c.checks = {"exponent-band"};
  const RunReport r = run_experiment(Subcommand::Train, c, {scratch("unused"), 1});
  REQUIRE(r.checks.size() == 1);
  CHECK_FALSE(r.checks[0].pass);
  CHECK_FALSE(r.ok());
}

TEST_CASE("a diverging run is written and flagged as partial") {
  ExperimentConfig c = tiny_train();
  c.mode = "direct";
  c.estimators = {"linear"};
  c.lr = {1e300};
  c.checks.clear();
  const fs::path out = scratch("diverge");
  const RunReport r = run_experiment(Subcommand::Train, c, {out, 1});
  CHECK_FALSE(r.complete);
  CHECK_FALSE(r.ok());
  CHECK(nlohmann::json::parse(slurp(out / "manifest.json"))["status"] == "partial");
}

TEST_CASE("sweep output: grid rows, fit table") {
  ExperimentConfig c = preset_config("bandwidth");
  c.n = {8, 16, 32};
  c.contexts = 150;
  c.w_points = 6;
  c.checks.clear();
  const fs::path out = scratch("sweep");
  const RunReport r = run_experiment(Subcommand::Sweep, c, {out, 1});
  CHECK(r.ok());
  const auto fit = lines(slurp(out / "fit.csv"));
  CHECK(fit.size() == 4);
  bool found = false;
  for (const auto& [name, body] : csv_bodies(out)) {
    if (name.ends_with("sweep.csv")) {
      found = true;
      const auto rows = lines(body);
      CHECK(rows[0] == "w,loss_mean,loss_stderr,bias,noise");
      CHECK(rows.size() == 7);
    }
  }
  CHECK(found);
}

TEST_CASE("transfer output table") {
  ExperimentConfig c = preset_config("fig-transfer");
  c.d = 3;
  c.n = {10};
  c.iterations = 20;
  c.eval_every = 10;
  c.eval_tasks = 20;
  c.seeds = {0, 1};
  c.pretrain_classes = {"cos:1", "affine:1"};
  c.checks.clear();
  const fs::path out = scratch("transfer");
  const RunReport r = run_experiment(Subcommand::Transfer, c, {out, 1});
  CHECK(r.ok());
  const auto rows = lines(slurp(out / "transfer.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "pretrain_class,eval_class,error_mean,error_std");
  CHECK(rows[1].starts_with("cos:1,cos:1,"));
}

TEST_CASE("theory and gradcheck subcommands pass") {
  ExperimentConfig t = preset_config("theory");
  t.cap_samples = 100000;
  t.g_trials = 11;
  const fs::path out = scratch("theory");
  const RunReport r = run_experiment(Subcommand::Theory, t, {out, 1});
  CHECK(r.ok());
  CHECK(lines(slurp(out / "bounds.csv"))[0] == "quantity,measured,lower,upper,pass");

  const RunReport g = run_experiment(Subcommand::GradCheck, preset_config("gradcheck"), {scratch("grad"), 1});
  CHECK(g.ok());
  const auto rows = run_gradcheck(100, 1e-5, 0);
  CHECK(rows.size() == 100);
  std::size_t tied = 0, linear = 0;
  for (const auto& row : rows) {
    CHECK(row.pass);
    CHECK(row.d <= 5);
    CHECK(row.n <= 8);
    tied += row.mode == "tied";
    linear += row.estimator == "linear";
  }
  CHECK(tied == 50);
  CHECK(linear == 50);
}

TEST_CASE("gamma check points cover both regimes") {
  const auto m = gamma_check_points(6.0, 1.0);
  CHECK(m.front() == 2);
  CHECK(std::find(m.begin(), m.end(), 9) != m.end());
  CHECK(m.back() == 1000);
  for (std::size_t v : m) CHECK(discrete_gamma_bounds(6.0, 1.0, v).pass);
}

TEST_CASE("norm trend check compares cells that differ on one axis only") {
  auto cell = [](double L, double norm) {
    CellResult c;
    c.key = {"relu", L, 0.01, 20, "uniform", "softmax", 0.1};
    SeedRun run;
    run.trace.checkpoints.push_back(Checkpoint{0, norm, 0.1});
    c.runs.push_back(run);
    return c;
  };
  CHECK(check_norm_trend({cell(0.5, 1.0), cell(2.0, 2.0)}, TrendAxis::L, true).pass);
  CHECK_FALSE(check_norm_trend({cell(0.5, 2.0), cell(2.0, 1.0)}, TrendAxis::L, true).pass);
  CHECK_FALSE(check_norm_trend({cell(0.5, 1.0)}, TrendAxis::L, true).pass);
}

TEST_CASE("learning-rate tuning keeps the lowest final error per cell") {
  auto cell = [](double lr, double err) {
    CellResult c;
    c.key = {"relu", 1.0, 0.01, 20, "uniform", "softmax", lr};
    SeedRun run;
    run.trace.checkpoints.push_back(Checkpoint{0, 1.0, err});
    c.runs.push_back(run);
    return c;
  };
  const auto best = tune_learning_rates({cell(1e-3, 0.5), cell(1e-2, 0.2), cell(1e-1, 0.3)});
  REQUIRE(best.size() == 1);
  CHECK(best[0].key.lr == 1e-2);
}

TEST_CASE("class specs parse and reject malformed input") {
  const TaskClass c = parse_class_spec("cos:0.1");
  CHECK(c.kind == TaskKind::Cosine);
  CHECK(c.scale == 0.1);
  CHECK_THROWS_AS(parse_class_spec("cos"), Error);
  CHECK_THROWS_AS(parse_class_spec("cos:x"), Error);
  CHECK_THROWS_AS(parse_class_spec("hills:1"), Error);
}

TEST_CASE("output directory precedence") {
  ExperimentConfig c;
  ::unsetenv("ICL_LAB_OUT");
  CHECK(resolve_out_dir("", c) == fs::path("runs"));
  ::setenv("ICL_LAB_OUT", "/tmp/env_out", 1);
  CHECK(resolve_out_dir("", c) == fs::path("/tmp/env_out"));
  c.out = "from_config";
  CHECK(resolve_out_dir("", c) == fs::path("from_config"));
  CHECK(resolve_out_dir("explicit", c) == fs::path("explicit"));
  ::unsetenv("ICL_LAB_OUT");
}
