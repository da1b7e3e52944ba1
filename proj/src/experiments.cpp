#include "icl/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "icl/csv.hpp"
#include "icl/error.hpp"
#include "icl/kernels.hpp"

#ifndef ICL_LAB_BUILD_ID
#define ICL_LAB_BUILD_ID "icl-lab-dev"
#endif

namespace icl {

namespace {

std::string fmt(double v) { return format_double(v); }

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Runs body(0..count-1) on `jobs` threads. Each worker keeps the kernels
// single-threaded so the two levels of parallelism do not multiply.
template <class Body>
void for_each_job(std::size_t count, int jobs, Body&& body) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    kernels::set_num_threads(1);
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) break;
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

TaskKind low_rank_kind(const std::string& name) {
  if (name == "lowrank-affine") return TaskKind::LowRankAffine;
  if (name == "lowrank-quad") return TaskKind::LowRankQuad;
  if (name == "lowrank-cos") return TaskKind::LowRankCos;
  if (name == "lowrank-lin") return TaskKind::LowRankLin;
  throw Error(ErrorKind::ValidationError, "not a low-rank task: " + name);
}

bool is_low_rank_name(const std::string& name) { return name.starts_with("lowrank-"); }

TaskClass full_rank_class(const std::string& name, double L) {
  if (name == "affine") return TaskClass::affine(L);
  if (name == "relu") return TaskClass::relu2(L);
  if (name == "cos") return TaskClass::cosine(L);
  if (name == "hills") return TaskClass::hills(L);
  throw Error(ErrorKind::ValidationError, "unknown task: " + name);
}

EstimatorKind estimator_kind(const std::string& name) {
  if (name == "softmax") return EstimatorKind::Softmax;
  if (name == "linear") return EstimatorKind::Linear;
  throw Error(ErrorKind::ValidationError, "unknown estimator: " + name);
}

CsvTable trace_table(const TrainTrace& trace) {
  CsvTable t({"iteration", "norm_M", "test_error", "rho"});
  for (const auto& cp : trace.checkpoints) {
    t.add_row({std::to_string(cp.iteration), fmt(cp.norm_m), fmt(cp.test_error), fmt(cp.rho)});
  }
  return t;
}

// Checkpoint-wise mean over the runs that finished.
CsvTable aggregate_trace_table(const std::vector<SeedRun>& runs) {
  CsvTable t({"iteration", "norm_M", "test_error", "rho"});
  std::vector<const TrainTrace*> done;
  for (const auto& r : runs)
    if (r.finite) done.push_back(&r.trace);
  if (done.empty()) return t;
  const std::size_t rows = done.front()->checkpoints.size();
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<double> norm, err, rho;
    for (const auto* tr : done) {
      norm.push_back(tr->checkpoints[i].norm_m);
      err.push_back(tr->checkpoints[i].test_error);
      rho.push_back(tr->checkpoints[i].rho);
    }
    t.add_row({std::to_string(done.front()->checkpoints[i].iteration), fmt(mean_of(norm)), fmt(mean_of(err)),
               fmt(mean_of(rho))});
  }
  return t;
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

std::string iso_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---- train / lowrank --------------------------------------------------------

std::string CellKey::label() const {
  return task + "_L" + fmt(L) + "_sigma" + fmt(sigma) + "_n" + std::to_string(n) + "_" + covariates + "_" + estimator +
         "_lr" + fmt(lr);
}

double CellResult::final_norm_mean() const {
  std::vector<double> v;
  for (const auto& r : runs)
    if (r.finite) v.push_back(r.trace.last().norm_m);
  return mean_of(v);
}

double CellResult::final_error_mean() const {
  std::vector<double> v;
  for (const auto& r : runs)
    if (r.finite) v.push_back(r.trace.last().test_error);
  return mean_of(v);
}

std::vector<double> CellResult::final_rho() const {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.finite ? r.trace.last().rho : std::numeric_limits<double>::quiet_NaN());
  return v;
}

std::vector<CellKey> expand_cells(const ExperimentConfig& c) {
  std::vector<CellKey> cells;
  for (const auto& task : c.tasks)
    for (double L : c.L)
      for (double sigma : c.sigma)
        for (std::size_t n : c.n)
          for (const auto& cov : c.covariates)
            for (const auto& est : c.estimators)
              for (double lr : c.lr) cells.push_back({task, L, sigma, n, cov, est, lr});
  return cells;
}

SeedSetup make_seed_setup(const ExperimentConfig& config, const CellKey& key, std::uint64_t seed) {
  RngStream setup = RngStream(seed).derive(2);
  const bool needs_basis = is_low_rank_name(key.task) || key.covariates == "lowrank-latent";
  SeedSetup out;
  Matrix complement;
  if (needs_basis) {
    Subspace sub = make_random_subspace(config.d, config.k, setup);
    out.basis = std::move(sub.basis);
    complement = std::move(sub.complement);
  }
  if (key.covariates == "uniform") {
    out.covariates = CovariateDist::uniform_sphere(config.d);
  } else if (key.covariates == "anisotropic") {
    out.covariates = CovariateDist::anisotropic_default(config.d);
  } else if (key.covariates == "shaped") {
    out.covariates = CovariateDist::shaped_sphere(make_shaping_matrix(config.d, setup));
  } else if (key.covariates == "lowrank-latent") {
    out.covariates = CovariateDist::low_rank_latent(*out.basis, config.c_u, config.c_v);
  } else {
    throw Error(ErrorKind::ValidationError, "unknown covariates: " + key.covariates);
  }
  out.task_class = is_low_rank_name(key.task) ? TaskClass::low_rank(low_rank_kind(key.task), *out.basis)
                                              : full_rank_class(key.task, key.L);
  return out;
}

TrainConfig make_train_config(const ExperimentConfig& config, const CellKey& key, const SeedSetup& setup) {
  TrainConfig t;
  t.task_class = setup.task_class;
  t.covariates = setup.covariates;
  t.n = key.n;
  t.queries = config.queries;
  t.sigma = key.sigma;
  t.estimator = estimator_kind(key.estimator);
  t.tied = config.mode == "tied";
  t.adam.lr = key.lr;
  t.adam.decay = config.decay;
  t.iterations = config.iterations;
  t.eval_every = config.eval_every;
  t.eval_tasks = config.eval_tasks;
  t.init_scale = config.init_scale;
  t.subspace = setup.basis;
  return t;
}

namespace {

SeedRun train_one(const TrainConfig& tc, std::uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  try {
    run.trace = pretrain(tc, RngStream(seed));
  } catch (const NonFiniteLossError& e) {
    run.trace = e.partial_trace();
    run.finite = false;
  }
  return run;
}

}  // namespace

std::vector<CellResult> run_cells(const ExperimentConfig& config, int jobs) {
  validate_config(config);
  const auto keys = expand_cells(config);
  const std::size_t seeds = config.seeds.size();
  std::vector<CellResult> cells(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    cells[i].key = keys[i];
    cells[i].runs.resize(seeds);
  }
  for_each_job(keys.size() * seeds, jobs, [&](std::size_t job) {
    const std::size_t ci = job / seeds;
    const std::uint64_t seed = config.seeds[job % seeds];
    const SeedSetup setup = make_seed_setup(config, keys[ci], seed);
    cells[ci].runs[job % seeds] = train_one(make_train_config(config, keys[ci], setup), seed);
  });
  return cells;
}

std::vector<CellResult> tune_learning_rates(const std::vector<CellResult>& cells) {
  std::vector<CellResult> best;
  for (const auto& cell : cells) {
    CellKey k = cell.key;
    auto same = [&](const CellResult& b) {
      CellKey o = b.key;
      o.lr = k.lr;
      return o.label() == k.label();
    };
    auto it = std::find_if(best.begin(), best.end(), same);
    if (it == best.end()) {
      best.push_back(cell);
    } else {
      const double e = cell.final_error_mean();
      const double cur = it->final_error_mean();
      if (std::isnan(cur) || (!std::isnan(e) && e < cur)) *it = cell;
    }
  }
  return best;
}

CheckResult check_norm_trend(const std::vector<CellResult>& cells, TrendAxis axis, bool increasing) {
  const char* axis_name = axis == TrendAxis::L ? "L" : axis == TrendAxis::Sigma ? "sigma" : "n";
  CheckResult out;
  out.name = std::string("norm-") + (increasing ? "increases" : "decreases") + "-with-" + axis_name;
  auto value = [&](const CellKey& k) {
    return axis == TrendAxis::L ? k.L : axis == TrendAxis::Sigma ? k.sigma : static_cast<double>(k.n);
  };
  std::map<std::string, std::vector<std::pair<double, double>>> groups;
  for (const auto& c : cells) {
    const CellKey& k = c.key;
    const std::string group = k.task + (axis == TrendAxis::L ? "" : "_L" + fmt(k.L)) +
                              (axis == TrendAxis::Sigma ? "" : "_sigma" + fmt(k.sigma)) +
                              (axis == TrendAxis::N ? "" : "_n" + std::to_string(k.n)) + "_" + k.covariates + "_" +
                              k.estimator + "_lr" + fmt(k.lr);
    groups[group].emplace_back(value(k), c.final_norm_mean());
  }
  bool any = false;
  out.pass = true;
  std::ostringstream detail;
  for (auto& [label, pts] : groups) {
    if (pts.size() < 2) continue;
    any = true;
    std::sort(pts.begin(), pts.end());
    detail << label << ":";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      detail << " " << axis_name << "=" << short_num(pts[i].first) << "->" << short_num(pts[i].second);
      if (i > 0) {
        const bool ok = increasing ? pts[i].second > pts[i - 1].second : pts[i].second < pts[i - 1].second;
        if (!ok) out.pass = false;
      }
    }
    detail << "; ";
  }
  if (!any) {
    out.pass = false;
    detail << "no group has two values of " << axis_name;
  }
  out.detail = detail.str();
  return out;
}

CheckResult check_softmax_beats_linear(const std::vector<CellResult>& cells, double factor) {
  CheckResult out{"softmax-beats-linear", true, ""};
  std::ostringstream detail;
  bool any = false;
  for (const auto& s : cells) {
    if (s.key.estimator != "softmax") continue;
    for (const auto& l : cells) {
      if (l.key.estimator != "linear") continue;
      CellKey a = s.key, b = l.key;
      a.estimator = b.estimator = "";
      a.lr = b.lr = 0;
      if (a.label() != b.label()) continue;
      any = true;
      const double es = s.final_error_mean(), el = l.final_error_mean();
      const bool ok = es < factor * el;
      out.pass = out.pass && ok;
      detail << a.task << "_L" << fmt(a.L) << "_sigma" << fmt(a.sigma) << "_n" << a.n << "_" << a.covariates
             << ": softmax " << short_num(es) << " vs linear " << short_num(el) << " (ratio "
             << short_num(es / el) << "); ";
    }
  }
  if (!any) {
    out.pass = false;
    detail << "no softmax/linear pair";
  }
  out.detail = detail.str();
  return out;
}

CheckResult check_subspace_recovery(const std::vector<CellResult>& cells, double rho_max, double min_fraction,
                                    double linear_min) {
  CheckResult out{"subspace-recovery", !cells.empty(), ""};
  std::ostringstream detail;
  for (const auto& c : cells) {
    const auto rho = c.final_rho();
    std::size_t good = 0;
    for (double r : rho) {
      if (c.key.estimator == "softmax" && r < rho_max) ++good;
      if (c.key.estimator == "linear" && (r > linear_min || std::isinf(r))) ++good;
    }
    const double need = c.key.estimator == "softmax" ? min_fraction : 1.0;
    const bool ok = static_cast<double>(good) >= need * static_cast<double>(rho.size()) - 1e-12;
    out.pass = out.pass && ok;
    detail << c.key.task << "/" << c.key.estimator << " lr=" << short_num(c.key.lr) << ": " << good << "/"
           << rho.size() << " rho=[";
    for (std::size_t i = 0; i < rho.size(); ++i) detail << (i ? " " : "") << short_num(rho[i]);
    detail << "]; ";
  }
  out.detail = detail.str();
  return out;
}

// ---- sweep ------------------------------------------------------------------

SweepReport run_sweeps(const ExperimentConfig& config) {
  validate_config(config);
  if (config.tasks.size() != 1) throw ConfigError(ErrorKind::ValidationError, "tasks", "sweep takes one task");
  if (config.covariates.size() != 1) {
    throw ConfigError(ErrorKind::ValidationError, "covariates", "sweep takes one covariate distribution");
  }
  const Vector grid = log_grid(config.w_min, config.w_max, config.w_points);
  const std::size_t queries = config.queries == 0 ? 1 : config.queries;
  SweepReport report;
  report.beta = 1.0 / (static_cast<double>(config.d) + 2.0);
  for (std::uint64_t seed : config.seeds) {
    std::vector<double> lambdas, w_stars;
    for (double L : config.L) {
      for (double sigma : config.sigma) {
        for (std::size_t n : config.n) {
          const CellKey key{config.tasks[0], L, sigma, n, config.covariates[0], "softmax", 0.0};
          const SeedSetup setup = make_seed_setup(config, key, seed);
          SweepRun run{seed, L, sigma, n,
                       bandwidth_sweep(setup.task_class, setup.covariates, n, sigma, grid, config.contexts,
                                       RngStream(seed).derive(n), queries)};
          // Lambda uses the configured L; for the low-rank kinds that is the
          // nominal class scale.
          run.result.lambda = sigma > 0.0 ? static_cast<double>(n) * L * L / (sigma * sigma)
                                          : std::numeric_limits<double>::infinity();
          lambdas.push_back(run.result.lambda);
          w_stars.push_back(run.result.w_star);
          report.runs.push_back(std::move(run));
        }
      }
    }
    double slope = std::numeric_limits<double>::quiet_NaN();
    if (lambdas.size() >= 3) {
      try {
        slope = exponent_fit(lambdas, w_stars);
      } catch (const Error&) {
        // Infinite Lambda (sigma = 0) leaves the slope undefined.
      }
    }
    report.slopes.push_back(slope);
  }
  return report;
}

CheckResult check_exponent_band(const SweepReport& report, double lo, double hi) {
  CheckResult out{"exponent-band", !report.slopes.empty(), ""};
  std::ostringstream detail;
  detail << "band [" << short_num(lo * report.beta) << ", " << short_num(hi * report.beta) << "]; ";
  std::map<std::uint64_t, std::vector<std::pair<double, double>>> by_seed;
  for (const auto& r : report.runs) by_seed[r.seed].emplace_back(r.result.lambda, r.result.w_star);
  std::size_t i = 0;
  for (auto& [seed, pts] : by_seed) {
    const double slope = report.slopes[i++];
    std::sort(pts.begin(), pts.end());
    bool increasing = true;
    for (std::size_t j = 1; j < pts.size(); ++j)
      if (!(pts[j].second > pts[j - 1].second)) increasing = false;
    const bool in_band = slope >= lo * report.beta && slope <= hi * report.beta;
    out.pass = out.pass && in_band && increasing;
    detail << "seed " << seed << ": slope " << short_num(slope) << " w*=";
    for (std::size_t j = 0; j < pts.size(); ++j) detail << (j ? "," : "") << short_num(pts[j].second);
    detail << (increasing ? " increasing" : " not increasing") << "; ";
  }
  out.detail = detail.str();
  return out;
}

// ---- transfer ---------------------------------------------------------------

double TransferRow::mean() const { return mean_of(errors); }
double TransferRow::std() const { return std_of(errors); }

TaskClass parse_class_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ConfigError(ErrorKind::ValidationError, "class", "bad class '" + spec + "'");
  const std::string task = spec.substr(0, colon);
  double L = 0.0;
  try {
    L = std::stod(spec.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError(ErrorKind::ValidationError, "class", "bad Lipschitz value in '" + spec + "'");
  }
  if (task == "hills" || is_low_rank_name(task)) {
    throw ConfigError(ErrorKind::ValidationError, "class", "transfer classes are affine, relu or cos");
  }
  return full_rank_class(task, L);
}

std::vector<TransferRow> run_transfer(const ExperimentConfig& config, int jobs) {
  validate_config(config);
  if (config.pretrain_classes.empty()) {
    throw ConfigError(ErrorKind::ValidationError, "pretrain_classes", "transfer needs at least one class");
  }
  const TaskClass eval = parse_class_spec(config.eval_class);
  const std::size_t seeds = config.seeds.size();
  std::vector<TransferRow> rows(config.pretrain_classes.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].pretrain_class = config.pretrain_classes[i];
    rows[i].eval_class = config.eval_class;
    rows[i].errors.resize(seeds);
    rows[i].runs.resize(seeds);
  }
  const CellKey base{"cos", 1.0, config.sigma[0], config.n[0], config.covariates[0], config.estimators[0], config.lr[0]};
  for_each_job(rows.size() * seeds, jobs, [&](std::size_t job) {
    const std::size_t ri = job / seeds;
    const std::uint64_t seed = config.seeds[job % seeds];
    SeedSetup setup = make_seed_setup(config, base, seed);
    setup.task_class = parse_class_spec(rows[ri].pretrain_class);
    SeedRun run = train_one(make_train_config(config, base, setup), seed);
    rows[ri].errors[job % seeds] =
        run.finite ? evaluate_icl(run.trace.final_params, eval, setup.covariates, base.n, base.sigma,
                                  config.eval_tasks, RngStream(seed).derive(3))
                   : std::numeric_limits<double>::quiet_NaN();
    rows[ri].runs[job % seeds] = std::move(run);
  });
  return rows;
}

CheckResult check_lipschitz_transfer(const std::vector<TransferRow>& rows, double near, double far) {
  CheckResult out{"lipschitz-transfer", false, ""};
  std::ostringstream detail;
  const TransferRow* matched = nullptr;
  for (const auto& r : rows) {
    const TaskClass p = parse_class_spec(r.pretrain_class), e = parse_class_spec(r.eval_class);
    if (p.kind == e.kind && p.scale == e.scale) matched = &r;
  }
  if (!matched) {
    out.detail = "no pretraining class matches the evaluation class";
    return out;
  }
  const double base = matched->mean();
  out.pass = true;
  detail << "matched " << matched->pretrain_class << ": " << short_num(base) << "; ";
  for (const auto& r : rows) {
    if (&r == matched) continue;
    const TaskClass p = parse_class_spec(r.pretrain_class), e = parse_class_spec(r.eval_class);
    const double ratio = r.mean() / base;
    const bool same_l = p.scale == e.scale;
    const bool ok = same_l ? ratio <= near : ratio >= far;
    out.pass = out.pass && ok;
    detail << r.pretrain_class << ": " << short_num(r.mean()) << " (x" << short_num(ratio) << (same_l ? " <= " : " >= ")
           << short_num(same_l ? near : far) << (ok ? "" : " FAIL") << "); ";
  }
  out.detail = detail.str();
  return out;
}

// ---- theory -----------------------------------------------------------------

std::vector<std::size_t> gamma_check_points(double d, double alpha) {
  std::vector<std::size_t> m;
  const double threshold = discrete_gamma_threshold(d);
  const auto small_end = static_cast<std::size_t>(std::ceil(threshold / alpha)) - 2;
  for (std::size_t i = 2; i <= small_end && static_cast<double>(i) < threshold; ++i) m.push_back(i);
  const auto large = static_cast<std::size_t>(std::ceil(threshold));
  m.push_back(large);
  m.push_back(2 * large);
  m.push_back(1000);
  return m;
}

std::vector<BoundCheck> run_theory(const ExperimentConfig& config) {
  validate_config(config);
  const RngStream root(config.seeds.front());
  std::vector<BoundCheck> rows;

  std::uint64_t stream = 100;
  for (std::size_t d : {3, 5, 8}) {
    for (double eps : {0.1, 0.3, 0.5, 1.0}) {
      const RngStream rng = root.derive(stream++);
      rows.push_back(check_cap_measure(d, eps, config.cap_samples, rng));
      if (d == 3) {
        // Same samples: exact area of a cap on S^2 is eps / 2.
        const double measured = rows.back().measured;
        const double exact = eps / 2.0;
        const double sd = std::sqrt(exact * (1.0 - exact) / static_cast<double>(config.cap_samples));
        rows.push_back(BoundCheck::make("cap_exact_d3_eps" + short_num(eps), measured,
                                        exact - kCapSlackSigmas * sd, exact + kCapSlackSigmas * sd));
      }
    }
  }

  for (double d : {6.0, 8.0, 10.0})
    for (double alpha : {1.0, 1.5, 2.0})
      for (std::size_t m : gamma_check_points(d, alpha)) rows.push_back(discrete_gamma_bounds(d, alpha, m));

  stream = 200;
  for (double r : {4.0, 8.0, 16.0}) rows.push_back(check_g_concentration(3, config.g_n, r, config.g_trials, root.derive(stream++)));

  RngStream rng = root.derive(300);
  std::size_t strict = 0;
  for (std::size_t i = 0; i < config.rearrangement_instances; ++i) {
    const std::size_t len = 2 + static_cast<std::size_t>(rng.next_u64() % 19);
    Vector a(len), b(len);
    for (auto& v : a) v = rng.uniform(0.1, 2.0);
    for (auto& v : b) v = rng.uniform(0.1, 2.0);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (rearrangement_check(a, b).strict()) ++strict;
  }
  const auto count = static_cast<double>(config.rearrangement_instances);
  rows.push_back(BoundCheck::make("rearrangement_strict_count", static_cast<double>(strict), count, count));
  return rows;
}

// ---- gradcheck --------------------------------------------------------------

std::vector<GradCheckRow> run_gradcheck(std::size_t instances, double tol, std::uint64_t seed) {
  const RngStream root(seed);
  std::vector<GradCheckRow> rows;
  for (std::size_t i = 0; i < instances; ++i) {
    RngStream rng = root.derive(i);
    GradCheckRow row;
    row.instance = i;
    row.d = 1 + static_cast<std::size_t>(rng.next_u64() % 5);
    row.n = 2 + static_cast<std::size_t>(rng.next_u64() % 7);
    const std::size_t m = 1 + static_cast<std::size_t>(rng.next_u64() % 3);
    const bool tied = i % 2 == 1;
    const EstimatorKind est = (i / 2) % 2 == 0 ? EstimatorKind::Softmax : EstimatorKind::Linear;
    row.mode = tied ? "tied" : "direct";
    row.estimator = to_string(est);

    const CovariateDist dist = CovariateDist::uniform_sphere(row.d);
    const TaskSpec task = draw_task(TaskClass::relu2(1.0), row.d, rng);
    const ContextBatch batch = make_context(task, dist, row.n, m, 0.1, rng);
    Matrix p(row.d, row.d);
    for (double& v : p.data()) v = (tied ? 0.7 : 1.0) * rng.normal();

    auto make = [&](const Matrix& x) {
      return tied ? AttentionParams::tied(x, est) : AttentionParams::direct(x, est);
    };
    const Matrix g = loss_and_grad(make(p), batch).grad;
    const Matrix fd =
        finite_diff_grad([&](const Matrix& x) { return context_sq_loss(make(x), batch); }, p, kGradCheckStep);
    const double scale = std::max({frobenius_norm(g), frobenius_norm(fd), kGradCheckFloor});
    row.rel_error = frobenius_norm(g - fd) / scale;
    row.pass = row.rel_error < tol;
    rows.push_back(row);
  }
  return rows;
}

// ---- driver -----------------------------------------------------------------

bool RunReport::ok() const {
  return complete && error.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

std::filesystem::path resolve_out_dir(const std::string& explicit_dir, const ExperimentConfig& config) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (!config.out.empty()) return config.out;
  if (const char* env = std::getenv("ICL_LAB_OUT"); env && *env) return env;
  return "runs";
}

std::string build_id() { return ICL_LAB_BUILD_ID; }

namespace {

void write_table(const CsvTable& table, const std::filesystem::path& root, const std::filesystem::path& rel,
                 RunReport& report) {
  table.write(root / rel);
  report.files.push_back(rel);
}

bool wants(const ExperimentConfig& c, const std::string& check) {
  return std::find(c.checks.begin(), c.checks.end(), check) != c.checks.end();
}

void record_unused_checks(const ExperimentConfig& c, const std::vector<std::string>& applicable, Subcommand sub,
                          RunReport& report) {
  for (const auto& check : c.checks) {
    if (std::find(applicable.begin(), applicable.end(), check) == applicable.end()) {
      report.checks.push_back({check, false, std::string("not applicable to ") + to_string(sub)});
    }
  }
}

void write_cells(const std::vector<CellResult>& cells, const std::vector<CellResult>& tuned,
                 const std::filesystem::path& root, RunReport& report) {
  CsvTable summary({"cell", "task", "L", "sigma", "n", "covariates", "estimator", "lr", "selected", "seeds",
                    "final_norm_M_mean", "final_norm_M_std", "final_test_error_mean", "final_test_error_std",
                    "final_rho_mean"});
  for (const auto& cell : cells) {
    const std::string label = cell.key.label();
    std::vector<double> norms, errs, rhos;
    for (const auto& run : cell.runs) {
      write_table(trace_table(run.trace), root, std::filesystem::path(label) / seed_dir(run.seed) / "trace.csv",
                  report);
      if (!run.finite) report.complete = false;
      if (!run.finite) continue;
      norms.push_back(run.trace.last().norm_m);
      errs.push_back(run.trace.last().test_error);
      rhos.push_back(run.trace.last().rho);
    }
    write_table(aggregate_trace_table(cell.runs), root, std::filesystem::path(label) / "trace.csv", report);
    const bool selected = std::any_of(tuned.begin(), tuned.end(),
                                      [&](const CellResult& t) { return t.key.label() == label; });
    summary.add_row({label, cell.key.task, fmt(cell.key.L), fmt(cell.key.sigma), std::to_string(cell.key.n),
                     cell.key.covariates, cell.key.estimator, fmt(cell.key.lr), selected ? "1" : "0",
                     std::to_string(cell.runs.size()), fmt(mean_of(norms)), fmt(std_of(norms)), fmt(mean_of(errs)),
                     fmt(std_of(errs)), fmt(mean_of(rhos))});
  }
  write_table(summary, root, "summary.csv", report);
}

void run_train_like(Subcommand sub, const ExperimentConfig& config, const RunOptions& options,
                    const std::filesystem::path& root, RunReport& report) {
  const auto cells = run_cells(config, options.jobs);
  const auto tuned = tune_learning_rates(cells);
  write_cells(cells, tuned, root, report);
  if (wants(config, "norm-increases-with-L")) report.checks.push_back(check_norm_trend(tuned, TrendAxis::L, true));
  if (wants(config, "norm-decreases-with-sigma"))
    report.checks.push_back(check_norm_trend(tuned, TrendAxis::Sigma, false));
  if (wants(config, "norm-increases-with-n")) report.checks.push_back(check_norm_trend(tuned, TrendAxis::N, true));
  if (wants(config, "softmax-beats-linear")) report.checks.push_back(check_softmax_beats_linear(tuned));
  if (wants(config, "subspace-recovery")) report.checks.push_back(check_subspace_recovery(tuned));
  record_unused_checks(config,
                       {"norm-increases-with-L", "norm-decreases-with-sigma", "norm-increases-with-n",
                        "softmax-beats-linear", "subspace-recovery"},
                       sub, report);
}

void run_sweep_cmd(const ExperimentConfig& config, const std::filesystem::path& root, RunReport& report) {
  const SweepReport sweeps = run_sweeps(config);
  CsvTable fit({"seed", "L", "sigma", "n", "lambda", "w_star", "argmin_index", "boundary_minimum"});
  std::map<std::string, std::vector<const SweepRun*>> by_cell;
  for (const auto& run : sweeps.runs) {
    const std::string cell = config.tasks[0] + "_L" + fmt(run.L) + "_sigma" + fmt(run.sigma) + "_n" +
                             std::to_string(run.n) + "_" + config.covariates[0];
    by_cell[cell].push_back(&run);
    CsvTable t({"w", "loss_mean", "loss_stderr", "bias", "noise"});
    const auto& r = run.result;
    for (std::size_t i = 0; i < r.w_grid.size(); ++i) {
      t.add_row({fmt(r.w_grid[i]), fmt(r.loss_mean[i]), fmt(r.loss_std_error[i]), fmt(r.bias[i]), fmt(r.noise[i])});
    }
    write_table(t, root, std::filesystem::path(cell) / seed_dir(run.seed) / "sweep.csv", report);
    fit.add_row({std::to_string(run.seed), fmt(run.L), fmt(run.sigma), std::to_string(run.n), fmt(r.lambda),
                 fmt(r.w_star), std::to_string(r.argmin_index), r.boundary_minimum ? "1" : "0"});
  }
  for (const auto& [cell, runs] : by_cell) {
    CsvTable t({"w", "loss_mean", "loss_stderr", "bias", "noise"});
    const std::size_t g = runs.front()->result.w_grid.size();
    const auto s = static_cast<double>(runs.size());
    for (std::size_t i = 0; i < g; ++i) {
      double loss = 0, var = 0, bias = 0, noise = 0;
      for (const auto* r : runs) {
        loss += r->result.loss_mean[i];
        var += r->result.loss_std_error[i] * r->result.loss_std_error[i];
        bias += r->result.bias[i];
        noise += r->result.noise[i];
      }
      t.add_row({fmt(runs.front()->result.w_grid[i]), fmt(loss / s), fmt(std::sqrt(var) / s), fmt(bias / s),
                 fmt(noise / s)});
    }
    write_table(t, root, std::filesystem::path(cell) / "sweep.csv", report);
  }
  write_table(fit, root, "fit.csv", report);
  CsvTable slopes({"seed", "slope", "beta"});
  for (std::size_t i = 0; i < sweeps.slopes.size(); ++i) {
    slopes.add_row({std::to_string(config.seeds[i]), fmt(sweeps.slopes[i]), fmt(sweeps.beta)});
  }
  write_table(slopes, root, "slopes.csv", report);
  if (wants(config, "exponent-band")) report.checks.push_back(check_exponent_band(sweeps));
  record_unused_checks(config, {"exponent-band"}, Subcommand::Sweep, report);
}

void run_transfer_cmd(const ExperimentConfig& config, const RunOptions& options, const std::filesystem::path& root,
                      RunReport& report) {
  const auto rows = run_transfer(config, options.jobs);
  CsvTable t({"pretrain_class", "eval_class", "error_mean", "error_std"});
  for (const auto& row : rows) {
    std::string dir = row.pretrain_class;
    std::replace(dir.begin(), dir.end(), ':', '_');
    for (const auto& run : row.runs) {
      write_table(trace_table(run.trace), root, std::filesystem::path(dir) / seed_dir(run.seed) / "trace.csv", report);
      if (!run.finite) report.complete = false;
    }
    t.add_row({row.pretrain_class, row.eval_class, fmt(row.mean()), fmt(row.std())});
  }
  write_table(t, root, "transfer.csv", report);
  if (wants(config, "lipschitz-transfer")) report.checks.push_back(check_lipschitz_transfer(rows));
  record_unused_checks(config, {"lipschitz-transfer"}, Subcommand::Transfer, report);
}

void run_theory_cmd(const ExperimentConfig& config, const std::filesystem::path& root, RunReport& report) {
  const auto rows = run_theory(config);
  CsvTable t({"quantity", "measured", "lower", "upper", "pass"});
  std::size_t passed = 0;
  for (const auto& r : rows) {
    t.add_row({r.quantity, fmt(r.measured), fmt(r.lower), fmt(r.upper), r.pass ? "1" : "0"});
    passed += r.pass ? 1 : 0;
  }
  write_table(t, root, "bounds.csv", report);
  if (wants(config, "bounds")) {
    report.checks.push_back({"bounds", passed == rows.size(),
                             std::to_string(passed) + "/" + std::to_string(rows.size()) + " rows inside their brackets"});
  }
  record_unused_checks(config, {"bounds"}, Subcommand::Theory, report);
}

void run_gradcheck_cmd(const ExperimentConfig& config, const std::filesystem::path& root, RunReport& report) {
  const auto rows = run_gradcheck(config.gradcheck_instances, config.gradcheck_tol, config.seeds.front());
  CsvTable t({"instance", "mode", "estimator", "d", "n", "rel_error", "pass"});
  std::size_t passed = 0;
  double worst = 0.0;
  for (const auto& r : rows) {
    t.add_row({std::to_string(r.instance), r.mode, r.estimator, std::to_string(r.d), std::to_string(r.n),
               fmt(r.rel_error), r.pass ? "1" : "0"});
    passed += r.pass ? 1 : 0;
    worst = std::max(worst, r.rel_error);
  }
  write_table(t, root, "gradcheck.csv", report);
  if (wants(config, "gradients")) {
    report.checks.push_back({"gradients", passed == rows.size(),
                             std::to_string(passed) + "/" + std::to_string(rows.size()) +
                                 " below tolerance, worst relative error " + short_num(worst)});
  }
  record_unused_checks(config, {"gradients"}, Subcommand::GradCheck, report);
}

void write_manifest(Subcommand sub, const ExperimentConfig& config, const std::filesystem::path& root,
                    const RunReport& report) {
  nlohmann::json m;
  m["subcommand"] = to_string(sub);
  m["preset"] = config.preset;
  m["config_hash"] = config_hash(config);
  m["config"] = nlohmann::json::parse(canonical_json(config));
  m["seeds"] = config.seeds;
  m["build"] = build_id();
  m["timestamp"] = iso_timestamp();
  m["status"] = report.complete && report.error.empty() ? "complete" : "partial";
  if (!report.error.empty()) m["error"] = report.error;
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : report.files) files.push_back(f.generic_string());
  m["files"] = files;
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : report.checks) checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  m["checks"] = checks;
  m["ok"] = report.ok();
  std::ofstream file(root / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorKind::IoError, "cannot write " + (root / "manifest.json").string());
  file << m.dump(2) << '\n';
  if (!file) throw Error(ErrorKind::IoError, "write failed: " + (root / "manifest.json").string());
}

}  // namespace

RunReport run_experiment(Subcommand sub, const ExperimentConfig& config, const RunOptions& options) {
  RunReport report;
  const std::filesystem::path& root = options.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create output directory " + root.string() + ": " + ec.message());
  try {
    switch (sub) {
      case Subcommand::Train:
      case Subcommand::LowRank: run_train_like(sub, config, options, root, report); break;
      case Subcommand::Sweep: run_sweep_cmd(config, root, report); break;
      case Subcommand::Transfer: run_transfer_cmd(config, options, root, report); break;
      case Subcommand::Theory: run_theory_cmd(config, root, report); break;
      case Subcommand::GradCheck: run_gradcheck_cmd(config, root, report); break;
    }
  } catch (const Error& e) {
    report.complete = false;
    report.error = e.what();
  }
  write_manifest(sub, config, root, report);
  return report;
}

}  // namespace icl
