#pragma once

// Experiment drivers behind the icl-lab subcommands. The run_* functions do
// the computation and return plain results (the acceptance tests call them
// directly); run_experiment adds CSV files and the manifest.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "icl/config.hpp"
#include "icl/sampling.hpp"
#include "icl/tasks.hpp"
#include "icl/theory.hpp"
#include "icl/training.hpp"

namespace icl {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// ---- train / lowrank --------------------------------------------------------

struct CellKey {
  std::string task;
  double L = 1.0;
  double sigma = 0.01;
  std::size_t n = 20;
  std::string covariates;
  std::string estimator;
  double lr = 0.1;

  // Directory-safe label, e.g. "relu_L2_sigma0.01_n20_uniform_softmax_lr0.1".
  std::string label() const;
};

struct SeedRun {
  std::uint64_t seed = 0;
  TrainTrace trace;
  bool finite = true;  // false: training stopped on a non-finite loss
};

struct CellResult {
  CellKey key;
  std::vector<SeedRun> runs;

  double final_norm_mean() const;
  double final_error_mean() const;
  // Final rho per seed (NaN without a subspace).
  std::vector<double> final_rho() const;
};

// Every combination of the list-valued fields, in a fixed order.
std::vector<CellKey> expand_cells(const ExperimentConfig& config);

// Task class and covariate distribution for one seed. Random structure (the
// basis B, the shaping matrix J) comes from RngStream(seed).derive(2).
struct SeedSetup {
  TaskClass task_class;
  CovariateDist covariates;
  std::optional<Matrix> basis;
};
SeedSetup make_seed_setup(const ExperimentConfig& config, const CellKey& key, std::uint64_t seed);

TrainConfig make_train_config(const ExperimentConfig& config, const CellKey& key, const SeedSetup& setup);

// Trains every cell for every seed; `jobs` workers share the (cell, seed) list.
std::vector<CellResult> run_cells(const ExperimentConfig& config, int jobs = 1);

// Among cells that differ only in lr, keeps the one with the lowest mean final
// test error. Order of first appearance is preserved.
std::vector<CellResult> tune_learning_rates(const std::vector<CellResult>& cells);

enum class TrendAxis { L, Sigma, N };
// Mean final |M|_2 strictly monotone along the axis within every group of
// cells that agree on all other fields.
CheckResult check_norm_trend(const std::vector<CellResult>& cells, TrendAxis axis, bool increasing);
// Softmax mean final test error < factor * linear, per matching cell pair.
CheckResult check_softmax_beats_linear(const std::vector<CellResult>& cells, double factor = 0.25);
// Softmax: final rho < rho_max in at least min_fraction of seeds per cell.
// Linear: final rho > linear_min (or the infinite sentinel) in every seed.
CheckResult check_subspace_recovery(const std::vector<CellResult>& cells, double rho_max = 0.2,
                                    double min_fraction = 0.8, double linear_min = 1.0);

// ---- sweep ------------------------------------------------------------------

struct SweepRun {
  std::uint64_t seed = 0;
  double L = 1.0;
  double sigma = 0.0;
  std::size_t n = 0;
  SweepResult result;
};

struct SweepReport {
  std::vector<SweepRun> runs;
  std::vector<double> slopes;  // one exponent fit per seed
  double beta = 0.0;           // 1 / (d + 2)
};

// Bandwidth sweeps over L x sigma x n for the single configured task and
// covariate distribution; context pools for seed s come from
// RngStream(s).derive(n), so runs that differ only in L or sigma share contexts.
SweepReport run_sweeps(const ExperimentConfig& config);
// Per seed: slope in [lo * beta, hi * beta] and w* strictly increasing in Lambda.
CheckResult check_exponent_band(const SweepReport& report, double lo = 0.5, double hi = 3.0);

// ---- transfer ---------------------------------------------------------------

struct TransferRow {
  std::string pretrain_class;
  std::string eval_class;
  std::vector<double> errors;  // one per seed
  std::vector<SeedRun> runs;

  double mean() const;
  double std() const;
};

// "cos:0.1" -> cosine(0.1). ValidationError on a malformed spec.
TaskClass parse_class_spec(const std::string& spec);

// Each pretraining class is trained per seed and evaluated on eval_class over
// eval_tasks contexts drawn from RngStream(seed).derive(3), the same pool for
// every pretraining class.
std::vector<TransferRow> run_transfer(const ExperimentConfig& config, int jobs = 1);
// Same-Lipschitz classes within `near` x the matched model's error, other
// Lipschitz values at least `far` x.
CheckResult check_lipschitz_transfer(const std::vector<TransferRow>& rows, double near = 2.0, double far = 3.0);

// ---- theory -----------------------------------------------------------------

// Cap measures (d in {3,5,8}, eps in {0.1,0.3,0.5,1}), exact d=3 cap values,
// discrete gamma brackets (d in {6,8,10}, alpha in {1,1.5,2}, both regimes),
// g_0 concentration (d=3, r in {4,8,16}) and the co-sorted ratio inequality.
std::vector<BoundCheck> run_theory(const ExperimentConfig& config);

// m values checked for the gamma bracket: the small regime 2 ..
// ceil((d + sqrt d)/alpha) - 2 and the large regime at ceil(d + sqrt d),
// twice that, and 1000.
std::vector<std::size_t> gamma_check_points(double d, double alpha);

// ---- gradcheck --------------------------------------------------------------

struct GradCheckRow {
  std::size_t instance = 0;
  std::string mode;       // direct | tied
  std::string estimator;  // softmax | linear
  std::size_t d = 0;
  std::size_t n = 0;
  double rel_error = 0.0;
  bool pass = false;
};

inline constexpr double kGradCheckStep = 1e-5;
// Denominator floor: a gradient that is exactly zero (d = 1 with all tokens
// on one side) comes back as ~1e-18 of rounding from the analytic path.
inline constexpr double kGradCheckFloor = 1e-12;

// Random instances with d <= 5 and 2 <= n <= 8, cycling through direct/tied
// and softmax/linear. Relative error is
// |g - g_fd|_F / max(|g|_F, |g_fd|_F, kGradCheckFloor).
std::vector<GradCheckRow> run_gradcheck(std::size_t instances, double tol, std::uint64_t seed);

// ---- driver -----------------------------------------------------------------

struct RunOptions {
  std::filesystem::path out_dir;
  int jobs = 1;
};

struct RunReport {
  std::vector<CheckResult> checks;
  std::vector<std::filesystem::path> files;  // relative to out_dir
  bool complete = true;                      // false when some output is partial
  std::string error;

  bool ok() const;
};

// Output directory: explicit value, else config.out, else $ICL_LAB_OUT, else "runs".
std::filesystem::path resolve_out_dir(const std::string& explicit_dir, const ExperimentConfig& config);

RunReport run_experiment(Subcommand sub, const ExperimentConfig& config, const RunOptions& options);

// Build identifier recorded in manifests.
std::string build_id();

}  // namespace icl
