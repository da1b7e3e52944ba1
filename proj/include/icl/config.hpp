#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "icl/error.hpp"

namespace icl {

// ParseError / ValidationError that remembers which config key was at fault.
class ConfigError : public Error {
 public:
  ConfigError(ErrorKind kind, std::string key, const std::string& what)
      : Error(kind, "config key '" + key + "': " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

inline constexpr const char* kTaskNames[] = {"affine",         "relu",         "cos",         "hills",
                                             "lowrank-affine", "lowrank-quad", "lowrank-cos", "lowrank-lin"};
inline constexpr const char* kCovariateNames[] = {"uniform", "anisotropic", "shaped", "lowrank-latent"};
inline constexpr const char* kCheckNames[] = {
    "norm-increases-with-L", "norm-decreases-with-sigma", "norm-increases-with-n", "softmax-beats-linear",
    "subspace-recovery",     "exponent-band",             "lipschitz-transfer",    "bounds",
    "gradients"};

enum class Subcommand { Train, Sweep, LowRank, Transfer, Theory, GradCheck };

const char* to_string(Subcommand sub);
// ParseError for an unknown name.
Subcommand parse_subcommand(std::string_view name);

// One experiment. Parameters given as lists span a grid: train and lowrank
// run every combination of tasks x L x sigma x n x covariates x estimators x lr.
struct ExperimentConfig {
  std::string preset;

  std::size_t d = 5;
  std::vector<std::size_t> n{20};
  std::size_t queries = 0;  // 0: floor(sqrt n) for training, 1 for sweeps
  std::vector<double> sigma{0.01};
  std::vector<double> L{1.0};
  std::vector<std::string> tasks{"relu"};
  std::vector<std::string> covariates{"uniform"};
  std::size_t k = 2;
  double c_u = 1.0;
  double c_v = 1.0;

  std::vector<std::string> estimators{"softmax"};
  std::string mode = "tied";
  std::vector<double> lr{0.1};
  double decay = 0.999;
  std::size_t iterations = 3000;
  std::size_t eval_every = 100;
  std::size_t eval_tasks = 500;
  double init_scale = 0.001;

  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string out;  // empty: $ICL_LAB_OUT, then "runs"
  std::vector<std::string> checks;

  // sweep
  double w_min = 1.0;
  double w_max = 300.0;
  std::size_t w_points = 25;
  std::size_t contexts = 2000;

  // transfer; classes are written "<task>:<L>", e.g. "cos:0.1"
  std::vector<std::string> pretrain_classes;
  std::string eval_class = "cos:1";

  // theory
  std::size_t cap_samples = 1000000;
  std::size_t g_trials = 50;
  std::size_t g_n = 4096;
  std::size_t rearrangement_instances = 100;

  // gradcheck
  std::size_t gradcheck_instances = 100;
  double gradcheck_tol = 1e-5;
};

// Names of the built-in presets, and the one each subcommand starts from.
std::vector<std::string> preset_names();
std::string default_preset(Subcommand sub);
// ValidationError("preset") for an unknown name.
ExperimentConfig preset_config(std::string_view name);

// Parses JSON text: the preset (if any) supplies defaults, the remaining keys
// override them. Unknown keys, wrong types and violated constraints raise
// ParseError / ValidationError naming the key.
ExperimentConfig parse_config(std::string_view json_text, std::string_view fallback_preset = {});
ExperimentConfig load_config(const std::filesystem::path& path, std::string_view fallback_preset = {});

// ValidationError naming the first offending key.
void validate_config(const ExperimentConfig& config);

// Canonical JSON (sorted keys, shortest round-trip numbers) and its FNV-1a hash.
std::string canonical_json(const ExperimentConfig& config);
std::uint64_t fnv1a64(std::string_view bytes);
std::string config_hash(const ExperimentConfig& config);

}  // namespace icl
