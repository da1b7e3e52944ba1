#include "icl/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

namespace icl {

using nlohmann::json;

const char* to_string(Subcommand sub) {
  switch (sub) {
    case Subcommand::Train: return "train";
    case Subcommand::Sweep: return "sweep";
    case Subcommand::LowRank: return "lowrank";
    case Subcommand::Transfer: return "transfer";
    case Subcommand::Theory: return "theory";
    case Subcommand::GradCheck: return "gradcheck";
  }
  return "unknown";
}

Subcommand parse_subcommand(std::string_view name) {
  for (auto sub : {Subcommand::Train, Subcommand::Sweep, Subcommand::LowRank, Subcommand::Transfer,
                   Subcommand::Theory, Subcommand::GradCheck}) {
    if (name == to_string(sub)) return sub;
  }
  throw Error(ErrorKind::ParseError, "unknown subcommand '" + std::string(name) + "'");
}

namespace {

ExperimentConfig fig_l() {
  ExperimentConfig c;
  c.preset = "fig-L";
  c.L = {0.5, 2.0};
  c.tasks = {"relu", "cos"};
  c.covariates = {"uniform", "anisotropic"};
  c.lr = {0.1};
  c.checks = {"norm-increases-with-L"};
  return c;
}

ExperimentConfig fig_sigma_n() {
  ExperimentConfig c;
  c.preset = "fig-sigma-n";
  c.sigma = {0.01, 0.5};
  c.tasks = {"relu", "cos"};
  c.lr = {0.01};
  c.checks = {"norm-decreases-with-sigma"};
  return c;
}

ExperimentConfig fig_transfer() {
  ExperimentConfig c;
  c.preset = "fig-transfer";
  c.n = {200};
  c.lr = {0.1};
  c.pretrain_classes = {"cos:1", "affine:1", "relu:1", "cos:0.1", "cos:10"};
  c.eval_class = "cos:1";
  c.checks = {"lipschitz-transfer"};
  return c;
}

ExperimentConfig fig_lowrank() {
  ExperimentConfig c;
  c.preset = "fig-lowrank";
  c.d = 10;
  c.k = 2;
  c.n = {50};
  c.tasks = {"lowrank-affine", "lowrank-quad", "lowrank-cos"};
  c.covariates = {"shaped"};
  c.estimators = {"softmax", "linear"};
  c.lr = {0.001, 0.01, 0.1};
  c.iterations = 5000;
  c.checks = {"subspace-recovery"};
  return c;
}

ExperimentConfig fig_scaling() {
  ExperimentConfig c;
  c.preset = "fig-scaling";
  c.n = {200};
  c.estimators = {"softmax", "linear"};
  c.lr = {0.001, 0.01, 0.1};
  c.checks = {"softmax-beats-linear"};
  return c;
}

ExperimentConfig bandwidth() {
  ExperimentConfig c;
  c.preset = "bandwidth";
  c.sigma = {0.05};
  c.n = {16, 64, 256, 1024};
  c.contexts = 10000;
  c.seeds = {0};
  c.checks = {"exponent-band"};
  return c;
}

ExperimentConfig theory() {
  ExperimentConfig c;
  c.preset = "theory";
  c.seeds = {0};
  c.checks = {"bounds"};
  return c;
}

ExperimentConfig gradcheck() {
  ExperimentConfig c;
  c.preset = "gradcheck";
  c.seeds = {0};
  c.checks = {"gradients"};
  return c;
}

const std::map<std::string, std::function<ExperimentConfig()>, std::less<>>& presets() {
  static const std::map<std::string, std::function<ExperimentConfig()>, std::less<>> table = {
      {"fig-L", fig_l},         {"fig-sigma-n", fig_sigma_n}, {"fig-transfer", fig_transfer},
      {"fig-lowrank", fig_lowrank}, {"fig-scaling", fig_scaling}, {"bandwidth", bandwidth},
      {"theory", theory},       {"gradcheck", gradcheck},
  };
  return table;
}

[[noreturn]] void parse_fail(const std::string& key, const std::string& what) {
  throw ConfigError(ErrorKind::ParseError, key, what);
}

[[noreturn]] void invalid(const std::string& key, const std::string& what) {
  throw ConfigError(ErrorKind::ValidationError, key, what);
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) parse_fail(key, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) parse_fail(key, "expected a finite number");
  return x;
}

std::uint64_t as_uint(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) invalid(key, "must be non-negative");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  parse_fail(key, "expected a non-negative integer");
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) parse_fail(key, "expected a string");
  return v.get<std::string>();
}

// Scalars are accepted wherever a list is expected.
template <class T, class Conv>
std::vector<T> as_list(const json& v, const std::string& key, Conv conv) {
  std::vector<T> out;
  if (v.is_array()) {
    for (const auto& item : v) out.push_back(conv(item, key));
  } else {
    out.push_back(conv(v, key));
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const json&, const std::string&)>;

template <class Field>
Setter size_field(Field field) {
  return [field](ExperimentConfig& c, const json& v, const std::string& key) {
    c.*field = static_cast<std::size_t>(as_uint(v, key));
  };
}

template <class Field>
Setter double_field(Field field) {
  return [field](ExperimentConfig& c, const json& v, const std::string& key) { c.*field = as_double(v, key); };
}

template <class Field>
Setter string_field(Field field) {
  return [field](ExperimentConfig& c, const json& v, const std::string& key) { c.*field = as_string(v, key); };
}

template <class Field>
Setter double_list(Field field) {
  return [field](ExperimentConfig& c, const json& v, const std::string& key) {
    c.*field = as_list<double>(v, key, as_double);
  };
}

template <class Field>
Setter string_list(Field field) {
  return [field](ExperimentConfig& c, const json& v, const std::string& key) {
    c.*field = as_list<std::string>(v, key, as_string);
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  using C = ExperimentConfig;
  static const std::map<std::string, Setter, std::less<>> table = {
      {"d", size_field(&C::d)},
      {"n",
       [](C& c, const json& v, const std::string& key) {
         c.n = as_list<std::size_t>(v, key, [](const json& x, const std::string& k) {
           return static_cast<std::size_t>(as_uint(x, k));
         });
       }},
      {"queries", size_field(&C::queries)},
      {"sigma", double_list(&C::sigma)},
      {"L", double_list(&C::L)},
      {"tasks", string_list(&C::tasks)},
      {"covariates", string_list(&C::covariates)},
      {"k", size_field(&C::k)},
      {"c_u", double_field(&C::c_u)},
      {"c_v", double_field(&C::c_v)},
      {"estimators", string_list(&C::estimators)},
      {"mode", string_field(&C::mode)},
      {"lr", double_list(&C::lr)},
      {"decay", double_field(&C::decay)},
      {"iterations", size_field(&C::iterations)},
      {"eval_every", size_field(&C::eval_every)},
      {"eval_tasks", size_field(&C::eval_tasks)},
      {"init_scale", double_field(&C::init_scale)},
      {"seeds", [](C& c, const json& v, const std::string& key) { c.seeds = as_list<std::uint64_t>(v, key, as_uint); }},
      {"out", string_field(&C::out)},
      {"checks", string_list(&C::checks)},
      {"w_min", double_field(&C::w_min)},
      {"w_max", double_field(&C::w_max)},
      {"w_points", size_field(&C::w_points)},
      {"contexts", size_field(&C::contexts)},
      {"pretrain_classes", string_list(&C::pretrain_classes)},
      {"eval_class", string_field(&C::eval_class)},
      {"cap_samples", size_field(&C::cap_samples)},
      {"g_trials", size_field(&C::g_trials)},
      {"g_n", size_field(&C::g_n)},
      {"rearrangement_instances", size_field(&C::rearrangement_instances)},
      {"gradcheck_instances", size_field(&C::gradcheck_instances)},
      {"gradcheck_tol", double_field(&C::gradcheck_tol)},
  };
  return table;
}

template <std::size_t N>
bool one_of(const std::string& s, const char* const (&names)[N]) {
  return std::any_of(std::begin(names), std::end(names), [&](const char* n) { return s == n; });
}

bool valid_class_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) return false;
  const std::string task = spec.substr(0, colon);
  if (task != "affine" && task != "relu" && task != "cos") return false;
  try {
    std::size_t used = 0;
    const double l = std::stod(spec.substr(colon + 1), &used);
    return used == spec.size() - colon - 1 && l >= 0.0 && std::isfinite(l);
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : presets()) names.push_back(name);
  return names;
}

std::string default_preset(Subcommand sub) {
  switch (sub) {
    case Subcommand::Train: return "fig-L";
    case Subcommand::Sweep: return "bandwidth";
    case Subcommand::LowRank: return "fig-lowrank";
    case Subcommand::Transfer: return "fig-transfer";
    case Subcommand::Theory: return "theory";
    case Subcommand::GradCheck: return "gradcheck";
  }
  return "fig-L";
}

ExperimentConfig preset_config(std::string_view name) {
  const auto it = presets().find(name);
  if (it == presets().end()) invalid("preset", "unknown preset '" + std::string(name) + "'");
  return it->second();
}

ExperimentConfig parse_config(std::string_view json_text, std::string_view fallback_preset) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    parse_fail("<document>", e.what());
  }
  if (!doc.is_object()) parse_fail("<document>", "top level must be a JSON object");

  std::string preset(fallback_preset);
  if (doc.contains("preset")) preset = as_string(doc["preset"], "preset");
  ExperimentConfig config = preset.empty() ? ExperimentConfig{} : preset_config(preset);

  for (const auto& [key, value] : doc.items()) {
    if (key == "preset") continue;
    const auto it = setters().find(key);
    if (it == setters().end()) parse_fail(key, "unknown key");
    it->second(config, value, key);
  }
  validate_config(config);
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::string_view fallback_preset) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::IoError, "cannot read config " + path.string());
  std::ostringstream text;
  text << file.rdbuf();
  return parse_config(text.str(), fallback_preset);
}

void validate_config(const ExperimentConfig& c) {
  if (c.d < 1) invalid("d", "must be >= 1");
  if (c.n.empty()) invalid("n", "must not be empty");
  for (auto n : c.n)
    if (n < 1) invalid("n", "entries must be >= 1");
  if (c.sigma.empty()) invalid("sigma", "must not be empty");
  for (double s : c.sigma)
    if (s < 0.0) invalid("sigma", "must be >= 0");
  if (c.L.empty()) invalid("L", "must not be empty");
  for (double l : c.L)
    if (l < 0.0) invalid("L", "must be >= 0");
  if (c.tasks.empty()) invalid("tasks", "must not be empty");
  bool low_rank = false;
  for (const auto& t : c.tasks) {
    if (!one_of(t, kTaskNames)) invalid("tasks", "unknown task '" + t + "'");
    if (t.starts_with("lowrank")) low_rank = true;
    if (t == "hills" && c.d != 2) invalid("d", "hills tasks need d = 2");
  }
  if (c.covariates.empty()) invalid("covariates", "must not be empty");
  for (const auto& cov : c.covariates) {
    if (!one_of(cov, kCovariateNames)) invalid("covariates", "unknown covariate distribution '" + cov + "'");
    if (cov == "lowrank-latent") low_rank = true;
  }
  if (low_rank && !(c.k >= 1 && c.k < c.d)) invalid("k", "need 1 <= k < d");
  if (c.c_u == 0.0) invalid("c_u", "must be nonzero");
  if (c.estimators.empty()) invalid("estimators", "must not be empty");
  for (const auto& e : c.estimators)
    if (e != "softmax" && e != "linear") invalid("estimators", "unknown estimator '" + e + "'");
  if (c.mode != "tied" && c.mode != "direct") invalid("mode", "must be 'tied' or 'direct'");
  if (c.lr.empty()) invalid("lr", "must not be empty");
  for (double lr : c.lr)
    if (!(lr > 0.0)) invalid("lr", "must be > 0");
  if (!(c.decay > 0.0 && c.decay <= 1.0)) invalid("decay", "must be in (0, 1]");
  if (c.eval_every < 1) invalid("eval_every", "must be >= 1");
  if (c.eval_tasks < 1) invalid("eval_tasks", "must be >= 1");
  if (!(c.init_scale > 0.0)) invalid("init_scale", "must be > 0");
  if (c.seeds.empty()) invalid("seeds", "must not be empty");
  for (const auto& ch : c.checks)
    if (!one_of(ch, kCheckNames)) invalid("checks", "unknown check '" + ch + "'");
  if (!(c.w_min > 0.0)) invalid("w_min", "must be > 0");
  if (!(c.w_max > c.w_min)) invalid("w_max", "must exceed w_min");
  if (c.w_points < 2) invalid("w_points", "must be >= 2");
  if (c.contexts < 100) invalid("contexts", "must be >= 100");
  for (const auto& p : c.pretrain_classes)
    if (!valid_class_spec(p)) invalid("pretrain_classes", "expected '<affine|relu|cos>:<L>', got '" + p + "'");
  if (!valid_class_spec(c.eval_class)) invalid("eval_class", "expected '<affine|relu|cos>:<L>'");
  if (c.cap_samples < 1000) invalid("cap_samples", "must be >= 1000");
  if (c.g_trials < 1) invalid("g_trials", "must be >= 1");
  if (c.g_n < 32) invalid("g_n", "must be >= 32");
  if (c.rearrangement_instances < 1) invalid("rearrangement_instances", "must be >= 1");
  if (c.gradcheck_instances < 1) invalid("gradcheck_instances", "must be >= 1");
  if (!(c.gradcheck_tol > 0.0)) invalid("gradcheck_tol", "must be > 0");
}

std::string canonical_json(const ExperimentConfig& c) {
  json j;
  j["preset"] = c.preset;
  j["d"] = c.d;
  j["n"] = c.n;
  j["queries"] = c.queries;
  j["sigma"] = c.sigma;
  j["L"] = c.L;
  j["tasks"] = c.tasks;
  j["covariates"] = c.covariates;
  j["k"] = c.k;
  j["c_u"] = c.c_u;
  j["c_v"] = c.c_v;
  j["estimators"] = c.estimators;
  j["mode"] = c.mode;
  j["lr"] = c.lr;
  j["decay"] = c.decay;
  j["iterations"] = c.iterations;
  j["eval_every"] = c.eval_every;
  j["eval_tasks"] = c.eval_tasks;
  j["init_scale"] = c.init_scale;
  j["seeds"] = c.seeds;
  j["out"] = c.out;
  j["checks"] = c.checks;
  j["w_min"] = c.w_min;
  j["w_max"] = c.w_max;
  j["w_points"] = c.w_points;
  j["contexts"] = c.contexts;
  j["pretrain_classes"] = c.pretrain_classes;
  j["eval_class"] = c.eval_class;
  j["cap_samples"] = c.cap_samples;
  j["g_trials"] = c.g_trials;
  j["g_n"] = c.g_n;
  j["rearrangement_instances"] = c.rearrangement_instances;
  j["gradcheck_instances"] = c.gradcheck_instances;
  j["gradcheck_tol"] = c.gradcheck_tol;
  return j.dump();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& config) {
  // The output directory does not change results, so it stays out of the hash.
  ExperimentConfig copy = config;
  copy.out.clear();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_json(copy))));
  return buf;
}

}  // namespace icl
