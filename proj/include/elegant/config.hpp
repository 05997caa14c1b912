#pragma once

// Declarative experiment configuration: strict JSON with a schema version.
// Unknown keys are hard errors (silent hyperparameter typos are the main
// reproducibility hazard), and every seed is explicit.

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "elegant/control.hpp"
#include "elegant/pretrained.hpp"
#include "elegant/tensor.hpp"

namespace elegant {

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

namespace cfgdetail {

using json = nlohmann::json;

inline void check_keys(const json& j, const std::string& path,
                       const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(path + ": unknown key '" + it.key() + "'");
}

template <class T>
T require(const json& j, const std::string& path, const std::string& key) {
  if (!j.contains(key)) throw ConfigError(path + ": missing required key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

template <class T>
T optional(const json& j, const std::string& path, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

}  // namespace cfgdetail

struct RewardSpec {
  std::string kind;  // linear | quadratic | bumps | net | fit_from_genuine
  std::vector<double> coeffs;
  std::vector<double> diag;
  double constant = 0.0;
  std::vector<GaussianBump> bump_list;
  std::string checkpoint;
  std::vector<int> hidden = {64, 64};
  bool relu = false;
  // fit_from_genuine protocol
  int fit_n = 2000;
  std::vector<int> fit_components;  // mixture components to sample from ({} = all)
  int fit_epochs = 200;
  int fit_batch = 64;
  double fit_lr = 1e-2;
  double fit_clip = 5.0;
  uint64_t fit_seed = 0;
  double holdout_fraction = 0.2;
};

struct MethodSpec {
  std::string name = "elegant";  // elegant | no_kl | truncation | random_k | naive |
                                 // guidance | pretrained
  double k_fraction = 0.8;
  double gamma = 30.0;
  double y_con = 1.0;
  double sigma_g = 1.0;
  int guidance_rollouts = 256;
  std::vector<int> guidance_hidden = {64, 64};
  int guidance_epochs = 100;
  int guidance_batch = 128;
  double guidance_lr = 1e-2;
  uint64_t guidance_seed = 0;
};

struct ValueFitSpec {
  std::string variant = "soft";
  int probes = 512;
  int rollouts = 128;
  double probe_scale = 1.0;
  std::vector<int> hidden = {64, 64};
  int epochs = 200;
  int batch = 64;
  double lr = 1e-2;
  double clip_norm = 5.0;
  uint64_t seed = 11;
};

struct StageSpec {
  int batch = 128;
  int epochs = 50;
  int steps_per_epoch = 1;
  double lr = 1e-4;
  double clip_norm = 5.0;
  uint64_t seed = 21;
  std::vector<int> hidden = {64, 64};
};

struct EvaluationSpec {
  int n = 10000;
  uint64_t seed = 1001;
  int histogram_bins = 60;
  int bootstrap_resamples = 200;
};

struct ExperimentConfig {
  int schema_version = 1;
  GaussianMixture mixture;
  double horizon = 5.0;
  int n_steps = 100;
  double alpha = 1.0;
  std::vector<double> alpha_sweep;  // optional, sweep subcommand
  RewardSpec reward;
  bool has_genuine = false;
  RewardSpec genuine;
  MethodSpec method;
  ValueFitSpec value_fit;
  StageSpec stage1;
  StageSpec stage2;
  EvaluationSpec evaluation;
  std::string output_dir = "out";
};

namespace cfgdetail {

inline GaussianMixture parse_mixture(const json& j, const std::string& path) {
  check_keys(j, path, {"components"});
  GaussianMixture gm;
  const json comps = j.at("components");
  if (!comps.is_array() || comps.empty())
    throw ConfigError(path + ".components: expected a nonempty array");
  gm.dim = -1;
  for (size_t i = 0; i < comps.size(); ++i) {
    const std::string cpath = path + ".components[" + std::to_string(i) + "]";
    check_keys(comps[i], cpath, {"weight", "mean", "variance"});
    gm.weights.push_back(require<double>(comps[i], cpath, "weight"));
    gm.means.push_back(require<std::vector<double>>(comps[i], cpath, "mean"));
    gm.vars.push_back(require<double>(comps[i], cpath, "variance"));
    if (gm.dim < 0) gm.dim = static_cast<int>(gm.means.back().size());
  }
  try {
    gm.validate();
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return gm;
}

inline RewardSpec parse_reward(const json& j, const std::string& path) {
  RewardSpec r;
  if (!j.is_object() || !j.contains("kind"))
    throw ConfigError(path + ": expected an object with a 'kind' key");
  r.kind = j.at("kind").get<std::string>();
  if (r.kind == "linear") {
    check_keys(j, path, {"kind", "coeffs"});
    r.coeffs = require<std::vector<double>>(j, path, "coeffs");
  } else if (r.kind == "quadratic") {
    check_keys(j, path, {"kind", "diag", "linear", "constant"});
    r.diag = require<std::vector<double>>(j, path, "diag");
    r.coeffs = require<std::vector<double>>(j, path, "linear");
    r.constant = optional<double>(j, path, "constant", 0.0);
  } else if (r.kind == "bumps") {
    check_keys(j, path, {"kind", "diag", "linear", "constant", "bumps"});
    r.diag = require<std::vector<double>>(j, path, "diag");
    r.coeffs = require<std::vector<double>>(j, path, "linear");
    r.constant = optional<double>(j, path, "constant", 0.0);
    const json bumps = j.at("bumps");
    for (size_t i = 0; i < bumps.size(); ++i) {
      const std::string bpath = path + ".bumps[" + std::to_string(i) + "]";
      check_keys(bumps[i], bpath, {"amp", "center", "scale"});
      GaussianBump b;
      b.amp = require<double>(bumps[i], bpath, "amp");
      b.center = require<std::vector<double>>(bumps[i], bpath, "center");
      b.scale = require<double>(bumps[i], bpath, "scale");
      r.bump_list.push_back(std::move(b));
    }
  } else if (r.kind == "net") {
    check_keys(j, path, {"kind", "checkpoint", "hidden", "activation"});
    r.checkpoint = require<std::string>(j, path, "checkpoint");
    r.hidden = optional<std::vector<int>>(j, path, "hidden", r.hidden);
    const std::string act = optional<std::string>(j, path, "activation", "tanh");
    if (act != "tanh" && act != "relu")
      throw ConfigError(path + ".activation: must be 'tanh' or 'relu'");
    r.relu = act == "relu";
  } else if (r.kind == "fit_from_genuine") {
    check_keys(j, path, {"kind", "n", "components", "hidden", "activation", "epochs", "batch",
                         "lr", "clip_norm", "seed", "holdout_fraction"});
    const std::string act = optional<std::string>(j, path, "activation", "tanh");
    if (act != "tanh" && act != "relu")
      throw ConfigError(path + ".activation: must be 'tanh' or 'relu'");
    r.relu = act == "relu";
    r.fit_n = optional<int>(j, path, "n", r.fit_n);
    r.fit_components = optional<std::vector<int>>(j, path, "components", {});
    r.hidden = optional<std::vector<int>>(j, path, "hidden", r.hidden);
    r.fit_epochs = optional<int>(j, path, "epochs", r.fit_epochs);
    r.fit_batch = optional<int>(j, path, "batch", r.fit_batch);
    r.fit_lr = optional<double>(j, path, "lr", r.fit_lr);
    r.fit_clip = optional<double>(j, path, "clip_norm", r.fit_clip);
    r.fit_seed = optional<uint64_t>(j, path, "seed", r.fit_seed);
    r.holdout_fraction = optional<double>(j, path, "holdout_fraction", r.holdout_fraction);
  } else {
    throw ConfigError(path + ".kind: unknown reward kind '" + r.kind + "'");
  }
  return r;
}

inline json reward_to_json(const RewardSpec& r) {
  nlohmann::ordered_json j;
  j["kind"] = r.kind;
  if (r.kind == "linear") {
    j["coeffs"] = r.coeffs;
  } else if (r.kind == "quadratic" || r.kind == "bumps") {
    j["diag"] = r.diag;
    j["linear"] = r.coeffs;
    j["constant"] = r.constant;
    if (r.kind == "bumps") {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& b : r.bump_list) {
        nlohmann::ordered_json bj;
        bj["amp"] = b.amp;
        bj["center"] = b.center;
        bj["scale"] = b.scale;
        arr.push_back(std::move(bj));
      }
      j["bumps"] = std::move(arr);
    }
  } else if (r.kind == "net") {
    j["checkpoint"] = r.checkpoint;
    j["hidden"] = r.hidden;
    j["activation"] = r.relu ? "relu" : "tanh";
  } else if (r.kind == "fit_from_genuine") {
    j["n"] = r.fit_n;
    j["components"] = r.fit_components;
    j["hidden"] = r.hidden;
    j["activation"] = r.relu ? "relu" : "tanh";
    j["epochs"] = r.fit_epochs;
    j["batch"] = r.fit_batch;
    j["lr"] = r.fit_lr;
    j["clip_norm"] = r.fit_clip;
    j["seed"] = r.fit_seed;
    j["holdout_fraction"] = r.holdout_fraction;
  }
  return j;
}

inline MethodSpec parse_method(const json& j, const std::string& path) {
  MethodSpec m;
  if (!j.is_object() || !j.contains("name"))
    throw ConfigError(path + ": expected an object with a 'name' key");
  m.name = j.at("name").get<std::string>();
  static const std::set<std::string> known = {"elegant",  "no_kl", "truncation", "random_k",
                                              "naive",    "guidance", "pretrained"};
  if (!known.count(m.name)) throw ConfigError(path + ".name: unknown method '" + m.name + "'");
  std::set<std::string> allowed = {"name"};
  if (m.name == "truncation") allowed.insert("k_fraction");
  if (m.name == "guidance")
    allowed.insert({"gamma", "y_con", "sigma_g", "rollouts", "hidden", "epochs", "batch", "lr",
                    "seed"});
  check_keys(j, path, allowed);
  m.k_fraction = optional<double>(j, path, "k_fraction", m.k_fraction);
  m.gamma = optional<double>(j, path, "gamma", m.gamma);
  m.y_con = optional<double>(j, path, "y_con", m.y_con);
  m.sigma_g = optional<double>(j, path, "sigma_g", m.sigma_g);
  m.guidance_rollouts = optional<int>(j, path, "rollouts", m.guidance_rollouts);
  m.guidance_hidden = optional<std::vector<int>>(j, path, "hidden", m.guidance_hidden);
  m.guidance_epochs = optional<int>(j, path, "epochs", m.guidance_epochs);
  m.guidance_batch = optional<int>(j, path, "batch", m.guidance_batch);
  m.guidance_lr = optional<double>(j, path, "lr", m.guidance_lr);
  m.guidance_seed = optional<uint64_t>(j, path, "seed", m.guidance_seed);
  return m;
}

inline json method_to_json(const MethodSpec& m) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  if (m.name == "truncation") j["k_fraction"] = m.k_fraction;
  if (m.name == "guidance") {
    j["gamma"] = m.gamma;
    j["y_con"] = m.y_con;
    j["sigma_g"] = m.sigma_g;
    j["rollouts"] = m.guidance_rollouts;
    j["hidden"] = m.guidance_hidden;
    j["epochs"] = m.guidance_epochs;
    j["batch"] = m.guidance_batch;
    j["lr"] = m.guidance_lr;
    j["seed"] = m.guidance_seed;
  }
  return j;
}

inline ValueFitSpec parse_value_fit(const json& j, const std::string& path) {
  check_keys(j, path, {"variant", "probes", "rollouts", "probe_scale", "hidden", "epochs",
                       "batch", "lr", "clip_norm", "seed"});
  ValueFitSpec v;
  v.variant = optional<std::string>(j, path, "variant", v.variant);
  if (v.variant != "soft" && v.variant != "mean")
    throw ConfigError(path + ".variant: must be 'soft' or 'mean'");
  v.probes = optional<int>(j, path, "probes", v.probes);
  v.rollouts = optional<int>(j, path, "rollouts", v.rollouts);
  v.probe_scale = optional<double>(j, path, "probe_scale", v.probe_scale);
  v.hidden = optional<std::vector<int>>(j, path, "hidden", v.hidden);
  v.epochs = optional<int>(j, path, "epochs", v.epochs);
  v.batch = optional<int>(j, path, "batch", v.batch);
  v.lr = optional<double>(j, path, "lr", v.lr);
  v.clip_norm = optional<double>(j, path, "clip_norm", v.clip_norm);
  v.seed = optional<uint64_t>(j, path, "seed", v.seed);
  return v;
}

inline json value_fit_to_json(const ValueFitSpec& v) {
  nlohmann::ordered_json j;
  j["variant"] = v.variant;
  j["probes"] = v.probes;
  j["rollouts"] = v.rollouts;
  j["probe_scale"] = v.probe_scale;
  j["hidden"] = v.hidden;
  j["epochs"] = v.epochs;
  j["batch"] = v.batch;
  j["lr"] = v.lr;
  j["clip_norm"] = v.clip_norm;
  j["seed"] = v.seed;
  return j;
}

inline StageSpec parse_stage(const json& j, const std::string& path) {
  check_keys(j, path, {"batch", "epochs", "steps_per_epoch", "lr", "clip_norm", "seed", "hidden"});
  StageSpec s;
  s.batch = optional<int>(j, path, "batch", s.batch);
  s.epochs = optional<int>(j, path, "epochs", s.epochs);
  s.steps_per_epoch = optional<int>(j, path, "steps_per_epoch", s.steps_per_epoch);
  s.lr = optional<double>(j, path, "lr", s.lr);
  s.clip_norm = optional<double>(j, path, "clip_norm", s.clip_norm);
  s.seed = optional<uint64_t>(j, path, "seed", s.seed);
  s.hidden = optional<std::vector<int>>(j, path, "hidden", s.hidden);
  if (s.batch < 1) throw ConfigError(path + ".batch: must be >= 1");
  if (s.epochs < 1) throw ConfigError(path + ".epochs: must be >= 1");
  return s;
}

inline json stage_to_json(const StageSpec& s) {
  nlohmann::ordered_json j;
  j["batch"] = s.batch;
  j["epochs"] = s.epochs;
  j["steps_per_epoch"] = s.steps_per_epoch;
  j["lr"] = s.lr;
  j["clip_norm"] = s.clip_norm;
  j["seed"] = s.seed;
  j["hidden"] = s.hidden;
  return j;
}

inline EvaluationSpec parse_evaluation(const json& j, const std::string& path) {
  check_keys(j, path, {"n", "seed", "histogram_bins", "bootstrap_resamples"});
  EvaluationSpec e;
  e.n = optional<int>(j, path, "n", e.n);
  e.seed = optional<uint64_t>(j, path, "seed", e.seed);
  e.histogram_bins = optional<int>(j, path, "histogram_bins", e.histogram_bins);
  e.bootstrap_resamples = optional<int>(j, path, "bootstrap_resamples", e.bootstrap_resamples);
  if (e.n < 2) throw ConfigError(path + ".n: must be >= 2");
  return e;
}

inline json evaluation_to_json(const EvaluationSpec& e) {
  nlohmann::ordered_json j;
  j["n"] = e.n;
  j["seed"] = e.seed;
  j["histogram_bins"] = e.histogram_bins;
  j["bootstrap_resamples"] = e.bootstrap_resamples;
  return j;
}

}  // namespace cfgdetail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace cfgdetail;
  check_keys(j, "config",
             {"schema_version", "mixture", "horizon", "n_steps", "alpha", "alpha_sweep", "reward",
              "genuine_reward", "method", "value_fit", "stage1", "stage2", "evaluation",
              "output_dir"});
  ExperimentConfig cfg;
  cfg.schema_version = require<int>(j, "config", "schema_version");
  if (cfg.schema_version != 1)
    throw ConfigError("config.schema_version: unsupported version " +
                      std::to_string(cfg.schema_version));
  cfg.mixture = parse_mixture(j.at("mixture"), "config.mixture");
  cfg.horizon = require<double>(j, "config", "horizon");
  if (!(cfg.horizon > 0.0)) throw ConfigError("config.horizon: must be positive");
  cfg.n_steps = require<int>(j, "config", "n_steps");
  if (cfg.n_steps < 1) throw ConfigError("config.n_steps: must be >= 1");
  cfg.alpha = require<double>(j, "config", "alpha");
  if (!(cfg.alpha > 0.0)) throw ConfigError("config.alpha: must be positive");
  cfg.alpha_sweep = optional<std::vector<double>>(j, "config", "alpha_sweep", {});
  cfg.reward = parse_reward(j.at("reward"), "config.reward");
  if (j.contains("genuine_reward")) {
    cfg.has_genuine = true;
    cfg.genuine = parse_reward(j.at("genuine_reward"), "config.genuine_reward");
    if (cfg.genuine.kind == "fit_from_genuine")
      throw ConfigError("config.genuine_reward: cannot itself be fit_from_genuine");
  }
  if (cfg.reward.kind == "fit_from_genuine" && !cfg.has_genuine)
    throw ConfigError("config.reward: fit_from_genuine requires a genuine_reward");
  cfg.method = parse_method(j.at("method"), "config.method");
  if (j.contains("value_fit")) cfg.value_fit = parse_value_fit(j.at("value_fit"), "config.value_fit");
  if (j.contains("stage1")) cfg.stage1 = parse_stage(j.at("stage1"), "config.stage1");
  if (j.contains("stage2")) cfg.stage2 = parse_stage(j.at("stage2"), "config.stage2");
  if (j.contains("evaluation"))
    cfg.evaluation = parse_evaluation(j.at("evaluation"), "config.evaluation");
  cfg.output_dir = optional<std::string>(j, "config", "output_dir", cfg.output_dir);
  return cfg;
}

inline nlohmann::ordered_json serialize_config(const ExperimentConfig& cfg) {
  using namespace cfgdetail;
  nlohmann::ordered_json j;
  j["schema_version"] = cfg.schema_version;
  nlohmann::ordered_json comps = nlohmann::ordered_json::array();
  for (int k = 0; k < cfg.mixture.n_components(); ++k) {
    nlohmann::ordered_json c;
    c["weight"] = cfg.mixture.weights[k];
    c["mean"] = cfg.mixture.means[k];
    c["variance"] = cfg.mixture.vars[k];
    comps.push_back(std::move(c));
  }
  j["mixture"]["components"] = std::move(comps);
  j["horizon"] = cfg.horizon;
  j["n_steps"] = cfg.n_steps;
  j["alpha"] = cfg.alpha;
  if (!cfg.alpha_sweep.empty()) j["alpha_sweep"] = cfg.alpha_sweep;
  j["reward"] = reward_to_json(cfg.reward);
  if (cfg.has_genuine) j["genuine_reward"] = reward_to_json(cfg.genuine);
  j["method"] = method_to_json(cfg.method);
  j["value_fit"] = value_fit_to_json(cfg.value_fit);
  j["stage1"] = stage_to_json(cfg.stage1);
  j["stage2"] = stage_to_json(cfg.stage2);
  j["evaluation"] = evaluation_to_json(cfg.evaluation);
  j["output_dir"] = cfg.output_dir;
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return parse_config(j);
}

// FNV-1a over the canonical serialization.
inline std::string config_hash(const ExperimentConfig& cfg) {
  const std::string s = serialize_config(cfg).dump();
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void apply_seed_override(ExperimentConfig& cfg, uint64_t seed) {
  cfg.value_fit.seed = seed + 1;
  cfg.stage1.seed = seed + 2;
  cfg.stage2.seed = seed + 3;
  cfg.evaluation.seed = seed + 4;
  cfg.reward.fit_seed = seed + 5;
  cfg.method.guidance_seed = seed + 6;
}

inline void apply_n_override(ExperimentConfig& cfg, int n) {
  if (n < 2) throw ConfigError("n override must be >= 2");
  cfg.evaluation.n = n;
}

}  // namespace elegant
