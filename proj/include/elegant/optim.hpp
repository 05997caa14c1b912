#pragma once

// Named parameter arrays with Adam state, the bias-corrected Adam update,
// global-norm gradient clipping, and a versioned JSON checkpoint format.

#include <cmath>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "elegant/tensor.hpp"

namespace elegant::ad {

struct AdamState {
  Tensor m;
  Tensor v;
};

struct ParamSet {
  std::map<std::string, Tensor> values;
  std::map<std::string, AdamState> adam;
  long step = 0;

  Tensor& insert(const std::string& name, Tensor t) {
    AdamState st;
    st.m = Tensor(t.rows, t.cols);
    st.v = Tensor(t.rows, t.cols);
    adam[name] = std::move(st);
    return values[name] = std::move(t);
  }

  const Tensor& get(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw Error("ParamSet: unknown parameter '" + name + "'");
    return it->second;
  }
};

using GradMap = std::map<std::string, Tensor>;

inline double global_norm(const GradMap& grads) {
  double acc = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.v) acc += x * x;
  return std::sqrt(acc);
}

// Scales gradients in place so the global norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_global_norm(GradMap& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& x : g.v) x *= scale;
  }
  return norm;
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(ParamSet& params, const GradMap& grads, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw Error("adam_step: lr must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
    throw Error("adam_step: betas must lie in [0, 1)");
  if (!(cfg.eps > 0.0)) throw Error("adam_step: eps must be positive");
  for (const auto& [name, g] : grads)
    for (double x : g.v)
      if (!std::isfinite(x)) throw Error("adam_step: non-finite gradient in '" + name + "'");

  params.step += 1;
  const double t = static_cast<double>(params.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, theta] : params.values) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    if (!g.same_shape(theta))
      throw Error("adam_step: gradient shape " + g.shape_str() + " != parameter shape " +
                  theta.shape_str() + " for '" + name + "'");
    AdamState& st = params.adam[name];
    for (size_t i = 0; i < theta.v.size(); ++i) {
      st.m.v[i] = cfg.beta1 * st.m.v[i] + (1.0 - cfg.beta1) * g.v[i];
      st.v.v[i] = cfg.beta2 * st.v.v[i] + (1.0 - cfg.beta2) * g.v[i] * g.v[i];
      const double mhat = st.m.v[i] / bc1;
      const double vhat = st.v.v[i] / bc2;
      theta.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---- checkpoint I/O ----

inline nlohmann::ordered_json checkpoint_to_json(const ParamSet& params) {
  nlohmann::ordered_json j;
  j["format"] = "elegant-checkpoint";
  j["version"] = 1;
  j["step"] = params.step;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& [name, t] : params.values) {
    const AdamState& st = params.adam.at(name);
    nlohmann::ordered_json p;
    p["name"] = name;
    p["rows"] = t.rows;
    p["cols"] = t.cols;
    p["values"] = t.v;
    p["adam_m"] = st.m.v;
    p["adam_v"] = st.v.v;
    arr.push_back(std::move(p));
  }
  j["params"] = std::move(arr);
  return j;
}

inline ParamSet checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "elegant-checkpoint")
    throw Error("checkpoint: unrecognized format field");
  if (j.value("version", 0) != 1)
    throw Error("checkpoint: unsupported version " + std::to_string(j.value("version", 0)));
  ParamSet ps;
  ps.step = j.at("step").get<long>();
  for (const auto& p : j.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    Tensor t(p.at("rows").get<int>(), p.at("cols").get<int>());
    t.v = p.at("values").get<std::vector<double>>();
    if (t.v.size() != t.size()) throw Error("checkpoint: value count mismatch for '" + name + "'");
    AdamState st;
    st.m = Tensor(t.rows, t.cols);
    st.m.v = p.at("adam_m").get<std::vector<double>>();
    st.v = Tensor(t.rows, t.cols);
    st.v.v = p.at("adam_v").get<std::vector<double>>();
    if (st.m.v.size() != t.size() || st.v.v.size() != t.size())
      throw Error("checkpoint: Adam state shape mismatch for '" + name + "'");
    ps.values[name] = std::move(t);
    ps.adam[name] = std::move(st);
  }
  return ps;
}

inline void save_checkpoint(const ParamSet& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);
  out << checkpoint_to_json(params).dump(1) << "\n";
}

inline ParamSet load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  return checkpoint_from_json(j);
}

}  // namespace elegant::ad
