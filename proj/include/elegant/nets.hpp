#pragma once

// Small dense feed-forward nets (tanh hidden layers, linear output) used for
// drift fields, value models and learned rewards. The plain forward pass
// mirrors the recorded graph operation-for-operation so that graph-recorded
// simulations reproduce plain simulations bit-exactly.

#include <string>
#include <vector>

#include "elegant/autodiff.hpp"
#include "elegant/optim.hpp"
#include "elegant/rng.hpp"

namespace elegant {

struct MlpSpec {
  int in = 1;
  int out = 1;
  std::vector<int> hidden = {64, 64};
  bool zero_init_last = false;
  bool relu = false;  // hidden activation: tanh by default, relu opts in

  int n_layers() const { return static_cast<int>(hidden.size()) + 1; }
  int layer_in(int l) const { return l == 0 ? in : hidden[l - 1]; }
  int layer_out(int l) const { return l == n_layers() - 1 ? out : hidden[l]; }
};

inline std::string wname(const std::string& prefix, int l) {
  return prefix + ".W" + std::to_string(l);
}
inline std::string bname(const std::string& prefix, int l) {
  return prefix + ".b" + std::to_string(l);
}

inline void mlp_init(ad::ParamSet& params, const std::string& prefix, const MlpSpec& spec,
                     uint64_t seed) {
  SeqRng rng(seed, 0xF17);
  for (int l = 0; l < spec.n_layers(); ++l) {
    const int fan_in = spec.layer_in(l);
    const int fan_out = spec.layer_out(l);
    Tensor W(fan_out, fan_in);
    Tensor b(fan_out, 1);
    const bool zero = spec.zero_init_last && l == spec.n_layers() - 1;
    if (!zero) {
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& x : W.v) x = bound * (2.0 * rng.uniform() - 1.0);
    }
    params.insert(wname(prefix, l), std::move(W));
    params.insert(bname(prefix, l), std::move(b));
  }
}

// Records the net over a [in x B] input node. With trainable=false the
// weights enter as constants (frozen nets inside a training graph).
inline ad::Id mlp_record(ad::Graph& g, const ad::ParamSet& params, const std::string& prefix,
                         const MlpSpec& spec, ad::Id input, bool trainable) {
  ad::Id h = input;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const Tensor& W = params.get(wname(prefix, l));
    const Tensor& b = params.get(bname(prefix, l));
    ad::Id Wn = trainable ? g.param(wname(prefix, l), W) : g.constant(W);
    ad::Id bn = trainable ? g.param(bname(prefix, l), b) : g.constant(b);
    h = g.add(g.matmul(Wn, h), bn);
    if (l < spec.n_layers() - 1) h = spec.relu ? g.relu(h) : g.tanh(h);
  }
  return h;
}

// Plain forward over a [in x B] batch; arithmetic order matches mlp_record.
inline Tensor mlp_forward(const ad::ParamSet& params, const std::string& prefix,
                          const MlpSpec& spec, const Tensor& input) {
  Tensor h = input;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const Tensor& W = params.get(wname(prefix, l));
    const Tensor& b = params.get(bname(prefix, l));
    Tensor z(W.rows, h.cols);
    for (int i = 0; i < W.rows; ++i)
      for (int j = 0; j < h.cols; ++j) {
        double acc = 0.0;
        for (int k = 0; k < W.cols; ++k) acc += W.at(i, k) * h.at(k, j);
        z.at(i, j) = acc;
      }
    for (int i = 0; i < z.rows; ++i)
      for (int j = 0; j < z.cols; ++j) z.at(i, j) = z.at(i, j) + b.at(i, 0);
    if (l < spec.n_layers() - 1) {
      if (spec.relu)
        for (double& x : z.v) x = x > 0.0 ? x : 0.0;
      else
        for (double& x : z.v) x = std::tanh(x);
    }
    h = std::move(z);
  }
  return h;
}

inline double mlp_forward_scalar(const ad::ParamSet& params, const std::string& prefix,
                                 const MlpSpec& spec, const std::vector<double>& x) {
  Tensor out = mlp_forward(params, prefix, spec, Tensor::column(x));
  return out.v[0];
}

// Gradient of a scalar-output net with respect to its input.
inline std::vector<double> mlp_input_grad(const ad::ParamSet& params, const std::string& prefix,
                                          const MlpSpec& spec, const std::vector<double>& x) {
  ad::Graph g;
  ad::Id in = g.constant(Tensor::column(x));
  ad::Id out = mlp_record(g, params, prefix, spec, in, /*trainable=*/false);
  g.backward(out);
  return g.grad(in).v;
}

struct TrainConfig {
  int epochs = 50;
  int batch = 128;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;
  uint64_t seed = 0;

  ad::AdamConfig adam() const { return {lr, beta1, beta2, eps}; }
};

struct TrainLog {
  std::vector<double> epoch_loss;
};

// Minibatch MSE regression of a scalar-output net. Deterministic given the
// config seed; throws on a non-finite loss.
inline TrainLog train_regression(ad::ParamSet& params, const std::string& prefix,
                                 const MlpSpec& spec, const std::vector<std::vector<double>>& xs,
                                 const std::vector<double>& ys, const TrainConfig& cfg) {
  const int n = static_cast<int>(xs.size());
  if (n == 0) throw Error("train_regression: empty dataset");
  if (ys.size() != xs.size()) throw Error("train_regression: target count mismatch");
  TrainLog log;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  SeqRng shuffler(cfg.seed, 0x5Eu);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[shuffler.index(static_cast<uint64_t>(i) + 1)]);
    double epoch_loss = 0.0;
    int n_batches = 0;
    for (int start = 0; start < n; start += cfg.batch) {
      const int b = std::min(cfg.batch, n - start);
      Tensor X(spec.in, b);
      Tensor Y(1, b);
      for (int j = 0; j < b; ++j) {
        const int idx = order[start + j];
        for (int c = 0; c < spec.in; ++c) X.at(c, j) = xs[idx][c];
        Y.at(0, j) = ys[idx];
      }
      ad::Graph g;
      ad::Id pred = mlp_record(g, params, prefix, spec, g.constant(std::move(X)), true);
      ad::Id loss = g.scalar_mul(1.0 / b, g.sum(g.square(g.sub(pred, g.constant(std::move(Y))))));
      const double lval = g.value(loss).v[0];
      if (!std::isfinite(lval))
        throw Error("train_regression: divergent training (non-finite loss) at epoch " +
                    std::to_string(epoch));
      g.backward(loss);
      ad::GradMap grads = g.param_grads();
      ad::clip_global_norm(grads, cfg.clip_norm);
      ad::adam_step(params, grads, cfg.adam());
      epoch_loss += lval;
      ++n_batches;
    }
    log.epoch_loss.push_back(epoch_loss / n_batches);
  }
  return log;
}

}  // namespace elegant
