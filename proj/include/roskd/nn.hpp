// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "roskd/matrix.hpp"
#include "roskd/rng.hpp"

// Minimal fully-connected network engine: rectifier hidden layers, identity
// output, analytic gradients, SGD with momentum and a step learning-rate
// schedule. Everything is double precision and deterministic per seed.

namespace roskd {

enum class Activation { kRelu };

struct ModelSpec {
  // input dim, hidden dims..., output dim (= class count).
  std::vector<int> layer_widths;
  Activation activation = Activation::kRelu;
  std::uint64_t init_seed = 0;

  std::size_t layer_count() const { return layer_widths.empty() ? 0 : layer_widths.size() - 1; }
  int input_dim() const { return layer_widths.front(); }
  int output_dim() const { return layer_widths.back(); }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

inline void validate_spec(const ModelSpec& spec) {
  if (spec.layer_widths.size() < 2) {
    throw std::invalid_argument("ModelSpec: need at least input and output widths");
  }
  for (int w : spec.layer_widths) {
    if (w <= 0) throw std::invalid_argument("ModelSpec: layer width must be positive");
  }
}

inline std::size_t param_count(const ModelSpec& spec) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
    n += static_cast<std::size_t>(spec.layer_widths[l]) * spec.layer_widths[l + 1];
    n += static_cast<std::size_t>(spec.layer_widths[l + 1]);
  }
  return n;
}

// Flat parameter storage, canonical layer order: W_0, b_0, W_1, b_1, ...
// W_l is (in x out) row-major. Supports elementwise algebra so checkpoints
// can be averaged and interpolated.
struct ParamVector {
  ModelSpec spec;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }

  ParamVector& operator+=(const ParamVector& other) {
    require_same_spec(other);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
    return *this;
  }

  ParamVector& scale(double s) {
    for (double& v : values) v *= s;
    return *this;
  }

  // this += s * other
  ParamVector& axpy(double s, const ParamVector& other) {
    require_same_spec(other);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += s * other.values[i];
    return *this;
  }

  void require_same_spec(const ParamVector& other) const {
    if (spec != other.spec) throw std::invalid_argument("ParamVector: spec mismatch");
    if (values.size() != other.values.size()) {
      throw std::invalid_argument("ParamVector: length mismatch");
    }
  }
};

inline ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }

inline ParamVector scaled(ParamVector p, double s) { return p.scale(s); }

namespace detail {

struct LayerView {
  std::size_t w_offset;  // start of W_l in the flat vector
  std::size_t b_offset;  // start of b_l
  int in;
  int out;
};

inline LayerView layer_view(const ModelSpec& spec, std::size_t l) {
  std::size_t off = 0;
  for (std::size_t i = 0; i < l; ++i) {
    off += static_cast<std::size_t>(spec.layer_widths[i]) * spec.layer_widths[i + 1];
    off += static_cast<std::size_t>(spec.layer_widths[i + 1]);
  }
  const int in = spec.layer_widths[l];
  const int out = spec.layer_widths[l + 1];
  return {off, off + static_cast<std::size_t>(in) * out, in, out};
}

}  // namespace detail

// Weights drawn from N(0, 1/fan_in), i.e. std = 1/sqrt(fan_in), in canonical
// layer order from a single stream keyed on init_seed; biases zero. Two specs
// with equal fields produce bit-identical parameters.
inline ParamVector init_model(const ModelSpec& spec) {
  validate_spec(spec);
  ParamVector p{spec, std::vector<double>(param_count(spec), 0.0)};
  Rng rng(derive_seed(spec.init_seed, "roskd.init"));
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const auto view = detail::layer_view(spec, l);
    const double sd = 1.0 / std::sqrt(static_cast<double>(view.in));
    for (std::size_t i = 0; i < static_cast<std::size_t>(view.in) * view.out; ++i) {
      p.values[view.w_offset + i] = sd * rng.next_normal();
    }
    // biases stay zero
  }
  return p;
}

struct ForwardCache {
  std::vector<Matrix> inputs;    // inputs[l] is the activation fed to layer l
  std::vector<Matrix> pre_acts;  // pre_acts[l] = inputs[l] * W_l + b_l
};

// Batch forward pass; returns raw logits, no softmax. x is L x input_dim.
inline Matrix forward(const ParamVector& params, const Matrix& x, ForwardCache* cache = nullptr) {
  validate_spec(params.spec);
  if (params.values.size() != param_count(params.spec)) {
    throw std::invalid_argument("forward: parameter length does not match spec");
  }
  if (x.cols != static_cast<std::size_t>(params.spec.input_dim())) {
    throw std::invalid_argument("forward: feature dim " + std::to_string(x.cols) +
                                " does not match input width " +
                                std::to_string(params.spec.input_dim()));
  }
  const std::size_t layers = params.spec.layer_count();
  Matrix act = x;
  if (cache) {
    cache->inputs.clear();
    cache->pre_acts.clear();
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const auto view = detail::layer_view(params.spec, l);
    if (cache) cache->inputs.push_back(act);
    Matrix z(act.rows, static_cast<std::size_t>(view.out));
    for (std::size_t i = 0; i < act.rows; ++i) {
      const double* in_row = act.data.data() + i * act.cols;
      double* out_row = z.data.data() + i * z.cols;
      const double* bias = params.values.data() + view.b_offset;
      for (int j = 0; j < view.out; ++j) out_row[j] = bias[j];
      for (int k = 0; k < view.in; ++k) {
        const double a = in_row[k];
        if (a == 0.0) continue;
        const double* wrow = params.values.data() + view.w_offset + static_cast<std::size_t>(k) * view.out;
        for (int j = 0; j < view.out; ++j) out_row[j] += a * wrow[j];
      }
    }
    if (cache) cache->pre_acts.push_back(z);
    if (l + 1 < layers) {
      for (double& v : z.data) v = v > 0.0 ? v : 0.0;  // relu; derivative 0 at 0
    }
    act = std::move(z);
  }
  return act;
}

struct BackwardResult {
  ParamVector param_grad;
  Matrix input_grad;  // dL/dx, same shape as x
};

// Analytic gradient of a scalar loss w.r.t. every parameter, given the loss
// gradient at the logits. Recomputes the forward pass internally.
inline BackwardResult backward_with_input(const ParamVector& params, const Matrix& x,
                                          const Matrix& logit_grad) {
  ForwardCache cache;
  const Matrix logits = forward(params, x, &cache);
  if (logit_grad.rows != logits.rows || logit_grad.cols != logits.cols) {
    throw std::invalid_argument("backward: logit gradient shape mismatch");
  }
  const std::size_t layers = params.spec.layer_count();
  BackwardResult result{ParamVector{params.spec, std::vector<double>(params.values.size(), 0.0)},
                        Matrix{}};
  Matrix delta = logit_grad;
  for (std::size_t l = layers; l-- > 0;) {
    const auto view = detail::layer_view(params.spec, l);
    const Matrix& input = cache.inputs[l];

    // dW = input^T * delta, db = column sums of delta
    const Matrix dw = matmul_at_b(input, delta);
    for (std::size_t i = 0; i < dw.size(); ++i) result.param_grad.values[view.w_offset + i] = dw.data[i];
    for (std::size_t r = 0; r < delta.rows; ++r) {
      const double* row = delta.data.data() + r * delta.cols;
      for (int j = 0; j < view.out; ++j) result.param_grad.values[view.b_offset + j] += row[j];
    }

    // propagate: dInput = delta * W^T, gated by relu' for hidden layers
    Matrix w(static_cast<std::size_t>(view.in), static_cast<std::size_t>(view.out));
    std::copy(params.values.begin() + view.w_offset,
              params.values.begin() + view.w_offset + w.size(), w.data.begin());
    Matrix dinput = matmul_a_bt(delta, w);
    if (l > 0) {
      const Matrix& pre = cache.pre_acts[l - 1];
      for (std::size_t i = 0; i < dinput.size(); ++i) {
        if (pre.data[i] <= 0.0) dinput.data[i] = 0.0;
      }
    }
    delta = std::move(dinput);
  }
  result.input_grad = std::move(delta);
  return result;
}

inline ParamVector backward(const ParamVector& params, const Matrix& x, const Matrix& logit_grad) {
  return backward_with_input(params, x, logit_grad).param_grad;
}

struct OptimConfig {
  double momentum = 0.9;
  double weight_decay = 2e-4;
  double base_lr = 0.1;
  std::vector<int> decay_epochs = {25, 40};
  double decay_factor = 10.0;
};

inline void validate_optim(const OptimConfig& cfg) {
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
    throw std::invalid_argument("OptimConfig: momentum must be in [0, 1)");
  }
  if (cfg.weight_decay < 0.0) throw std::invalid_argument("OptimConfig: weight_decay must be >= 0");
  if (cfg.base_lr <= 0.0) throw std::invalid_argument("OptimConfig: base_lr must be > 0");
}

struct OptimState {
  OptimConfig config;
  ParamVector momentum_buffers;
};

inline OptimState make_optim_state(const ModelSpec& spec, const OptimConfig& cfg = {}) {
  validate_optim(cfg);
  return {cfg, ParamVector{spec, std::vector<double>(param_count(spec), 0.0)}};
}

// base_lr divided by decay_factor once per decay epoch already reached.
inline double lr_at_epoch(const OptimConfig& cfg, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at_epoch: epoch must be >= 0");
  double lr = cfg.base_lr;
  for (int boundary : cfg.decay_epochs) {
    if (epoch >= boundary) lr /= cfg.decay_factor;
  }
  return lr;
}

inline double lr_at_epoch(const OptimState& opt, int epoch) {
  return lr_at_epoch(opt.config, epoch);
}

// buffers <- momentum * buffers + (grads + weight_decay * params)
// params  <- params - lr(epoch) * buffers
inline void sgd_step(ParamVector& params, const ParamVector& grads, OptimState& opt, int epoch) {
  params.require_same_spec(grads);
  params.require_same_spec(opt.momentum_buffers);
  const double lr = lr_at_epoch(opt, epoch);
  const double mu = opt.config.momentum;
  const double wd = opt.config.weight_decay;
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    double& buf = opt.momentum_buffers.values[i];
    buf = mu * buf + (grads.values[i] + wd * params.values[i]);
    params.values[i] -= lr * buf;
  }
}

}  // namespace roskd
