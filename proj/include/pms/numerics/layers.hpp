#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pms/numerics/autodiff.hpp"
#include "pms/numerics/rng.hpp"

namespace pms::nn {

using ad::Activation;
using ad::Var;

enum class Mode { train, infer };

/// y = x·w + b. Pass an invalid Var as `b` for a bias-free layer.
inline Var forward_linear(Var x, Var w, Var b = {}) { return ad::linear(x, w, b); }

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline Tensor init_uniform(Shape dims, std::size_t fan_in, RngState& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(shape_size(dims));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(dims), std::move(v));
}

struct LstmLayerVars {
  Var w;  // (in + hidden, 4·hidden)
  Var b;  // (4·hidden)
};

/// Multi-layer LSTM over `steps` (each (batch, in)) from zero initial state.
/// Returns the top layer's hidden output for every step.
inline std::vector<Var> lstm_forward(const std::vector<Var>& steps, std::span<const LstmLayerVars> layers) {
  if (steps.empty()) throw DimensionError("lstm_forward: empty sequence");
  if (layers.empty()) throw DimensionError("lstm_forward: no layers");
  ad::Tape& tape = *steps.front().tape();
  const std::size_t batch = steps.front().rows();
  std::vector<Var> current = steps;
  for (const LstmLayerVars& layer : layers) {
    const std::size_t hidden = layer.b.value().size() / 4;
    if (hidden == 0 || layer.b.value().size() != 4 * hidden) {
      throw DimensionError("lstm_forward: bias " + shape_string(layer.b.value().dims()) + " is not 4·hidden");
    }
    Var h = tape.constant(Tensor::zeros({batch, hidden}));
    Var c = h;
    std::vector<Var> outputs;
    outputs.reserve(current.size());
    for (const Var& x : current) {
      Var z = ad::lstm_gates(x, h, layer.w, layer.b);
      c = ad::lstm_cell_state(z, c);
      h = ad::lstm_hidden(z, c);
      outputs.push_back(h);
    }
    current = std::move(outputs);
  }
  return current;
}

/// Running statistics of one batch-normalization layer.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t features = 0)
      : running_mean(features, 0.0), running_var(features, 1.0) {}
};

struct BnDropoutOptions {
  bool batch_norm = true;
  double drop_rate = 0.0;
  Activation activation = Activation::relu;
};

/// Batch normalization, inverted dropout, then activation.
///
/// Train mode standardizes with batch statistics (variance over the batch
/// size), updates the running statistics, and drops units with the given
/// rate. Infer mode uses the running statistics and no dropout.
inline Var bn_dropout_act(Var x, Var scale, Var shift, BatchNormState& stats, Mode mode,
                          const BnDropoutOptions& opts, RngState* rng) {
  ad::Tape& tape = *x.tape();
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  Var y = x;
  if (opts.batch_norm) {
    if (stats.running_mean.size() != cols || stats.running_var.size() != cols) {
      throw DimensionError("bn_dropout_act: running statistics sized " + std::to_string(stats.running_mean.size()) +
                           " for " + std::to_string(cols) + " features");
    }
    if (mode == Mode::train) {
      if (rows < 2) throw DimensionError("bn_dropout_act: train mode needs a batch of at least 2, got " + std::to_string(rows));
      std::vector<double> mean, var;
      Var standardized = ad::batch_standardize(x, stats.eps, &mean, &var);
      for (std::size_t c = 0; c < cols; ++c) {
        stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mean[c];
        stats.running_var[c] = (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * var[c];
      }
      y = ad::column_affine(standardized, scale, shift);
    } else {
      std::vector<double> inv(cols), offset(cols);
      for (std::size_t c = 0; c < cols; ++c) {
        inv[c] = 1.0 / std::sqrt(stats.running_var[c] + stats.eps);
        offset[c] = -stats.running_mean[c] * inv[c];
      }
      Var standardized = ad::column_affine(x, tape.constant(Tensor({cols}, std::move(inv))),
                                           tape.constant(Tensor({cols}, std::move(offset))));
      y = ad::column_affine(standardized, scale, shift);
    }
  }
  if (mode == Mode::train && opts.drop_rate > 0.0) {
    if (opts.drop_rate > 1.0) throw Error("bn_dropout_act: drop rate above 1");
    if (rng == nullptr) throw Error("bn_dropout_act: dropout needs an RngState");
    const double keep_scale = opts.drop_rate < 1.0 ? 1.0 / (1.0 - opts.drop_rate) : 0.0;
    std::vector<double> mask(rows * cols);
    for (double& m : mask) m = rng->uniform() < opts.drop_rate ? 0.0 : keep_scale;
    y = ad::mul_const(y, Tensor({rows, cols}, std::move(mask)));
  }
  return ad::activate(y, opts.activation);
}

}  // namespace pms::nn
