#pragma once

// Differentiable forward pass of the PMS network over a batch of windows.
// Every frame is an ad::Var of shape (batch, J·3).

#include <map>
#include <span>
#include <string>
#include <vector>

#include "pms/increments.hpp"
#include "pms/model/pms_model.hpp"

namespace pms::model {

using ad::Var;

/// v + a per frame.
template <class Frame>
inc::Segment<Frame> correct_velocity(const inc::Segment<Frame>& velocity, const inc::Segment<Frame>& accel) {
  if (velocity.size() != accel.size()) {
    throw DimensionError("correct_velocity: " + std::to_string(velocity.size()) + " vs " +
                         std::to_string(accel.size()) + " frames");
  }
  inc::Segment<Frame> out;
  out.reserve(velocity.size());
  for (std::size_t t = 0; t < velocity.size(); ++t) {
    out.push_back(inc::combine(std::vector<Frame>{velocity[t], accel[t]}, std::vector<double>{1.0, 1.0}));
  }
  return out;
}

/// Frame n of the next segment is last[n] + sign·γ[n]·increment[n].
template <class Frame>
inc::Segment<Frame> predict_segment(const inc::Segment<Frame>& last, const inc::Segment<Frame>& increment,
                                    std::span<const double> gamma, double sign) {
  if (last.size() != increment.size()) {
    throw DimensionError("predict_segment: segment has " + std::to_string(last.size()) + " frames, increment " +
                         std::to_string(increment.size()));
  }
  if (gamma.size() < last.size()) {
    throw DimensionError("predict_segment: " + std::to_string(gamma.size()) + " attenuation coefficients for " +
                         std::to_string(last.size()) + " frames");
  }
  inc::Segment<Frame> out;
  out.reserve(last.size());
  for (std::size_t n = 0; n < last.size(); ++n) {
    out.push_back(inc::combine(std::vector<Frame>{last[n], increment[n]}, std::vector<double>{1.0, sign * gamma[n]}));
  }
  return out;
}

/// Everything a forward pass needs besides the input frames.
struct ForwardContext {
  ad::Tape& tape;
  const std::map<std::string, Var>& vars;
  const ModelConfig& cfg;
  std::map<std::string, nn::BatchNormState>& bn;
  nn::Mode mode = nn::Mode::infer;
  RngState* dropout_rng = nullptr;
  /// Dropout override; negative keeps the configured rate.
  double dropout = -1.0;

  Var param(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw ConfigError("missing parameter " + name);
    return it->second;
  }
  Var optional_param(const std::string& name) const {
    auto it = vars.find(name);
    return it == vars.end() ? Var{} : it->second;
  }
};

struct ShortOutput {
  std::vector<Var> frames;                               // L combined frames
  std::map<std::size_t, std::vector<Var>> per_branch;    // per interval, L frames
};

/// One branch applied to δ feature frames; returns δ increment frames.
inline std::vector<Var> branch_forward(ForwardContext& ctx, std::size_t delta, Branch branch,
                                       const std::vector<Var>& features) {
  const std::string p = branch_prefix(delta, branch);
  if (features.empty()) throw DimensionError("branch_forward: no feature frames");
  const std::size_t batch = features.front().rows();
  const std::size_t width = ctx.cfg.pose_size();
  for (const Var& f : features) {
    if (f.value().rank() != 2 || f.rows() != batch || f.cols() != width) {
      throw DimensionError("branch_forward: feature frame " + shape_string(f.dims()) + ", expected [" +
                           std::to_string(batch) + "x" + std::to_string(width) + "]");
    }
  }

  std::vector<Var> embedded;
  embedded.reserve(features.size());
  const Var w_in = ctx.param(p + "fc_in.w");
  const Var b_in = ctx.optional_param(p + "fc_in.b");
  for (const Var& f : features) embedded.push_back(nn::forward_linear(f, w_in, b_in));

  std::vector<nn::LstmLayerVars> layers;
  for (std::size_t l = 0; l < ctx.cfg.lstm_layers; ++l) {
    const std::string name = p + "lstm" + std::to_string(l);
    layers.push_back({ctx.param(name + ".w"), ctx.param(name + ".b")});
  }
  const std::vector<Var> recurrent = nn::lstm_forward(embedded, layers);

  // Steps are stacked along rows so the mid block normalizes over batch × δ.
  Var x = ad::concat_rows(recurrent);
  x = nn::forward_linear(x, ctx.param(p + "fc_mid.w"), ctx.optional_param(p + "fc_mid.b"));
  nn::BnDropoutOptions opts;
  opts.batch_norm = ctx.cfg.bn_relu;
  opts.activation = ctx.cfg.bn_relu ? ctx.cfg.activation : ad::Activation::identity;
  opts.drop_rate = ctx.dropout >= 0.0 ? ctx.dropout : ctx.cfg.dropout;
  if (ctx.cfg.bn_relu) {
    x = nn::bn_dropout_act(x, ctx.param(p + "bn.scale"), ctx.param(p + "bn.shift"), ctx.bn.at(p + "bn"), ctx.mode, opts,
                           ctx.dropout_rng);
  } else {
    nn::BatchNormState unused;
    x = nn::bn_dropout_act(x, Var{}, Var{}, unused, ctx.mode, opts, ctx.dropout_rng);
  }
  x = nn::forward_linear(x, ctx.param(p + "fc_out_a.w"), ctx.optional_param(p + "fc_out_a.b"));
  x = nn::forward_linear(x, ctx.param(p + "fc_out_b.w"), ctx.optional_param(p + "fc_out_b.b"));

  std::vector<Var> out;
  out.reserve(features.size());
  for (std::size_t t = 0; t < features.size(); ++t) out.push_back(ad::slice_rows(x, t * batch, batch));
  return out;
}

namespace detail {

inline std::vector<Var> last_frames(const std::vector<Var>& frames, std::size_t count) {
  return std::vector<Var>(frames.end() - static_cast<std::ptrdiff_t>(count), frames.end());
}

}  // namespace detail

/// L-frame prediction from a K-frame window.
///
/// Each interval δ predicts δ frames at a time and feeds them back until it
/// covers the horizon. Branch outputs are blended frame-wise with the
/// combination weights. With adjust_rounds R > 1, every further round
/// recomputes the branch features on the window extended by the previous
/// round's blended frames while still extrapolating from the observed and
/// self-predicted segments.
inline ShortOutput forward_short(ForwardContext& ctx, const std::vector<Var>& window) {
  const ModelConfig& cfg = ctx.cfg;
  if (window.size() < cfg.observed) {
    throw DataError("insufficient history: " + std::to_string(window.size()) + " frames, model needs " +
                    std::to_string(cfg.observed));
  }
  const std::vector<Var> observed = detail::last_frames(window, cfg.observed);
  const std::vector<double> gamma = cfg.gamma();
  const std::vector<double> weights = cfg.branch_weights();

  ShortOutput result;
  std::vector<Var> previous;
  for (std::size_t round = 0; round < cfg.adjust_rounds; ++round) {
    result.per_branch.clear();
    for (std::size_t d : cfg.scales.deltas) {
      const inc::FusionWeights& fw = cfg.fusion_for(d);
      std::vector<Var> own;
      for (std::size_t step = 0; step < cfg.steps_for(d); ++step) {
        std::vector<Var> history = observed;
        history.insert(history.end(), own.begin(), own.end());
        std::vector<Var> feature_window = history;
        if (round > 0) {
          feature_window.insert(feature_window.end(), previous.begin() + static_cast<std::ptrdiff_t>(own.size()),
                                previous.end());
        }
        feature_window = detail::last_frames(feature_window, cfg.observed);

        const auto increments =
            inc::compute_increments<Var>(std::span<const Var>(feature_window), d, cfg.scales.anchor, fw);
        const std::vector<Var>& velocity_in = cfg.raw_velocity ? increments.velocity.back() : increments.fused_velocity;
        std::vector<Var> velocity = branch_forward(ctx, d, Branch::velocity, velocity_in);
        if (cfg.accel_correction) {
          velocity = correct_velocity(velocity, branch_forward(ctx, d, Branch::acceleration, increments.fused_accel));
        }
        const std::vector<Var> base = detail::last_frames(history, d);
        const auto next = predict_segment(base, velocity, std::span<const double>(gamma).subspan(step * d, d),
                                          cfg.increment_sign);
        own.insert(own.end(), next.begin(), next.end());
      }
      own.resize(cfg.horizon);
      result.per_branch.emplace(d, std::move(own));
    }

    result.frames.clear();
    for (std::size_t n = 0; n < cfg.horizon; ++n) {
      std::vector<Var> terms;
      for (std::size_t d : cfg.scales.deltas) terms.push_back(result.per_branch.at(d)[n]);
      result.frames.push_back(inc::combine(terms, weights));
    }
    previous = result.frames;
  }
  return result;
}

/// Autoregressive rollout: predict L frames, append them, keep the latest
/// K frames as the next window, repeat until `horizon` frames exist.
inline std::vector<Var> forward_long(ForwardContext& ctx, const std::vector<Var>& window, std::size_t horizon,
                                     std::size_t* inner_steps = nullptr) {
  std::vector<Var> current = detail::last_frames(window, ctx.cfg.observed);
  std::vector<Var> out;
  std::size_t steps = 0;
  while (out.size() < horizon) {
    ShortOutput s = forward_short(ctx, current);
    ++steps;
    out.insert(out.end(), s.frames.begin(), s.frames.end());
    current.insert(current.end(), s.frames.begin(), s.frames.end());
    current = detail::last_frames(current, ctx.cfg.observed);
  }
  out.resize(horizon);
  if (inner_steps) *inner_steps = steps;
  return out;
}

}  // namespace pms::model
