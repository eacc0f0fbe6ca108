#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pms/dataio/windows.hpp"
#include "pms/model/forward.hpp"

namespace pms::model {

/// Predicted poses for one window, in normalized coordinates.
struct Prediction {
  Tensor frames;                           // (horizon, J, 3)
  std::map<std::size_t, Tensor> per_branch;  // (L, J, 3) per interval, short-term only
  std::string model_id;
  std::string window_id;
};

/// 64-bit FNV-1a over parameter names and value bits, rendered as hex.
inline std::string model_id(const PmsModel& model) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : model.params().params()) {
    mix(name.data(), name.size());
    mix(t.data(), t.size() * sizeof(double));
  }
  for (const auto& [name, s] : model.bn_states()) {
    mix(s.running_mean.data(), s.running_mean.size() * sizeof(double));
    mix(s.running_var.data(), s.running_var.size() * sizeof(double));
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

/// (frames, J, 3) tensor from the observed part of a window.
inline Tensor observed_tensor(const data::UnitWindow& w) {
  std::vector<double> v;
  v.reserve(w.observed_length() * w.pose_size());
  for (std::size_t i = 0; i < w.observed_length(); ++i) {
    const auto f = w.observed(i);
    v.insert(v.end(), f.begin(), f.end());
  }
  return Tensor({w.observed_length(), w.joints(), 3}, std::move(v));
}

/// First `count` frames after the observation (target, then extended).
inline Tensor future_tensor(const data::UnitWindow& w, std::size_t count) {
  if (count > w.future_length()) throw DataError("window has only " + std::to_string(w.future_length()) + " future frames");
  std::vector<double> v;
  v.reserve(count * w.pose_size());
  for (std::size_t i = 0; i < count; ++i) {
    const auto f = w.future(i);
    v.insert(v.end(), f.begin(), f.end());
  }
  return Tensor({count, w.joints(), 3}, std::move(v));
}

/// Stacks frame i of every window into one (batch, J·3) constant.
template <class FrameAt>
std::vector<Var> batch_frames(ad::Tape& tape, std::size_t batch, std::size_t frames, std::size_t width, FrameAt&& frame_at) {
  std::vector<Var> out;
  out.reserve(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    std::vector<double> v(batch * width);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::span<const double> f = frame_at(b, i);
      std::memcpy(v.data() + b * width, f.data(), width * sizeof(double));
    }
    out.push_back(tape.constant(Tensor({batch, width}, std::move(v))));
  }
  return out;
}

/// Unstacks batched frames into one (frames, J, 3) tensor per row.
inline std::vector<Tensor> unbatch(const std::vector<Var>& frames, std::size_t joints) {
  const std::size_t batch = frames.front().rows();
  const std::size_t width = 3 * joints;
  std::vector<Tensor> out;
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> v;
    v.reserve(frames.size() * width);
    for (const Var& f : frames) {
      const double* row = f.value().data() + b * width;
      v.insert(v.end(), row, row + width);
    }
    out.emplace_back(Shape{frames.size(), joints, 3}, std::move(v));
  }
  return out;
}

namespace detail {

inline void check_window(const PmsModel& model, const Tensor& window) {
  const ModelConfig& cfg = model.config();
  if (window.rank() < 2 || window.size() / window.dim(0) != cfg.pose_size()) {
    throw DimensionError("window " + shape_string(window.dims()) + " does not hold " + std::to_string(cfg.joints) +
                         "-joint poses");
  }
  if (window.dim(0) < cfg.observed) {
    throw DataError("insufficient history: " + std::to_string(window.dim(0)) + " frames, model needs " +
                    std::to_string(cfg.observed));
  }
}

}  // namespace detail

/// Inference over several windows at once. Horizons beyond L use the
/// autoregressive rollout.
inline std::vector<Tensor> predict_batch(const PmsModel& model, const std::vector<Tensor>& windows, std::size_t horizon) {
  if (windows.empty()) return {};
  const ModelConfig& cfg = model.config();
  for (const Tensor& w : windows) detail::check_window(model, w);
  ad::Tape tape;
  const auto vars = model.params().bind(tape);
  auto bn = model.bn_states();
  ForwardContext ctx{tape, vars, cfg, bn, nn::Mode::infer, nullptr, 0.0};
  const std::size_t width = cfg.pose_size();
  const auto frames = batch_frames(tape, windows.size(), cfg.observed, width, [&](std::size_t b, std::size_t i) {
    const Tensor& w = windows[b];
    const std::size_t offset = w.dim(0) - cfg.observed;
    return std::span<const double>(w.data() + (offset + i) * width, width);
  });
  std::vector<Var> out = horizon == cfg.horizon ? forward_short(ctx, frames).frames : forward_long(ctx, frames, horizon);
  return unbatch(out, cfg.joints);
}

inline Prediction predict_short(const PmsModel& model, const Tensor& window, std::string window_id = {}) {
  detail::check_window(model, window);
  const ModelConfig& cfg = model.config();
  ad::Tape tape;
  const auto vars = model.params().bind(tape);
  auto bn = model.bn_states();
  ForwardContext ctx{tape, vars, cfg, bn, nn::Mode::infer, nullptr, 0.0};
  const std::size_t width = cfg.pose_size();
  const std::size_t offset = window.dim(0) - cfg.observed;
  const auto frames = batch_frames(tape, 1, cfg.observed, width, [&](std::size_t, std::size_t i) {
    return std::span<const double>(window.data() + (offset + i) * width, width);
  });
  ShortOutput s = forward_short(ctx, frames);
  Prediction p;
  p.frames = unbatch(s.frames, cfg.joints).front();
  for (const auto& [d, f] : s.per_branch) p.per_branch.emplace(d, unbatch(f, cfg.joints).front());
  p.model_id = model_id(model);
  p.window_id = std::move(window_id);
  return p;
}

inline Prediction predict_long(const PmsModel& model, const Tensor& window, std::size_t horizon = 25,
                               std::string window_id = {}) {
  Prediction p;
  p.frames = predict_batch(model, {window}, horizon).front();
  p.model_id = model_id(model);
  p.window_id = std::move(window_id);
  return p;
}

}  // namespace pms::model
