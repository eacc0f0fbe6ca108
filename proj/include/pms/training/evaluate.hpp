#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "pms/dataio/motion.hpp"
#include "pms/dataio/windows.hpp"
#include "pms/losses.hpp"
#include "pms/model/predict.hpp"

namespace pms::train {

struct EvalOptions {
  std::vector<std::size_t> horizons_ms{80, 160, 320, 400, 560, 1000};
  double fps = 25.0;
  std::size_t batch_size = 64;
};

/// Frame index (1-based) reached `ms` milliseconds after the last observed frame.
inline std::size_t horizon_frames(std::size_t ms, double fps) {
  const double f = static_cast<double>(ms) * fps / 1000.0;
  const auto n = static_cast<std::size_t>(std::llround(f));
  if (n == 0 || std::fabs(f - static_cast<double>(n)) > 1e-9) {
    throw ConfigError("horizon " + std::to_string(ms) + " ms is not a whole number of frames at the given fps");
  }
  return n;
}

/// One method's errors: per action, one value per horizon.
struct MethodErrors {
  std::map<std::string, std::vector<double>> per_action;
  std::vector<double> overall;  // mean over actions per horizon
  double average = 0.0;         // mean over horizons of `overall`
  double action_variance = 0.0; // population variance of per-action means
  /// Mean per-window MPJPE over the first L predicted frames.
  double short_term = 0.0;
};

struct EvalReport {
  std::vector<std::size_t> horizons_ms;
  std::vector<std::size_t> horizon_frames;
  std::size_t windows = 0;
  MethodErrors model;
  MethodErrors zero_velocity;
  MethodErrors constant_velocity;
  /// Same quantities in the original coordinates; empty when no stats exist.
  bool has_denormalized = false;
  MethodErrors model_denorm;
  MethodErrors zero_velocity_denorm;
  MethodErrors constant_velocity_denorm;
};

namespace detail {

/// Accumulates per-window errors per action, then reduces.
class ErrorTable {
 public:
  explicit ErrorTable(std::size_t horizons) : horizons_(horizons) {}

  void add(const std::string& action, const std::vector<double>& at_horizons, double short_term) {
    auto& s = sums_[action];
    if (s.empty()) s.assign(horizons_, 0.0);
    for (std::size_t h = 0; h < horizons_; ++h) s[h] += at_horizons[h];
    short_[action] += short_term;
    ++counts_[action];
  }

  MethodErrors reduce() const {
    MethodErrors m;
    m.overall.assign(horizons_, 0.0);
    std::vector<double> action_means;
    double short_sum = 0.0;
    for (const auto& [action, s] : sums_) {
      const double n = static_cast<double>(counts_.at(action));
      std::vector<double> v(horizons_);
      for (std::size_t h = 0; h < horizons_; ++h) v[h] = s[h] / n;
      double mean = 0.0;
      for (double x : v) mean += x;
      action_means.push_back(mean / static_cast<double>(horizons_));
      for (std::size_t h = 0; h < horizons_; ++h) m.overall[h] += v[h];
      short_sum += short_.at(action) / n;
      m.per_action.emplace(action, std::move(v));
    }
    const double a = static_cast<double>(sums_.size());
    for (double& x : m.overall) x /= a;
    for (double x : m.overall) m.average += x;
    m.average /= static_cast<double>(horizons_);
    m.short_term = short_sum / a;
    double mu = 0.0;
    for (double x : action_means) mu += x;
    mu /= a;
    for (double x : action_means) m.action_variance += (x - mu) * (x - mu);
    m.action_variance /= a;
    return m;
  }

 private:
  std::size_t horizons_;
  std::map<std::string, std::vector<double>> sums_;
  std::map<std::string, double> short_;
  std::map<std::string, std::size_t> counts_;
};

inline double frame_error(const double* pred, std::span<const double> truth, std::size_t joints) {
  double e = 0.0;
  for (std::size_t j = 0; j < joints; ++j) {
    const double dx = pred[3 * j] - truth[3 * j];
    const double dy = pred[3 * j + 1] - truth[3 * j + 1];
    const double dz = pred[3 * j + 2] - truth[3 * j + 2];
    e += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return e / static_cast<double>(joints);
}

/// Scores one predicted rollout (frames × pose) against a window's future.
struct Scorer {
  const std::vector<std::size_t>& frames;
  std::size_t short_len;
  const data::NormStats* stats;

  void score(const data::UnitWindow& w, const Tensor& pred, ErrorTable& norm, ErrorTable* denorm) const {
    const std::size_t width = w.pose_size();
    const std::size_t joints = w.joints();
    std::vector<double> at(frames.size());
    for (std::size_t h = 0; h < frames.size(); ++h) {
      at[h] = frame_error(pred.data() + (frames[h] - 1) * width, w.future(frames[h] - 1), joints);
    }
    double st = 0.0;
    for (std::size_t t = 0; t < short_len; ++t) st += frame_error(pred.data() + t * width, w.future(t), joints);
    norm.add(w.action(), at, st / static_cast<double>(short_len));
    if (!denorm) return;

    std::vector<double> p(pred.storage().begin(), pred.storage().end());
    data::denormalize_in_place(p, *stats);
    auto truth_at = [&](std::size_t t) {
      std::vector<double> f(w.future(t).begin(), w.future(t).end());
      data::denormalize_in_place(f, *stats);
      return f;
    };
    for (std::size_t h = 0; h < frames.size(); ++h) {
      at[h] = frame_error(p.data() + (frames[h] - 1) * width, truth_at(frames[h] - 1), joints);
    }
    st = 0.0;
    for (std::size_t t = 0; t < short_len; ++t) st += frame_error(p.data() + t * width, truth_at(t), joints);
    denorm->add(w.action(), at, st / static_cast<double>(short_len));
  }
};

}  // namespace detail

/// Baseline rollout that holds the last observed pose.
inline Tensor zero_velocity_rollout(const data::UnitWindow& w, std::size_t frames) {
  const auto last = w.observed(w.observed_length() - 1);
  std::vector<double> v;
  v.reserve(frames * last.size());
  for (std::size_t t = 0; t < frames; ++t) v.insert(v.end(), last.begin(), last.end());
  return Tensor({frames, w.joints(), 3}, std::move(v));
}

/// Baseline rollout that continues the last observed frame-to-frame step.
inline Tensor constant_velocity_rollout(const data::UnitWindow& w, std::size_t frames) {
  const auto last = w.observed(w.observed_length() - 1);
  const auto prev = w.observed(w.observed_length() - 2);
  std::vector<double> v;
  v.reserve(frames * last.size());
  for (std::size_t t = 1; t <= frames; ++t) {
    for (std::size_t i = 0; i < last.size(); ++i) v.push_back(last[i] + static_cast<double>(t) * (last[i] - prev[i]));
  }
  return Tensor({frames, w.joints(), 3}, std::move(v));
}

/// MPJPE per horizon for the model and both baselines on the same windows.
///
/// Denormalized rows are produced when every window's action has stored
/// normalization statistics, taken from `norms` or else from the model.
inline EvalReport evaluate_model(const model::PmsModel& m, const std::vector<data::UnitWindow>& windows,
                                 const EvalOptions& opts = {},
                                 const std::map<std::string, data::NormStats>* norms = nullptr) {
  if (windows.empty()) throw DataError("evaluate_model: empty window set");
  if (opts.horizons_ms.empty()) throw ConfigError("evaluate_model: no horizons");
  EvalReport r;
  r.horizons_ms = opts.horizons_ms;
  for (std::size_t ms : opts.horizons_ms) r.horizon_frames.push_back(horizon_frames(ms, opts.fps));
  const std::size_t short_len = m.config().horizon;
  const std::size_t longest = std::max(short_len, *std::max_element(r.horizon_frames.begin(), r.horizon_frames.end()));
  for (const auto& w : windows) {
    if (w.future_length() < longest) {
      throw DataError("window of " + w.action() + " at frame " + std::to_string(w.start()) + " has " +
                      std::to_string(w.future_length()) + " future frames, evaluation needs " + std::to_string(longest));
    }
  }
  r.windows = windows.size();
  if (!norms) norms = &m.norm_stats();
  r.has_denormalized = std::all_of(windows.begin(), windows.end(),
                                   [&](const data::UnitWindow& w) { return norms->count(w.action()) > 0; });

  const std::size_t H = r.horizon_frames.size();
  detail::ErrorTable model_t(H), zero_t(H), cv_t(H), model_d(H), zero_d(H), cv_d(H);
  const std::size_t batch = std::max<std::size_t>(1, opts.batch_size);
  for (std::size_t start = 0; start < windows.size(); start += batch) {
    const std::size_t end = std::min(windows.size(), start + batch);
    std::vector<Tensor> inputs;
    for (std::size_t i = start; i < end; ++i) inputs.push_back(model::observed_tensor(windows[i]));
    const std::vector<Tensor> preds = model::predict_batch(m, inputs, longest);
    for (std::size_t i = start; i < end; ++i) {
      const data::UnitWindow& w = windows[i];
      const data::NormStats* stats = r.has_denormalized ? &norms->at(w.action()) : nullptr;
      const detail::Scorer scorer{r.horizon_frames, short_len, stats};
      scorer.score(w, preds[i - start], model_t, stats ? &model_d : nullptr);
      scorer.score(w, zero_velocity_rollout(w, longest), zero_t, stats ? &zero_d : nullptr);
      scorer.score(w, constant_velocity_rollout(w, longest), cv_t, stats ? &cv_d : nullptr);
    }
  }
  r.model = model_t.reduce();
  r.zero_velocity = zero_t.reduce();
  r.constant_velocity = cv_t.reduce();
  if (r.has_denormalized) {
    r.model_denorm = model_d.reduce();
    r.zero_velocity_denorm = zero_d.reduce();
    r.constant_velocity_denorm = cv_d.reduce();
  }
  return r;
}

}  // namespace pms::train
