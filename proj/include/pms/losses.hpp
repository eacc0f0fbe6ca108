#pragma once

// Full-time L1 loss (past sub-windows + current horizon + rollout future)
// and the MPJPE metric.
//
// Pose sequences are Tensors whose first axis is time; the remaining axes
// are flattened (J·3 values per frame). The ad:: overloads compute the
// same quantities on batched autodiff frames, each of shape (batch, J·3).

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pms/numerics/autodiff.hpp"

namespace pms::loss {

struct LossConfig {
  std::vector<std::size_t> past_deltas{2, 5, 10};
  std::vector<std::size_t> future_deltas{20, 30};

  void validate(std::size_t horizon) const {
    for (std::size_t d : past_deltas) {
      if (d == 0 || d > horizon) {
        throw ConfigError("loss.past_deltas: " + std::to_string(d) + " outside [1, " + std::to_string(horizon) + "]");
      }
    }
    for (std::size_t d : future_deltas) {
      if (d == 0) throw ConfigError("loss.future_deltas must be >= 1");
    }
  }
};

struct LossBreakdown {
  double l_past = 0.0;
  double l_current = 0.0;
  double l_future = 0.0;
  double l_total = 0.0;
  std::size_t skipped_future_terms = 0;
};

namespace detail {

inline std::size_t frame_count(const Tensor& t) { return t.dim(0); }
inline std::size_t frame_width(const Tensor& t) { return t.size() / t.dim(0); }

/// Mean |a - b| over the first `frames` frames.
inline double prefix_mean_abs(const Tensor& a, const Tensor& b, std::size_t frames) {
  const std::size_t width = frame_width(a);
  const std::size_t n = frames * width;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(n);
}

}  // namespace detail

/// Mean absolute error over every element of the predicted horizon.
inline double loss_current(const Tensor& pred, const Tensor& truth) {
  pred.require_same_shape(truth, "loss_current");
  return detail::prefix_mean_abs(pred, truth, detail::frame_count(pred));
}

/// Σ over Δ of the mean absolute error of the first Δ predicted frames.
inline double loss_past(const Tensor& pred, const Tensor& truth, const std::vector<std::size_t>& deltas) {
  pred.require_same_shape(truth, "loss_past");
  double s = 0.0;
  for (std::size_t d : deltas) {
    if (d == 0 || d > detail::frame_count(pred)) {
      throw DimensionError("loss_past: window " + std::to_string(d) + " exceeds horizon " +
                           std::to_string(detail::frame_count(pred)));
    }
    s += detail::prefix_mean_abs(pred, truth, d);
  }
  return s;
}

/// Σ over Δ of the mean absolute error of the first Δ rollout frames.
/// A term is skipped (and counted) when either side has fewer than Δ frames.
inline std::pair<double, std::size_t> loss_future(const Tensor* rollout, const Tensor* extended_truth,
                                                  const std::vector<std::size_t>& deltas) {
  double s = 0.0;
  std::size_t skipped = 0;
  for (std::size_t d : deltas) {
    const bool available = rollout != nullptr && extended_truth != nullptr && detail::frame_count(*rollout) >= d &&
                           detail::frame_count(*extended_truth) >= d;
    if (!available) {
      ++skipped;
      continue;
    }
    if (detail::frame_width(*rollout) != detail::frame_width(*extended_truth)) {
      throw DimensionError("loss_future: pose widths differ");
    }
    s += detail::prefix_mean_abs(*rollout, *extended_truth, d);
  }
  return {s, skipped};
}

inline std::pair<double, std::size_t> loss_future(const Tensor& rollout, const Tensor& extended_truth,
                                                  const std::vector<std::size_t>& deltas) {
  return loss_future(&rollout, &extended_truth, deltas);
}

inline LossBreakdown loss_total(double l_past, double l_current, double l_future, std::size_t skipped = 0) {
  LossBreakdown b;
  b.l_past = l_past;
  b.l_current = l_current;
  b.l_future = l_future;
  b.l_total = l_past + l_current + l_future;
  b.skipped_future_terms = skipped;
  return b;
}

/// Mean Euclidean joint distance over all frames and joints. Inputs are
/// (F, J, 3) or any shape whose trailing extent is a multiple of 3.
inline double mpjpe(const Tensor& pred, const Tensor& truth) {
  pred.require_same_shape(truth, "mpjpe");
  if (pred.size() % 3 != 0) throw DimensionError("mpjpe: coordinates are not 3-vectors");
  const std::size_t points = pred.size() / 3;
  double s = 0.0;
  for (std::size_t p = 0; p < points; ++p) {
    const double dx = pred[3 * p] - truth[3 * p];
    const double dy = pred[3 * p + 1] - truth[3 * p + 1];
    const double dz = pred[3 * p + 2] - truth[3 * p + 2];
    s += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return s / static_cast<double>(points);
}

// ---------------------------------------------------------------------------
// Batched autodiff versions. Frames are (batch, J·3) nodes.
// ---------------------------------------------------------------------------

namespace batched {

/// Mean |pred - truth| over the first `frames` frames and the rows whose
/// weight is nonzero.
inline ad::Var prefix_l1(const std::vector<ad::Var>& pred, const std::vector<ad::Var>& truth, std::size_t frames,
                         const std::vector<double>* row_weights = nullptr) {
  if (frames == 0 || pred.size() < frames || truth.size() < frames) {
    throw DimensionError("prefix_l1: need " + std::to_string(frames) + " frames");
  }
  std::vector<ad::Var> p(pred.begin(), pred.begin() + static_cast<std::ptrdiff_t>(frames));
  std::vector<ad::Var> t(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(frames));
  ad::Var ps = ad::concat_rows(p);
  ad::Var ts = ad::concat_rows(t);
  if (row_weights == nullptr) return ad::mean_abs_diff(ps, ts);
  std::vector<double> w;
  w.reserve(frames * row_weights->size());
  for (std::size_t f = 0; f < frames; ++f) w.insert(w.end(), row_weights->begin(), row_weights->end());
  return ad::weighted_mean_abs_diff(ps, ts, w);
}

inline ad::Var loss_current(const std::vector<ad::Var>& pred, const std::vector<ad::Var>& truth) {
  if (pred.size() != truth.size()) throw DimensionError("loss_current: frame counts differ");
  return prefix_l1(pred, truth, pred.size());
}

inline ad::Var loss_past(const std::vector<ad::Var>& pred, const std::vector<ad::Var>& truth,
                         const std::vector<std::size_t>& deltas) {
  if (pred.size() != truth.size()) throw DimensionError("loss_past: frame counts differ");
  std::vector<ad::Var> terms;
  for (std::size_t d : deltas) {
    if (d == 0 || d > pred.size()) throw DimensionError("loss_past: window " + std::to_string(d) + " exceeds horizon");
    terms.push_back(prefix_l1(pred, truth, d));
  }
  if (terms.empty()) return pred.front().tape()->constant(Tensor::scalar(0.0));
  return ad::lincomb(terms, std::vector<double>(terms.size(), 1.0));
}

/// Rollout terms; `available[b]` is the number of extended truth frames of
/// batch row b. Rows with fewer than Δ frames are excluded from that term;
/// a term with no eligible row is skipped and counted.
inline std::pair<ad::Var, std::size_t> loss_future(const std::vector<ad::Var>& rollout,
                                                   const std::vector<ad::Var>& extended_truth,
                                                   const std::vector<std::size_t>& available,
                                                   const std::vector<std::size_t>& deltas, ad::Tape& tape) {
  std::vector<ad::Var> terms;
  std::size_t skipped = 0;
  for (std::size_t d : deltas) {
    std::vector<double> w(available.size(), 0.0);
    bool any = false;
    for (std::size_t b = 0; b < available.size(); ++b) {
      if (available[b] >= d) {
        w[b] = 1.0;
        any = true;
      }
    }
    if (!any || rollout.size() < d || extended_truth.size() < d) {
      ++skipped;
      continue;
    }
    terms.push_back(prefix_l1(rollout, extended_truth, d, &w));
  }
  if (terms.empty()) return {tape.constant(Tensor::scalar(0.0)), skipped};
  return {ad::lincomb(terms, std::vector<double>(terms.size(), 1.0)), skipped};
}

}  // namespace batched

}  // namespace pms::loss
