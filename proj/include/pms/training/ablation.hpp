#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pms/training/settings.hpp"

namespace pms::train {

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> names{
      "baseline1", "fc_bias", "bn_relu",  "loss_5x", "loss_2_5_10x", "loss_800ms",   "baseline2",  "wo_t2",     "wo_t5",
      "wo_t10",    "wo_a",    "wo_vf",    "w_0406",  "baseline2_v2", "loss_6x",      "loss_480ms", "loss_600ms"};
  return names;
}

namespace detail {

inline void to_baseline1(RunSettings& s) {
  s.model.fc_bias = false;
  s.model.bn_relu = false;
  s.train.accumulate_periods.clear();
}

inline void to_baseline2_v2(RunSettings& s) { s.train.lr_scale /= 5.0; }

}  // namespace detail

/// Settings of a named ablation row, derived from the default settings `base`.
///
/// The first group builds on baseline1 (no fc bias, no BN/ReLU block, no
/// accumulated-loss update). baseline2 is the default configuration; the
/// second group removes pieces from it. baseline2_v2 divides every learning
/// rate by five, and the third group builds on that.
inline RunSettings apply_ablation(RunSettings base, const std::string& variant) {
  RunSettings s = std::move(base);
  if (variant == "baseline1") {
    detail::to_baseline1(s);
  } else if (variant == "fc_bias") {
    detail::to_baseline1(s);
    s.model.fc_bias = true;
  } else if (variant == "bn_relu") {
    detail::to_baseline1(s);
    s.model.bn_relu = true;
  } else if (variant == "loss_5x") {
    detail::to_baseline1(s);
    s.train.accumulate_periods = {5};
  } else if (variant == "loss_2_5_10x") {
    detail::to_baseline1(s);
    s.train.accumulate_periods = {2, 5, 10};
  } else if (variant == "loss_800ms") {
    detail::to_baseline1(s);
    s.train.extra_future_deltas.push_back(20);
  } else if (variant == "baseline2") {
  } else if (variant == "wo_t2") {
    s.model.drop_scale(2);
  } else if (variant == "wo_t5") {
    s.model.drop_scale(5);
  } else if (variant == "wo_t10") {
    s.model.drop_scale(10);
  } else if (variant == "wo_a") {
    s.model.accel_correction = false;
  } else if (variant == "wo_vf") {
    s.model.raw_velocity = true;
    s.model.accel_correction = false;
  } else if (variant == "w_0406") {
    for (std::size_t d : s.model.scales.deltas) {
      inc::FusionWeights w = s.model.fusion_for(d);
      w.alpha = {0.0, 0.0, 0.4, 0.6};
      s.model.fusion[d] = w;
    }
  } else if (variant == "baseline2_v2") {
    detail::to_baseline2_v2(s);
  } else if (variant == "loss_6x") {
    detail::to_baseline2_v2(s);
    s.train.accumulate_periods = {6};
  } else if (variant == "loss_480ms") {
    detail::to_baseline2_v2(s);
    s.train.extra_future_deltas.push_back(12);
  } else if (variant == "loss_600ms") {
    detail::to_baseline2_v2(s);
    s.train.extra_future_deltas.push_back(15);
  } else {
    throw ConfigError("unknown ablation variant '" + variant + "'");
  }
  return s;
}

/// Keys whose values differ, mapped to (value in a, value in b).
inline std::map<std::string, std::pair<std::string, std::string>> config_diff(const RunSettings& a,
                                                                              const RunSettings& b) {
  const kv::KeyValues ka = to_kv(a);
  const kv::KeyValues kb = to_kv(b);
  std::map<std::string, std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : ka) {
    auto it = kb.find(k);
    const std::string other = it == kb.end() ? std::string{} : it->second;
    if (other != v) out.emplace(k, std::make_pair(v, other));
  }
  for (const auto& [k, v] : kb) {
    if (!ka.count(k)) out.emplace(k, std::make_pair(std::string{}, v));
  }
  return out;
}

}  // namespace pms::train
