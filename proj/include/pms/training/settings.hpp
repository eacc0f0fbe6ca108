#pragma once

#include <string>
#include <vector>

#include "pms/keyvalue.hpp"
#include "pms/model/config.hpp"
#include "pms/training/trainer.hpp"

namespace pms::train {

enum class TrainMode { pooled, per_action };

/// Everything that determines one training run.
struct RunSettings {
  model::ModelConfig model;
  TrainConfig train;
  StagePlan plan = StagePlan::default_plan();
  TrainMode mode = TrainMode::pooled;

  /// Re-derives seeds that follow the model seed.
  void sync_seeds() {
    train.seed = model.seed;
    for (std::size_t i = 0; i < plan.stages.size(); ++i) plan.stages[i].shuffle_seed = model.seed + i;
  }
};

inline const std::vector<std::string>& train_keys() {
  static const std::vector<std::string> keys{
      "train.batch",         "train.lr_scale",       "train.accumulate_periods", "train.divergence_factor",
      "train.mode",          "train.plan",           "loss.past_deltas",         "loss.future_deltas",
      "loss.extra_future_deltas", "adam.beta1",      "adam.beta2",               "adam.eps"};
  return keys;
}

inline bool is_train_key(const std::string& key) {
  const auto& keys = train_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

inline void apply(RunSettings& s, const kv::KeyValues& values) {
  model::apply(s.model, values);
  auto get = [&](const char* key) -> const std::string* {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  };
  TrainConfig& t = s.train;
  if (auto v = get("train.batch")) t.batch_size = kv::to_size("train.batch", *v);
  if (auto v = get("train.lr_scale")) t.lr_scale = kv::to_double("train.lr_scale", *v);
  if (auto v = get("train.accumulate_periods")) t.accumulate_periods = kv::to_sizes("train.accumulate_periods", *v);
  if (auto v = get("train.divergence_factor")) t.divergence_factor = kv::to_double("train.divergence_factor", *v);
  if (auto v = get("train.mode")) {
    if (*v == "pooled") s.mode = TrainMode::pooled;
    else if (*v == "per_action") s.mode = TrainMode::per_action;
    else throw ConfigError("train.mode: expected pooled or per_action, got '" + *v + "'");
  }
  if (auto v = get("train.plan")) s.plan = parse_plan(*v, s.model.seed);
  if (auto v = get("loss.past_deltas")) t.loss.past_deltas = kv::to_sizes("loss.past_deltas", *v);
  if (auto v = get("loss.future_deltas")) t.loss.future_deltas = kv::to_sizes("loss.future_deltas", *v);
  if (auto v = get("loss.extra_future_deltas")) t.extra_future_deltas = kv::to_sizes("loss.extra_future_deltas", *v);
  if (auto v = get("adam.beta1")) t.adam.beta1 = kv::to_double("adam.beta1", *v);
  if (auto v = get("adam.beta2")) t.adam.beta2 = kv::to_double("adam.beta2", *v);
  if (auto v = get("adam.eps")) t.adam.epsilon = kv::to_double("adam.eps", *v);
  s.sync_seeds();
}

inline kv::KeyValues to_kv(const RunSettings& s) {
  kv::KeyValues out = model::to_kv(s.model);
  const TrainConfig& t = s.train;
  out["train.batch"] = std::to_string(t.batch_size);
  out["train.lr_scale"] = kv::from_double(t.lr_scale);
  out["train.accumulate_periods"] = kv::join(t.accumulate_periods);
  out["train.divergence_factor"] = kv::from_double(t.divergence_factor);
  out["train.mode"] = s.mode == TrainMode::pooled ? "pooled" : "per_action";
  out["train.plan"] = format_plan(s.plan);
  out["loss.past_deltas"] = kv::join(t.loss.past_deltas);
  out["loss.future_deltas"] = kv::join(t.loss.future_deltas);
  out["loss.extra_future_deltas"] = kv::join(t.extra_future_deltas);
  out["adam.beta1"] = kv::from_double(t.adam.beta1);
  out["adam.beta2"] = kv::from_double(t.adam.beta2);
  out["adam.eps"] = kv::from_double(t.adam.epsilon);
  return out;
}

inline void validate(const RunSettings& s) {
  s.model.validate();
  s.plan.validate();
  s.train.loss.validate(s.model.horizon);
  s.train.adam.validate();
  if (s.train.batch_size == 0) throw ConfigError("train.batch must be positive");
  for (std::size_t p : s.train.accumulate_periods) {
    if (p == 0) throw ConfigError("train.accumulate_periods entries must be positive");
  }
  for (std::size_t d : s.train.extra_future_deltas) {
    if (d == 0) throw ConfigError("loss.extra_future_deltas entries must be positive");
  }
  if (!(s.train.lr_scale >= 0.0)) throw ConfigError("train.lr_scale must be non-negative");
  if (!(s.train.divergence_factor > 1.0)) throw ConfigError("train.divergence_factor must exceed 1");
}

}  // namespace pms::train
