#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pms/increments.hpp"
#include "pms/keyvalue.hpp"
#include "pms/numerics/autodiff.hpp"

namespace pms::model {

/// Hyperparameters fixed for the lifetime of a model.
struct ModelConfig {
  std::size_t joints = 8;
  std::size_t observed = 50;  // K
  std::size_t horizon = 10;   // L
  std::size_t hidden = 256;
  std::size_t lstm_layers = 3;
  inc::ScaleConfig scales;
  /// Per-interval fusion weights; intervals without an entry use the defaults.
  std::map<std::size_t, inc::FusionWeights> fusion;
  double gamma_rho = 0.8;
  /// Explicit per-frame attenuation; overrides gamma_rho when non-empty.
  std::vector<double> gamma_explicit;
  /// Per-interval combination weights in `scales` order; empty means uniform.
  std::vector<double> combine_weights;
  std::size_t adjust_rounds = 1;
  double increment_sign = -1.0;
  bool fc_bias = true;
  bool bn_relu = true;
  ad::Activation activation = ad::Activation::relu;
  double dropout = 0.4;
  bool accel_correction = true;
  /// Feed the newest raw velocity difference instead of the fused feature.
  bool raw_velocity = false;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  std::uint64_t seed = 1;

  std::size_t pose_size() const { return 3 * joints; }

  const inc::FusionWeights& fusion_for(std::size_t delta) const {
    static const inc::FusionWeights defaults;
    auto it = fusion.find(delta);
    return it == fusion.end() ? defaults : it->second;
  }

  /// Inner autoregressive steps a branch needs to cover the horizon.
  std::size_t steps_for(std::size_t delta) const { return (horizon + delta - 1) / delta; }

  /// Per-frame attenuation, long enough for every branch's last step.
  std::vector<double> gamma() const {
    std::size_t needed = horizon;
    for (std::size_t d : scales.deltas) needed = std::max(needed, steps_for(d) * d);
    if (!gamma_explicit.empty()) return gamma_explicit;
    std::vector<double> g(needed);
    for (std::size_t n = 0; n < needed; ++n) g[n] = std::pow(gamma_rho, static_cast<double>(n));
    return g;
  }

  std::vector<double> branch_weights() const {
    if (!combine_weights.empty()) return combine_weights;
    return std::vector<double>(scales.deltas.size(), 1.0 / static_cast<double>(scales.deltas.size()));
  }

  void validate() const {
    if (joints == 0) throw ConfigError("joints must be positive");
    if (observed == 0 || horizon == 0) throw ConfigError("observed and horizon lengths must be positive");
    if (hidden == 0 || lstm_layers == 0) throw ConfigError("hidden size and LSTM depth must be positive");
    scales.validate(observed);
    for (std::size_t d : scales.deltas) fusion_for(d).validate();
    for (const auto& [d, w] : fusion) {
      if (std::find(scales.deltas.begin(), scales.deltas.end(), d) == scales.deltas.end()) {
        throw ConfigError("fusion weights given for interval " + std::to_string(d) + " which is not a scale");
      }
    }
    const auto g = gamma();
    for (std::size_t d : scales.deltas) {
      if (g.size() < steps_for(d) * d) {
        throw ConfigError("gamma.explicit needs at least " + std::to_string(steps_for(d) * d) + " entries");
      }
    }
    for (double x : g) {
      if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("gamma entries must be finite and non-negative");
    }
    const auto w = branch_weights();
    if (w.size() != scales.deltas.size()) throw ConfigError("combine_weights needs one entry per scale");
    double s = 0.0;
    for (double x : w) {
      if (!(x >= 0.0)) throw ConfigError("combine_weights must be non-negative");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("combine_weights must sum to 1");
    if (adjust_rounds == 0) throw ConfigError("adjust_rounds must be >= 1");
    if (increment_sign != 1.0 && increment_sign != -1.0) throw ConfigError("increment_sign must be +1 or -1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0) || !(bn_eps > 0.0)) throw ConfigError("invalid batch-norm settings");
  }

  /// Removes one interval and renormalizes the remaining combination weights.
  void drop_scale(std::size_t delta) {
    auto w = branch_weights();
    std::vector<std::size_t> deltas;
    std::vector<double> kept;
    for (std::size_t i = 0; i < scales.deltas.size(); ++i) {
      if (scales.deltas[i] == delta) continue;
      deltas.push_back(scales.deltas[i]);
      kept.push_back(w[i]);
    }
    if (deltas.size() == scales.deltas.size()) throw ConfigError("scale " + std::to_string(delta) + " not present");
    if (deltas.empty()) throw ConfigError("cannot remove the last scale");
    double s = 0.0;
    for (double x : kept) s += x;
    for (double& x : kept) x = s > 0.0 ? x / s : 1.0 / static_cast<double>(kept.size());
    scales.deltas = deltas;
    combine_weights = kept;
    fusion.erase(delta);
  }
};

inline std::string activation_name(ad::Activation a) {
  switch (a) {
    case ad::Activation::relu: return "relu";
    case ad::Activation::tanh: return "tanh";
    case ad::Activation::sigmoid: return "sigmoid";
    case ad::Activation::identity: return "identity";
  }
  return "relu";
}

inline ad::Activation parse_activation(const std::string& s) {
  if (s == "relu") return ad::Activation::relu;
  if (s == "tanh") return ad::Activation::tanh;
  throw ConfigError("activation: expected relu or tanh, got '" + s + "'");
}

/// Keys recognized by ModelConfig::apply / to_kv, besides the per-interval
/// `alpha.<δ>` and `beta.<δ>` families.
inline const std::vector<std::string>& model_keys() {
  static const std::vector<std::string> keys{
      "joints",         "observed",   "horizon", "hidden",           "lstm_layers",  "scales",
      "anchor",         "gamma.rho",  "gamma.explicit", "combine_weights", "adjust_rounds", "increment_sign",
      "fc_bias",        "bn_relu",    "activation", "dropout",         "accel_correction", "velocity_feature",
      "bn.momentum",    "bn.eps",     "seed"};
  return keys;
}

inline bool is_model_key(const std::string& key) {
  if (key.rfind("alpha.", 0) == 0 || key.rfind("beta.", 0) == 0) return true;
  const auto& keys = model_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

/// Applies recognized keys of `values` onto `cfg`; other keys are ignored.
inline void apply(ModelConfig& cfg, const kv::KeyValues& values) {
  auto get = [&](const char* key) -> const std::string* {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  };
  if (auto v = get("joints")) cfg.joints = kv::to_size("joints", *v);
  if (auto v = get("observed")) cfg.observed = kv::to_size("observed", *v);
  if (auto v = get("horizon")) cfg.horizon = kv::to_size("horizon", *v);
  if (auto v = get("hidden")) cfg.hidden = kv::to_size("hidden", *v);
  if (auto v = get("lstm_layers")) cfg.lstm_layers = kv::to_size("lstm_layers", *v);
  if (auto v = get("scales")) {
    auto deltas = kv::to_sizes("scales", *v);
    if (deltas != cfg.scales.deltas) {
      cfg.scales.deltas = deltas;
      if (!get("combine_weights")) cfg.combine_weights.clear();
      std::erase_if(cfg.fusion, [&](const auto& entry) {
        return std::find(deltas.begin(), deltas.end(), entry.first) == deltas.end();
      });
    }
  }
  if (auto v = get("anchor")) {
    if (*v == "end") cfg.scales.anchor = inc::Anchor::end;
    else if (*v == "start") cfg.scales.anchor = inc::Anchor::start;
    else throw ConfigError("anchor: expected end or start, got '" + *v + "'");
  }
  for (const auto& [key, value] : values) {
    const bool is_alpha = key.rfind("alpha.", 0) == 0;
    const bool is_beta = key.rfind("beta.", 0) == 0;
    if (!is_alpha && !is_beta) continue;
    const std::size_t delta = kv::to_size(key, key.substr(is_alpha ? 6 : 5));
    inc::FusionWeights w = cfg.fusion_for(delta);
    (is_alpha ? w.alpha : w.beta) = kv::to_doubles(key, value);
    cfg.fusion[delta] = w;
  }
  if (auto v = get("gamma.rho")) cfg.gamma_rho = kv::to_double("gamma.rho", *v);
  if (auto v = get("gamma.explicit")) cfg.gamma_explicit = kv::to_doubles("gamma.explicit", *v);
  if (auto v = get("combine_weights")) cfg.combine_weights = kv::to_doubles("combine_weights", *v);
  if (auto v = get("adjust_rounds")) cfg.adjust_rounds = kv::to_size("adjust_rounds", *v);
  if (auto v = get("increment_sign")) cfg.increment_sign = kv::to_double("increment_sign", *v);
  if (auto v = get("fc_bias")) cfg.fc_bias = kv::to_bool("fc_bias", *v);
  if (auto v = get("bn_relu")) cfg.bn_relu = kv::to_bool("bn_relu", *v);
  if (auto v = get("activation")) cfg.activation = parse_activation(*v);
  if (auto v = get("dropout")) cfg.dropout = kv::to_double("dropout", *v);
  if (auto v = get("accel_correction")) cfg.accel_correction = kv::to_bool("accel_correction", *v);
  if (auto v = get("velocity_feature")) {
    if (*v == "fused") cfg.raw_velocity = false;
    else if (*v == "newest") cfg.raw_velocity = true;
    else throw ConfigError("velocity_feature: expected fused or newest, got '" + *v + "'");
  }
  if (auto v = get("bn.momentum")) cfg.bn_momentum = kv::to_double("bn.momentum", *v);
  if (auto v = get("bn.eps")) cfg.bn_eps = kv::to_double("bn.eps", *v);
  if (auto v = get("seed")) cfg.seed = kv::to_u64("seed", *v);
}

inline kv::KeyValues to_kv(const ModelConfig& cfg) {
  kv::KeyValues out;
  out["joints"] = std::to_string(cfg.joints);
  out["observed"] = std::to_string(cfg.observed);
  out["horizon"] = std::to_string(cfg.horizon);
  out["hidden"] = std::to_string(cfg.hidden);
  out["lstm_layers"] = std::to_string(cfg.lstm_layers);
  out["scales"] = kv::join(cfg.scales.deltas);
  out["anchor"] = cfg.scales.anchor == inc::Anchor::end ? "end" : "start";
  for (std::size_t d : cfg.scales.deltas) {
    out["alpha." + std::to_string(d)] = kv::join(cfg.fusion_for(d).alpha);
    out["beta." + std::to_string(d)] = kv::join(cfg.fusion_for(d).beta);
  }
  out["gamma.rho"] = kv::from_double(cfg.gamma_rho);
  out["gamma.explicit"] = kv::join(cfg.gamma_explicit);
  out["combine_weights"] = kv::join(cfg.branch_weights());
  out["adjust_rounds"] = std::to_string(cfg.adjust_rounds);
  out["increment_sign"] = kv::from_double(cfg.increment_sign);
  out["fc_bias"] = kv::from_bool(cfg.fc_bias);
  out["bn_relu"] = kv::from_bool(cfg.bn_relu);
  out["activation"] = activation_name(cfg.activation);
  out["dropout"] = kv::from_double(cfg.dropout);
  out["accel_correction"] = kv::from_bool(cfg.accel_correction);
  out["velocity_feature"] = cfg.raw_velocity ? "newest" : "fused";
  out["bn.momentum"] = kv::from_double(cfg.bn_momentum);
  out["bn.eps"] = kv::from_double(cfg.bn_eps);
  out["seed"] = std::to_string(cfg.seed);
  return out;
}

}  // namespace pms::model
