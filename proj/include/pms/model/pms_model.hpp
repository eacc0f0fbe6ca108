#pragma once

#include <map>
#include <string>
#include <vector>

#include "pms/dataio/motion.hpp"
#include "pms/increments.hpp"
#include "pms/model/config.hpp"
#include "pms/numerics/adam.hpp"
#include "pms/numerics/layers.hpp"

namespace pms::model {

enum class Branch { velocity, acceleration };

inline std::string branch_prefix(std::size_t delta, Branch branch) {
  return "d" + std::to_string(delta) + (branch == Branch::velocity ? ".vel." : ".acc.");
}

/// Learnable state of a PMS network plus its fixed configuration.
///
/// Each interval δ owns a velocity branch and, when acceleration correction
/// is enabled, an acceleration branch. A branch is
///   fc_in (J·3 → H) · LSTM (H, lstm_layers deep) · fc_mid (H → H) with
///   batch norm, dropout and activation · fc_out_a (H → H) · fc_out_b (H → J·3)
/// applied per time step.
class PmsModel {
 public:
  explicit PmsModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    RngState rng(cfg_.seed, Stream::init);
    for (std::size_t d : cfg_.scales.deltas) {
      add_branch(branch_prefix(d, Branch::velocity), rng);
      if (cfg_.accel_correction) add_branch(branch_prefix(d, Branch::acceleration), rng);
    }
  }

  /// Rebuilds a model from stored parts (used by the model container).
  PmsModel(ModelConfig cfg, ParamGroup params, std::map<std::string, nn::BatchNormState> bn,
           std::map<std::string, data::NormStats> norms)
      : cfg_(std::move(cfg)), params_(std::move(params)), bn_(std::move(bn)), norms_(std::move(norms)) {
    cfg_.validate();
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  const ParamGroup& params() const noexcept { return params_; }
  ParamGroup& params() noexcept { return params_; }
  const std::map<std::string, nn::BatchNormState>& bn_states() const noexcept { return bn_; }
  std::map<std::string, nn::BatchNormState>& bn_states() noexcept { return bn_; }

  /// Per-action normalization statistics of the training data.
  const std::map<std::string, data::NormStats>& norm_stats() const noexcept { return norms_; }
  std::map<std::string, data::NormStats>& norm_stats() noexcept { return norms_; }

  bool has_branch(std::size_t delta, Branch branch) const {
    return params_.contains(branch_prefix(delta, branch) + "fc_in.w");
  }

  /// Every parameter set to zero; batch-norm scales included.
  void zero_parameters() {
    for (const auto& [name, t] : params_.params()) params_.get_mut(name) = Tensor::zeros(t.dims());
  }

 private:
  void add_branch(const std::string& prefix, RngState& rng) {
    const std::size_t in = cfg_.pose_size();
    const std::size_t h = cfg_.hidden;
    auto dense = [&](const std::string& name, std::size_t fan_in, std::size_t fan_out, bool bias) {
      params_.add(prefix + name + ".w", nn::init_uniform({fan_in, fan_out}, fan_in, rng));
      if (bias) params_.add(prefix + name + ".b", nn::init_uniform({fan_out}, fan_in, rng));
    };
    dense("fc_in", in, h, cfg_.fc_bias);
    for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
      const std::string name = prefix + "lstm" + std::to_string(l);
      params_.add(name + ".w", nn::init_uniform({2 * h, 4 * h}, h, rng));
      params_.add(name + ".b", nn::init_uniform({4 * h}, h, rng));
    }
    dense("fc_mid", h, h, cfg_.fc_bias);
    if (cfg_.bn_relu) {
      params_.add(prefix + "bn.scale", Tensor::filled({h}, 1.0));
      params_.add(prefix + "bn.shift", Tensor::zeros({h}));
      nn::BatchNormState state(h);
      state.momentum = cfg_.bn_momentum;
      state.eps = cfg_.bn_eps;
      bn_.emplace(prefix + "bn", std::move(state));
    }
    dense("fc_out_a", h, h, cfg_.fc_bias);
    dense("fc_out_b", h, in, cfg_.fc_bias);
  }

  ModelConfig cfg_;
  ParamGroup params_;
  std::map<std::string, nn::BatchNormState> bn_;
  std::map<std::string, data::NormStats> norms_;
};

}  // namespace pms::model
