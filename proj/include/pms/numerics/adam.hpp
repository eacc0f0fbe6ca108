#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "pms/numerics/autodiff.hpp"

namespace pms {

struct AdamConfig {
  double learning_rate = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("adam: learning rate must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam: betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be positive");
  }
};

using Gradients = std::map<std::string, Tensor>;

/// Named learnable tensors plus their Adam moments.
///
/// Names are kept in sorted order so iteration, serialization and
/// hashing are deterministic.
class ParamGroup {
 public:
  void add(const std::string& name, Tensor value) {
    if (params_.count(name)) throw ConfigError("duplicate parameter " + name);
    first_.emplace(name, Tensor::zeros(value.dims()));
    second_.emplace(name, Tensor::zeros(value.dims()));
    value.set_requires_grad(true);
    params_.emplace(name, std::move(value));
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const Tensor& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }

  Tensor& get_mut(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }

  const std::map<std::string, Tensor>& params() const noexcept { return params_; }
  const Tensor& first_moment(const std::string& name) const { return first_.at(name); }
  const Tensor& second_moment(const std::string& name) const { return second_.at(name); }
  std::int64_t step() const noexcept { return step_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
  }

  /// Registers every parameter on the tape as a differentiable leaf.
  std::map<std::string, ad::Var> bind(ad::Tape& tape) const {
    std::map<std::string, ad::Var> vars;
    for (const auto& [name, t] : params_) vars.emplace(name, tape.parameter(t));
    return vars;
  }

  /// Collects gradients of every bound parameter after tape.backward().
  static Gradients collect(const ad::Tape& tape, const std::map<std::string, ad::Var>& vars) {
    Gradients g;
    for (const auto& [name, v] : vars) g.emplace(name, tape.grad(v));
    return g;
  }

  void reset_optimizer_state() {
    for (auto& [name, m] : first_) m = Tensor::zeros(m.dims());
    for (auto& [name, v] : second_) v = Tensor::zeros(v.dims());
    step_ = 0;
  }

  friend void adam_step(ParamGroup& group, const Gradients& grads, const AdamConfig& cfg);

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> first_;
  std::map<std::string, Tensor> second_;
  std::int64_t step_ = 0;
};

/// One bias-corrected Adam update over the whole group.
///
/// Validation happens before any write: a shape mismatch or a non-finite
/// gradient leaves parameters, moments and step count untouched.
/// Parameters without an entry in `grads` are treated as having zero gradient.
inline void adam_step(ParamGroup& group, const Gradients& grads, const AdamConfig& cfg) {
  cfg.validate();
  for (const auto& [name, g] : grads) {
    auto it = group.params_.find(name);
    if (it == group.params_.end()) throw ConfigError("adam: gradient for unknown parameter " + name);
    it->second.require_same_shape(g, "adam gradient");
    if (!all_finite(g.values())) throw NumericError("adam: poisoned update, non-finite gradient for " + name);
  }
  group.step_ += 1;
  const double t = static_cast<double>(group.step_);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : group.params_) {
    auto git = grads.find(name);
    Tensor& m = group.first_.at(name);
    Tensor& v = group.second_.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = git == grads.end() ? 0.0 : git->second[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace pms
