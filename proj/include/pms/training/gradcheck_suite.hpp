#pragma once

#include <string>
#include <vector>

#include "pms/dataio/synth.hpp"
#include "pms/dataio/dataset.hpp"
#include "pms/numerics/gradcheck.hpp"
#include "pms/training/trainer.hpp"

namespace pms::train {

struct SuiteCase {
  std::string name;
  GradCheckReport report;
};

/// The configuration the gradient-check suite runs on by default.
inline model::ModelConfig tiny_model_config() {
  model::ModelConfig c;
  c.joints = 2;
  c.hidden = 8;
  c.lstm_layers = 3;
  c.seed = 7;
  return c;
}

/// A few windows of seeded synthetic motion for `joints`-joint models.
inline std::vector<data::UnitWindow> tiny_windows(std::size_t joints, std::size_t count = 2, std::uint64_t seed = 5) {
  data::SynthSpec spec;
  spec.joints = joints;
  spec.frames = 50 + 10 + 30 + 10 * (count - 1);
  spec.seed = seed;
  const data::Dataset d = data::normalize_dataset({data::synth_generate(spec)});
  auto w = data::dataset_windows(d, {});
  w.erase(w.begin() + static_cast<std::ptrdiff_t>(count), w.end());
  return w;
}

namespace detail {

inline ParamGroup random_group(RngState& rng, const std::vector<std::pair<std::string, Shape>>& specs) {
  ParamGroup g;
  for (const auto& [name, dims] : specs) {
    std::vector<double> v(shape_size(dims));
    for (double& x : v) x = rng.uniform(-0.8, 0.8);
    g.add(name, Tensor(dims, std::move(v)));
  }
  return g;
}

}  // namespace detail

/// Layer-level checks on random inputs plus the end-to-end total loss of
/// `model` on `windows`, including rollout terms.
inline std::vector<SuiteCase> run_gradcheck_suite(const model::PmsModel& model,
                                                  const std::vector<data::UnitWindow>& windows,
                                                  const GradCheckOptions& opts = {},
                                                  std::size_t end_to_end_entries = 10) {
  std::vector<SuiteCase> out;
  RngState rng(opts.sample_seed + 17, Stream::test);
  const std::size_t H = 4;

  {
    ParamGroup g = detail::random_group(rng, {{"x", {3, 5}}, {"w", {5, 4}}, {"b", {4}}});
    out.push_back({"linear", gradient_check(
                                 [](ad::Tape&, const std::map<std::string, ad::Var>& p) {
                                   ad::Var y = nn::forward_linear(p.at("x"), p.at("w"), p.at("b"));
                                   return ad::sum(ad::mul(y, y));
                                 },
                                 g, opts)});
  }
  {
    ParamGroup g = detail::random_group(
        rng, {{"x0", {2, 3}}, {"x1", {2, 3}}, {"x2", {2, 3}}, {"w0", {3 + H, 4 * H}}, {"b0", {4 * H}},
              {"w1", {2 * H, 4 * H}}, {"b1", {4 * H}}});
    out.push_back({"lstm", gradient_check(
                               [](ad::Tape&, const std::map<std::string, ad::Var>& p) {
                                 std::vector<nn::LstmLayerVars> layers{{p.at("w0"), p.at("b0")}, {p.at("w1"), p.at("b1")}};
                                 auto h = nn::lstm_forward({p.at("x0"), p.at("x1"), p.at("x2")}, layers);
                                 return ad::sum(ad::mul(h[2], h[2])) + ad::sum(h[0]);
                               },
                               g, opts)});
  }
  {
    ParamGroup g = detail::random_group(rng, {{"x", {6, 4}}, {"s", {4}}, {"h", {4}}});
    out.push_back({"bn_dropout_tanh",
                   gradient_check(
                       [](ad::Tape&, const std::map<std::string, ad::Var>& p) {
                         nn::BatchNormState st(4);
                         RngState drop(3, Stream::dropout);
                         nn::BnDropoutOptions o{true, 0.4, ad::Activation::tanh};
                         ad::Var y = nn::bn_dropout_act(p.at("x"), p.at("s"), p.at("h"), st, nn::Mode::train, o, &drop);
                         return ad::sum(ad::mul(y, y));
                       },
                       g, opts)});
  }
  {
    ParamGroup g = detail::random_group(rng, {{"p0", {2, 6}}, {"p1", {2, 6}}, {"p2", {2, 6}}});
    std::vector<double> tv(12);
    for (double& x : tv) x = rng.uniform(-1.0, 1.0);
    const Tensor truth({2, 6}, tv);
    out.push_back({"losses", gradient_check(
                                 [&truth](ad::Tape& t, const std::map<std::string, ad::Var>& p) {
                                   std::vector<ad::Var> pred{p.at("p0"), p.at("p1"), p.at("p2")};
                                   std::vector<ad::Var> q(3, t.constant(truth));
                                   ad::Var lp = loss::batched::loss_past(pred, q, {1, 2});
                                   ad::Var lc = loss::batched::loss_current(pred, q);
                                   auto [lf, skipped] = loss::batched::loss_future(pred, q, {3, 2}, {2, 3}, t);
                                   return lp + lc + lf;
                                 },
                                 g, opts)});
  }
  {
    std::vector<const data::UnitWindow*> batch;
    for (const auto& w : windows) batch.push_back(&w);
    const model::ModelConfig& cfg = model.config();
    const loss::LossConfig loss_cfg;
    GradCheckOptions o = opts;
    o.max_entries_per_param = end_to_end_entries;
    out.push_back({"end_to_end", gradient_check(
                                     [&](ad::Tape& t, const std::map<std::string, ad::Var>& vars) {
                                       auto bn = model.bn_states();
                                       RngState drop(11, Stream::dropout);
                                       model::ForwardContext ctx{t, vars, cfg, bn, nn::Mode::train, &drop, -1.0};
                                       return batch_loss(ctx, batch, loss_cfg.future_deltas, loss_cfg).total;
                                     },
                                     model.params(), o)});
  }
  return out;
}

}  // namespace pms::train
