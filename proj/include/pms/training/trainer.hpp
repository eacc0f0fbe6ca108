#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "pms/dataio/windows.hpp"
#include "pms/losses.hpp"
#include "pms/model/forward.hpp"
#include "pms/model/predict.hpp"
#include "pms/numerics/adam.hpp"

namespace pms::train {

enum class LossMode { standard, plus_5x_accumulated, plus_longterm };

inline std::string mode_name(LossMode m) {
  switch (m) {
    case LossMode::standard: return "standard";
    case LossMode::plus_5x_accumulated: return "plus_5x_accumulated";
    case LossMode::plus_longterm: return "plus_longterm";
  }
  return "standard";
}

inline LossMode parse_mode(const std::string& s) {
  if (s == "standard") return LossMode::standard;
  if (s == "plus_5x_accumulated") return LossMode::plus_5x_accumulated;
  if (s == "plus_longterm") return LossMode::plus_longterm;
  throw ConfigError("unknown loss mode '" + s + "'");
}

struct Stage {
  std::size_t epochs = 10;
  double learning_rate = 5e-3;
  LossMode mode = LossMode::standard;
  std::uint64_t shuffle_seed = 0;
};

struct StagePlan {
  std::vector<Stage> stages;

  /// Ten epochs each: standard and accumulated-loss stages at 5e-3, then a
  /// standard and a long-term stage at 1e-3.
  static StagePlan default_plan(std::uint64_t seed = 0) {
    return StagePlan{{{10, 5e-3, LossMode::standard, seed},
                      {10, 5e-3, LossMode::plus_5x_accumulated, seed + 1},
                      {10, 1e-3, LossMode::standard, seed + 2},
                      {10, 1e-3, LossMode::plus_longterm, seed + 3}}};
  }

  void validate() const {
    if (stages.empty()) throw ConfigError("plan: at least one stage required");
    for (const Stage& s : stages) {
      if (s.epochs == 0) throw ConfigError("plan: every stage needs at least one epoch");
      if (!(s.learning_rate >= 0.0)) throw ConfigError("plan: learning rates must be non-negative");
    }
  }
};

/// `epochs:lr:mode` items separated by commas.
inline std::string format_plan(const StagePlan& plan) {
  std::string out;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const Stage& s = plan.stages[i];
    if (i) out += ',';
    out += std::to_string(s.epochs) + ':' + kv::from_double(s.learning_rate) + ':' + mode_name(s.mode);
  }
  return out;
}

inline StagePlan parse_plan(const std::string& text, std::uint64_t seed) {
  StagePlan plan;
  for (const std::string& item : kv::split_list(text)) {
    const auto a = item.find(':');
    const auto b = item.find(':', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos) throw ConfigError("plan: expected epochs:lr:mode, got '" + item + "'");
    Stage s;
    s.epochs = kv::to_size("plan", item.substr(0, a));
    s.learning_rate = kv::to_double("plan", item.substr(a + 1, b - a - 1));
    s.mode = parse_mode(item.substr(b + 1));
    s.shuffle_seed = seed + plan.stages.size();
    plan.stages.push_back(s);
  }
  plan.validate();
  return plan;
}

struct TrainConfig {
  loss::LossConfig loss;
  /// Rollout terms supervised in every stage, not only long-term stages.
  std::vector<std::size_t> extra_future_deltas;
  /// Batch counts after which accumulated-loss stages take an extra update.
  std::vector<std::size_t> accumulate_periods{5};
  /// Multiplies every stage learning rate.
  double lr_scale = 1.0;
  std::size_t batch_size = 32;
  double divergence_factor = 10.0;
  AdamConfig adam;
  std::uint64_t seed = 1;
};

struct EpochLog {
  std::size_t stage = 0;
  std::size_t epoch = 0;
  double l_p = 0.0;
  double l_c = 0.0;
  double l_f = 0.0;
  double l_a = 0.0;
};

inline std::string format_log_line(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "stage=%zu epoch=%zu l_p=%.9g l_c=%.9g l_f=%.9g l_a=%.9g", e.stage, e.epoch, e.l_p,
                e.l_c, e.l_f, e.l_a);
  return buf;
}

struct BatchResult {
  loss::LossBreakdown loss;
  Gradients grads;
};

/// Rollout supervision deltas active for a stage.
inline std::vector<std::size_t> future_deltas_for(const TrainConfig& cfg, LossMode mode) {
  std::set<std::size_t> d(cfg.extra_future_deltas.begin(), cfg.extra_future_deltas.end());
  if (mode == LossMode::plus_longterm) d.insert(cfg.loss.future_deltas.begin(), cfg.loss.future_deltas.end());
  return {d.begin(), d.end()};
}

struct BatchLoss {
  ad::Var l_past;
  ad::Var l_current;
  ad::Var l_future;
  ad::Var total;
  std::size_t skipped = 0;
};

/// Full-time loss of one batch of windows, recorded on the context's tape.
inline BatchLoss batch_loss(model::ForwardContext& ctx, const std::vector<const data::UnitWindow*>& batch,
                            const std::vector<std::size_t>& future_deltas, const loss::LossConfig& loss_cfg) {
  const model::ModelConfig& cfg = ctx.cfg;
  ad::Tape& tape = ctx.tape;
  const std::size_t width = cfg.pose_size();
  const std::size_t B = batch.size();
  if (B == 0) throw DataError("batch_loss: empty batch");
  for (const auto* w : batch) {
    if (w->observed_length() < cfg.observed || w->target_length() != cfg.horizon || w->pose_size() != width) {
      throw DataError("window from " + w->action() + " does not match the model's K/L/joints");
    }
  }

  const auto observed = model::batch_frames(tape, B, cfg.observed, width, [&](std::size_t b, std::size_t i) {
    const auto* w = batch[b];
    return w->observed(w->observed_length() - cfg.observed + i);
  });
  const auto truth = model::batch_frames(tape, B, cfg.horizon, width,
                                         [&](std::size_t b, std::size_t i) { return batch[b]->target(i); });

  model::ShortOutput pred = model::forward_short(ctx, observed);
  BatchLoss out;
  out.l_current = loss::batched::loss_current(pred.frames, truth);
  out.l_past = loss::batched::loss_past(pred.frames, truth, loss_cfg.past_deltas);
  out.l_future = tape.constant(Tensor::scalar(0.0));

  if (!future_deltas.empty()) {
    std::vector<std::size_t> available(B);
    std::size_t longest = 0;
    for (std::size_t b = 0; b < B; ++b) {
      available[b] = batch[b]->extended_length();
      longest = std::max(longest, available[b]);
    }
    const std::size_t wanted = std::min(longest, *std::max_element(future_deltas.begin(), future_deltas.end()));
    if (wanted > 0) {
      std::vector<ad::Var> next_window = observed;
      next_window.insert(next_window.end(), pred.frames.begin(), pred.frames.end());
      const std::vector<ad::Var> rollout = model::forward_long(ctx, next_window, wanted);
      const auto ext = model::batch_frames(tape, B, wanted, width, [&](std::size_t b, std::size_t i) {
        const auto* w = batch[b];
        // Rows shorter than i are masked out of every term that reaches i.
        if (w->extended_length() == 0) return w->target(w->target_length() - 1);
        return w->extended_future(std::min(i, w->extended_length() - 1));
      });
      auto [value, skip] = loss::batched::loss_future(rollout, ext, available, future_deltas, tape);
      out.l_future = value;
      out.skipped = skip;
    } else {
      out.skipped = future_deltas.size();
    }
  }
  out.total = ad::lincomb({out.l_past, out.l_current, out.l_future}, {1.0, 1.0, 1.0});
  return out;
}

/// Forward, loss and backward for one batch.
///
/// `dropout` < 0 keeps the model's rate.
inline BatchResult compute_batch(model::PmsModel& m, const std::vector<const data::UnitWindow*>& batch,
                                 const std::vector<std::size_t>& future_deltas, const loss::LossConfig& loss_cfg,
                                 nn::Mode mode, RngState* dropout_rng, double dropout = -1.0,
                                 bool want_grads = true) {
  ad::Tape tape;
  const auto vars = m.params().bind(tape);
  model::ForwardContext ctx{tape, vars, m.config(), m.bn_states(), mode, dropout_rng, dropout};
  const BatchLoss l = batch_loss(ctx, batch, future_deltas, loss_cfg);
  BatchResult r;
  r.loss = loss::loss_total(l.l_past.value().item(), l.l_current.value().item(), l.l_future.value().item(), l.skipped);
  if (want_grads) {
    tape.backward(l.total);
    r.grads = ParamGroup::collect(tape, vars);
  }
  return r;
}

/// Hook invoked after every optimizer step; used by determinism tests.
using StepObserver = std::function<void(const model::PmsModel&)>;

/// Runs one stage; returns the per-epoch loss trace.
inline std::vector<EpochLog> run_stage(model::PmsModel& m, const std::vector<data::UnitWindow>& windows,
                                       const Stage& stage, std::size_t stage_index, const TrainConfig& cfg,
                                       const StepObserver& observer = {}) {
  if (windows.empty()) throw DataError("run_stage: no training windows");
  if (cfg.batch_size == 0) throw ConfigError("train.batch must be positive");
  AdamConfig adam = cfg.adam;
  adam.learning_rate = stage.learning_rate * cfg.lr_scale;
  const auto future = future_deltas_for(cfg, stage.mode);
  const bool accumulate = stage.mode == LossMode::plus_5x_accumulated && !cfg.accumulate_periods.empty();

  std::vector<std::size_t> order(windows.size());
  std::vector<EpochLog> trace;
  double first_epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < stage.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngState shuffle = RngState(stage.shuffle_seed, Stream::shuffle).fork(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    RngState dropout = RngState(cfg.seed, Stream::dropout).fork(stage_index * 100003 + epoch);

    std::vector<Gradients> accumulators(cfg.accumulate_periods.size());
    std::vector<std::size_t> counts(cfg.accumulate_periods.size(), 0);
    EpochLog log{stage_index, epoch + 1};
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const data::UnitWindow*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&windows[order[i]]);
      // Batch norm needs two rows; a lone trailing window joins the previous batch's tail.
      if (batch.size() == 1 && m.config().bn_relu && start > 0) batch.push_back(&windows[order[start - 1]]);

      BatchResult r = compute_batch(m, batch, future, cfg.loss, nn::Mode::train, &dropout);
      if (!std::isfinite(r.loss.l_total)) throw DivergenceError("non-finite training loss in stage " + std::to_string(stage_index));
      adam_step(m.params(), r.grads, adam);
      if (observer) observer(m);

      const double n = static_cast<double>(batch.size());
      log.l_p += r.loss.l_past * n;
      log.l_c += r.loss.l_current * n;
      log.l_f += r.loss.l_future * n;
      log.l_a += r.loss.l_total * n;
      seen += batch.size();

      if (accumulate) {
        for (std::size_t k = 0; k < cfg.accumulate_periods.size(); ++k) {
          Gradients& acc = accumulators[k];
          for (auto& [name, g] : r.grads) {
            auto it = acc.find(name);
            if (it == acc.end()) acc.emplace(name, g);
            else it->second += g;
          }
          if (++counts[k] == cfg.accumulate_periods[k]) {
            adam_step(m.params(), acc, adam);
            if (observer) observer(m);
            acc.clear();
            counts[k] = 0;
          }
        }
      }
    }
    const double denom = static_cast<double>(seen);
    log.l_p /= denom;
    log.l_c /= denom;
    log.l_f /= denom;
    log.l_a /= denom;
    if (epoch == 0) first_epoch_loss = log.l_a;
    trace.push_back(log);
    if (epoch > 0 && log.l_a > cfg.divergence_factor * first_epoch_loss) {
      throw DivergenceError("stage " + std::to_string(stage_index) + " diverged: epoch loss " +
                            std::to_string(log.l_a) + " exceeds " + kv::from_double(cfg.divergence_factor) +
                            "x the first epoch's " + std::to_string(first_epoch_loss));
    }
  }
  return trace;
}

struct TrainResult {
  std::vector<EpochLog> log;
};

/// Called after each stage with the stage index (1-based) and the model.
using CheckpointHook = std::function<void(std::size_t stage, const model::PmsModel&)>;

inline TrainResult train_multistage(model::PmsModel& m, const std::vector<data::UnitWindow>& windows,
                                    const StagePlan& plan, const TrainConfig& cfg, const CheckpointHook& checkpoint = {},
                                    const std::function<void(const EpochLog&)>& on_epoch = {}) {
  plan.validate();
  cfg.loss.validate(m.config().horizon);
  TrainResult result;
  for (std::size_t s = 0; s < plan.stages.size(); ++s) {
    auto trace = run_stage(m, windows, plan.stages[s], s + 1, cfg);
    for (const auto& e : trace) {
      if (on_epoch) on_epoch(e);
      result.log.push_back(e);
    }
    if (checkpoint) checkpoint(s + 1, m);
  }
  return result;
}

}  // namespace pms::train
