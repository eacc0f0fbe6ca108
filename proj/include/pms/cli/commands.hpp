#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "pms/cli/run_config.hpp"
#include "pms/dataio/dataset.hpp"
#include "pms/model/serialize.hpp"
#include "pms/training/ablation.hpp"
#include "pms/training/gradcheck_suite.hpp"

namespace pms::cli {

namespace fs = std::filesystem;

enum ExitCode : int { ok = 0, usage = 1, data_failure = 2, numeric_failure = 3 };

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

inline void write_resolved(const fs::path& dir, const RunConfig& c) {
  write_text(dir / "resolved.cfg", kv::format(to_kv(c)));
}

/// Loads and normalizes a data directory; the model's joint count follows the data.
inline data::Dataset load_dataset(const std::string& dir, RunConfig& c, bool joints_given) {
  const auto raw = data::load_directory(dir);
  if (raw.empty()) throw DataError("no .mtf files in " + dir);
  const std::size_t joints = raw.front().joints();
  for (const auto& s : raw) {
    if (s.joints() != joints) throw DataError("sequences in " + dir + " disagree on the joint count");
  }
  if (joints_given && c.run.model.joints != joints) {
    throw DataError("configured joints = " + std::to_string(c.run.model.joints) + " but " + dir + " has " +
                    std::to_string(joints));
  }
  c.run.model.joints = joints;
  return data::normalize_dataset(raw);
}

inline data::WindowSpec train_window_spec(const RunConfig& c) {
  return {c.run.model.observed, c.run.model.horizon, c.window_extended, c.window_stride, 0};
}

inline data::WindowSpec eval_window_spec(const RunConfig& c) {
  std::size_t longest = c.run.model.horizon;
  for (std::size_t ms : c.eval_horizons) longest = std::max(longest, train::horizon_frames(ms, c.eval_fps));
  const std::size_t extended = longest > c.run.model.horizon ? longest - c.run.model.horizon : 0;
  return {c.run.model.observed, c.run.model.horizon, extended, c.eval_stride, longest};
}

/// Trains one model on `d`, writing `<stem>.stage<k>.pms` checkpoints and `<stem>.pms`.
inline model::PmsModel train_one(const RunConfig& c, const data::Dataset& d, const fs::path& stem, std::ostream& log) {
  const auto windows = data::dataset_windows(d, train_window_spec(c));
  if (windows.empty()) throw DataError("no training windows; sequences need at least observed + horizon frames");
  model::PmsModel m(c.run.model);
  m.norm_stats() = d.stats;
  train::train_multistage(
      m, windows, c.run.plan, c.run.train,
      [&](std::size_t stage, const model::PmsModel& mm) {
        model::save_model(mm, stem.string() + ".stage" + std::to_string(stage) + ".pms");
      },
      [&](const train::EpochLog& e) { log << train::format_log_line(e) << '\n' << std::flush; });
  model::save_model(m, stem.string() + ".pms");
  return m;
}

inline std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

inline std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void table_rows(std::vector<std::vector<std::string>>& rows, const std::string& label,
                       const train::MethodErrors& e) {
  std::vector<std::string> r{label};
  for (double v : e.overall) r.push_back(fixed(v));
  r.push_back(fixed(e.average));
  rows.push_back(std::move(r));
}

/// Right-aligned text table of the report, one row per method and action.
inline std::string format_table(const train::EvalReport& r) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"method"};
  for (std::size_t ms : r.horizons_ms) header.push_back(std::to_string(ms) + "ms");
  header.push_back("avg");
  rows.push_back(header);
  table_rows(rows, "model", r.model);
  table_rows(rows, "zero_velocity", r.zero_velocity);
  table_rows(rows, "constant_velocity", r.constant_velocity);
  for (const auto& [action, v] : r.model.per_action) {
    std::vector<std::string> row{"model[" + action + "]"};
    double mean = 0.0;
    for (double x : v) {
      row.push_back(fixed(x));
      mean += x;
    }
    row.push_back(fixed(mean / static_cast<double>(v.size())));
    rows.push_back(std::move(row));
  }
  if (r.has_denormalized) {
    table_rows(rows, "model(denorm)", r.model_denorm);
    table_rows(rows, "zero_velocity(denorm)", r.zero_velocity_denorm);
    table_rows(rows, "constant_velocity(denorm)", r.constant_velocity_denorm);
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i == 0) out += row[i] + std::string(widths[0] - row[i].size(), ' ');
      else out += "  " + pad(row[i], widths[i]);
    }
    out += '\n';
  }
  out += "windows " + std::to_string(r.windows) + "  short_term model " + fixed(r.model.short_term) + " zero_velocity " +
         fixed(r.zero_velocity.short_term) + "  action_variance " + fixed(r.model.action_variance) + '\n';
  return out;
}

inline void method_kv(kv::KeyValues& out, const std::string& prefix, const train::EvalReport& r,
                      const train::MethodErrors& e) {
  for (std::size_t h = 0; h < r.horizons_ms.size(); ++h) {
    out[prefix + "horizon_ms." + std::to_string(r.horizons_ms[h])] = kv::from_double(e.overall[h]);
  }
  out[prefix + "average"] = kv::from_double(e.average);
  out[prefix + "short_term"] = kv::from_double(e.short_term);
  out[prefix + "action_variance"] = kv::from_double(e.action_variance);
  for (const auto& [action, v] : e.per_action) {
    for (std::size_t h = 0; h < r.horizons_ms.size(); ++h) {
      out[prefix + "action." + action + ".horizon_ms." + std::to_string(r.horizons_ms[h])] = kv::from_double(v[h]);
    }
  }
}

/// Machine-readable report; unprefixed keys are the model in normalized units.
inline kv::KeyValues report_kv(const train::EvalReport& r) {
  kv::KeyValues out;
  out["windows"] = std::to_string(r.windows);
  method_kv(out, "", r, r.model);
  method_kv(out, "zero_velocity.", r, r.zero_velocity);
  method_kv(out, "constant_velocity.", r, r.constant_velocity);
  if (r.has_denormalized) {
    method_kv(out, "denorm.", r, r.model_denorm);
    method_kv(out, "denorm.zero_velocity.", r, r.zero_velocity_denorm);
    method_kv(out, "denorm.constant_velocity.", r, r.constant_velocity_denorm);
  }
  return out;
}

inline void write_report(const fs::path& dir, const std::string& stem, const train::EvalReport& r, std::ostream& out) {
  const std::string table = format_table(r);
  out << table;
  write_text(dir / (stem + ".txt"), table);
  write_text(dir / (stem + ".kv"), kv::format(report_kv(r)));
}

}  // namespace detail

/// Options shared by every subcommand.
struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value configuration file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override one configuration key (key=value); repeatable");
    app->add_option("--seed", seed, "run seed (overrides config file and PMS_SEED)");
  }

  kv::KeyValues overrides(kv::KeyValues extra = {}) const {
    kv::KeyValues o = parse_overrides(sets);
    for (auto& [k, v] : extra) o[k] = v;
    if (seed) o["seed"] = std::to_string(*seed);
    return o;
  }

  /// Whether `key` was set explicitly, in the config file or on the command line.
  bool mentions(const std::string& key) const {
    if (overrides().count(key)) return true;
    return !config.empty() && read_config_file(config).count(key) > 0;
  }
};

inline int cmd_synth(const CommonFlags& f, const std::string& out_dir, const kv::KeyValues& extra, std::ostream& out) {
  const RunConfig c = resolve(f.config, f.overrides(extra));
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < c.synth_sequences; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%04zu.mtf", i);
    detail::write_text(fs::path(out_dir) / name, data::write_mtf(data::synth_generate(synth_spec(c, i))));
  }
  detail::write_resolved(out_dir, c);
  out << "wrote " << c.synth_sequences << " sequences to " << out_dir << '\n';
  return ok;
}

inline int cmd_train(const CommonFlags& f, const std::string& data_dir, const std::string& out_dir, std::ostream& out) {
  RunConfig c = resolve(f.config, f.overrides());
  const data::Dataset d = detail::load_dataset(data_dir, c, f.mentions("joints"));
  validate(c);
  fs::create_directories(out_dir);
  detail::write_resolved(out_dir, c);
  std::ofstream log(fs::path(out_dir) / "train.log");
  struct Tee : std::streambuf {
    std::streambuf* a;
    std::streambuf* b;
    int overflow(int ch) override {
      if (ch == EOF) return 0;
      a->sputc(static_cast<char>(ch));
      b->sputc(static_cast<char>(ch));
      return ch;
    }
    int sync() override { return a->pubsync() | b->pubsync(); }
  } tee;
  tee.a = log.rdbuf();
  tee.b = out.rdbuf();
  std::ostream both(&tee);

  if (c.run.mode == train::TrainMode::pooled) {
    detail::train_one(c, d, fs::path(out_dir) / "model", both);
  } else {
    for (const auto& [action, stats] : d.stats) {
      data::Dataset sub;
      sub.stats.emplace(action, stats);
      for (const auto& s : d.sequences)
        if (s->name() == action) sub.sequences.push_back(s);
      both << "action=" << action << '\n';
      detail::train_one(c, sub, fs::path(out_dir) / ("model_" + action), both);
    }
  }
  both.flush();
  return ok;
}

inline int cmd_predict(const CommonFlags& f, const std::string& model_path, const std::string& input,
                       const std::string& output, std::size_t horizon, std::ostream& out) {
  const RunConfig c = resolve(f.config, f.overrides());
  const model::PmsModel m = model::load_model(model_path);
  std::ifstream in(input);
  if (!in) throw DataError("cannot open " + input);
  const data::MotionSequence seq = data::parse_mtf(in);
  const auto& norms = m.norm_stats();
  const auto stats = norms.find(seq.name());
  if (stats == norms.end() && !norms.empty()) {
    throw DataError("model has no normalization statistics for action '" + seq.name() + "'");
  }
  const data::MotionSequence normalized = stats == norms.end() ? seq : data::normalize_with(seq, stats->second);
  Tensor window({normalized.frames(), normalized.joints(), 3}, normalized.coords());
  const std::size_t n = horizon == 0 ? m.config().horizon : horizon;
  const Tensor pred = model::predict_long(m, window, n).frames;
  std::vector<double> coords(pred.storage().begin(), pred.storage().end());
  if (stats != norms.end()) data::denormalize_in_place(coords, stats->second);
  const data::MotionSequence result(seq.name(), seq.fps(), seq.joints(), std::move(coords));
  detail::write_text(output, data::write_mtf(result));
  detail::write_resolved(fs::path(output).parent_path(), c);
  out << "wrote " << n << " predicted frames to " << output << '\n';
  return ok;
}

inline int cmd_eval(const CommonFlags& f, const std::string& model_path, const std::string& data_dir,
                    const std::string& out_dir, const kv::KeyValues& extra, std::ostream& out) {
  RunConfig c = resolve(f.config, f.overrides(extra));
  const model::PmsModel m = model::load_model(model_path);
  c.run.model = m.config();
  const data::Dataset raw = detail::load_dataset(data_dir, c, true);
  // Score in the model's normalization wherever it knows the action.
  data::Dataset d;
  std::vector<data::MotionSequence> source = data::load_directory(data_dir);
  for (const auto& s : source) {
    auto it = m.norm_stats().find(s.name());
    const data::NormStats st = it != m.norm_stats().end() ? it->second : raw.stats.at(s.name());
    d.stats.emplace(s.name(), st);
    d.sequences.push_back(std::make_shared<const data::MotionSequence>(data::normalize_with(s, st)));
  }
  const auto windows = data::dataset_windows(d, detail::eval_window_spec(c));
  if (windows.empty()) throw DataError("no evaluation windows with enough future frames in " + data_dir);
  train::EvalOptions opts;
  opts.horizons_ms = c.eval_horizons;
  opts.fps = c.eval_fps;
  const train::EvalReport r = train::evaluate_model(m, windows, opts, &d.stats);
  fs::create_directories(out_dir);
  detail::write_resolved(out_dir, c);
  detail::write_report(out_dir, "eval", r, out);
  return ok;
}

inline int cmd_gradcheck(const std::string& model_path, std::size_t entries, std::ostream& out) {
  const model::PmsModel m =
      model_path.empty() ? model::PmsModel(train::tiny_model_config()) : model::load_model(model_path);
  const auto windows = train::tiny_windows(m.config().joints);
  bool passed = true;
  for (const auto& c : train::run_gradcheck_suite(m, windows, {}, entries)) {
    out << c.name << " max_rel_error=" << kv::from_double(c.report.max_rel_error)
        << (c.report.passed() ? " ok" : " FAILED") << '\n';
    passed = passed && c.report.passed();
  }
  return passed ? ok : numeric_failure;
}

inline int cmd_ablate(const CommonFlags& f, const std::string& variant, const std::string& data_dir,
                      const std::string& eval_dir, const std::string& out_dir, std::ostream& out) {
  RunConfig c = resolve(f.config, f.overrides());
  c.run = train::apply_ablation(c.run, variant);
  const data::Dataset d = detail::load_dataset(data_dir, c, f.mentions("joints"));
  validate(c);
  fs::create_directories(out_dir);
  detail::write_resolved(out_dir, c);
  std::ofstream log(fs::path(out_dir) / "train.log");
  const model::PmsModel m = detail::train_one(c, d, fs::path(out_dir) / "model", log);

  data::Dataset e = d;
  if (!eval_dir.empty()) {
    e = data::Dataset{};
    for (const auto& s : data::load_directory(eval_dir)) {
      auto it = d.stats.find(s.name());
      if (it == d.stats.end()) throw DataError("evaluation action '" + s.name() + "' was not seen in training");
      e.stats.emplace(s.name(), it->second);
      e.sequences.push_back(std::make_shared<const data::MotionSequence>(data::normalize_with(s, it->second)));
    }
  }
  const auto windows = data::dataset_windows(e, detail::eval_window_spec(c));
  if (windows.empty()) throw DataError("no evaluation windows with enough future frames");
  train::EvalOptions opts;
  opts.horizons_ms = c.eval_horizons;
  opts.fps = c.eval_fps;
  out << "variant " << variant << '\n';
  detail::write_report(out_dir, "eval", train::evaluate_model(m, windows, opts, &e.stats), out);
  return ok;
}

/// Parses argv and runs one subcommand; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Multi-scale incremental motion prediction"};
  app.name("pms_cli");
  app.require_subcommand(1);

  CommonFlags common;
  std::string out_dir, data_dir, eval_dir, model_path, input, output, variant, horizons;
  std::size_t sequences = 0, joints = 0, frames = 0, horizon = 0, entries = 10;

  auto* synth = app.add_subcommand("synth", "generate seeded synthetic MTF sequences");
  common.attach(synth);
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--sequences", sequences, "number of sequences");
  synth->add_option("--joints", joints, "joints per frame");
  synth->add_option("--frames", frames, "frames per sequence");

  auto* train_cmd = app.add_subcommand("train", "train a model with the multi-stage plan");
  common.attach(train_cmd);
  train_cmd->add_option("--data", data_dir, "directory of .mtf training sequences")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* predict = app.add_subcommand("predict", "predict future frames for one sequence");
  common.attach(predict);
  predict->add_option("--model", model_path, "model file")->required();
  predict->add_option("--input", input, "input .mtf; its last observed frames are used")->required();
  predict->add_option("--out", output, "output .mtf of predicted frames")->required();
  predict->add_option("--horizon", horizon, "frames to predict (default: model horizon)");

  auto* eval = app.add_subcommand("eval", "MPJPE report with zero- and constant-velocity baselines");
  common.attach(eval);
  eval->add_option("--model", model_path, "model file")->required();
  eval->add_option("--data", data_dir, "directory of .mtf evaluation sequences")->required();
  eval->add_option("--out", out_dir, "output directory for eval.txt, eval.kv and resolved.cfg")->required();
  eval->add_option("--horizons", horizons, "comma-separated horizons in milliseconds");

  auto* gradcheck = app.add_subcommand("gradcheck", "gradient-check suite on the tiny model");
  gradcheck->add_option("--model", model_path, "check this model instead of the tiny default");
  gradcheck->add_option("--entries", entries, "end-to-end coordinates probed per tensor (0 = all)");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate one named ablation variant");
  common.attach(ablate);
  ablate->add_option("--variant", variant, "variant name")->required()->check(CLI::IsMember(train::ablation_variants()));
  ablate->add_option("--data", data_dir, "directory of .mtf training sequences")->required();
  ablate->add_option("--eval-data", eval_dir, "directory of .mtf evaluation sequences (default: training data)");
  ablate->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return usage;
  }

  try {
    if (*synth) {
      kv::KeyValues extra;
      if (synth->count("--sequences")) extra["synth.sequences"] = std::to_string(sequences);
      if (synth->count("--joints")) extra["joints"] = std::to_string(joints);
      if (synth->count("--frames")) extra["synth.frames"] = std::to_string(frames);
      return cmd_synth(common, out_dir, extra, out);
    }
    if (*train_cmd) return cmd_train(common, data_dir, out_dir, out);
    if (*predict) return cmd_predict(common, model_path, input, output, horizon, out);
    if (*eval) {
      kv::KeyValues extra;
      if (!horizons.empty()) extra["eval.horizons"] = horizons;
      return cmd_eval(common, model_path, data_dir, out_dir, extra, out);
    }
    if (*gradcheck) return cmd_gradcheck(model_path, entries, out);
    if (*ablate) return cmd_ablate(common, variant, data_dir, eval_dir, out_dir, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return usage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return numeric_failure;
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return data_failure;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return data_failure;
  }
  err << app.help();
  return usage;
}

}  // namespace pms::cli
