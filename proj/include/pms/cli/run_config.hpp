#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pms/dataio/synth.hpp"
#include "pms/keyvalue.hpp"
#include "pms/training/evaluate.hpp"
#include "pms/training/settings.hpp"

namespace pms::cli {

/// Resolved settings of one CLI run: model and training plus the data,
/// windowing and evaluation knobs that only the command line needs.
struct RunConfig {
  train::RunSettings run;

  std::size_t synth_sequences = 4;
  std::size_t synth_actions = 1;
  std::size_t synth_frames = 400;
  std::size_t synth_sinusoids = 3;
  double synth_freq_min = 0.1;
  double synth_freq_max = 1.0;
  double synth_amplitude = 1.0;
  double synth_noise = 0.0;
  double synth_fps = 25.0;
  std::optional<std::size_t> synth_trend_break;
  std::string synth_name = "synth";

  std::size_t window_stride = 10;
  std::size_t window_extended = 30;

  std::vector<std::size_t> eval_horizons{80, 160, 320, 400, 560, 1000};
  std::size_t eval_stride = 10;
  double eval_fps = 25.0;
};

inline const std::vector<std::string>& cli_keys() {
  static const std::vector<std::string> keys{
      "synth.sequences", "synth.actions",  "synth.frames",   "synth.sinusoids", "synth.freq_min",
      "synth.freq_max",  "synth.amplitude", "synth.noise",   "synth.fps",       "synth.trend_break",
      "synth.name",      "window.stride",  "window.extended", "eval.horizons",  "eval.stride",
      "eval.fps"};
  return keys;
}

inline bool is_known_key(const std::string& key) {
  const auto& c = cli_keys();
  return model::is_model_key(key) || train::is_train_key(key) || std::find(c.begin(), c.end(), key) != c.end();
}

inline kv::KeyValues to_kv(const RunConfig& c) {
  kv::KeyValues out = train::to_kv(c.run);
  out["synth.sequences"] = std::to_string(c.synth_sequences);
  out["synth.actions"] = std::to_string(c.synth_actions);
  out["synth.frames"] = std::to_string(c.synth_frames);
  out["synth.sinusoids"] = std::to_string(c.synth_sinusoids);
  out["synth.freq_min"] = kv::from_double(c.synth_freq_min);
  out["synth.freq_max"] = kv::from_double(c.synth_freq_max);
  out["synth.amplitude"] = kv::from_double(c.synth_amplitude);
  out["synth.noise"] = kv::from_double(c.synth_noise);
  out["synth.fps"] = kv::from_double(c.synth_fps);
  out["synth.trend_break"] = c.synth_trend_break ? std::to_string(*c.synth_trend_break) : "none";
  out["synth.name"] = c.synth_name;
  out["window.stride"] = std::to_string(c.window_stride);
  out["window.extended"] = std::to_string(c.window_extended);
  out["eval.horizons"] = kv::join(c.eval_horizons);
  out["eval.stride"] = std::to_string(c.eval_stride);
  out["eval.fps"] = kv::from_double(c.eval_fps);
  return out;
}

/// Applies `values` onto `c`; unknown keys are rejected.
inline void apply(RunConfig& c, const kv::KeyValues& values) {
  for (const auto& [key, value] : values) {
    if (!is_known_key(key)) throw ConfigError("unknown configuration key '" + key + "'");
  }
  train::apply(c.run, values);
  auto get = [&](const char* key) -> const std::string* {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  };
  if (auto v = get("synth.sequences")) c.synth_sequences = kv::to_size("synth.sequences", *v);
  if (auto v = get("synth.actions")) c.synth_actions = kv::to_size("synth.actions", *v);
  if (auto v = get("synth.frames")) c.synth_frames = kv::to_size("synth.frames", *v);
  if (auto v = get("synth.sinusoids")) c.synth_sinusoids = kv::to_size("synth.sinusoids", *v);
  if (auto v = get("synth.freq_min")) c.synth_freq_min = kv::to_double("synth.freq_min", *v);
  if (auto v = get("synth.freq_max")) c.synth_freq_max = kv::to_double("synth.freq_max", *v);
  if (auto v = get("synth.amplitude")) c.synth_amplitude = kv::to_double("synth.amplitude", *v);
  if (auto v = get("synth.noise")) c.synth_noise = kv::to_double("synth.noise", *v);
  if (auto v = get("synth.fps")) c.synth_fps = kv::to_double("synth.fps", *v);
  if (auto v = get("synth.trend_break")) {
    if (*v == "none") c.synth_trend_break.reset();
    else c.synth_trend_break = kv::to_size("synth.trend_break", *v);
  }
  if (auto v = get("synth.name")) c.synth_name = *v;
  if (auto v = get("window.stride")) c.window_stride = kv::to_size("window.stride", *v);
  if (auto v = get("window.extended")) c.window_extended = kv::to_size("window.extended", *v);
  if (auto v = get("eval.horizons")) c.eval_horizons = kv::to_sizes("eval.horizons", *v);
  if (auto v = get("eval.stride")) c.eval_stride = kv::to_size("eval.stride", *v);
  if (auto v = get("eval.fps")) c.eval_fps = kv::to_double("eval.fps", *v);
}

inline void validate(const RunConfig& c) {
  train::validate(c.run);
  if (c.synth_sequences == 0 || c.synth_actions == 0) throw ConfigError("synth.sequences and synth.actions must be positive");
  if (c.window_stride == 0 || c.eval_stride == 0) throw ConfigError("window.stride and eval.stride must be positive");
  if (c.eval_horizons.empty()) throw ConfigError("eval.horizons must list at least one horizon");
  for (std::size_t ms : c.eval_horizons) train::horizon_frames(ms, c.eval_fps);
}

/// Spec of synthetic sequence `index`; its seed is drawn from the run seed.
inline data::SynthSpec synth_spec(const RunConfig& c, std::size_t index) {
  data::SynthSpec s;
  s.joints = c.run.model.joints;
  s.frames = c.synth_frames;
  s.fps = c.synth_fps;
  s.sinusoids = c.synth_sinusoids;
  s.freq_min = c.synth_freq_min;
  s.freq_max = c.synth_freq_max;
  s.amplitude = c.synth_amplitude;
  s.noise_std = c.synth_noise;
  s.trend_break = c.synth_trend_break;
  s.name = c.synth_actions == 1 ? c.synth_name : c.synth_name + std::to_string(index % c.synth_actions);
  s.seed = RngState(c.run.model.seed, Stream::synth).fork(index).next_u64();
  return s;
}

inline kv::KeyValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  try {
    return kv::parse(in);
  } catch (const ParseError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// `key=value` overrides from the command line.
inline kv::KeyValues parse_overrides(const std::vector<std::string>& items) {
  kv::KeyValues out;
  for (const std::string& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + item + "'");
    out[kv::trim(std::string_view(item).substr(0, eq))] = kv::trim(std::string_view(item).substr(eq + 1));
  }
  return out;
}

/// Defaults, then the config file, then PMS_SEED, then command-line overrides.
inline RunConfig resolve(const std::string& config_path, const kv::KeyValues& overrides) {
  RunConfig c;
  if (!config_path.empty()) cli::apply(c, read_config_file(config_path));
  if (const char* seed = std::getenv("PMS_SEED"); seed && *seed) cli::apply(c, {{"seed", seed}});
  cli::apply(c, overrides);
  validate(c);
  return c;
}

}  // namespace pms::cli
