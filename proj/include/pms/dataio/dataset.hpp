#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pms/dataio/motion.hpp"
#include "pms/dataio/windows.hpp"

namespace pms::data {

/// All `*.mtf` files of a directory in file-name order.
inline std::vector<MotionSequence> load_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".mtf") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .mtf files in " + dir.string());
  std::vector<MotionSequence> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw DataError("cannot open " + f.string());
    try {
      out.push_back(parse_mtf(in));
    } catch (const ParseError& e) {
      throw ParseError(e.line(), f.filename().string() + ": " + e.what());
    }
  }
  return out;
}

inline NormStats merge_stats(const NormStats& a, const NormStats& b) {
  NormStats s;
  for (std::size_t i = 0; i < 3; ++i) {
    s.min[i] = std::min(a.min[i], b.min[i]);
    s.max[i] = std::max(a.max[i], b.max[i]);
  }
  return s;
}

/// Maps a sequence into [-1, 1] with externally supplied extrema.
inline MotionSequence normalize_with(const MotionSequence& seq, const NormStats& stats) {
  if (stats.degenerate()) throw DataError("degenerate normalization range for action " + seq.name());
  std::vector<double> out(seq.coords().size());
  const auto& c = seq.coords();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::size_t a = i % 3;
    if (c[i] == stats.max[a]) out[i] = 1.0;
    else if (c[i] == stats.min[a]) out[i] = -1.0;
    else out[i] = std::clamp((c[i] - stats.midpoint(a)) / stats.half_range(a), -1.0, 1.0);
  }
  return MotionSequence(seq.name(), seq.fps(), seq.joints(), std::move(out));
}

/// Normalized sequences sharing per-action statistics; the action of a
/// sequence is its name.
struct Dataset {
  std::vector<std::shared_ptr<const MotionSequence>> sequences;
  std::map<std::string, NormStats> stats;
};

inline Dataset normalize_dataset(const std::vector<MotionSequence>& raw) {
  Dataset d;
  for (const auto& seq : raw) {
    const NormStats s = compute_norm_stats(seq);
    auto it = d.stats.find(seq.name());
    if (it == d.stats.end()) d.stats.emplace(seq.name(), s);
    else it->second = merge_stats(it->second, s);
  }
  for (const auto& seq : raw) {
    d.sequences.push_back(std::make_shared<const MotionSequence>(normalize_with(seq, d.stats.at(seq.name()))));
  }
  return d;
}

struct WindowSpec {
  std::size_t observed = 50;
  std::size_t target = 10;
  std::size_t extended = 30;
  std::size_t stride = 10;
  /// Drops windows with fewer future frames than this (0 keeps all).
  std::size_t min_future = 0;
};

inline std::vector<UnitWindow> dataset_windows(const Dataset& d, const WindowSpec& spec) {
  std::vector<UnitWindow> out;
  for (const auto& seq : d.sequences) {
    if (seq->frames() < spec.observed + spec.target) continue;
    for (auto& w : make_windows(seq, spec.observed, spec.target, spec.extended, spec.stride)) {
      if (w.future_length() >= spec.min_future) out.push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace pms::data
