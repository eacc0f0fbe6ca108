#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pms/numerics/errors.hpp"

namespace pms::data {

/// One named action: F poses of J joints, each an (x, y, z) triple.
/// Coordinates are stored flat in frame-major, joint-major, axis-minor order.
class MotionSequence {
 public:
  MotionSequence() = default;

  MotionSequence(std::string name, double fps, std::size_t joints, std::vector<double> coords)
      : name_(std::move(name)), fps_(fps), joints_(joints), coords_(std::move(coords)) {
    if (!(fps_ > 0.0) || !std::isfinite(fps_)) throw DataError("motion sequence fps must be positive");
    if (joints_ == 0) throw DataError("motion sequence needs at least one joint");
    if (coords_.empty() || coords_.size() % (3 * joints_) != 0) {
      throw DataError("motion sequence has " + std::to_string(coords_.size()) + " coordinates, not a multiple of 3·" +
                      std::to_string(joints_));
    }
    for (double v : coords_) {
      if (!std::isfinite(v)) throw DataError("motion sequence " + name_ + " has a non-finite coordinate");
    }
  }

  const std::string& name() const noexcept { return name_; }
  double fps() const noexcept { return fps_; }
  std::size_t joints() const noexcept { return joints_; }
  std::size_t pose_size() const noexcept { return 3 * joints_; }
  std::size_t frames() const noexcept { return coords_.empty() ? 0 : coords_.size() / pose_size(); }

  std::span<const double> frame(std::size_t f) const {
    return std::span<const double>(coords_).subspan(f * pose_size(), pose_size());
  }
  std::span<double> frame(std::size_t f) { return std::span<double>(coords_).subspan(f * pose_size(), pose_size()); }

  const std::vector<double>& coords() const noexcept { return coords_; }
  std::vector<double>& coords() noexcept { return coords_; }

  double at(std::size_t f, std::size_t joint, std::size_t axis) const { return coords_[(f * joints_ + joint) * 3 + axis]; }

  friend bool operator==(const MotionSequence&, const MotionSequence&) = default;

 private:
  std::string name_;
  double fps_ = 25.0;
  std::size_t joints_ = 0;
  std::vector<double> coords_;
};

inline bool is_token_safe(std::string_view name) {
  if (name.empty()) return false;
  return std::none_of(name.begin(), name.end(), [](unsigned char c) { return c <= 0x20 || c == 0x7f; });
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

inline bool parse_double(std::string_view text, double& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && end == text.data() + text.size() && std::isfinite(out);
}

inline bool parse_size(std::string_view text, std::size_t& out) {
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && end == text.data() + text.size();
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

inline std::string_view expect_field(std::string_view token, std::string_view key, std::size_t line) {
  if (token.size() <= key.size() || token.substr(0, key.size()) != key || token[key.size()] != '=') {
    throw ParseError(line, "expected " + std::string(key) + "=<value>, got '" + std::string(token) + "'");
  }
  return token.substr(key.size() + 1);
}

}  // namespace detail

/// Reads the MTF text format:
///
///     MTF1 joints=<J> fps=<fps> name=<label>
///     x y z x y z ...      (3·J floats per non-empty line, one line per frame)
inline MotionSequence parse_mtf(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t joints = 0;
  double fps = 0.0;
  std::string name;
  bool have_header = false;
  std::vector<double> coords;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(line);
    if (!have_header) {
      if (tokens.size() != 4 || tokens[0] != "MTF1") throw ParseError(line_no, "bad magic, expected 'MTF1 joints=.. fps=.. name=..'");
      if (!parse_size(detail::expect_field(tokens[1], "joints", line_no), joints) || joints == 0) {
        throw ParseError(line_no, "joints must be a positive integer");
      }
      if (!parse_double(detail::expect_field(tokens[2], "fps", line_no), fps) || !(fps > 0.0)) {
        throw ParseError(line_no, "fps must be a positive number");
      }
      name = std::string(detail::expect_field(tokens[3], "name", line_no));
      have_header = true;
      continue;
    }
    if (tokens.empty()) continue;
    if (tokens.size() != 3 * joints) {
      throw ParseError(line_no, "expected " + std::to_string(3 * joints) + " values, got " + std::to_string(tokens.size()));
    }
    for (std::string_view tok : tokens) {
      double v = 0.0;
      if (!parse_double(tok, v)) throw ParseError(line_no, "not a finite number: '" + std::string(tok) + "'");
      coords.push_back(v);
    }
  }
  if (!have_header) throw ParseError(line_no == 0 ? 1 : line_no, "bad magic, empty input");
  if (coords.empty()) throw ParseError(line_no + 1, "no frames");
  return MotionSequence(std::move(name), fps, joints, std::move(coords));
}

inline MotionSequence parse_mtf(const std::string& text) {
  std::istringstream in(text);
  return parse_mtf(in);
}

inline void write_mtf(const MotionSequence& seq, std::ostream& out) {
  if (!is_token_safe(seq.name())) throw DataError("sequence name '" + seq.name() + "' is not token-safe");
  out << "MTF1 joints=" << seq.joints() << " fps=" << format_double(seq.fps()) << " name=" << seq.name() << '\n';
  for (std::size_t f = 0; f < seq.frames(); ++f) {
    const auto pose = seq.frame(f);
    for (std::size_t i = 0; i < pose.size(); ++i) {
      if (i) out << ' ';
      out << format_double(pose[i]);
    }
    out << '\n';
  }
}

inline std::string write_mtf(const MotionSequence& seq) {
  std::ostringstream out;
  write_mtf(seq, out);
  return out.str();
}

/// Per-axis extrema of one action.
struct NormStats {
  std::array<double, 3> min{};
  std::array<double, 3> max{};

  double midpoint(std::size_t axis) const { return (max[axis] + min[axis]) / 2.0; }
  double half_range(std::size_t axis) const { return std::abs(max[axis] - min[axis]) / 2.0; }
  bool degenerate() const {
    for (std::size_t a = 0; a < 3; ++a)
      if (!(max[a] > min[a])) return true;
    return false;
  }

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline NormStats compute_norm_stats(const MotionSequence& seq) {
  NormStats s;
  s.min.fill(std::numeric_limits<double>::infinity());
  s.max.fill(-std::numeric_limits<double>::infinity());
  const auto& c = seq.coords();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::size_t a = i % 3;
    s.min[a] = std::min(s.min[a], c[i]);
    s.max[a] = std::max(s.max[a], c[i]);
  }
  return s;
}

/// Centers each axis on the midpoint of its extrema and divides by the
/// half-range, mapping the action into [-1, 1]. Extrema land on ±1 exactly.
inline std::pair<MotionSequence, NormStats> normalize_action(const MotionSequence& seq) {
  const NormStats stats = compute_norm_stats(seq);
  for (std::size_t a = 0; a < 3; ++a) {
    if (!(stats.max[a] > stats.min[a])) {
      throw DataError("degenerate range on axis " + std::string(1, "xyz"[a]) + " of action " + seq.name());
    }
  }
  std::vector<double> out(seq.coords().size());
  const auto& c = seq.coords();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::size_t a = i % 3;
    double v;
    if (c[i] == stats.max[a]) {
      v = 1.0;
    } else if (c[i] == stats.min[a]) {
      v = -1.0;
    } else {
      v = std::clamp((c[i] - stats.midpoint(a)) / stats.half_range(a), -1.0, 1.0);
    }
    out[i] = v;
  }
  return {MotionSequence(seq.name(), seq.fps(), seq.joints(), std::move(out)), stats};
}

/// Inverse of normalize_action for a flat pose array (any frame count).
inline void denormalize_in_place(std::span<double> coords, const NormStats& stats) {
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const std::size_t a = i % 3;
    coords[i] = coords[i] * stats.half_range(a) + stats.midpoint(a);
  }
}

inline MotionSequence denormalize(const MotionSequence& seq, const NormStats& stats) {
  std::vector<double> out = seq.coords();
  denormalize_in_place(out, stats);
  return MotionSequence(seq.name(), seq.fps(), seq.joints(), std::move(out));
}

}  // namespace pms::data
