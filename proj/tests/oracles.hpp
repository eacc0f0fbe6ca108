#pragma once

// Brute-force reference implementations written directly from the index
// definitions, with no shared code beyond plain arrays. Motion is a flat
// row-major array of F frames × W coordinates.

#include <cmath>
#include <cstddef>
#include <vector>

#include "pms/numerics/rng.hpp"

namespace oracle {

struct Motion {
  std::size_t frames = 0;
  std::size_t width = 0;
  std::vector<double> x;

  double at(std::size_t f, std::size_t c) const { return x[f * width + c]; }
};

inline Motion random_motion(pms::RngState& rng, std::size_t frames, std::size_t width, double scale = 1.0) {
  Motion m{frames, width, std::vector<double>(frames * width)};
  for (double& v : m.x) v = rng.uniform(-scale, scale);
  return m;
}

// Segment k (0-based, oldest first) at interval d, frame t, coordinate c.
inline double segment(const Motion& m, std::size_t d, bool end_anchor, std::size_t k, std::size_t t, std::size_t c) {
  const std::size_t origin = end_anchor ? m.frames - 5 * d : 0;
  return m.at(origin + k * d + t, c);
}

inline double velocity(const Motion& m, std::size_t d, bool end_anchor, std::size_t k, std::size_t t, std::size_t c) {
  return segment(m, d, end_anchor, k + 1, t, c) - segment(m, d, end_anchor, k, t, c);
}

inline double accel(const Motion& m, std::size_t d, bool end_anchor, std::size_t k, std::size_t t, std::size_t c) {
  return velocity(m, d, end_anchor, k + 1, t, c) - velocity(m, d, end_anchor, k, t, c);
}

inline double fused_velocity(const Motion& m, std::size_t d, bool end_anchor, const std::vector<double>& alpha,
                             std::size_t t, std::size_t c) {
  double s = 0.0;
  for (std::size_t k = 0; k < 4; ++k) s += alpha[k] * velocity(m, d, end_anchor, k, t, c);
  return s;
}

inline double fused_accel(const Motion& m, std::size_t d, bool end_anchor, const std::vector<double>& beta,
                          std::size_t t, std::size_t c) {
  double s = 0.0;
  for (std::size_t k = 0; k < 3; ++k) s += beta[k] * accel(m, d, end_anchor, k, t, c);
  return s;
}

// Mean absolute error over the first n frames.
inline double prefix_l1(const Motion& p, const Motion& q, std::size_t n) {
  double s = 0.0;
  for (std::size_t f = 0; f < n; ++f)
    for (std::size_t c = 0; c < p.width; ++c) s += std::fabs(p.at(f, c) - q.at(f, c));
  return s / static_cast<double>(n * p.width);
}

inline double loss_current(const Motion& p, const Motion& q) { return prefix_l1(p, q, p.frames); }

inline double loss_past(const Motion& p, const Motion& q, const std::vector<std::size_t>& deltas) {
  double s = 0.0;
  for (std::size_t d : deltas) s += prefix_l1(p, q, d);
  return s;
}

inline double loss_future(const Motion& p, const Motion& q, const std::vector<std::size_t>& deltas) {
  double s = 0.0;
  for (std::size_t d : deltas)
    if (p.frames >= d && q.frames >= d) s += prefix_l1(p, q, d);
  return s;
}

inline double mpjpe(const Motion& p, const Motion& q) {
  const std::size_t joints = p.width / 3;
  double s = 0.0;
  for (std::size_t f = 0; f < p.frames; ++f) {
    for (std::size_t j = 0; j < joints; ++j) {
      double d2 = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double e = p.at(f, 3 * j + a) - q.at(f, 3 * j + a);
        d2 += e * e;
      }
      s += std::sqrt(d2);
    }
  }
  return s / static_cast<double>(p.frames * joints);
}

}  // namespace oracle
