#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pms/increments.hpp"
#include "pms/losses.hpp"

using namespace pms;

namespace {

std::vector<Tensor> frames_of(const oracle::Motion& m) {
  std::vector<Tensor> out;
  for (std::size_t f = 0; f < m.frames; ++f) {
    out.emplace_back(Shape{m.width}, std::vector<double>(m.x.begin() + f * m.width, m.x.begin() + (f + 1) * m.width));
  }
  return out;
}

Tensor tensor_of(const oracle::Motion& m) { return Tensor({m.frames, m.width}, m.x); }

std::vector<double> random_simplex(RngState& rng, std::size_t n) {
  std::vector<double> w(n);
  double s = 0.0;
  for (double& x : w) s += (x = rng.uniform(0.01, 1.0));
  for (double& x : w) x /= s;
  double rest = 1.0;
  for (std::size_t i = 0; i + 1 < n; ++i) rest -= w[i];
  w.back() = rest;
  return w;
}

}  // namespace

TEST(Increments, MatchBruteForceOracle) {
  RngState rng(11, Stream::test);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.below(6);
    const std::size_t width = 3 * (1 + rng.below(3));
    const std::size_t frames = 5 * d + rng.below(8);
    const bool end = rng.below(2) == 0;
    const oracle::Motion m = oracle::random_motion(rng, frames, width, 3.0);
    inc::FusionWeights w{random_simplex(rng, 4), random_simplex(rng, 3)};
    const auto frames_t = frames_of(m);
    const auto r = inc::compute_increments<Tensor>(std::span<const Tensor>(frames_t), d,
                                                   end ? inc::Anchor::end : inc::Anchor::start, w);
    for (std::size_t t = 0; t < d; ++t) {
      for (std::size_t c = 0; c < width; ++c) {
        for (std::size_t k = 0; k < 5; ++k) ASSERT_EQ(r.segments[k][t][c], oracle::segment(m, d, end, k, t, c));
        for (std::size_t k = 0; k < 4; ++k) ASSERT_NEAR(r.velocity[k][t][c], oracle::velocity(m, d, end, k, t, c), 1e-12);
        for (std::size_t k = 0; k < 3; ++k) ASSERT_NEAR(r.accel[k][t][c], oracle::accel(m, d, end, k, t, c), 1e-12);
        ASSERT_NEAR(r.fused_velocity[t][c], oracle::fused_velocity(m, d, end, w.alpha, t, c), 1e-12);
        ASSERT_NEAR(r.fused_accel[t][c], oracle::fused_accel(m, d, end, w.beta, t, c), 1e-12);
      }
    }
  }
}

TEST(Increments, AccelerationIsSecondDifferenceOfSegments) {
  RngState rng(12, Stream::test);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.below(10);
    const oracle::Motion m = oracle::random_motion(rng, 5 * d + 3, 6);
    const auto frames_t = frames_of(m);
    const auto r = inc::compute_increments<Tensor>(std::span<const Tensor>(frames_t), d, inc::Anchor::end, {});
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t t = 0; t < d; ++t)
        for (std::size_t c = 0; c < 6; ++c) {
          const double s2 = r.segments[k + 2][t][c] - 2.0 * r.segments[k + 1][t][c] + r.segments[k][t][c];
          ASSERT_NEAR(r.accel[k][t][c], s2, 1e-12);
        }
  }
}

TEST(Increments, LinearMotionHasConstantVelocityAndZeroAcceleration) {
  oracle::Motion m{50, 3, {}};
  for (std::size_t f = 0; f < 50; ++f)
    for (std::size_t c = 0; c < 3; ++c) m.x.push_back(0.5 * static_cast<double>(f) + static_cast<double>(c));
  const auto frames_t = frames_of(m);
  const auto r = inc::compute_increments<Tensor>(std::span<const Tensor>(frames_t), 10, inc::Anchor::end, {});
  for (const auto& seg : r.velocity)
    for (const Tensor& f : seg) EXPECT_NEAR(f[0], 5.0, 1e-12);
  for (const Tensor& f : r.fused_accel) EXPECT_NEAR(f[1], 0.0, 1e-12);
}

TEST(Increments, RejectsShortWindowAndBadWeights) {
  oracle::Motion m{49, 3, std::vector<double>(147, 0.0)};
  const auto frames_t = frames_of(m);
  EXPECT_THROW(inc::compute_increments<Tensor>(std::span<const Tensor>(frames_t), 10, inc::Anchor::end, {}), DataError);
  inc::FusionWeights bad{{0.5, 0.5, 0.5, -0.5}, {0.2, 0.3, 0.5}};
  EXPECT_THROW(bad.validate(), ConfigError);
  inc::FusionWeights short_alpha{{0.5, 0.5}, {0.2, 0.3, 0.5}};
  EXPECT_THROW(short_alpha.validate(), ConfigError);
  inc::ScaleConfig sc{{10, 10, 2}, inc::Anchor::end};
  EXPECT_THROW(sc.validate(50), ConfigError);
}

TEST(Losses, MatchBruteForceOracle) {
  RngState rng(13, Stream::test);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t L = 2 + rng.below(12);
    const std::size_t width = 3 * (1 + rng.below(4));
    const oracle::Motion p = oracle::random_motion(rng, L, width, 2.0);
    const oracle::Motion q = oracle::random_motion(rng, L, width, 2.0);
    std::vector<std::size_t> past;
    for (std::size_t d = 1; d <= L; ++d)
      if (rng.below(2)) past.push_back(d);
    const std::size_t ext = rng.below(35);
    const oracle::Motion rp = oracle::random_motion(rng, 30, width);
    const oracle::Motion rq = oracle::random_motion(rng, ext == 0 ? 1 : ext, width);
    const std::vector<std::size_t> future{1 + rng.below(30), 1 + rng.below(30)};

    const Tensor pt = tensor_of(p), qt = tensor_of(q);
    ASSERT_NEAR(loss::loss_current(pt, qt), oracle::loss_current(p, q), 1e-12);
    ASSERT_NEAR(loss::loss_past(pt, qt, past), oracle::loss_past(p, q, past), 1e-12);
    ASSERT_NEAR(loss::mpjpe(pt, qt), oracle::mpjpe(p, q), 1e-12);
    if (ext > 0) {
      const auto [lf, skipped] = loss::loss_future(tensor_of(rp), tensor_of(rq), future);
      ASSERT_NEAR(lf, oracle::loss_future(rp, rq, future), 1e-12);
      std::size_t expected_skips = 0;
      for (std::size_t d : future) expected_skips += d > ext;
      ASSERT_EQ(skipped, expected_skips);
    }
  }
}

TEST(Losses, TotalIsExactSumAndZeroOnlyForIdenticalFrames) {
  RngState rng(14, Stream::test);
  const oracle::Motion p = oracle::random_motion(rng, 10, 6);
  const Tensor pt = tensor_of(p);
  EXPECT_EQ(loss::loss_current(pt, pt), 0.0);
  EXPECT_EQ(loss::loss_past(pt, pt, {2, 5, 10}), 0.0);
  EXPECT_EQ(loss::mpjpe(pt, pt), 0.0);
  const oracle::Motion q = oracle::random_motion(rng, 10, 6);
  const Tensor qt = tensor_of(q);
  const double lp = loss::loss_past(pt, qt, {2, 5, 10});
  const double lc = loss::loss_current(pt, qt);
  const auto [lf, skipped] = loss::loss_future(nullptr, nullptr, {20, 30});
  EXPECT_EQ(skipped, 2u);
  const auto b = loss::loss_total(lp, lc, lf, skipped);
  EXPECT_EQ(b.l_total, b.l_past + b.l_current + b.l_future);
  EXPECT_GT(lc, 0.0);
  EXPECT_THROW(loss::loss_past(pt, qt, {11}), DimensionError);
}

TEST(Losses, MpjpeTranslationInvariantAndUniformOffset) {
  RngState rng(15, Stream::test);
  const oracle::Motion p = oracle::random_motion(rng, 7, 9);
  oracle::Motion q = p, p2 = p, q2 = p;
  const double v[3] = {0.3, -0.4, 1.2};
  for (std::size_t i = 0; i < q.x.size(); ++i) q.x[i] += v[i % 3];
  EXPECT_NEAR(loss::mpjpe(tensor_of(p), tensor_of(q)), std::sqrt(0.09 + 0.16 + 1.44), 1e-12);
  for (std::size_t i = 0; i < p2.x.size(); ++i) {
    p2.x[i] += 5.0 - static_cast<double>(i % 3);
    q2.x[i] = q.x[i] + 5.0 - static_cast<double>(i % 3);
  }
  EXPECT_NEAR(loss::mpjpe(tensor_of(p2), tensor_of(q2)), loss::mpjpe(tensor_of(p), tensor_of(q)), 1e-12);
}

TEST(Losses, BatchedFormsAgreeWithTensorForms) {
  RngState rng(16, Stream::test);
  const std::size_t B = 3, L = 10, W = 6;
  std::vector<oracle::Motion> ps, qs;
  for (std::size_t b = 0; b < B; ++b) {
    ps.push_back(oracle::random_motion(rng, 25, W));
    qs.push_back(oracle::random_motion(rng, 25, W));
  }
  ad::Tape tape;
  auto stack = [&](const std::vector<oracle::Motion>& ms, std::size_t frames) {
    std::vector<ad::Var> out;
    for (std::size_t f = 0; f < frames; ++f) {
      std::vector<double> v;
      for (const auto& m : ms) v.insert(v.end(), m.x.begin() + f * W, m.x.begin() + (f + 1) * W);
      out.push_back(tape.constant(Tensor({B, W}, v)));
    }
    return out;
  };
  const auto P = stack(ps, 25), Q = stack(qs, 25);
  std::vector<ad::Var> P10(P.begin(), P.begin() + L), Q10(Q.begin(), Q.begin() + L);
  double lc = 0.0, lp = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    oracle::Motion p10{L, W, std::vector<double>(ps[b].x.begin(), ps[b].x.begin() + L * W)};
    oracle::Motion q10{L, W, std::vector<double>(qs[b].x.begin(), qs[b].x.begin() + L * W)};
    lc += oracle::loss_current(p10, q10) / B;
    lp += oracle::loss_past(p10, q10, {2, 5, 10}) / B;
  }
  EXPECT_NEAR(loss::batched::loss_current(P10, Q10).value().item(), lc, 1e-12);
  EXPECT_NEAR(loss::batched::loss_past(P10, Q10, {2, 5, 10}).value().item(), lp, 1e-12);

  // Row 1 has only 12 extended frames: excluded from the 20-frame term.
  const std::vector<std::size_t> available{25, 12, 20};
  const auto [lf, skipped] = loss::batched::loss_future(P, Q, available, {20, 30}, tape);
  EXPECT_EQ(skipped, 1u);
  const double expected = (oracle::prefix_l1(ps[0], qs[0], 20) + oracle::prefix_l1(ps[2], qs[2], 20)) / 2.0;
  EXPECT_NEAR(lf.value().item(), expected, 1e-12);
}
