#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pms/dataio/dataset.hpp"
#include "pms/dataio/motion.hpp"
#include "pms/dataio/synth.hpp"
#include "pms/dataio/windows.hpp"

using namespace pms;
using namespace pms::data;

namespace {

MotionSequence random_sequence(RngState& rng, std::size_t frames, std::size_t joints, const std::string& name = "walk") {
  std::vector<double> c(frames * joints * 3);
  for (double& v : c) v = rng.uniform(-50.0, 80.0);
  return MotionSequence(name, 25.0, joints, std::move(c));
}

}  // namespace

TEST(Mtf, RoundTripIsExact) {
  RngState rng(21, Stream::test);
  for (int trial = 0; trial < 50; ++trial) {
    MotionSequence s = random_sequence(rng, 1 + rng.below(20), 1 + rng.below(5));
    s.coords()[0] = 1e-300;
    s.coords().back() = -0.1;
    const MotionSequence back = parse_mtf(write_mtf(s));
    EXPECT_EQ(back, s);
    EXPECT_EQ(write_mtf(back), write_mtf(s));
  }
}

TEST(Mtf, ParseErrorsCarryLineNumbers) {
  try {
    parse_mtf("MTF1 joints=1 fps=25 name=a\n1 2 3\n1 2\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  try {
    parse_mtf("MTF1 joints=1 fps=25 name=a\n1 2 x\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_mtf("MTF2 joints=1 fps=25 name=a\n1 2 3\n"), ParseError);
  EXPECT_THROW(parse_mtf(""), ParseError);
  EXPECT_THROW(parse_mtf("MTF1 joints=1 fps=25 name=a\n1 2 nan\n"), ParseError);
  EXPECT_THROW(parse_mtf("MTF1 joints=0 fps=25 name=a\n"), ParseError);
  EXPECT_NO_THROW(parse_mtf("MTF1 joints=1 fps=25 name=a\n\n1 2 3\n\n"));
}

TEST(Mtf, RejectsUnsafeNames) {
  MotionSequence s("two words", 25.0, 1, {1, 2, 3});
  EXPECT_THROW(write_mtf(s), DataError);
}

TEST(Normalize, RangeAndExtremaAndRoundTrip) {
  RngState rng(22, Stream::test);
  for (int trial = 0; trial < 200; ++trial) {
    const MotionSequence s = random_sequence(rng, 2 + rng.below(30), 1 + rng.below(6));
    const auto [n, stats] = normalize_action(s);
    std::array<bool, 3> hit_min{}, hit_max{};
    for (std::size_t i = 0; i < n.coords().size(); ++i) {
      const double v = n.coords()[i];
      ASSERT_GE(v, -1.0);
      ASSERT_LE(v, 1.0);
      if (v == -1.0) hit_min[i % 3] = true;
      if (v == 1.0) hit_max[i % 3] = true;
    }
    for (std::size_t a = 0; a < 3; ++a) {
      EXPECT_TRUE(hit_min[a]);
      EXPECT_TRUE(hit_max[a]);
    }
    const MotionSequence back = denormalize(n, stats);
    for (std::size_t i = 0; i < s.coords().size(); ++i) ASSERT_NEAR(back.coords()[i], s.coords()[i], 1e-9);
  }
}

TEST(Normalize, DegenerateAxisIsRejected) {
  MotionSequence s("still", 25.0, 1, {1, 2, 3, 4, 2, 6});
  EXPECT_THROW(normalize_action(s), DataError);
}

TEST(Normalize, DatasetSharesStatsPerAction) {
  RngState rng(23, Stream::test);
  const auto a = random_sequence(rng, 10, 2, "walk");
  const auto b = random_sequence(rng, 10, 2, "walk");
  const auto c = random_sequence(rng, 10, 2, "run");
  const Dataset d = normalize_dataset({a, b, c});
  ASSERT_EQ(d.stats.size(), 2u);
  EXPECT_EQ(d.stats.at("walk"), merge_stats(compute_norm_stats(a), compute_norm_stats(b)));
  EXPECT_EQ(d.sequences[2]->coords(), normalize_action(c).first.coords());
}

TEST(Windows, CountsAndContents) {
  RngState rng(24, Stream::test);
  const auto seq = std::make_shared<const MotionSequence>(random_sequence(rng, 120, 2));
  const auto w = make_windows(seq, 50, 10, 30, 10);
  ASSERT_EQ(w.size(), 7u);  // starts 0..60
  EXPECT_EQ(w[0].extended_length(), 30u);
  EXPECT_EQ(w[3].extended_length(), 30u);
  EXPECT_EQ(w[6].extended_length(), 0u);
  EXPECT_EQ(w[4].extended_length(), 20u);
  EXPECT_EQ(w[2].observed(0)[0], seq->frame(20)[0]);
  EXPECT_EQ(w[2].target(0)[1], seq->frame(70)[1]);
  EXPECT_EQ(w[2].extended_future(5)[2], seq->frame(85)[2]);
  EXPECT_EQ(w[2].future(12)[0], seq->frame(82)[0]);
  EXPECT_TRUE(make_windows(*seq, 100, 30).empty());
}

TEST(Synth, DeterministicAndBounded) {
  RngState rng(25, Stream::test);
  for (int trial = 0; trial < 1000; ++trial) {
    SynthSpec spec;
    spec.joints = 1 + rng.below(3);
    spec.frames = 1 + rng.below(40);
    spec.sinusoids = rng.below(4);
    spec.amplitude = rng.uniform(0.1, 3.0);
    spec.noise_std = rng.below(2) ? rng.uniform(0.0, 0.5) : 0.0;
    spec.seed = rng.next_u64();
    const MotionSequence s = synth_generate(spec);
    const double bound = static_cast<double>(spec.sinusoids) * spec.amplitude + 6.0 * spec.noise_std;
    for (double v : s.coords()) {
      ASSERT_LE(std::abs(v), bound + 1e-12);
    }
    if (trial < 20) {
      EXPECT_EQ(synth_generate(spec), s);
    }
  }
}

TEST(Synth, ZeroSinusoidsZeroNoiseIsStill) {
  SynthSpec spec;
  spec.sinusoids = 0;
  spec.frames = 20;
  for (double v : synth_generate(spec).coords()) EXPECT_EQ(v, 0.0);
}

TEST(Synth, TrendBreakIsContinuousAndChangesFrequency) {
  SynthSpec spec;
  spec.joints = 1;
  spec.sinusoids = 1;
  spec.frames = 200;
  spec.seed = 3;
  SynthSpec broken = spec;
  broken.trend_break = 100;
  const auto a = synth_generate(spec), b = synth_generate(broken);
  for (std::size_t f = 0; f < 100; ++f) EXPECT_EQ(a.frame(f)[0], b.frame(f)[0]);
  double diff = 0.0;
  for (std::size_t f = 120; f < 200; ++f) diff += std::abs(a.frame(f)[0] - b.frame(f)[0]);
  EXPECT_GT(diff, 1e-3);
  // The jump across the break is no larger than the largest step before it.
  double max_step = 0.0;
  for (std::size_t f = 1; f < 100; ++f) max_step = std::max(max_step, std::abs(b.frame(f)[0] - b.frame(f - 1)[0]));
  EXPECT_LE(std::abs(b.frame(100)[0] - b.frame(99)[0]), 2.0 * max_step + 1e-12);
}

TEST(Synth, InvalidSpecsAreRejected) {
  SynthSpec spec;
  spec.freq_max = 13.0;
  EXPECT_THROW(synth_generate(spec), ConfigError);
  spec = {};
  spec.amplitude = 0.0;
  EXPECT_THROW(synth_generate(spec), ConfigError);
}

TEST(Dataset, LoadDirectoryInFileOrder) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "pms_test_load_dir";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RngState rng(26, Stream::test);
  const auto a = random_sequence(rng, 5, 1, "b_seq"), b = random_sequence(rng, 5, 1, "a_seq");
  std::ofstream(dir / "001.mtf") << write_mtf(a);
  std::ofstream(dir / "002.mtf") << write_mtf(b);
  std::ofstream(dir / "notes.txt") << "ignored";
  const auto loaded = load_directory(dir);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0], a);
  EXPECT_EQ(loaded[1], b);
  std::ofstream(dir / "003.mtf") << "MTF1 joints=1 fps=25 name=x\n1 2\n";
  EXPECT_THROW(load_directory(dir), ParseError);
  fs::remove_all(dir);
}
