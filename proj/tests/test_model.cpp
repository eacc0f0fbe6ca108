#include <gtest/gtest.h>

#include <sstream>

#include "pms/model/predict.hpp"
#include "pms/model/serialize.hpp"
#include "pms/training/gradcheck_suite.hpp"

using namespace pms;
using namespace pms::model;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.joints = 2;
  c.hidden = 6;
  c.lstm_layers = 2;
  c.seed = 3;
  return c;
}

Tensor random_window(RngState& rng, std::size_t frames, std::size_t joints) {
  std::vector<double> v(frames * joints * 3);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor({frames, joints, 3}, std::move(v));
}

// Frame f of a (frames, J, 3) tensor as a flat vector.
std::vector<double> frame(const Tensor& t, std::size_t f) {
  const std::size_t w = t.size() / t.dim(0);
  return std::vector<double>(t.data() + f * w, t.data() + (f + 1) * w);
}

}  // namespace

TEST(ModelConfig, KeyValueRoundTrip) {
  ModelConfig c = small_config();
  c.fusion[5] = inc::FusionWeights{{0.0, 0.0, 0.4, 0.6}, {0.2, 0.3, 0.5}};
  c.combine_weights = {0.5, 0.25, 0.25};
  c.raw_velocity = true;
  ModelConfig back;
  model::apply(back, to_kv(c));
  EXPECT_EQ(to_kv(back), to_kv(c));
  EXPECT_EQ(back.fusion_for(5).alpha, (std::vector<double>{0.0, 0.0, 0.4, 0.6}));
}

TEST(ModelConfig, ValidationRejectsBadSettings) {
  ModelConfig c = small_config();
  c.combine_weights = {0.5, 0.5, 0.5};
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.increment_sign = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.scales.deltas = {12, 5};
  EXPECT_THROW(c.validate(), ConfigError);  // 5·12 > 50
  c = small_config();
  c.gamma_explicit = {1.0, 0.5};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, DropScaleRenormalizes) {
  ModelConfig c = small_config();
  c.combine_weights = {0.5, 0.3, 0.2};
  c.drop_scale(10);
  EXPECT_EQ(c.scales.deltas, (std::vector<std::size_t>{5, 2}));
  EXPECT_NEAR(c.combine_weights[0], 0.6, 1e-15);
  EXPECT_NEAR(c.combine_weights[1], 0.4, 1e-15);
  EXPECT_NO_THROW(c.validate());
}

TEST(PmsModel, ParameterLayoutFollowsSwitches) {
  ModelConfig c = small_config();
  PmsModel full(c);
  EXPECT_TRUE(full.params().contains("d10.vel.fc_in.b"));
  EXPECT_TRUE(full.params().contains("d2.acc.bn.scale"));
  EXPECT_EQ(full.params().get("d5.vel.lstm1.w").dims(), (Shape{12, 24}));
  c.fc_bias = false;
  c.bn_relu = false;
  c.accel_correction = false;
  PmsModel lean(c);
  EXPECT_FALSE(lean.params().contains("d10.vel.fc_in.b"));
  EXPECT_FALSE(lean.params().contains("d10.vel.bn.scale"));
  EXPECT_FALSE(lean.params().contains("d10.acc.fc_in.w"));
  EXPECT_TRUE(lean.bn_states().empty());
}

TEST(PmsModel, SeededInitIsReproducible) {
  EXPECT_EQ(model_id(PmsModel(small_config())), model_id(PmsModel(small_config())));
  ModelConfig other = small_config();
  other.seed = 4;
  EXPECT_NE(model_id(PmsModel(small_config())), model_id(PmsModel(other)));
}

TEST(Forward, ShapesForShortAndLongHorizons) {
  RngState rng(31, Stream::test);
  PmsModel m(small_config());
  const Tensor window = random_window(rng, 50, 2);
  const Prediction s = predict_short(m, window, "w0");
  EXPECT_EQ(s.frames.dims(), (Shape{10, 2, 3}));
  EXPECT_EQ(s.per_branch.size(), 3u);
  for (const auto& [d, f] : s.per_branch) EXPECT_EQ(f.dims(), (Shape{10, 2, 3}));
  EXPECT_EQ(s.window_id, "w0");
  EXPECT_EQ(s.model_id, model_id(m));

  const Prediction l = predict_long(m, window, 25);
  EXPECT_EQ(l.frames.dims(), (Shape{25, 2, 3}));

  ad::Tape tape;
  const auto vars = m.params().bind(tape);
  auto bn = m.bn_states();
  ForwardContext ctx{tape, vars, m.config(), bn, nn::Mode::infer, nullptr, 0.0};
  const auto frames = batch_frames(tape, 1, 50, 6, [&](std::size_t, std::size_t i) {
    return std::span<const double>(window.data() + i * 6, 6);
  });
  std::size_t steps = 0;
  const auto out = forward_long(ctx, frames, 25, &steps);
  EXPECT_EQ(out.size(), 25u);
  EXPECT_EQ(steps, 3u);
}

TEST(Forward, LongPrefixEqualsShortPrediction) {
  RngState rng(32, Stream::test);
  for (std::size_t rounds : {1u, 2u}) {
    ModelConfig c = small_config();
    c.adjust_rounds = rounds;
    PmsModel m(c);
    const Tensor window = random_window(rng, 50, 2);
    const Tensor s = predict_short(m, window).frames;
    const Tensor l = predict_long(m, window, 25).frames;
    for (std::size_t f = 0; f < 10; ++f) EXPECT_EQ(frame(l, f), frame(s, f));
  }
}

TEST(Forward, ZeroAttenuationRepeatsLastSegment) {
  RngState rng(33, Stream::test);
  ModelConfig c = small_config();
  c.gamma_explicit.assign(10, 0.0);
  PmsModel m(c);
  const Tensor window = random_window(rng, 50, 2);
  const Prediction p = predict_short(m, window);
  for (const auto& [d, branch] : p.per_branch) {
    for (std::size_t n = 0; n < 10; ++n) EXPECT_EQ(frame(branch, n), frame(window, 50 - d + n % d)) << "delta " << d;
  }
}

TEST(Forward, ZeroParametersAreAFixedPointOfAdjustment) {
  RngState rng(34, Stream::test);
  ModelConfig c = small_config();
  c.adjust_rounds = 3;
  c.bn_relu = false;
  PmsModel m(c);
  m.zero_parameters();
  const Tensor window = random_window(rng, 50, 2);
  c.adjust_rounds = 1;
  PmsModel m1(c);
  m1.zero_parameters();
  EXPECT_EQ(predict_short(m, window).frames, predict_short(m1, window).frames);
}

TEST(Forward, UsesOnlyTheLatestFramesAndRejectsShortHistory) {
  RngState rng(35, Stream::test);
  PmsModel m(small_config());
  const Tensor longer = random_window(rng, 64, 2);
  std::vector<double> tail(longer.data() + 14 * 6, longer.data() + 64 * 6);
  const Tensor last50({50, 2, 3}, tail);
  EXPECT_EQ(predict_short(m, longer).frames, predict_short(m, last50).frames);
  EXPECT_THROW(predict_short(m, random_window(rng, 49, 2)), DataError);
  EXPECT_THROW(predict_short(m, random_window(rng, 50, 3)), DimensionError);
}

TEST(Forward, BatchedInferenceMatchesSingleWindows) {
  RngState rng(36, Stream::test);
  PmsModel m(small_config());
  std::vector<Tensor> windows{random_window(rng, 50, 2), random_window(rng, 50, 2), random_window(rng, 50, 2)};
  const auto batched = predict_batch(m, windows, 10);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    EXPECT_LT(max_abs_diff(batched[i], predict_short(m, windows[i]).frames), 1e-12);
  }
}

TEST(Serialize, RoundTripIsBitIdentical) {
  ModelConfig c = small_config();
  c.fusion[2] = inc::FusionWeights{{0.25, 0.25, 0.25, 0.25}, {0.2, 0.3, 0.5}};
  std::map<std::string, data::NormStats> norms;
  norms["walk"] = data::NormStats{{-1.5, 0.0, 2.0}, {3.25, 7.0, 9.125}};
  PmsModel m0(c);
  PmsModel m(c, m0.params(), m0.bn_states(), norms);
  m.bn_states().begin()->second.running_mean[0] = 0.125;
  const std::string bytes = save_model_bytes(m);
  const PmsModel back = load_model_bytes(bytes);
  EXPECT_EQ(save_model_bytes(back), bytes);
  EXPECT_EQ(model_id(back), model_id(m));
  EXPECT_EQ(back.norm_stats().at("walk"), norms["walk"]);
  EXPECT_EQ(to_kv(back.config()), to_kv(c));
}

TEST(Serialize, CorruptContainersAreRejected) {
  const std::string bytes = save_model_bytes(PmsModel(small_config()));
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_model_bytes(bad_magic), ModelFormatError);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(load_model_bytes(bad_version), ModelFormatError);
  for (std::size_t cut : {std::size_t{6}, std::size_t{30}, bytes.size() / 2, bytes.size() - 3}) {
    try {
      load_model_bytes(bytes.substr(0, cut));
      FAIL() << "truncation at " << cut << " accepted";
    } catch (const ModelFormatError& e) {
      EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
    }
  }
}

TEST(GradCheckSuite, TinyModelPasses) {
  const PmsModel m(train::tiny_model_config());
  const auto windows = train::tiny_windows(2, 2);
  for (const auto& c : train::run_gradcheck_suite(m, windows)) {
    EXPECT_TRUE(c.report.passed()) << c.name << " max relative error " << c.report.max_rel_error;
  }
}
