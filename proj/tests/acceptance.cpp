// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only if
// all of them pass. Criteria 5 and 6 train full models and dominate runtime.

#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pms/cli/commands.hpp"
#include "pms/increments.hpp"
#include "pms/losses.hpp"

using namespace pms;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

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

std::vector<Tensor> frames_of(const oracle::Motion& m) {
  std::vector<Tensor> out;
  for (std::size_t f = 0; f < m.frames; ++f) {
    out.emplace_back(Shape{m.width}, std::vector<double>(m.x.begin() + f * m.width, m.x.begin() + (f + 1) * m.width));
  }
  return out;
}

Tensor tensor_of(const oracle::Motion& m) { return Tensor({m.frames, m.width}, m.x); }

Tensor random_window(RngState& rng, std::size_t frames, std::size_t joints) {
  std::vector<double> v(frames * joints * 3);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor({frames, joints, 3}, std::move(v));
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// 1 ------------------------------------------------------------------------

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  const model::PmsModel m(train::tiny_model_config());
  const auto cases = train::run_gradcheck_suite(m, train::tiny_windows(2));
  const double secs = seconds_since(t0);
  Outcome o{secs < 60.0, ""};
  for (const auto& c : cases) {
    o.pass = o.pass && c.report.passed();
    o.detail += c.name + "=" + fmt(c.report.max_rel_error) + " ";
  }
  o.detail += "runtime=" + fmt(secs) + "s";
  return o;
}

// 2 ------------------------------------------------------------------------

Outcome oracle_equivalence() {
  RngState rng(2024, Stream::test);
  double worst = 0.0;
  std::size_t instances = 0;
  auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (int trial = 0; trial < 1000; ++trial, ++instances) {
    const std::size_t d = 1 + rng.below(6);
    const std::size_t width = 3 * (1 + rng.below(3));
    const oracle::Motion m = oracle::random_motion(rng, 5 * d + rng.below(8), width, 3.0);
    const bool end = rng.below(2) == 0;
    inc::FusionWeights w{random_simplex(rng, 4), random_simplex(rng, 3)};
    const auto frames = frames_of(m);
    const auto r = inc::compute_increments<Tensor>(std::span<const Tensor>(frames), d,
                                                   end ? inc::Anchor::end : inc::Anchor::start, w);
    for (std::size_t t = 0; t < d; ++t)
      for (std::size_t c = 0; c < width; ++c) {
        for (std::size_t k = 0; k < 5; ++k) track(r.segments[k][t][c], oracle::segment(m, d, end, k, t, c));
        for (std::size_t k = 0; k < 4; ++k) track(r.velocity[k][t][c], oracle::velocity(m, d, end, k, t, c));
        for (std::size_t k = 0; k < 3; ++k) track(r.accel[k][t][c], oracle::accel(m, d, end, k, t, c));
        track(r.fused_velocity[t][c], oracle::fused_velocity(m, d, end, w.alpha, t, c));
        track(r.fused_accel[t][c], oracle::fused_accel(m, d, end, w.beta, t, c));
      }
  }
  for (int trial = 0; trial < 1000; ++trial, ++instances) {
    const std::size_t L = 2 + rng.below(12);
    const std::size_t width = 3 * (1 + rng.below(4));
    const oracle::Motion p = oracle::random_motion(rng, L, width, 2.0), q = oracle::random_motion(rng, L, width, 2.0);
    std::vector<std::size_t> past;
    for (std::size_t d = 1; d <= L; ++d)
      if (rng.below(2)) past.push_back(d);
    const std::size_t ext = 1 + rng.below(34);
    const oracle::Motion rp = oracle::random_motion(rng, 30, width), rq = oracle::random_motion(rng, ext, width);
    const std::vector<std::size_t> future{1 + rng.below(30), 1 + rng.below(30)};
    track(loss::loss_current(tensor_of(p), tensor_of(q)), oracle::loss_current(p, q));
    track(loss::loss_past(tensor_of(p), tensor_of(q), past), oracle::loss_past(p, q, past));
    track(loss::loss_future(tensor_of(rp), tensor_of(rq), future).first, oracle::loss_future(rp, rq, future));
    track(loss::mpjpe(tensor_of(p), tensor_of(q)), oracle::mpjpe(p, q));
  }
  return {worst <= 1e-12, "instances=" + std::to_string(instances) + " max_abs_diff=" + fmt(worst)};
}

// 3 ------------------------------------------------------------------------

Outcome structural_identities() {
  RngState rng(3030, Stream::test);
  double accel_gap = 0.0, sum_gap = 0.0, repeat_gap = 0.0, prefix_gap = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.below(10);
    const oracle::Motion m = oracle::random_motion(rng, 5 * d + 2, 6);
    const auto frames = frames_of(m);
    const auto r = inc::compute_increments<Tensor>(std::span<const Tensor>(frames), d, inc::Anchor::end, {});
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t t = 0; t < d; ++t)
        for (std::size_t c = 0; c < 6; ++c) {
          const double s = r.segments[k + 2][t][c] - 2.0 * r.segments[k + 1][t][c] + r.segments[k][t][c];
          accel_gap = std::max(accel_gap, std::abs(r.accel[k][t][c] - s));
        }
    const oracle::Motion p = oracle::random_motion(rng, 10, 6), q = oracle::random_motion(rng, 10, 6);
    const double lp = loss::loss_past(tensor_of(p), tensor_of(q), {2, 5, 10});
    const double lc = loss::loss_current(tensor_of(p), tensor_of(q));
    const double lf = rng.uniform(0.0, 1.0);
    const auto b = loss::loss_total(lp, lc, lf, 0);
    sum_gap = std::max(sum_gap, std::abs(b.l_total - (b.l_past + b.l_current + b.l_future)));
  }

  model::ModelConfig c;
  c.joints = 3;
  c.hidden = 8;
  c.lstm_layers = 2;
  c.gamma_explicit.assign(10, 0.0);
  const model::PmsModel still(c);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor window = random_window(rng, 50, 3);
    for (const auto& [d, branch] : model::predict_short(still, window).per_branch) {
      for (std::size_t n = 0; n < 10; ++n)
        for (std::size_t i = 0; i < 9; ++i)
          repeat_gap = std::max(repeat_gap, std::abs(branch[n * 9 + i] - window[(50 - d + n % d) * 9 + i]));
    }
  }
  c.gamma_explicit.clear();
  c.seed = 5;
  const model::PmsModel m(c);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor window = random_window(rng, 50, 3);
    const Tensor s = model::predict_short(m, window).frames;
    const Tensor l = model::predict_long(m, window, 25).frames;
    for (std::size_t i = 0; i < s.size(); ++i) prefix_gap = std::max(prefix_gap, std::abs(s[i] - l[i]));
  }
  const double worst = std::max({accel_gap, sum_gap, repeat_gap, prefix_gap});
  return {worst <= 1e-12, "accel=" + fmt(accel_gap) + " total=" + fmt(sum_gap) + " gamma0_repeat=" + fmt(repeat_gap) +
                              " long_prefix=" + fmt(prefix_gap)};
}

// 4 ------------------------------------------------------------------------

Outcome normalization() {
  RngState rng(4040, Stream::test);
  bool range_ok = true, extrema_ok = true;
  double round_trip = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t frames = 2 + rng.below(40), joints = 1 + rng.below(8);
    std::vector<double> v(frames * joints * 3);
    const double scale = std::pow(10.0, rng.uniform(-2.0, 3.0));
    for (double& x : v) x = scale * rng.uniform(-1.0, 1.0) + rng.uniform(-100.0, 100.0);
    const data::MotionSequence s("a", 25.0, joints, v);
    const auto [n, stats] = data::normalize_action(s);
    std::array<bool, 6> hit{};
    for (std::size_t i = 0; i < n.coords().size(); ++i) {
      const double x = n.coords()[i];
      range_ok = range_ok && x >= -1.0 && x <= 1.0;
      if (x == -1.0) hit[i % 3] = true;
      if (x == 1.0) hit[3 + i % 3] = true;
    }
    for (bool h : hit) extrema_ok = extrema_ok && h;
    const auto back = data::denormalize(n, stats);
    for (std::size_t i = 0; i < v.size(); ++i) round_trip = std::max(round_trip, std::abs(back.coords()[i] - v[i]));
  }
  return {range_ok && extrema_ok && round_trip <= 1e-9,
          std::string("range=") + (range_ok ? "ok" : "violated") + " extrema=" + (extrema_ok ? "exact" : "missed") +
              " round_trip=" + fmt(round_trip)};
}

// 5 and 6 -------------------------------------------------------------------

/// Synthetic benchmark: 200 seeded sequences of 400 frames with 8 joints.
/// The first 180 train the model; windows of the last 20 score it.
struct Benchmark {
  std::vector<data::UnitWindow> train;
  std::vector<data::UnitWindow> test;
  std::map<std::string, data::NormStats> test_stats;
};

cli::RunConfig benchmark_config(std::uint64_t seed) {
  cli::RunConfig c;
  cli::apply(c, {{"seed", std::to_string(seed)},
                 {"joints", "8"},
                 {"hidden", "64"},
                 {"lstm_layers", "1"},
                 {"bn_relu", "false"},
                 {"synth.sequences", "200"},
                 {"synth.actions", "200"},
                 {"synth.frames", "400"},
                 {"synth.freq_min", "0.1"},
                 {"synth.freq_max", "0.5"},
                 {"window.stride", "25"},
                 {"eval.stride", "25"}});
  cli::validate(c);
  return c;
}

Benchmark make_benchmark(const cli::RunConfig& c) {
  std::vector<data::MotionSequence> train_raw, test_raw;
  for (std::size_t i = 0; i < c.synth_sequences; ++i) {
    (i < 180 ? train_raw : test_raw).push_back(data::synth_generate(cli::synth_spec(c, i)));
  }
  const data::Dataset tr = data::normalize_dataset(train_raw), te = data::normalize_dataset(test_raw);
  Benchmark b;
  b.train = data::dataset_windows(tr, cli::detail::train_window_spec(c));
  b.test = data::dataset_windows(te, cli::detail::eval_window_spec(c));
  b.test_stats = te.stats;
  return b;
}

struct TrainedRun {
  double seconds = 0.0;
  train::EvalReport report;
};

TrainedRun train_and_evaluate(const cli::RunConfig& c, const Benchmark& b) {
  const auto t0 = Clock::now();
  model::PmsModel m(c.run.model);
  train::train_multistage(m, b.train, c.run.plan, c.run.train);
  TrainedRun r;
  r.seconds = seconds_since(t0);
  r.report = train::evaluate_model(m, b.test, {}, &b.test_stats);
  return r;
}

std::vector<TrainedRun> g_full_runs;

Outcome training_smoke() {
  std::size_t passed = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const cli::RunConfig c = benchmark_config(seed);
    const Benchmark b = make_benchmark(c);
    const TrainedRun r = train_and_evaluate(c, b);
    g_full_runs.push_back(r);
    const double gain = 1.0 - r.report.model.short_term / r.report.zero_velocity.short_term;
    const bool ok = r.seconds < 900.0 && gain >= 0.30;
    passed += ok;
    detail += "seed" + std::to_string(seed) + "{model=" + fmt(r.report.model.short_term) +
              " zero=" + fmt(r.report.zero_velocity.short_term) + " gain=" + fmt(100.0 * gain) +
              "% time=" + fmt(r.seconds) + "s} ";
    std::cerr << "  criterion 5 " << detail.substr(detail.rfind("seed")) << '\n';
  }
  detail += "passing_seeds=" + std::to_string(passed) + "/5";
  return {passed >= 4, detail};
}

Outcome ablation_direction() {
  const cli::RunConfig base = benchmark_config(1);
  const Benchmark b = make_benchmark(base);
  const double full = g_full_runs.empty() ? train_and_evaluate(base, b).report.model.average
                                          : g_full_runs.front().report.model.average;
  std::string detail = "full=" + fmt(full);
  bool pass = true;
  for (const char* variant : {"wo_t10", "wo_vf"}) {
    cli::RunConfig c = base;
    c.run = train::apply_ablation(c.run, variant);
    const double avg = train_and_evaluate(c, b).report.model.average;
    pass = pass && avg >= full;
    detail += std::string(" ") + variant + "=" + fmt(avg);
    std::cerr << "  criterion 6 " << variant << " average " << avg << " full " << full << '\n';
  }
  return {pass, detail};
}

// 7 ------------------------------------------------------------------------

Outcome rollout_protocol() {
  RngState rng(7070, Stream::test);
  model::ModelConfig c;
  c.joints = 4;
  c.hidden = 8;
  c.lstm_layers = 1;
  const model::PmsModel m(c);
  const Tensor window = random_window(rng, 50, 4);
  const Shape short_shape = model::predict_short(m, window).frames.dims();
  const Shape long_shape = model::predict_long(m, window, 25).frames.dims();

  ad::Tape tape;
  const auto vars = m.params().bind(tape);
  auto bn = m.bn_states();
  model::ForwardContext ctx{tape, vars, m.config(), bn, nn::Mode::infer, nullptr, 0.0};
  const auto frames = model::batch_frames(tape, 1, 50, 12, [&](std::size_t, std::size_t i) {
    return std::span<const double>(window.data() + i * 12, 12);
  });
  std::size_t steps = 0;
  model::forward_long(ctx, frames, 25, &steps);
  const bool pass = short_shape == Shape{10, 4, 3} && long_shape == Shape{25, 4, 3} && steps == 3;
  return {pass, "short=" + shape_string(short_shape) + " long=" + shape_string(long_shape) +
                    " inner_steps=" + std::to_string(steps)};
}

// 8 ------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "pms_cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "pms_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<std::string> quick{"--set", "hidden=16", "--set", "lstm_layers=2", "--set",
                                       "train.plan=2:0.005:standard,1:0.005:plus_5x_accumulated,1:0.001:plus_longterm"};
  bool ok = run({"synth", "--out", (root / "data").string(), "--sequences", "4", "--joints", "4", "--frames", "160",
                 "--seed", "8"}) == 0;
  for (const char* r : {"a", "b"}) {
    auto args = quick;
    args.insert(args.begin(), {"train", "--data", (root / "data").string(), "--out", (root / r).string(), "--seed", "8"});
    ok = ok && run(args) == 0;
    ok = ok && run({"eval", "--model", (root / r / "model.pms").string(), "--data", (root / "data").string(), "--out",
                    (root / r / "eval").string()}) == 0;
  }
  std::string detail = ok ? "model, checkpoints, log and eval report bit-identical" : "a run failed";
  bool same = ok;
  for (const char* f : {"model.pms", "model.stage1.pms", "model.stage2.pms", "model.stage3.pms", "train.log",
                        "eval/eval.kv", "eval/eval.txt"}) {
    if (same && !(fs::exists(root / "a" / f) && slurp(root / "a" / f) == slurp(root / "b" / f))) {
      same = false;
      detail = std::string(f) + " missing or different";
    }
  }
  fs::remove_all(root);
  return {same, detail};
}

}  // namespace

// With arguments, only the listed criterion numbers run.
int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient integrity", gradient_integrity},
      {"oracle equivalence", oracle_equivalence},
      {"structural identities", structural_identities},
      {"normalization", normalization},
      {"training smoke test", training_smoke},
      {"ablation direction", ablation_direction},
      {"rollout protocol", rollout_protocol},
      {"determinism", determinism}};
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int a = 1; a < argc; ++a) {
    const std::size_t n = std::strtoul(argv[a], nullptr, 10);
    if (n >= 1 && n <= criteria.size()) selected[n - 1] = true;
  }
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
