#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "pnpe/data.hpp"
#include "pnpe/engine.hpp"
#include "pnpe/eval.hpp"
#include "pnpe/rng.hpp"
#include "support/oracles.hpp"

namespace {

struct RandomTrack {
  std::vector<double> ref, pred;
  std::vector<bool> ref_v, pred_v;
};

RandomTrack random_track(pnpe::Rng& rng, std::size_t n) {
  RandomTrack t;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = rng.uniform(40.0, 1500.0);
    t.ref.push_back(f);
    // prediction sometimes exact, sometimes off by noise or an octave
    const double roll = rng.uniform();
    double p = f;
    if (roll < 0.3)
      p = f * std::exp2(rng.uniform(-0.2, 0.2));
    else if (roll < 0.45)
      p = f * 2.0;
    else if (roll < 0.55)
      p = f * std::exp2(rng.uniform(-2.0, 2.0));
    t.pred.push_back(p);
    t.ref_v.push_back(rng.uniform() < 0.7);
    t.pred_v.push_back(rng.uniform() < 0.7);
  }
  // guarantee at least one scored frame
  t.ref_v[0] = true;
  return t;
}

}  // namespace

TEST_CASE("rpa basics", "[eval]") {
  const std::vector<double> ref = {100, 200, 300, 400};
  const std::vector<bool> voiced = {true, true, true, true};
  CHECK(pnpe::rpa(ref, voiced, ref) == 1.0);

  std::vector<double> octave = ref;
  for (double& f : octave) f *= 2.0;
  CHECK(pnpe::rpa(ref, voiced, octave) == 0.0);
  CHECK(pnpe::rca(ref, voiced, octave) == 1.0);

  // 10 frames, 3 with a 60 cent error, rest exact -> 0.7.
  std::vector<double> r(10, 220.0), p(10, 220.0);
  std::vector<bool> v(10, true);
  for (int i = 0; i < 3; ++i) p[static_cast<std::size_t>(i)] = 220.0 * std::exp2(60.0 / 1200.0);
  CHECK(pnpe::rpa(r, v, p) == Catch::Approx(0.7));

  CHECK_THROWS_AS(pnpe::rpa(r, v, std::vector<double>(9, 220.0)), pnpe::InvalidArgument);
  CHECK_THROWS_AS(pnpe::rpa(r, std::vector<bool>(10, false), p), pnpe::InvalidArgument);
}

TEST_CASE("rca folds octave errors symmetrically", "[eval]") {
  const std::vector<double> ref = {200.0};
  const std::vector<bool> v = {true};
  // 1150 cents sharp folds to 50 cents: counted correct.
  CHECK(pnpe::rca(ref, v, {200.0 * std::exp2(1150.0 / 1200.0)}) == 1.0);
  // 1150 cents flat folds the same way.
  CHECK(pnpe::rca(ref, v, {200.0 * std::exp2(-1150.0 / 1200.0)}) == 1.0);
  CHECK(pnpe::rca(ref, v, {200.0 * std::exp2(600.0 / 1200.0)}) == 0.0);
}

TEST_CASE("voicing f1 closed forms", "[eval]") {
  std::vector<bool> all(10, true), half(10, false), none(10, false);
  for (int i = 0; i < 5; ++i) half[static_cast<std::size_t>(i)] = true;

  CHECK(pnpe::voicing_f1(all, all).f1 == 1.0);
  const auto r = pnpe::voicing_f1(half, all);
  CHECK(r.precision == Catch::Approx(0.5));
  CHECK(r.recall == Catch::Approx(1.0));
  CHECK(r.f1 == Catch::Approx(2.0 / 3.0));

  std::vector<bool> a(10, false), b(10, false);
  a[0] = true;
  b[1] = true;
  CHECK(pnpe::voicing_f1(a, b).f1 == 0.0);
  CHECK(pnpe::voicing_f1(none, none).f1 == 0.0);
}

TEST_CASE("metrics match brute-force oracles on random tracks", "[eval]") {
  pnpe::Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    const RandomTrack t = random_track(rng, 50);
    CHECK(pnpe::rpa(t.ref, t.ref_v, t.pred) == oracle::brute_rpa(t.ref, t.ref_v, t.pred, 50.0));
    CHECK(pnpe::rca(t.ref, t.ref_v, t.pred) == oracle::brute_rca(t.ref, t.ref_v, t.pred, 50.0));
    CHECK(pnpe::voicing_f1(t.ref_v, t.pred_v).f1 == oracle::brute_f1(t.ref_v, t.pred_v));
    CHECK(pnpe::rca(t.ref, t.ref_v, t.pred) >= pnpe::rpa(t.ref, t.ref_v, t.pred));
  }
}

TEST_CASE("metrics are transposition invariant", "[eval]") {
  pnpe::Rng rng(505);
  const RandomTrack t = random_track(rng, 200);
  const double shift = 1.37;
  std::vector<double> ref2 = t.ref, pred2 = t.pred;
  for (double& f : ref2) f *= shift;
  for (double& f : pred2) f *= shift;
  CHECK(pnpe::rpa(t.ref, t.ref_v, t.pred) == pnpe::rpa(ref2, t.ref_v, pred2));
  CHECK(pnpe::rca(t.ref, t.ref_v, t.pred) == pnpe::rca(ref2, t.ref_v, pred2));
}

TEST_CASE("reference-unvoiced frames never affect pitch metrics", "[eval]") {
  pnpe::Rng rng(606);
  RandomTrack t = random_track(rng, 300);
  const double r1 = pnpe::rpa(t.ref, t.ref_v, t.pred);
  const double c1 = pnpe::rca(t.ref, t.ref_v, t.pred);
  const double d1 = pnpe::delta_cents(t.ref, t.ref_v, t.pred, t.pred_v);
  RandomTrack mutated = t;
  for (std::size_t i = 0; i < t.ref.size(); ++i)
    if (!t.ref_v[i]) {
      mutated.ref[i] = rng.uniform(40.0, 1500.0);
      mutated.pred[i] = rng.uniform(40.0, 1500.0);
    }
  CHECK(pnpe::rpa(mutated.ref, t.ref_v, mutated.pred) == r1);
  CHECK(pnpe::rca(mutated.ref, t.ref_v, mutated.pred) == c1);
  CHECK(pnpe::delta_cents(mutated.ref, t.ref_v, mutated.pred, t.pred_v) == d1);
}

TEST_CASE("delta cents scores the voicing intersection", "[eval]") {
  const std::vector<double> ref = {100, 100, 100, 100};
  const std::vector<double> pred = {100, 200, 100, 400};
  const std::vector<bool> ref_v = {true, true, true, false};
  const std::vector<bool> pred_v = {true, false, true, true};
  // Frames 0 and 2 qualify; both exact.
  CHECK(pnpe::delta_cents(ref, ref_v, pred, pred_v) == 0.0);
  // No qualifying frame: defined as zero.
  CHECK(pnpe::delta_cents(ref, {false, false, false, false}, pred, pred_v) == 0.0);
}

TEST_CASE("evaluate assembles the full report", "[eval]") {
  pnpe::Rng rng(707);
  const RandomTrack t = random_track(rng, 400);
  const pnpe::EvalReport r = pnpe::evaluate(t.ref, t.ref_v, t.pred, t.pred_v);
  CHECK(r.rca >= r.rpa);
  CHECK(r.rpa >= 0.0);
  CHECK(r.rpa <= 1.0);
  CHECK(r.f1 >= 0.0);
  CHECK(r.f1 <= 1.0);
  std::size_t voiced_count = 0;
  for (bool v : t.ref_v) voiced_count += v ? 1 : 0;
  CHECK(r.frames_scored == voiced_count);
}

TEST_CASE("benchmark_rtf measures the whole pipeline and is stable", "[eval]") {
  const auto dir = std::filesystem::temp_directory_path() / "pnpe_eval_rtf";
  std::filesystem::create_directories(dir);
  pnpe::SynthSpec spec;
  spec.duration_sec = 10.0;
  spec.seed = 12;
  const pnpe::AnnotatedClip clip = pnpe::synth_clip(spec);
  const std::string wav = (dir / "clip.wav").string();
  pnpe::write_wav(wav, clip.audio);

  pnpe::Engine engine(pnpe::tiny_config(), pnpe::BinGrid(32, 65.0, 150.0), 8000);
  pnpe::Rng rng(3);
  engine.net.init(rng);
  auto estimator = [&](const pnpe::AudioBuffer& buf) {
    return pnpe::estimate(engine, buf, 80, {}, 1);
  };
  CHECK_THROWS_AS(pnpe::benchmark_rtf(estimator, {}, dir.string(), 1), pnpe::InvalidArgument);

  const auto warmup = pnpe::benchmark_rtf(estimator, {wav}, (dir / "out").string(), 1);
  const auto a = pnpe::benchmark_rtf(estimator, {wav}, (dir / "out").string(), 1);
  const auto b = pnpe::benchmark_rtf(estimator, {wav}, (dir / "out").string(), 1);
  CHECK(warmup.audio_seconds == Catch::Approx(10.0).margin(0.01));
  CHECK(a.rtf == Catch::Approx(a.wall_seconds / a.audio_seconds));
  CHECK(a.thread_count == 1);
  CHECK(a.rtf > 0.0);
  CHECK(b.rtf > 0.0);
  // Warm-cache contract: repeat runs land close; a loose factor keeps this
  // meaningful on a noisy shared machine.
  const double ratio = a.rtf > b.rtf ? a.rtf / b.rtf : b.rtf / a.rtf;
  CHECK(ratio < 2.0);

  // Identical inputs produce byte-identical prediction files.
  std::ifstream f1(dir / "out" / "clip.csv", std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  CHECK(!s1.empty());
}
