#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pnpe/decode.hpp"
#include "pnpe/rng.hpp"

using pnpe::BinGrid;
using pnpe::Posteriorgram;

namespace {

Posteriorgram random_posteriorgram(int frames, const BinGrid& grid, pnpe::Rng& rng,
                                   double sharpness = 3.0) {
  Posteriorgram post(frames, grid);
  for (int t = 0; t < frames; ++t) {
    float* p = post.row(t);
    double sum = 0.0;
    for (int i = 0; i < grid.num_bins; ++i) {
      p[i] = static_cast<float>(std::exp(sharpness * rng.uniform()));
      sum += p[i];
    }
    for (int i = 0; i < grid.num_bins; ++i) p[i] = static_cast<float>(p[i] / sum);
  }
  return post;
}

Posteriorgram one_hot(const BinGrid& grid, int bin) {
  Posteriorgram post(1, grid);
  post.row(0)[bin] = 1.0f;
  return post;
}

}  // namespace

TEST_CASE("argmax decoding and tie-breaking", "[decode]") {
  const BinGrid grid;
  CHECK(pnpe::decode_argmax(one_hot(grid, 42))[0] == grid.center(42));

  Posteriorgram uniform(1, grid);
  for (int i = 0; i < grid.num_bins; ++i) uniform.row(0)[i] = 1.0f / grid.num_bins;
  CHECK(pnpe::decode_argmax(uniform)[0] == grid.center(0));

  Posteriorgram two_peaks(1, grid);
  two_peaks.row(0)[10] = 0.5f;
  two_peaks.row(0)[900] = 0.5f;
  CHECK(pnpe::decode_argmax(two_peaks)[0] == grid.center(10));
}

TEST_CASE("local expected value decoding", "[decode]") {
  const BinGrid grid;
  // Degenerate distribution: any window returns the center exactly.
  for (int w : {1, 5, 19}) CHECK(pnpe::decode_local_expected_value(one_hot(grid, 77), w)[0] == grid.center(77));

  // Symmetric triangular mass around bin k lands exactly on center(k).
  Posteriorgram tri(1, grid);
  tri.row(0)[99] = 0.25f;
  tri.row(0)[100] = 0.5f;
  tri.row(0)[101] = 0.25f;
  CHECK(pnpe::decode_local_expected_value(tri, 19)[0] ==
        Catch::Approx(grid.center(100)).epsilon(1e-12));

  // 0.6/0.4 mass on adjacent bins: 0.4 bins above k, in cents.
  Posteriorgram two(1, grid);
  two.row(0)[200] = 0.6f;
  two.row(0)[201] = 0.4f;
  const double expect =
      grid.center(200) * std::exp2((0.4 * grid.cents_per_bin) / 1200.0);
  // closed form within 1e-9 relative (float posterior mass rounds the 0.4)
  const double w0 = 0.6f, w1 = 0.4f;
  const double exact =
      grid.cents_to_hz((w0 * grid.bin_cents(200) + w1 * grid.bin_cents(201)) / (w0 + w1));
  CHECK(pnpe::decode_local_expected_value(two, 19)[0] == Catch::Approx(exact).epsilon(1e-9));
  CHECK(pnpe::decode_local_expected_value(two, 19)[0] == Catch::Approx(expect).epsilon(1e-6));

  CHECK_THROWS_AS(pnpe::decode_local_expected_value(two, 4), pnpe::InvalidArgument);
  CHECK_THROWS_AS(pnpe::decode_local_expected_value(two, -1), pnpe::InvalidArgument);
}

TEST_CASE("window of one equals argmax exactly", "[decode]") {
  const BinGrid grid;
  pnpe::Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const Posteriorgram post = random_posteriorgram(4, grid, rng);
    const auto a = pnpe::decode_argmax(post);
    const auto b = pnpe::decode_local_expected_value(post, 1);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("window truncates and renormalizes at grid edges", "[decode]") {
  const BinGrid grid;
  Posteriorgram post(1, grid);
  post.row(0)[0] = 0.7f;
  post.row(0)[1] = 0.3f;
  const double f = pnpe::decode_local_expected_value(post, 19)[0];
  // Window [0, 9]; mass renormalizes over it, expectation stays in range.
  const double exact = grid.cents_to_hz((0.7f * grid.bin_cents(0) + static_cast<double>(0.3f) *
                                         grid.bin_cents(1)) / (0.7f + static_cast<double>(0.3f)));
  CHECK(f == Catch::Approx(exact).epsilon(1e-9));
  CHECK(f >= grid.center(0));
  CHECK(f <= grid.center(1));
}

TEST_CASE("periodicity measures on canonical rows", "[decode]") {
  const BinGrid grid;
  const Posteriorgram hot = one_hot(grid, 5);
  CHECK(pnpe::periodicity_max(hot)[0] == 1.0);
  CHECK(pnpe::periodicity_entropy(hot)[0] == Catch::Approx(1.0).margin(1e-9));

  Posteriorgram uniform(1, grid);
  for (int i = 0; i < grid.num_bins; ++i) uniform.row(0)[i] = 1.0f / grid.num_bins;
  CHECK(pnpe::periodicity_max(uniform)[0] == Catch::Approx(1.0 / grid.num_bins));
  CHECK(pnpe::periodicity_entropy(uniform)[0] == Catch::Approx(0.0).margin(1e-6));

  Posteriorgram two(1, grid);
  two.row(0)[100] = 0.5f;
  two.row(0)[800] = 0.5f;
  CHECK(pnpe::periodicity_max(two)[0] == 0.5);
  const double expect = 1.0 - std::log(2.0) / std::log(1440.0);
  CHECK(pnpe::periodicity_entropy(two)[0] == Catch::Approx(expect).margin(1e-9));
  CHECK(pnpe::periodicity_entropy(two)[0] == Catch::Approx(0.9047).margin(1e-4));
}

TEST_CASE("periodicity bounds and uniform mixing never increase entropy periodicity",
          "[decode]") {
  const BinGrid grid(64, 31.0, 100.0);
  pnpe::Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    Posteriorgram post = random_posteriorgram(1, grid, rng, rng.uniform(0.0, 8.0));
    const double h = pnpe::periodicity_entropy(post)[0];
    const double m = pnpe::periodicity_max(post)[0];
    CHECK(h >= 0.0);
    CHECK(h <= 1.0);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
    const double lambda = rng.uniform();
    Posteriorgram mixed = post;
    for (int i = 0; i < grid.num_bins; ++i)
      mixed.row(0)[i] = static_cast<float>((1.0 - lambda) * post.row(0)[i] +
                                           lambda / grid.num_bins);
    CHECK(pnpe::periodicity_entropy(mixed)[0] <= h + 1e-7);
  }
}

TEST_CASE("voicing thresholding is strict", "[decode]") {
  const std::vector<double> h = {0.0, 0.5, 0.5000001, 1.0};
  const auto v = pnpe::voicing(h, 0.5);
  CHECK_FALSE(v[0]);
  CHECK_FALSE(v[1]);  // equality is unvoiced
  CHECK(v[2]);
  CHECK(v[3]);
  const auto all = pnpe::voicing(h, 0.0);
  CHECK_FALSE(all[0]);
  CHECK(all[1]);
  const auto none = pnpe::voicing(h, 1.0);
  for (bool b : none) CHECK_FALSE(b);
  CHECK_THROWS_AS(pnpe::voicing(h, 1.5), pnpe::InvalidArgument);
}

TEST_CASE("threshold search on a separable case", "[decode]") {
  std::vector<double> h;
  std::vector<bool> v;
  pnpe::Rng rng(8);
  for (int i = 0; i < 400; ++i) {
    const bool voiced = rng.uniform() < 0.6;
    h.push_back(voiced ? 1.0 : 0.0);
    v.push_back(voiced);
  }
  const auto r = pnpe::search_threshold(h, v);
  CHECK(r.f1 == 1.0);
  CHECK(r.alpha < 1.0);
  // Any threshold strictly inside (0, 1) separates perfectly too.
  CHECK(pnpe::voicing_f1(v, pnpe::voicing(h, 0.5)).f1 == 1.0);
}

TEST_CASE("threshold search never loses to the coarse grid", "[decode]") {
  pnpe::Rng rng(91);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> h;
    std::vector<bool> v;
    for (int i = 0; i < 1000; ++i) {
      const bool voiced = rng.uniform() < 0.5;
      // noisy periodicity correlated with voicing
      h.push_back(std::clamp(rng.normal(voiced ? 0.7 : 0.3, 0.15), 0.0, 1.0));
      v.push_back(voiced);
    }
    const auto r = pnpe::search_threshold(h, v);
    std::vector<double> coarse;
    for (int i = 0; i < 10; ++i) coarse.push_back(i * 0.1);
    for (int i = 1; i <= 9; ++i) coarse.push_back(std::pow(2.0, -i));
    for (double a : coarse)
      CHECK(r.f1 >= pnpe::voicing_f1(v, pnpe::voicing(h, a)).f1 - 1e-12);
  }
}

TEST_CASE("inverted periodicities fall back to the all-voiced baseline", "[decode]") {
  pnpe::Rng rng(14);
  std::vector<double> h;
  std::vector<bool> v;
  for (int i = 0; i < 500; ++i) {
    const bool voiced = rng.uniform() < 0.7;
    v.push_back(voiced);
    h.push_back(voiced ? 0.1 : 0.9);  // exactly wrong
  }
  const auto r = pnpe::search_threshold(h, v);
  // Exhaustive sweep oracle.
  double best = 0.0;
  for (int i = 0; i <= 1000; ++i)
    best = std::max(best, pnpe::voicing_f1(v, pnpe::voicing(h, i * 1e-3)).f1);
  CHECK(r.f1 == Catch::Approx(best).margin(1e-12));
  // Best achievable is predicting everything voiced (threshold below 0.1).
  const double all_voiced = pnpe::voicing_f1(v, pnpe::voicing(h, 0.0)).f1;
  CHECK(best == Catch::Approx(all_voiced).margin(1e-12));
}

TEST_CASE("local expected value avoids banding under requantization", "[decode]") {
  // True pitches lie between bin centers; posterior bumps are centered on the
  // true cents value. Requantizing decoded pitch onto a misaligned 20-cent
  // grid compounds the 5-cent quantization of argmax but not the sub-bin
  // output of local expected value decoding.
  const BinGrid grid;
  pnpe::Rng rng(77);
  const int frames = 400;
  Posteriorgram post(frames, grid);
  std::vector<double> truth(frames);
  for (int t = 0; t < frames; ++t) {
    const double cents = rng.uniform(grid.bin_cents(200), grid.bin_cents(1200));
    truth[static_cast<std::size_t>(t)] = grid.cents_to_hz(cents);
    float* p = post.row(t);
    double sum = 0.0;
    for (int i = 0; i < grid.num_bins; ++i) {
      const double z = (grid.bin_cents(i) - cents) / 25.0;
      p[i] = static_cast<float>(std::exp(-0.5 * z * z));
      sum += p[i];
    }
    for (int i = 0; i < grid.num_bins; ++i) p[i] = static_cast<float>(p[i] / sum);
  }
  const auto f_argmax = pnpe::decode_argmax(post);
  const auto f_weighted = pnpe::decode_local_expected_value(post, 19);

  // 20-cent grid shifted half a cell against the 5-cent lattice.
  auto requantize = [&](double hz) {
    const double cents = grid.hz_to_cents(hz) + 10.0;
    return grid.cents_to_hz(std::round(cents / 20.0) * 20.0 - 10.0);
  };
  double err_argmax = 0.0, err_weighted = 0.0;
  for (int t = 0; t < frames; ++t) {
    err_argmax += pnpe::cents_between(requantize(f_argmax[static_cast<std::size_t>(t)]),
                                      truth[static_cast<std::size_t>(t)]);
    err_weighted += pnpe::cents_between(requantize(f_weighted[static_cast<std::size_t>(t)]),
                                        truth[static_cast<std::size_t>(t)]);
  }
  CHECK(err_weighted / frames < err_argmax / frames);
}

TEST_CASE("threshold search lands within 0.002 of a fine sweep on a unimodal landscape",
          "[decode]") {
  pnpe::Rng rng(55);
  std::vector<double> h;
  std::vector<bool> v;
  for (int i = 0; i < 1000; ++i) {
    const bool voiced = rng.uniform() < 0.65;
    h.push_back(std::clamp(rng.normal(voiced ? 0.75 : 0.25, 0.12), 0.0, 1.0));
    v.push_back(voiced);
  }
  const auto r = pnpe::search_threshold(h, v);
  double best = 0.0;
  for (int i = 0; i <= 10000; ++i)
    best = std::max(best, pnpe::voicing_f1(v, pnpe::voicing(h, i * 1e-4)).f1);
  CHECK(best - r.f1 <= 0.002);
}

TEST_CASE("threshold search rejects degenerate references", "[decode]") {
  const std::vector<double> h = {0.1, 0.9};
  CHECK_THROWS_AS(pnpe::search_threshold(h, std::vector<bool>{true, true}),
                  pnpe::InvalidArgument);
  CHECK_THROWS_AS(pnpe::search_threshold(h, std::vector<bool>{false, false}),
                  pnpe::InvalidArgument);
}

TEST_CASE("pitch track csv round trip", "[decode][formats]") {
  pnpe::PitchTrack track;
  pnpe::Rng rng(3);
  for (int i = 0; i < 64; ++i) {
    track.time_sec.push_back(i * 0.01);
    track.f0_hz.push_back(rng.uniform(31.0, 1900.0));
    track.periodicity.push_back(rng.uniform(0.0, 1.0));
    track.voiced.push_back(rng.uniform() < 0.5);
  }
  const auto dir = std::filesystem::temp_directory_path() / "pnpe_decode_tests";
  std::filesystem::create_directories(dir);
  const std::string p1 = (dir / "track.csv").string();
  const std::string p2 = (dir / "track2.csv").string();
  pnpe::write_pitch_track(p1, track);
  const pnpe::PitchTrack back = pnpe::read_pitch_track(p1);
  REQUIRE(back.size() == track.size());
  for (std::size_t i = 0; i < track.size(); ++i) {
    CHECK(std::abs(back.time_sec[i] - track.time_sec[i]) <= 5e-7);
    CHECK(std::abs(back.f0_hz[i] - track.f0_hz[i]) <= 5e-7);
    CHECK(std::abs(back.periodicity[i] - track.periodicity[i]) <= 5e-7);
    CHECK(back.voiced[i] == track.voiced[i]);
  }
  // Write -> read -> write is byte-stable at 6 decimals.
  pnpe::write_pitch_track(p2, back);
  std::ifstream f1(p1), f2(p2);
  const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);

  CHECK_THROWS_AS(pnpe::read_pitch_track("/nonexistent/x.csv"), pnpe::IoError);
}
