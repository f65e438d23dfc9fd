#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pnpe/bins.hpp"
#include "pnpe/rng.hpp"

using pnpe::BinGrid;
using pnpe::cents_between;

TEST_CASE("cents_between basics", "[bins]") {
  CHECK(cents_between(440.0, 880.0) == Catch::Approx(1200.0));
  CHECK(cents_between(880.0, 440.0) == Catch::Approx(1200.0));
  CHECK(cents_between(123.4, 123.4) == 0.0);
  CHECK(cents_between(100.0, 103.0) == Catch::Approx(51.174).margin(0.01));
  CHECK_THROWS_AS(cents_between(0.0, 100.0), pnpe::InvalidArgument);
  CHECK_THROWS_AS(cents_between(100.0, -5.0), pnpe::InvalidArgument);
}

TEST_CASE("cents_between symmetry and triangle inequality", "[bins]") {
  pnpe::Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(20.0, 2000.0);
    const double b = rng.uniform(20.0, 2000.0);
    const double c = rng.uniform(20.0, 2000.0);
    CHECK(cents_between(a, b) == Catch::Approx(cents_between(b, a)));
    CHECK(cents_between(a, c) <= cents_between(a, b) + cents_between(b, c) + 1e-9);
  }
}

TEST_CASE("grid centers", "[bins]") {
  const BinGrid crepe(360, 31.0, 20.0);
  CHECK(crepe.center(0) == Catch::Approx(31.0));
  CHECK(crepe.center(60) == Catch::Approx(62.0));

  const BinGrid fcnf0(486, 30.0, 12.5);
  CHECK(fcnf0.center(485) == Catch::Approx(1000.0).epsilon(0.01));

  const BinGrid dflt;
  CHECK(dflt.num_bins == 1440);
  CHECK(dflt.center(0) == Catch::Approx(31.0));
  CHECK(dflt.fmax_hz() == Catch::Approx(1978.0).epsilon(0.01));
  CHECK_THROWS_AS(dflt.center(-1), pnpe::InvalidArgument);
  CHECK_THROWS_AS(dflt.center(1440), pnpe::InvalidArgument);

  for (int i = 1; i < dflt.num_bins; ++i) CHECK(dflt.center(i) > dflt.center(i - 1));
}

TEST_CASE("quantize roundtrip, ties, clamping", "[bins]") {
  const BinGrid grid;
  for (int k = 0; k < grid.num_bins; k += 7) CHECK(grid.quantize(grid.center(k)) == k);

  // Geometric mean of adjacent centers is the cents midpoint; ties go down.
  const double mid = std::sqrt(grid.center(100) * grid.center(101));
  const int q = grid.quantize(mid);
  CHECK((q == 100 || q == 101));
  CHECK(grid.quantize(20.0) == 0);
  CHECK(grid.quantize(5000.0) == grid.num_bins - 1);
  CHECK_THROWS_AS(grid.quantize(0.0), pnpe::InvalidArgument);
}

TEST_CASE("quantization error bounded by half a bin", "[bins]") {
  const BinGrid grid;
  pnpe::Rng rng(5);
  const double lo = 0.0, hi = grid.bin_cents(grid.num_bins - 1);
  for (int i = 0; i < 2000; ++i) {
    const double f = grid.cents_to_hz(rng.uniform(lo, hi));
    const int k = grid.quantize(f);
    CHECK(cents_between(f, grid.center(k)) <= grid.cents_per_bin / 2.0 + 1e-9);
  }
}

TEST_CASE("expected quantization error is a quarter bin", "[bins]") {
  // Uniform-in-cents pitch on the 5-cent grid: mean |error| = 1.25 cents.
  const BinGrid grid;
  pnpe::Rng rng(17);
  const double lo = 0.0, hi = grid.bin_cents(grid.num_bins - 1);
  double total = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double f = grid.cents_to_hz(rng.uniform(lo, hi));
    total += cents_between(f, grid.center(grid.quantize(f)));
  }
  const double mean = total / n;
  CHECK(mean == Catch::Approx(1.25).epsilon(0.05));
}

TEST_CASE("grid construction rejects degenerate lattices", "[bins]") {
  CHECK_THROWS_AS(BinGrid(1, 31.0, 5.0), pnpe::InvalidArgument);
  CHECK_THROWS_AS(BinGrid(10, -1.0, 5.0), pnpe::InvalidArgument);
  CHECK_THROWS_AS(BinGrid(10, 31.0, 0.0), pnpe::InvalidArgument);
}
