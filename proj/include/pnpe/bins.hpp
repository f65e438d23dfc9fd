#pragma once

#include <cmath>
#include <cstdint>

#include "pnpe/common.hpp"

namespace pnpe {

// Absolute distance between two frequencies in cents (1200 per octave).
inline double cents_between(double hz_a, double hz_b) {
  if (!(hz_a > 0.0) || !(hz_b > 0.0))
    throw InvalidArgument("cents_between: frequencies must be positive");
  return std::abs(1200.0 * std::log2(hz_a / hz_b));
}

// Log-frequency quantization lattice. Bin i is centered at
// fmin * 2^(i*cents_per_bin/1200); centers are uniformly spaced in cents.
struct BinGrid {
  int num_bins = 1440;
  double fmin_hz = 31.0;
  double cents_per_bin = 5.0;

  BinGrid() = default;
  BinGrid(int bins, double fmin, double width) : num_bins(bins), fmin_hz(fmin), cents_per_bin(width) {
    if (num_bins < 2 || !(fmin_hz > 0.0) || !(cents_per_bin > 0.0))
      throw InvalidArgument("BinGrid: need num_bins >= 2, fmin > 0, cents_per_bin > 0");
  }

  // Cents of bin i above fmin.
  double bin_cents(double i) const { return i * cents_per_bin; }

  double cents_to_hz(double cents) const { return fmin_hz * std::exp2(cents / 1200.0); }

  double hz_to_cents(double hz) const {
    if (!(hz > 0.0)) throw InvalidArgument("BinGrid: frequency must be positive");
    return 1200.0 * std::log2(hz / fmin_hz);
  }

  double center(int i) const {
    if (i < 0 || i >= num_bins) throw InvalidArgument("BinGrid::center: index out of range");
    return cents_to_hz(bin_cents(i));
  }

  double fmax_hz() const { return cents_to_hz(bin_cents(num_bins - 1)); }

  // Nearest bin in cents distance; out-of-range input clamps to the edge
  // bins, exact midpoints resolve to the lower bin.
  int quantize(double f0_hz) const {
    const double pos = hz_to_cents(f0_hz) / cents_per_bin;
    int lo = static_cast<int>(std::floor(pos));
    if (lo < 0) return 0;
    if (lo >= num_bins - 1) return num_bins - 1;
    return (pos - lo > 0.5) ? lo + 1 : lo;
  }
};

}  // namespace pnpe
