#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pnpe/bins.hpp"
#include "pnpe/common.hpp"
#include "pnpe/eval.hpp"
#include "pnpe/tensor.hpp"

namespace pnpe {

// Per-frame categorical distribution over the pitch bins of a grid.
struct Posteriorgram {
  int num_frames = 0;
  BinGrid grid;
  std::vector<float> probs;  // [frame][bin]

  Posteriorgram() = default;
  Posteriorgram(int frames, const BinGrid& g)
      : num_frames(frames), grid(g),
        probs(static_cast<std::size_t>(frames) * g.num_bins, 0.0f) {}

  float* row(int t) { return probs.data() + static_cast<std::size_t>(t) * grid.num_bins; }
  const float* row(int t) const {
    return probs.data() + static_cast<std::size_t>(t) * grid.num_bins;
  }
};

// Applies a numerically stable softmax to each frame of logits (batch, P, 1).
inline Posteriorgram softmax_posteriorgram(const Tensor3<float>& logits, const BinGrid& grid) {
  if (logits.channels != grid.num_bins)
    throw InvalidArgument("softmax_posteriorgram: logits do not match the grid");
  Posteriorgram post(logits.batch, grid);
  const int P = grid.num_bins;
  for (int b = 0; b < logits.batch; ++b) {
    const float* z = logits.row(b, 0);
    float zmax = z[0];
    for (int i = 1; i < P; ++i) zmax = std::max(zmax, z[i]);
    float* p = post.row(b);
    double sum = 0.0;
    for (int i = 0; i < P; ++i) {
      p[i] = std::exp(z[i] - zmax);
      sum += p[i];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int i = 0; i < P; ++i) p[i] *= inv;
  }
  return post;
}

// Estimated pitch, periodicity, and voicing decision per frame.
struct PitchTrack {
  std::vector<double> time_sec;
  std::vector<double> f0_hz;
  std::vector<double> periodicity;
  std::vector<bool> voiced;

  std::size_t size() const { return f0_hz.size(); }
};

inline int argmax_bin(const float* p, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (p[i] > p[best]) best = i;  // ties keep the lower bin
  return best;
}

// Candidate selection by argmax; ties break to the lower bin.
inline std::vector<double> decode_argmax(const Posteriorgram& post) {
  std::vector<double> f0(post.num_frames);
  for (int t = 0; t < post.num_frames; ++t)
    f0[static_cast<std::size_t>(t)] = post.grid.center(argmax_bin(post.row(t), post.grid.num_bins));
  return f0;
}

// Local expected value decoding: probability mass outside a window of
// window_bins bins around the argmax is discarded, the rest renormalized, and
// the expected value taken over bin centers in cents (the grid is uniform in
// cents, so symmetric mass lands exactly on the center bin). The window is
// truncated at the grid edges rather than shifted.
inline std::vector<double> decode_local_expected_value(const Posteriorgram& post,
                                                       int window_bins = 19) {
  if (window_bins < 1 || window_bins % 2 == 0)
    throw InvalidArgument("decode_local_expected_value: window must be odd and >= 1");
  const int P = post.grid.num_bins;
  const int half = (window_bins - 1) / 2;
  std::vector<double> f0(post.num_frames);
  for (int t = 0; t < post.num_frames; ++t) {
    const float* p = post.row(t);
    const int k = argmax_bin(p, P);
    const int lo = std::max(0, k - half);
    const int hi = std::min(P - 1, k + half);
    double mass = 0.0;
    for (int i = lo; i <= hi; ++i) mass += p[i];
    double mean_cents = 0.0;
    if (mass > 0.0) {
      for (int i = lo; i <= hi; ++i)
        mean_cents += (p[i] / mass) * post.grid.bin_cents(i);
    } else {
      mean_cents = post.grid.bin_cents(k);
    }
    f0[static_cast<std::size_t>(t)] = post.grid.cents_to_hz(mean_cents);
  }
  return f0;
}

// Periodicity as the peak posterior probability per frame.
inline std::vector<double> periodicity_max(const Posteriorgram& post) {
  std::vector<double> h(post.num_frames);
  for (int t = 0; t < post.num_frames; ++t) {
    const float* p = post.row(t);
    float v = p[0];
    for (int i = 1; i < post.grid.num_bins; ++i) v = std::max(v, p[i]);
    h[static_cast<std::size_t>(t)] = v;
  }
  return h;
}

// Periodicity from normalized entropy: 1 + (1/ln P) * sum p ln p, with
// 0 ln 0 = 0. Uniform rows give 0, one-hot rows give 1.
inline std::vector<double> periodicity_entropy(const Posteriorgram& post) {
  const int P = post.grid.num_bins;
  const double inv_log_p = 1.0 / std::log(static_cast<double>(P));
  std::vector<double> h(post.num_frames);
  for (int t = 0; t < post.num_frames; ++t) {
    const float* p = post.row(t);
    double acc = 0.0;
    for (int i = 0; i < P; ++i) {
      const double v = p[i];
      if (v > 0.0) acc += v * std::log(v);
    }
    h[static_cast<std::size_t>(t)] = std::clamp(1.0 + inv_log_p * acc, 0.0, 1.0);
  }
  return h;
}

// Voicing decision: strictly greater than the threshold.
inline std::vector<bool> voicing(const std::vector<double>& periodicity, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw InvalidArgument("voicing: threshold must be in [0, 1]");
  std::vector<bool> v(periodicity.size());
  for (std::size_t i = 0; i < periodicity.size(); ++i) v[i] = periodicity[i] > alpha;
  return v;
}

struct ThresholdSearchResult {
  double alpha = 0.0;
  double f1 = 0.0;
};

// Voicing threshold fit: coarse grid over {0.0..0.9} and {2^-1..2^-9}, then
// eight first-difference refinement steps with the step size halving from
// 0.05. A step where neither direction improves is skipped; the step size
// still halves. The incumbent never worsens.
inline ThresholdSearchResult search_threshold(const std::vector<double>& periodicity,
                                              const std::vector<bool>& reference_voiced) {
  if (periodicity.size() != reference_voiced.size())
    throw InvalidArgument("search_threshold: length mismatch");
  bool any_pos = false, any_neg = false;
  for (bool v : reference_voiced) (v ? any_pos : any_neg) = true;
  if (!any_pos || !any_neg)
    throw InvalidArgument("search_threshold: reference must contain both classes");

  auto f1_at = [&](double alpha) {
    return voicing_f1(reference_voiced, voicing(periodicity, alpha)).f1;
  };

  std::vector<double> coarse;
  for (int i = 0; i < 10; ++i) coarse.push_back(i * 0.1);
  for (int i = 1; i <= 9; ++i) coarse.push_back(std::pow(2.0, -i));

  ThresholdSearchResult best;
  best.alpha = coarse.front();
  best.f1 = f1_at(best.alpha);
  for (std::size_t i = 1; i < coarse.size(); ++i) {
    const double f = f1_at(coarse[i]);
    if (f > best.f1) best = {coarse[i], f};
  }

  double step = 0.05;
  for (int s = 0; s < 8; ++s) {
    const double up = std::min(1.0, best.alpha + step);
    const double down = std::max(0.0, best.alpha - step);
    const double f_up = f1_at(up);
    const double f_down = f1_at(down);
    if (f_up >= f_down && f_up > best.f1)
      best = {up, f_up};
    else if (f_down > best.f1)
      best = {down, f_down};
    step *= 0.5;
  }
  return best;
}

// ---------------------------------------------------------------------------
// PitchTrack CSV (time_sec,f0_hz,periodicity,voiced; six decimal places)
// ---------------------------------------------------------------------------

inline void write_pitch_track(const std::string& path, const PitchTrack& track) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "time_sec,f0_hz,periodicity,voiced\n";
  char line[128];
  for (std::size_t i = 0; i < track.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.6f,%.6f,%.6f,%d\n", track.time_sec[i], track.f0_hz[i],
                  track.periodicity[i], track.voiced[i] ? 1 : 0);
    out << line;
  }
  if (!out) throw IoError("short write to " + path);
}

inline PitchTrack read_pitch_track(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("time_sec,f0_hz,periodicity", 0) != 0)
    throw FormatError(path + ": missing pitch track header");
  PitchTrack track;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    double t, f0, h;
    int v;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%d", &t, &f0, &h, &v) != 4)
      throw FormatError(path + ": malformed row at line " + std::to_string(lineno));
    track.time_sec.push_back(t);
    track.f0_hz.push_back(f0);
    track.periodicity.push_back(h);
    track.voiced.push_back(v != 0);
  }
  return track;
}

}  // namespace pnpe
