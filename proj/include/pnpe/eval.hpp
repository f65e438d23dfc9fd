#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pnpe/bins.hpp"
#include "pnpe/common.hpp"

namespace pnpe {

struct EvalReport {
  double delta_cents = 0.0;  // mean |cents| over frames voiced in both tracks
  double rpa = 0.0;
  double rca = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t frames_scored = 0;  // reference-voiced frames
};

struct RtfReport {
  double audio_seconds = 0.0;
  double wall_seconds = 0.0;
  double rtf = 0.0;
  int thread_count = 1;
};

namespace detail {

inline void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw InvalidArgument(std::string(what) + ": length mismatch");
}

}  // namespace detail

// Raw pitch accuracy: fraction of reference-voiced frames whose prediction is
// within eps cents of the reference.
inline double rpa(const std::vector<double>& ref_f0, const std::vector<bool>& ref_voiced,
                  const std::vector<double>& pred_f0, double eps_cents = 50.0) {
  detail::check_aligned(ref_f0.size(), ref_voiced.size(), "rpa");
  detail::check_aligned(ref_f0.size(), pred_f0.size(), "rpa");
  std::size_t scored = 0, hit = 0;
  for (std::size_t i = 0; i < ref_f0.size(); ++i) {
    if (!ref_voiced[i]) continue;
    ++scored;
    if (cents_between(ref_f0[i], pred_f0[i]) <= eps_cents) ++hit;
  }
  if (scored == 0) throw InvalidArgument("rpa: no reference-voiced frames to score");
  return static_cast<double>(hit) / static_cast<double>(scored);
}

// Chroma distance: absolute cents difference folded into [0, 600] so octave
// shifts cost nothing.
inline double chroma_cents(double ref_hz, double pred_hz) {
  if (!(ref_hz > 0.0) || !(pred_hz > 0.0))
    throw InvalidArgument("chroma_cents: frequencies must be positive");
  const double d = 1200.0 * std::log2(pred_hz / ref_hz);
  double m = std::fmod(d, 1200.0);
  if (m < 0.0) m += 1200.0;
  return std::min(m, 1200.0 - m);
}

// Raw chroma accuracy: as rpa but on the octave-folded error.
inline double rca(const std::vector<double>& ref_f0, const std::vector<bool>& ref_voiced,
                  const std::vector<double>& pred_f0, double eps_cents = 50.0) {
  detail::check_aligned(ref_f0.size(), ref_voiced.size(), "rca");
  detail::check_aligned(ref_f0.size(), pred_f0.size(), "rca");
  std::size_t scored = 0, hit = 0;
  for (std::size_t i = 0; i < ref_f0.size(); ++i) {
    if (!ref_voiced[i]) continue;
    ++scored;
    if (chroma_cents(ref_f0[i], pred_f0[i]) <= eps_cents) ++hit;
  }
  if (scored == 0) throw InvalidArgument("rca: no reference-voiced frames to score");
  return static_cast<double>(hit) / static_cast<double>(scored);
}

struct F1Result {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Voiced/unvoiced classification F1 with voiced as the positive class.
// Empty positive sets give precision/recall/F1 of 0.
inline F1Result voicing_f1(const std::vector<bool>& ref, const std::vector<bool>& pred) {
  detail::check_aligned(ref.size(), pred.size(), "voicing_f1");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i] && pred[i]) ++tp;
    else if (!ref[i] && pred[i]) ++fp;
    else if (ref[i] && !pred[i]) ++fn;
  }
  F1Result r;
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (r.precision + r.recall > 0.0)
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

// Mean absolute cents error over frames voiced in both reference and
// prediction (0 when no frame qualifies).
inline double delta_cents(const std::vector<double>& ref_f0, const std::vector<bool>& ref_voiced,
                          const std::vector<double>& pred_f0,
                          const std::vector<bool>& pred_voiced) {
  detail::check_aligned(ref_f0.size(), ref_voiced.size(), "delta_cents");
  detail::check_aligned(ref_f0.size(), pred_f0.size(), "delta_cents");
  detail::check_aligned(ref_f0.size(), pred_voiced.size(), "delta_cents");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ref_f0.size(); ++i) {
    if (!ref_voiced[i] || !pred_voiced[i]) continue;
    sum += cents_between(ref_f0[i], pred_f0[i]);
    ++n;
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

inline EvalReport evaluate(const std::vector<double>& ref_f0, const std::vector<bool>& ref_voiced,
                           const std::vector<double>& pred_f0,
                           const std::vector<bool>& pred_voiced, double eps_cents = 50.0) {
  EvalReport r;
  r.delta_cents = delta_cents(ref_f0, ref_voiced, pred_f0, pred_voiced);
  r.rpa = rpa(ref_f0, ref_voiced, pred_f0, eps_cents);
  r.rca = rca(ref_f0, ref_voiced, pred_f0, eps_cents);
  const F1Result f = voicing_f1(ref_voiced, pred_voiced);
  r.f1 = f.f1;
  r.precision = f.precision;
  r.recall = f.recall;
  for (bool v : ref_voiced) r.frames_scored += v ? 1 : 0;
  return r;
}

}  // namespace pnpe
