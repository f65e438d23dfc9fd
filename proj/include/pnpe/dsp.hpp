#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pnpe/audio.hpp"
#include "pnpe/common.hpp"
#include "pnpe/decode.hpp"
#include "pnpe/thread_pool.hpp"

namespace pnpe {

// Cumulative mean-normalized difference of one analysis frame; the classic
// autocorrelation-family candidate generating function.
struct CmndFrame {
  std::vector<double> d;  // indexed by lag, d[0] = 1
  bool aperiodic = false; // all-zero (degenerate) input
};

inline CmndFrame cmnd(const std::vector<float>& samples, int max_lag) {
  const int n = static_cast<int>(samples.size());
  if (max_lag < 1 || n < 2 * max_lag)
    throw InvalidArgument("cmnd: frame must be at least twice max_lag");
  const int window = n - max_lag;  // fixed integration window for every lag

  CmndFrame out;
  out.d.assign(static_cast<std::size_t>(max_lag) + 1, 1.0);
  std::vector<double> diff(static_cast<std::size_t>(max_lag) + 1, 0.0);
  for (int tau = 1; tau <= max_lag; ++tau) {
    double acc = 0.0;
    const float* a = samples.data();
    const float* b = samples.data() + tau;
    for (int t = 0; t < window; ++t) {
      const double d = static_cast<double>(a[t]) - static_cast<double>(b[t]);
      acc += d * d;
    }
    diff[static_cast<std::size_t>(tau)] = acc;
  }
  double running = 0.0;
  for (int tau = 1; tau <= max_lag; ++tau) {
    running += diff[static_cast<std::size_t>(tau)];
    if (running <= 0.0) {
      out.aperiodic = true;  // silent frame; leave d' at 1
      continue;
    }
    out.d[static_cast<std::size_t>(tau)] = diff[static_cast<std::size_t>(tau)] * tau / running;
  }
  return out;
}

struct DspOptions {
  double fmin_hz = 31.0;
  double fmax_hz = 1978.0;
  double voicing_threshold = 0.5;
  // First d' dip below this wins; period multiples have comparable minima,
  // so a plain global argmin would favor subharmonics.
  double dip_threshold = 0.1;
};

// Frame-wise pitch track from the CMND minimum with parabolic refinement of
// the lag. Periodicity is 1 - min d', clamped to [0, 1].
inline PitchTrack dsp_estimate(const AudioBuffer& buf, const FrameSpec& spec,
                               const DspOptions& opt = {}, unsigned threads = 0) {
  const std::vector<std::vector<float>> frames = frame(buf, spec);
  const int sr = buf.sample_rate;
  const int lag_min = std::max(1, static_cast<int>(std::floor(sr / opt.fmax_hz)));
  int max_lag = static_cast<int>(std::ceil(sr / opt.fmin_hz));
  max_lag = std::min(max_lag, spec.window_size / 2);

  PitchTrack track;
  track.time_sec.resize(frames.size());
  track.f0_hz.resize(frames.size());
  track.periodicity.resize(frames.size());
  track.voiced.resize(frames.size());

  parallel_for(frames.size(), [&](std::size_t t) {
    track.time_sec[t] = static_cast<double>(frame_center(spec, static_cast<std::int64_t>(t))) / sr;
    const CmndFrame c = cmnd(frames[t], max_lag);
    if (c.aperiodic) {
      track.f0_hz[t] = opt.fmin_hz;
      track.periodicity[t] = 0.0;
      track.voiced[t] = false;
      return;
    }
    int best = -1;
    for (int tau = lag_min; tau <= max_lag; ++tau) {
      if (c.d[static_cast<std::size_t>(tau)] < opt.dip_threshold) {
        while (tau + 1 <= max_lag &&
               c.d[static_cast<std::size_t>(tau + 1)] < c.d[static_cast<std::size_t>(tau)])
          ++tau;
        best = tau;
        break;
      }
    }
    if (best < 0) {
      best = lag_min;
      for (int tau = lag_min; tau <= max_lag; ++tau)
        if (c.d[static_cast<std::size_t>(tau)] < c.d[static_cast<std::size_t>(best)]) best = tau;
    }
    // Parabolic interpolation around the minimum for sub-sample lag.
    double lag = best;
    if (best > lag_min && best < max_lag) {
      const double s0 = c.d[static_cast<std::size_t>(best - 1)];
      const double s1 = c.d[static_cast<std::size_t>(best)];
      const double s2 = c.d[static_cast<std::size_t>(best + 1)];
      const double denom = 2.0 * (2.0 * s1 - s2 - s0);
      if (denom != 0.0) lag = best + (s2 - s0) / denom;
    }
    const double f0 = std::clamp(sr / lag, opt.fmin_hz, opt.fmax_hz);
    const double h = std::clamp(1.0 - c.d[static_cast<std::size_t>(best)], 0.0, 1.0);
    track.f0_hz[t] = f0;
    track.periodicity[t] = h;
    track.voiced[t] = h > opt.voicing_threshold;
  }, threads);
  return track;
}

}  // namespace pnpe
