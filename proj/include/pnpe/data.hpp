#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "pnpe/audio.hpp"
#include "pnpe/bins.hpp"
#include "pnpe/common.hpp"
#include "pnpe/rng.hpp"
#include "pnpe/training.hpp"

namespace pnpe {

// Per-frame ground truth; center_sample uses CenterAtZero semantics (frame t
// of a matching FrameSpec is centered on center_sample[t]).
struct Annotations {
  std::vector<std::int64_t> center_sample;
  std::vector<double> f0_hz;  // 0 => unvoiced
  std::vector<bool> voiced;

  std::size_t size() const { return f0_hz.size(); }
};

struct AnnotatedClip {
  AudioBuffer audio;
  Annotations ann;
};

// Synthetic clip recipe: harmonic tone with a smoothed random-walk pitch
// contour and vibrato, interleaved with white-noise segments, plus a
// background noise floor at the given SNR. Stands in for real corpora at
// desk scale.
struct SynthSpec {
  double f0_min_hz = 65.0;
  double f0_max_hz = 1000.0;
  int harmonics = 4;
  double vibrato_cents = 12.0;
  double vibrato_hz = 5.0;
  double noise_snr_db = 25.0;  // use INFINITY for a noiseless clip
  double unvoiced_fraction = 0.3;
  double duration_sec = 2.5;
  int sample_rate = 8000;
  std::uint64_t seed = 0;
};

namespace detail {

// Catmull-Rom interpolation of control points spaced dt apart.
inline double catmull_rom(const std::vector<double>& pts, double t, double dt) {
  const int n = static_cast<int>(pts.size());
  int i = static_cast<int>(t / dt);
  i = std::clamp(i, 0, n - 2);
  const double u = t / dt - i;
  const double p0 = pts[static_cast<std::size_t>(std::max(i - 1, 0))];
  const double p1 = pts[static_cast<std::size_t>(i)];
  const double p2 = pts[static_cast<std::size_t>(i + 1)];
  const double p3 = pts[static_cast<std::size_t>(std::min(i + 2, n - 1))];
  const double a = 0.5 * (-p0 + 3.0 * p1 - 3.0 * p2 + p3);
  const double b = 0.5 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3);
  const double c = 0.5 * (-p0 + p2);
  return ((a * u + b) * u + c) * u + p1;
}

}  // namespace detail

inline AnnotatedClip synth_clip(const SynthSpec& spec, int annotation_hop = 80) {
  if (!(spec.f0_min_hz > 0.0) || !(spec.f0_max_hz > spec.f0_min_hz))
    throw InvalidArgument("synth_clip: bad f0 range");
  if (spec.unvoiced_fraction < 0.0 || spec.unvoiced_fraction >= 1.0)
    throw InvalidArgument("synth_clip: unvoiced_fraction must be in [0, 1)");
  if (spec.harmonics < 1) throw InvalidArgument("synth_clip: need at least one harmonic");
  if (spec.duration_sec <= 0.0 || spec.sample_rate <= 0)
    throw InvalidArgument("synth_clip: bad duration or sample rate");

  Rng rng(spec.seed);
  const int sr = spec.sample_rate;
  const std::int64_t n = static_cast<std::int64_t>(spec.duration_sec * sr);

  // Voiced/unvoiced segmentation, 0.4-1.0 s pieces.
  struct Segment {
    std::int64_t begin, end;
    bool voiced;
  };
  std::vector<Segment> segments;
  std::int64_t pos = 0;
  while (pos < n) {
    std::int64_t len = static_cast<std::int64_t>(rng.uniform(0.4, 1.0) * sr);
    len = std::min(len, n - pos);
    const bool unvoiced = rng.uniform() < spec.unvoiced_fraction;
    segments.push_back({pos, pos + len, !unvoiced});
    pos += len;
  }

  // Pitch contour: clamped random walk over control points every 250 ms,
  // smoothed, plus vibrato.
  const double dt = 0.25;
  const int npts = static_cast<int>(spec.duration_sec / dt) + 3;
  const double clo = 1200.0 * std::log2(spec.f0_min_hz);
  const double chi = 1200.0 * std::log2(spec.f0_max_hz);
  std::vector<double> pts(static_cast<std::size_t>(npts));
  pts[0] = rng.uniform(clo, chi);
  for (int i = 1; i < npts; ++i)
    pts[static_cast<std::size_t>(i)] =
        std::clamp(pts[static_cast<std::size_t>(i - 1)] + rng.normal(0.0, 150.0), clo, chi);
  const double vib_phase = rng.uniform(0.0, 6.283185307179586);

  std::vector<double> f0(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    double cents = detail::catmull_rom(pts, t, dt);
    cents += spec.vibrato_cents * std::sin(6.283185307179586 * spec.vibrato_hz * t + vib_phase);
    f0[static_cast<std::size_t>(i)] = std::exp2(cents / 1200.0);
  }

  // Harmonic tone with 1/k amplitudes, RMS-normalized.
  std::vector<double> tone(static_cast<std::size_t>(n), 0.0);
  double phase = 0.0;
  double sq = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    phase += 6.283185307179586 * f0[static_cast<std::size_t>(i)] / sr;
    double v = 0.0;
    for (int k = 1; k <= spec.harmonics; ++k) v += std::sin(k * phase) / k;
    tone[static_cast<std::size_t>(i)] = v;
    sq += v * v;
  }
  const double tone_rms = 0.35;
  const double scale = tone_rms / std::max(1e-12, std::sqrt(sq / static_cast<double>(n)));
  for (double& v : tone) v *= scale;

  // Gate the tone by the voiced mask with 10 ms raised-cosine fades.
  std::vector<double> gate(static_cast<std::size_t>(n), 0.0);
  const std::int64_t fade = sr / 100;
  for (const Segment& s : segments) {
    if (!s.voiced) continue;
    for (std::int64_t i = s.begin; i < s.end; ++i) gate[static_cast<std::size_t>(i)] = 1.0;
    for (std::int64_t k = 0; k < fade; ++k) {
      const double w = 0.5 - 0.5 * std::cos(3.141592653589793 * k / fade);
      if (s.begin > 0 && s.begin + k < s.end) gate[static_cast<std::size_t>(s.begin + k)] = w;
      if (s.end < n && s.end - 1 - k >= s.begin)
        gate[static_cast<std::size_t>(s.end - 1 - k)] =
            std::min(gate[static_cast<std::size_t>(s.end - 1 - k)], w);
    }
  }

  AnnotatedClip clip;
  clip.audio.sample_rate = sr;
  clip.audio.samples.resize(static_cast<std::size_t>(n));
  const double noise_rms = std::isinf(spec.noise_snr_db)
                               ? 0.0
                               : tone_rms * std::pow(10.0, -spec.noise_snr_db / 20.0);
  for (std::int64_t i = 0; i < n; ++i) {
    double v = tone[static_cast<std::size_t>(i)] * gate[static_cast<std::size_t>(i)];
    if (noise_rms > 0.0) v += rng.normal(0.0, noise_rms);
    clip.audio.samples[static_cast<std::size_t>(i)] = static_cast<float>(v);
  }
  // Unvoiced segments carry their own noise burst at a per-segment level, so
  // voicing cannot be inferred from energy alone.
  for (const Segment& s : segments) {
    if (s.voiced) continue;
    const double level_db = rng.uniform(-32.0, -8.0);
    const double burst_rms = tone_rms * std::pow(10.0, level_db / 20.0);
    for (std::int64_t i = s.begin; i < s.end; ++i)
      clip.audio.samples[static_cast<std::size_t>(i)] +=
          static_cast<float>(rng.normal(0.0, burst_rms));
  }

  // Ground truth sampled at CenterAtZero frame centers; the final frame's
  // center can land one past the signal and follows the last segment.
  const std::int64_t frames = n / annotation_hop + 1;
  for (std::int64_t t = 0; t < frames; ++t) {
    const std::int64_t c = t * annotation_hop;
    const std::int64_t lookup = std::min(c, n - 1);
    bool voiced = false;
    for (const Segment& s : segments)
      if (s.voiced && lookup >= s.begin && lookup < s.end) voiced = true;
    clip.ann.center_sample.push_back(c);
    clip.ann.f0_hz.push_back(voiced ? f0[static_cast<std::size_t>(lookup)] : 0.0);
    clip.ann.voiced.push_back(voiced);
  }
  return clip;
}

// ---------------------------------------------------------------------------
// Annotation CSV (time_sec,f0_hz,voiced)
// ---------------------------------------------------------------------------

inline void write_annotations(const std::string& path, const Annotations& ann, int sample_rate) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "time_sec,f0_hz,voiced\n";
  char line[96];
  for (std::size_t i = 0; i < ann.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.6f,%.6f,%d\n",
                  static_cast<double>(ann.center_sample[i]) / sample_rate, ann.f0_hz[i],
                  ann.voiced[i] ? 1 : 0);
    out << line;
  }
  if (!out) throw IoError("short write to " + path);
}

// Loads per-frame ground truth and re-centers CenterAtHalfWindow annotations
// onto CenterAtZero by shifting them half a window (in exact sample units).
inline Annotations load_annotations(const std::string& path, Alignment alignment,
                                    int sample_rate, int window_size = 1024) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("time_sec,f0_hz,voiced", 0) != 0)
    throw FormatError(path + ": missing annotation header");
  Annotations ann;
  const std::int64_t shift = alignment == Alignment::CenterAtHalfWindow ? window_size / 2 : 0;
  double prev_time = -1.0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    double t, f0;
    int v;
    if (std::sscanf(line.c_str(), "%lf,%lf,%d", &t, &f0, &v) != 3)
      throw FormatError(path + ": malformed row at line " + std::to_string(lineno));
    if (t <= prev_time)
      throw FormatError(path + ": non-monotone timestamp at line " + std::to_string(lineno));
    prev_time = t;
    if (v != 0 && !(f0 > 0.0))
      throw FormatError(path + ": voiced frame without pitch at line " + std::to_string(lineno));
    ann.center_sample.push_back(std::llround(t * sample_rate) + shift);
    ann.f0_hz.push_back(f0);
    ann.voiced.push_back(v != 0);
  }
  return ann;
}

// Inverse of the load-time correction; exact in integer sample units.
inline void shift_alignment(Annotations& ann, Alignment from, Alignment to, int window_size) {
  std::int64_t delta = 0;
  if (from == Alignment::CenterAtZero && to == Alignment::CenterAtHalfWindow)
    delta = window_size / 2;
  else if (from == Alignment::CenterAtHalfWindow && to == Alignment::CenterAtZero)
    delta = -(window_size / 2);
  for (std::int64_t& c : ann.center_sample) c += delta;
}

// ---------------------------------------------------------------------------
// Corpus directory: clips/*.wav, annotations/*.csv, corpus.json
// ---------------------------------------------------------------------------

struct CorpusMeta {
  int sample_rate = 8000;
  Alignment alignment = Alignment::CenterAtZero;
  FrameSpec frame;
  std::vector<std::string> clips;
};

inline void write_corpus_meta(const std::string& dir, const CorpusMeta& meta) {
  nlohmann::json j;
  j["sample_rate"] = meta.sample_rate;
  j["alignment"] = to_string(meta.alignment);
  j["window_size"] = meta.frame.window_size;
  j["hop"] = meta.frame.hop;
  j["clips"] = meta.clips;
  std::ofstream out(std::filesystem::path(dir) / "corpus.json");
  if (!out) throw IoError("cannot write corpus.json in " + dir);
  out << j.dump(2) << "\n";
}

inline CorpusMeta load_corpus_meta(const std::string& dir) {
  std::ifstream in(std::filesystem::path(dir) / "corpus.json");
  if (!in) throw IoError("cannot open corpus.json in " + dir);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir + "/corpus.json: " + e.what());
  }
  CorpusMeta meta;
  try {
    meta.sample_rate = j.at("sample_rate").get<int>();
    meta.alignment = alignment_from_string(j.at("alignment").get<std::string>());
    meta.frame.window_size = j.at("window_size").get<int>();
    meta.frame.hop = j.at("hop").get<int>();
    meta.clips = j.at("clips").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir + "/corpus.json: " + e.what());
  }
  return meta;
}

// Materializes a synthetic corpus; one derived seed per clip. Output is
// byte-deterministic for a fixed spec and seed.
inline CorpusMeta synth_corpus(const std::string& dir, const SynthSpec& base, int n_clips,
                               std::uint64_t seed, const FrameSpec& frame = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "clips");
  fs::create_directories(fs::path(dir) / "annotations");
  CorpusMeta meta;
  meta.sample_rate = base.sample_rate;
  meta.alignment = Alignment::CenterAtZero;
  meta.frame = frame;
  Rng master(seed);
  for (int i = 0; i < n_clips; ++i) {
    SynthSpec spec = base;
    spec.seed = master.next_u64();
    const AnnotatedClip clip = synth_clip(spec, frame.hop);
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04d", i);
    write_wav((fs::path(dir) / "clips" / (std::string(name) + ".wav")).string(), clip.audio);
    write_annotations((fs::path(dir) / "annotations" / (std::string(name) + ".csv")).string(),
                      clip.ann, base.sample_rate);
    meta.clips.push_back(name);
  }
  write_corpus_meta(dir, meta);
  return meta;
}

inline AnnotatedClip load_clip(const std::string& dir, const CorpusMeta& meta,
                               const std::string& name) {
  namespace fs = std::filesystem;
  AnnotatedClip clip;
  clip.audio = load_wav((fs::path(dir) / "clips" / (name + ".wav")).string());
  clip.ann = load_annotations((fs::path(dir) / "annotations" / (name + ".csv")).string(),
                              meta.alignment, meta.sample_rate, meta.frame.window_size);
  return clip;
}

// ---------------------------------------------------------------------------
// Partitioning and training examples
// ---------------------------------------------------------------------------

struct Partition {
  std::vector<std::size_t> train, valid, test;
};

// Deterministic 70-15-15 split by clip.
inline Partition partition(std::size_t n_clips, std::uint64_t seed) {
  if (n_clips < 3) throw InvalidArgument("partition: need at least 3 clips");
  std::vector<std::size_t> idx(n_clips);
  for (std::size_t i = 0; i < n_clips; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = n_clips - 1; i > 0; --i)
    std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
  const std::size_t n_valid = static_cast<std::size_t>(std::llround(0.15 * n_clips));
  const std::size_t n_test = static_cast<std::size_t>(std::llround(0.15 * n_clips));
  const std::size_t n_train = n_clips - n_valid - n_test;
  Partition p;
  p.train.assign(idx.begin(), idx.begin() + n_train);
  p.valid.assign(idx.begin() + n_train, idx.begin() + n_train + n_valid);
  p.test.assign(idx.begin() + n_train + n_valid, idx.end());
  return p;
}

// Converts an annotated clip to supervised examples: one analysis window per
// annotated frame, quantized target bin or the unvoiced marker.
inline std::vector<TrainExample> examples_from_clip(const AnnotatedClip& clip,
                                                    const BinGrid& grid, const FrameSpec& spec) {
  const std::vector<std::vector<float>> windows = frame(clip.audio, spec);
  const std::size_t count = std::min(windows.size(), clip.ann.size());
  std::vector<TrainExample> out;
  out.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    TrainExample e;
    e.frame = windows[t];
    e.target_bin = clip.ann.voiced[t] ? grid.quantize(clip.ann.f0_hz[t]) : kUnvoiced;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace pnpe
