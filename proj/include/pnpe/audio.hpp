#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "pnpe/common.hpp"

namespace pnpe {

struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = 0;

  double duration_sec() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

enum class Alignment { CenterAtZero, CenterAtHalfWindow };

inline const char* to_string(Alignment a) {
  return a == Alignment::CenterAtZero ? "center_at_zero" : "center_at_half_window";
}

inline Alignment alignment_from_string(const std::string& s) {
  if (s == "center_at_zero") return Alignment::CenterAtZero;
  if (s == "center_at_half_window") return Alignment::CenterAtHalfWindow;
  throw FormatError("unknown alignment tag: " + s);
}

struct FrameSpec {
  int window_size = 1024;
  int hop = 80;  // 10 ms at 8 kHz
  Alignment alignment = Alignment::CenterAtZero;
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return std::uint16_t(p[0] | p[1] << 8);
}

}  // namespace detail

// Reads a RIFF/WAVE file. Accepts 16-bit PCM and 32-bit IEEE float, any
// channel count; channels are averaged to mono. Integer samples map to
// [-1, 1) by division by 32768.
inline AudioBuffer load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError(path + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_len = detail::read_u32le(&bytes[pos + 4]);
    const unsigned char* body = &bytes[pos + 8];
    if (pos + 8 + chunk_len > bytes.size())
      throw FormatError(path + ": truncated chunk");
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (chunk_len < 16) throw FormatError(path + ": short fmt chunk");
      format = detail::read_u16le(body);
      channels = detail::read_u16le(body + 2);
      rate = detail::read_u32le(body + 4);
      bits = detail::read_u16le(body + 14);
      have_fmt = true;
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data == nullptr) throw FormatError(path + ": missing fmt or data chunk");
  if (channels == 0 || rate == 0) throw FormatError(path + ": bad fmt chunk");

  const bool pcm16 = (format == 1 && bits == 16);
  const bool f32 = (format == 3 && bits == 32);
  if (!pcm16 && !f32)
    throw UnsupportedError(path + ": only 16-bit PCM and 32-bit float supported");

  const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t n = data_len / frame_bytes;

  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  out.samples.resize(n);
  const double inv_ch = 1.0 / channels;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (unsigned c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        acc += v / 32768.0;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        acc += v;
      }
    }
    out.samples[i] = static_cast<float>(acc * inv_ch);
  }
  return out;
}

// Writes mono 16-bit PCM. Used when materializing synthetic corpora.
inline void write_wav(const std::string& path, const AudioBuffer& buf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const std::uint32_t data_len = static_cast<std::uint32_t>(buf.samples.size() * 2);
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  out.write("RIFF", 4);
  u32(36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);  // PCM
  u16(1);  // mono
  u32(static_cast<std::uint32_t>(buf.sample_rate));
  u32(static_cast<std::uint32_t>(buf.sample_rate) * 2);
  u16(2);
  u16(16);
  out.write("data", 4);
  u32(data_len);
  for (float s : buf.samples) {
    const long scaled = std::lrint(static_cast<double>(s) * 32768.0);
    const std::int16_t v = static_cast<std::int16_t>(std::clamp(scaled, -32768L, 32767L));
    out.write(reinterpret_cast<const char*>(&v), 2);
  }
  if (!out) throw IoError("short write to " + path);
}

// Band-limited sample rate conversion: polyphase windowed sinc with 64
// zero crossings per side, Blackman window.
inline AudioBuffer resample(const AudioBuffer& buf, int target_rate) {
  if (target_rate <= 0) throw InvalidArgument("resample: target rate must be positive");
  if (buf.sample_rate <= 0) throw InvalidArgument("resample: source rate must be positive");
  if (target_rate == buf.sample_rate) return buf;

  const std::size_t n_in = buf.samples.size();
  const std::size_t n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_in) * target_rate / buf.sample_rate));
  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out, 0.0f);
  if (n_in == 0 || n_out == 0) return out;

  const std::uint64_t g = std::gcd<std::uint64_t>(buf.sample_rate, target_rate);
  const std::uint64_t up = target_rate / g;    // output ticks per cycle
  const std::uint64_t down = buf.sample_rate / g;

  constexpr int kZeroCrossings = 64;
  // Cutoff slightly below Nyquist of the lower rate; sinc stretched when
  // downsampling so the transition stays below the output Nyquist.
  const double ratio = static_cast<double>(target_rate) / buf.sample_rate;
  const double stretch = std::max(1.0, 1.0 / ratio);
  const double cutoff = 0.475 / stretch;  // in cycles per input sample
  const int half_width = static_cast<int>(std::ceil(kZeroCrossings * stretch));

  // One filter phase per distinct fractional offset; phase p corresponds to an
  // output sample at input position (integer + p/up).
  const int taps = 2 * half_width + 1;
  std::vector<double> table(static_cast<std::size_t>(up) * taps);
  for (std::uint64_t p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / up;
    double sum = 0.0;
    for (int k = -half_width; k <= half_width; ++k) {
      const double x = k - frac;  // offset from the output position, in input samples
      const double sx = 2.0 * cutoff * x;
      double sinc = (sx == 0.0) ? 1.0 : std::sin(M_PI * sx) / (M_PI * sx);
      const double wx = x / (half_width + 1.0);
      double win = 0.0;
      if (std::abs(wx) < 1.0)
        win = 0.42 + 0.5 * std::cos(M_PI * wx) + 0.08 * std::cos(2.0 * M_PI * wx);
      table[p * taps + (k + half_width)] = 2.0 * cutoff * sinc * win;
    }
    for (int k = 0; k < taps; ++k) sum += table[p * taps + k];
    // Normalize each phase to unit DC gain.
    for (int k = 0; k < taps; ++k) table[p * taps + k] /= sum;
  }

  for (std::size_t i = 0; i < n_out; ++i) {
    // Input position of output sample i is i*down/up.
    const std::uint64_t num = static_cast<std::uint64_t>(i) * down;
    const std::int64_t base = static_cast<std::int64_t>(num / up);
    const std::uint64_t phase = num % up;
    const double* h = &table[phase * taps];
    double acc = 0.0;
    for (int k = -half_width; k <= half_width; ++k) {
      const std::int64_t j = base + k;
      if (j < 0 || j >= static_cast<std::int64_t>(n_in)) continue;
      acc += h[k + half_width] * buf.samples[static_cast<std::size_t>(j)];
    }
    out.samples[i] = static_cast<float>(acc);
  }
  return out;
}

// Splits a buffer into fixed-size analysis windows. Frame t is centered on
// sample t*hop (CenterAtZero) or window/2 + t*hop (CenterAtHalfWindow);
// samples outside the signal are zero. Frames carry raw amplitudes, no
// normalization.
inline std::vector<std::vector<float>> frame(const AudioBuffer& buf, const FrameSpec& spec) {
  if (buf.samples.empty()) throw InvalidArgument("frame: empty buffer");
  if (spec.window_size <= 0 || spec.hop <= 0)
    throw InvalidArgument("frame: window_size and hop must be positive");
  const std::int64_t n = static_cast<std::int64_t>(buf.samples.size());
  if (spec.window_size > 4 * n)
    throw InvalidArgument("frame: window size exceeds 4x signal length");

  const std::int64_t count = n / spec.hop + 1;
  std::vector<std::vector<float>> frames(static_cast<std::size_t>(count));
  const int w = spec.window_size;
  for (std::int64_t t = 0; t < count; ++t) {
    std::vector<float>& f = frames[static_cast<std::size_t>(t)];
    f.assign(static_cast<std::size_t>(w), 0.0f);
    const std::int64_t start = spec.alignment == Alignment::CenterAtZero
                                   ? t * spec.hop - w / 2
                                   : t * spec.hop;
    const std::int64_t lo = std::max<std::int64_t>(0, start);
    const std::int64_t hi = std::min<std::int64_t>(n, start + w);
    for (std::int64_t j = lo; j < hi; ++j)
      f[static_cast<std::size_t>(j - start)] = buf.samples[static_cast<std::size_t>(j)];
  }
  return frames;
}

// Sample index of the center of frame t under the given spec.
inline std::int64_t frame_center(const FrameSpec& spec, std::int64_t t) {
  return spec.alignment == Alignment::CenterAtZero ? t * spec.hop
                                                   : spec.window_size / 2 + t * spec.hop;
}

}  // namespace pnpe
