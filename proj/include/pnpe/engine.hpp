#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "pnpe/audio.hpp"
#include "pnpe/bins.hpp"
#include "pnpe/common.hpp"
#include "pnpe/decode.hpp"
#include "pnpe/eval.hpp"
#include "pnpe/network.hpp"
#include "pnpe/thread_pool.hpp"

namespace pnpe {

// A deployable model: network weights plus the grid and audio conventions
// they were trained with. Weights live in the .pnpe file, everything else in
// a JSON sidecar at <path>.json.
struct Engine {
  ArchitectureConfig arch;
  BinGrid grid;
  int sample_rate = 8000;
  Network<float> net;

  Engine(const ArchitectureConfig& a, const BinGrid& g, int sr)
      : arch(a), grid(g), sample_rate(sr), net(a) {
    if (a.output_bins != g.num_bins)
      throw InvalidArgument("engine: grid size does not match network output");
  }
};

namespace detail {

inline nlohmann::json arch_to_json(const ArchitectureConfig& cfg) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const ConvBlockConfig& b : cfg.blocks)
    blocks.push_back({{"in_channels", b.in_channels},
                      {"out_channels", b.out_channels},
                      {"kernel_size", b.kernel_size},
                      {"stride", b.stride},
                      {"pool_size", b.pool_size},
                      {"pool_stride", b.pool_stride}});
  return {{"blocks", blocks},
          {"head_kernel", cfg.head_kernel},
          {"output_bins", cfg.output_bins},
          {"window_size", cfg.window_size},
          {"normalization", cfg.normalization == Normalization::Layer ? "layer" : "batch"},
          {"dropout_prob", cfg.dropout_prob}};
}

inline ArchitectureConfig arch_from_json(const nlohmann::json& j) {
  ArchitectureConfig cfg;
  for (const nlohmann::json& b : j.at("blocks")) {
    ConvBlockConfig blk;
    blk.in_channels = b.at("in_channels").get<int>();
    blk.out_channels = b.at("out_channels").get<int>();
    blk.kernel_size = b.at("kernel_size").get<int>();
    blk.stride = b.at("stride").get<int>();
    blk.pool_size = b.at("pool_size").get<int>();
    blk.pool_stride = b.at("pool_stride").get<int>();
    cfg.blocks.push_back(blk);
  }
  cfg.head_kernel = j.at("head_kernel").get<int>();
  cfg.output_bins = j.at("output_bins").get<int>();
  cfg.window_size = j.at("window_size").get<int>();
  const std::string norm = j.at("normalization").get<std::string>();
  if (norm == "layer")
    cfg.normalization = Normalization::Layer;
  else if (norm == "batch")
    cfg.normalization = Normalization::Batch;
  else
    throw FormatError("sidecar: unknown normalization " + norm);
  cfg.dropout_prob = j.at("dropout_prob").get<double>();
  return cfg;
}

}  // namespace detail

inline void save_engine(const std::string& path, const Engine& engine) {
  save_params(path, engine.net.to_params());
  nlohmann::json j;
  j["architecture"] = detail::arch_to_json(engine.arch);
  j["bins"] = {{"num_bins", engine.grid.num_bins},
               {"fmin_hz", engine.grid.fmin_hz},
               {"cents_per_bin", engine.grid.cents_per_bin}};
  j["sample_rate"] = engine.sample_rate;
  std::ofstream out(path + ".json");
  if (!out) throw IoError("cannot write " + path + ".json");
  out << j.dump(2) << "\n";
}

inline Engine load_engine(const std::string& path) {
  std::ifstream in(path + ".json");
  if (!in) throw IoError("cannot open sidecar " + path + ".json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ".json: " + e.what());
  }
  ArchitectureConfig arch;
  BinGrid grid;
  int sr = 0;
  try {
    arch = detail::arch_from_json(j.at("architecture"));
    const nlohmann::json& b = j.at("bins");
    grid = BinGrid(b.at("num_bins").get<int>(), b.at("fmin_hz").get<double>(),
                   b.at("cents_per_bin").get<double>());
    sr = j.at("sample_rate").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ".json: " + e.what());
  }
  Engine engine(arch, grid, sr);
  engine.net.from_params(load_params(path));
  return engine;
}

// Runs the candidate generator over every analysis window of a buffer.
// Audio is resampled to the model rate; frames are raw amplitudes
// (no normalization), centered at t*hop. Frame-parallel and deterministic
// for any thread count.
inline Posteriorgram infer_posteriorgram(const Engine& engine, const AudioBuffer& buf,
                                         int hop_samples, unsigned threads = 0) {
  const AudioBuffer audio = resample(buf, engine.sample_rate);
  FrameSpec spec;
  spec.window_size = engine.arch.window_size;
  spec.hop = hop_samples;
  spec.alignment = Alignment::CenterAtZero;
  const std::vector<std::vector<float>> frames = frame(audio, spec);

  Posteriorgram post(static_cast<int>(frames.size()), engine.grid);
  const int P = engine.grid.num_bins;
  const int window = engine.arch.window_size;
  // Small chunks bound the im2col scratch; each chunk is one forward pass.
  constexpr int kChunk = 16;
  const std::size_t n_chunks = (frames.size() + kChunk - 1) / kChunk;
  process_pool().for_ranges(
      n_chunks,
      [&](std::size_t c0, std::size_t c1) {
        for (std::size_t c = c0; c < c1; ++c) {
          const std::size_t f0 = c * kChunk;
          const std::size_t f1 = std::min(frames.size(), f0 + kChunk);
          Tensor3<float> x(static_cast<int>(f1 - f0), 1, window);
          for (std::size_t t = f0; t < f1; ++t)
            std::copy(frames[t].begin(), frames[t].end(), x.row(static_cast<int>(t - f0), 0));
          const Tensor3<float> logits = engine.net.forward(x);
          for (std::size_t t = f0; t < f1; ++t) {
            const float* z = logits.row(static_cast<int>(t - f0), 0);
            float zmax = z[0];
            for (int i = 1; i < P; ++i) zmax = std::max(zmax, z[i]);
            double sum = 0.0;
            float* p = post.row(static_cast<int>(t));
            for (int i = 0; i < P; ++i) {
              p[i] = std::exp(z[i] - zmax);
              sum += p[i];
            }
            const float inv = static_cast<float>(1.0 / sum);
            for (int i = 0; i < P; ++i) p[i] *= inv;
          }
        }
      },
      threads);
  return post;
}

enum class Decoder { Argmax, Weighted };
enum class PeriodicityMethod { Entropy, Max };

struct DecodeOptions {
  Decoder decoder = Decoder::Weighted;
  PeriodicityMethod periodicity = PeriodicityMethod::Entropy;
  double threshold = 0.5;
  int window_bins = 19;
};

inline PitchTrack decode_track(const Posteriorgram& post, int hop_samples, int sample_rate,
                               const DecodeOptions& opts) {
  PitchTrack track;
  track.f0_hz = opts.decoder == Decoder::Argmax
                    ? decode_argmax(post)
                    : decode_local_expected_value(post, opts.window_bins);
  track.periodicity = opts.periodicity == PeriodicityMethod::Entropy ? periodicity_entropy(post)
                                                                     : periodicity_max(post);
  track.voiced = voicing(track.periodicity, opts.threshold);
  track.time_sec.resize(track.f0_hz.size());
  for (std::size_t t = 0; t < track.time_sec.size(); ++t)
    track.time_sec[t] = static_cast<double>(t) * hop_samples / sample_rate;
  return track;
}

// Full estimation pipeline: audio in, pitch track out.
inline PitchTrack estimate(const Engine& engine, const AudioBuffer& buf, int hop_samples,
                           const DecodeOptions& opts = {}, unsigned threads = 0) {
  const Posteriorgram post = infer_posteriorgram(engine, buf, hop_samples, threads);
  return decode_track(post, hop_samples, engine.sample_rate, opts);
}

// Times the whole pipeline (audio load, estimation, CSV save) over a set of
// files and reports seconds of compute per second of audio.
inline RtfReport benchmark_rtf(const std::function<PitchTrack(const AudioBuffer&)>& estimator,
                               const std::vector<std::string>& wav_paths,
                               const std::string& output_dir, int thread_count) {
  namespace fs = std::filesystem;
  if (wav_paths.empty()) throw InvalidArgument("benchmark_rtf: no input files");
  fs::create_directories(output_dir);
  double audio_seconds = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (const std::string& path : wav_paths) {
    const AudioBuffer buf = load_wav(path);
    audio_seconds += buf.duration_sec();
    const PitchTrack track = estimator(buf);
    const std::string stem = fs::path(path).stem().string();
    write_pitch_track((fs::path(output_dir) / (stem + ".csv")).string(), track);
  }
  const auto t1 = std::chrono::steady_clock::now();
  RtfReport report;
  report.audio_seconds = audio_seconds;
  report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  report.rtf = report.wall_seconds / report.audio_seconds;
  report.thread_count = thread_count;
  return report;
}

}  // namespace pnpe
