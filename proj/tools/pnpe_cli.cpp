// pnpe: monophonic pitch and periodicity estimation engine.
//
// Subcommands: synth (make a synthetic corpus), train, infer, evaluate,
// search-threshold, benchmark. Exit codes: 0 success, 2 bad arguments,
// 3 I/O failure, 4 model-format failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "pnpe/pnpe.hpp"

namespace fs = std::filesystem;

namespace {

// Raised for any failure while loading the model bundle; mapped to exit 4.
struct ModelError {
  std::string message;
};

pnpe::Engine load_model(const std::string& path) {
  try {
    return pnpe::load_engine(path);
  } catch (const pnpe::Error& e) {
    throw ModelError{e.what()};
  }
}

pnpe::DecodeOptions decode_options(const std::string& decoder, const std::string& periodicity,
                                   double threshold, int window_bins) {
  pnpe::DecodeOptions opts;
  if (decoder == "argmax")
    opts.decoder = pnpe::Decoder::Argmax;
  else if (decoder == "weighted")
    opts.decoder = pnpe::Decoder::Weighted;
  else
    throw pnpe::InvalidArgument("unknown decoder: " + decoder);
  if (periodicity == "entropy")
    opts.periodicity = pnpe::PeriodicityMethod::Entropy;
  else if (periodicity == "max")
    opts.periodicity = pnpe::PeriodicityMethod::Max;
  else
    throw pnpe::InvalidArgument("unknown periodicity method: " + periodicity);
  if (threshold < 0.0 || threshold > 1.0)
    throw pnpe::InvalidArgument("threshold must be in [0, 1]");
  opts.threshold = threshold;
  opts.window_bins = window_bins;
  return opts;
}

int hop_samples_of(double hop_ms, int sample_rate) {
  if (hop_ms <= 0.0) throw pnpe::InvalidArgument("hop must be positive");
  const int hop = static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
  return std::max(1, hop);
}

struct LoadedCorpus {
  pnpe::CorpusMeta meta;
  std::string dir;
};

std::vector<std::size_t> split_indices(const pnpe::Partition& part, const std::string& split,
                                       std::size_t n) {
  if (split == "train") return part.train;
  if (split == "valid") return part.valid;
  if (split == "test") return part.test;
  if (split == "all") {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  throw pnpe::InvalidArgument("unknown split: " + split);
}

// Reference and prediction CSVs: either annotation files (time_sec,f0_hz,
// voiced) or pitch tracks (time_sec,f0_hz,periodicity,voiced).
struct TrackData {
  std::vector<double> f0;
  std::vector<bool> voiced;
};

TrackData load_track_csv(const std::string& path) {
  std::ifstream probe(path);
  if (!probe) throw pnpe::IoError("cannot open " + path);
  std::string header;
  std::getline(probe, header);
  probe.close();
  TrackData out;
  if (header.rfind("time_sec,f0_hz,periodicity", 0) == 0) {
    const pnpe::PitchTrack t = pnpe::read_pitch_track(path);
    out.f0 = t.f0_hz;
    out.voiced = t.voiced;
  } else {
    const pnpe::Annotations a =
        pnpe::load_annotations(path, pnpe::Alignment::CenterAtZero, 8000);
    for (std::size_t i = 0; i < a.size(); ++i) {
      out.f0.push_back(a.voiced[i] ? a.f0_hz[i] : 31.0);
      out.voiced.push_back(a.voiced[i]);
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> match_csvs(const std::string& ref,
                                                            const std::string& pred) {
  std::vector<std::pair<std::string, std::string>> pairs;
  if (!fs::is_directory(ref) && !fs::is_directory(pred)) {
    pairs.emplace_back(ref, pred);
    return pairs;
  }
  if (!fs::is_directory(ref) || !fs::is_directory(pred))
    throw pnpe::InvalidArgument("reference and prediction must both be files or both directories");
  std::map<std::string, fs::path> pred_by_stem;
  for (const auto& e : fs::directory_iterator(pred))
    if (e.path().extension() == ".csv") pred_by_stem[e.path().stem().string()] = e.path();
  std::vector<fs::path> refs;
  for (const auto& e : fs::directory_iterator(ref))
    if (e.path().extension() == ".csv") refs.push_back(e.path());
  std::sort(refs.begin(), refs.end());
  for (const fs::path& r : refs) {
    const auto it = pred_by_stem.find(r.stem().string());
    if (it == pred_by_stem.end())
      throw pnpe::InvalidArgument("no prediction for " + r.stem().string());
    pairs.emplace_back(r.string(), it->second.string());
  }
  if (pairs.empty()) throw pnpe::InvalidArgument("no csv files in " + ref);
  return pairs;
}

void print_report_json(const pnpe::EvalReport& r) {
  nlohmann::json j;
  j["delta_cents"] = r.delta_cents;
  j["rpa"] = r.rpa;
  j["rca"] = r.rca;
  j["f1"] = r.f1;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["frames_scored"] = r.frames_scored;
  std::cout << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

struct InferArgs {
  std::string model;
  std::vector<std::string> inputs;
  std::string output;
  double hop_ms = 10.0;
  std::string decoder = "weighted";
  std::string periodicity = "entropy";
  double threshold = 0.5;
  int window_bins = 19;
  unsigned threads = 0;
};

int run_infer(const InferArgs& a) {
  const pnpe::Engine engine = load_model(a.model);
  const pnpe::DecodeOptions opts =
      decode_options(a.decoder, a.periodicity, a.threshold, a.window_bins);
  const int hop = hop_samples_of(a.hop_ms, engine.sample_rate);

  const bool multi = a.inputs.size() > 1;
  if (multi) fs::create_directories(a.output);

  double audio_seconds = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (const std::string& input : a.inputs) {
    const pnpe::AudioBuffer buf = pnpe::load_wav(input);
    audio_seconds += buf.duration_sec();
    const pnpe::PitchTrack track = pnpe::estimate(engine, buf, hop, opts, a.threads);
    const std::string out_path =
        multi ? (fs::path(a.output) / (fs::path(input).stem().string() + ".csv")).string()
              : a.output;
    pnpe::write_pitch_track(out_path, track);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("audio %.3f s  wall %.3f s  rtf %.4f  threads %u\n", audio_seconds, wall,
              wall / std::max(1e-9, audio_seconds),
              a.threads == 0 ? static_cast<unsigned>(pnpe::process_pool().size()) : a.threads);
  return 0;
}

struct TrainArgs {
  std::string corpus;
  std::string output;
  std::string arch = "compact";
  int steps = 3000;
  int batch = 128;
  double lr = 2e-4;
  std::uint64_t seed = 0;
  double blur_std_cents = 25.0;
  int checkpoint_every = 0;
  std::string checkpoint_dir;
  std::string loss_log;
  bool voiced_only = false;
  int bins = 1440;
  double fmin = 31.0;
  double cents_per_bin = 5.0;
};

int run_train(const TrainArgs& a) {
  const pnpe::CorpusMeta meta = pnpe::load_corpus_meta(a.corpus);
  pnpe::ArchitectureConfig arch = pnpe::named_config(a.arch);
  arch.output_bins = a.bins;
  const pnpe::BinGrid grid(a.bins, a.fmin, a.cents_per_bin);

  const pnpe::Partition part = pnpe::partition(meta.clips.size(), a.seed);
  std::vector<pnpe::TrainExample> examples;
  pnpe::FrameSpec spec = meta.frame;
  spec.alignment = pnpe::Alignment::CenterAtZero;
  for (std::size_t ci : part.train) {
    const pnpe::AnnotatedClip clip = pnpe::load_clip(a.corpus, meta, meta.clips[ci]);
    for (pnpe::TrainExample& e : pnpe::examples_from_clip(clip, grid, spec)) {
      if (a.voiced_only && !e.voiced()) continue;
      examples.push_back(std::move(e));
    }
  }
  std::fprintf(stderr, "training on %zu frames from %zu clips\n", examples.size(),
               part.train.size());

  pnpe::Engine engine(arch, grid, meta.sample_rate);
  pnpe::Rng init_rng(a.seed);
  engine.net.init(init_rng);

  pnpe::TrainConfig cfg;
  cfg.batch_size = a.batch;
  cfg.total_steps = a.steps;
  cfg.learning_rate = a.lr;
  cfg.seed = a.seed;
  cfg.blur_std_cents = a.blur_std_cents;
  cfg.checkpoint_interval = a.checkpoint_every;
  cfg.checkpoint_dir = a.checkpoint_dir;
  const std::vector<float> losses = pnpe::train(cfg, examples, grid, engine.net);

  pnpe::save_engine(a.output, engine);
  if (!a.loss_log.empty()) pnpe::write_loss_log(a.loss_log, losses);
  if (!losses.empty())
    std::fprintf(stderr, "final loss %.4f after %d steps\n",
                 static_cast<double>(losses.back()), a.steps);
  return 0;
}

struct EvaluateArgs {
  std::string reference;
  std::string prediction;
  double eps_cents = 50.0;
};

int run_evaluate(const EvaluateArgs& a) {
  std::vector<double> ref_f0, pred_f0;
  std::vector<bool> ref_v, pred_v;
  for (const auto& [ref_path, pred_path] : match_csvs(a.reference, a.prediction)) {
    const TrackData ref = load_track_csv(ref_path);
    const TrackData pred = load_track_csv(pred_path);
    if (ref.f0.size() != pred.f0.size())
      throw pnpe::InvalidArgument(ref_path + " and " + pred_path + " have different lengths");
    ref_f0.insert(ref_f0.end(), ref.f0.begin(), ref.f0.end());
    pred_f0.insert(pred_f0.end(), pred.f0.begin(), pred.f0.end());
    ref_v.insert(ref_v.end(), ref.voiced.begin(), ref.voiced.end());
    pred_v.insert(pred_v.end(), pred.voiced.begin(), pred.voiced.end());
  }
  print_report_json(pnpe::evaluate(ref_f0, ref_v, pred_f0, pred_v, a.eps_cents));
  return 0;
}

struct SearchArgs {
  std::string model;
  std::string corpus;
  std::string split = "valid";
  std::string periodicity = "entropy";
  double hop_ms = 10.0;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

int run_search_threshold(const SearchArgs& a) {
  const pnpe::Engine engine = load_model(a.model);
  const pnpe::CorpusMeta meta = pnpe::load_corpus_meta(a.corpus);
  const pnpe::Partition part = pnpe::partition(meta.clips.size(), a.seed);
  const int hop = hop_samples_of(a.hop_ms, engine.sample_rate);

  std::vector<double> h;
  std::vector<bool> v;
  for (std::size_t ci : split_indices(part, a.split, meta.clips.size())) {
    const pnpe::AnnotatedClip clip = pnpe::load_clip(a.corpus, meta, meta.clips[ci]);
    const pnpe::Posteriorgram post =
        pnpe::infer_posteriorgram(engine, clip.audio, hop, a.threads);
    const std::vector<double> ph = a.periodicity == "max" ? pnpe::periodicity_max(post)
                                                          : pnpe::periodicity_entropy(post);
    const std::size_t n = std::min(ph.size(), clip.ann.size());
    for (std::size_t i = 0; i < n; ++i) {
      h.push_back(ph[i]);
      v.push_back(clip.ann.voiced[i]);
    }
  }
  const pnpe::ThresholdSearchResult r = pnpe::search_threshold(h, v);
  std::printf("alpha %.6f\nf1 %.6f\n", r.alpha, r.f1);
  return 0;
}

struct SynthArgs {
  std::string output;
  int clips = 50;
  std::uint64_t seed = 0;
  double duration = 2.5;
  double snr_db = 25.0;
  double unvoiced_fraction = 0.3;
  int harmonics = 4;
  double f0_min = 65.0;
  double f0_max = 1000.0;
  double vibrato_cents = 12.0;
  double vibrato_hz = 5.0;
  int sample_rate = 8000;
  int window = 1024;
  int hop = 80;
};

int run_synth(const SynthArgs& a) {
  pnpe::SynthSpec spec;
  spec.duration_sec = a.duration;
  spec.noise_snr_db = a.snr_db;
  spec.unvoiced_fraction = a.unvoiced_fraction;
  spec.harmonics = a.harmonics;
  spec.f0_min_hz = a.f0_min;
  spec.f0_max_hz = a.f0_max;
  spec.vibrato_cents = a.vibrato_cents;
  spec.vibrato_hz = a.vibrato_hz;
  spec.sample_rate = a.sample_rate;
  pnpe::FrameSpec frame;
  frame.window_size = a.window;
  frame.hop = a.hop;
  const pnpe::CorpusMeta meta = pnpe::synth_corpus(a.output, spec, a.clips, a.seed, frame);
  std::fprintf(stderr, "wrote %zu clips to %s\n", meta.clips.size(), a.output.c_str());
  return 0;
}

struct BenchmarkArgs {
  std::string model;
  std::string corpus;
  std::string split = "test";
  std::string output_dir;
  double hop_ms = 10.0;
  std::uint64_t seed = 0;
  int window_bins = 19;
};

struct BenchRow {
  std::string name;
  pnpe::EvalReport report;
  double f1_entropy = -1.0;
  double f1_max = -1.0;
  double rtf_single = 0.0;
  double rtf_all = 0.0;
};

int run_benchmark(const BenchmarkArgs& a) {
  const pnpe::Engine engine = load_model(a.model);
  const pnpe::CorpusMeta meta = pnpe::load_corpus_meta(a.corpus);
  const pnpe::Partition part = pnpe::partition(meta.clips.size(), a.seed);
  const int hop = hop_samples_of(a.hop_ms, engine.sample_rate);
  const std::string out_dir =
      a.output_dir.empty()
          ? (fs::temp_directory_path() / "pnpe_benchmark").string()
          : a.output_dir;

  const std::vector<std::size_t> eval_idx = split_indices(part, a.split, meta.clips.size());
  const std::vector<std::size_t> valid_idx = part.valid.empty() ? eval_idx : part.valid;

  pnpe::FrameSpec dsp_spec = meta.frame;
  dsp_spec.alignment = pnpe::Alignment::CenterAtZero;
  dsp_spec.hop = hop;
  pnpe::DspOptions dsp_opt;
  dsp_opt.fmin_hz = engine.grid.fmin_hz;
  dsp_opt.fmax_hz = engine.grid.fmax_hz();

  // Gather reference and predictions per estimator over a set of clips.
  struct SplitData {
    std::vector<double> ref_f0;
    std::vector<bool> ref_v;
    std::vector<double> f0;                  // estimator pitch
    std::vector<bool> voiced;                // estimator voicing at its threshold
    std::vector<double> h_entropy, h_max;    // rethresholdable periodicities
  };
  auto collect_neural = [&](const std::vector<std::size_t>& idx, double alpha_entropy) {
    SplitData d;
    for (std::size_t ci : idx) {
      const pnpe::AnnotatedClip clip = pnpe::load_clip(a.corpus, meta, meta.clips[ci]);
      const pnpe::Posteriorgram post = pnpe::infer_posteriorgram(engine, clip.audio, hop);
      const std::vector<double> f0 = pnpe::decode_local_expected_value(post, a.window_bins);
      const std::vector<double> he = pnpe::periodicity_entropy(post);
      const std::vector<double> hm = pnpe::periodicity_max(post);
      const std::size_t n = std::min(f0.size(), clip.ann.size());
      for (std::size_t i = 0; i < n; ++i) {
        d.ref_f0.push_back(clip.ann.voiced[i] ? clip.ann.f0_hz[i] : engine.grid.fmin_hz);
        d.ref_v.push_back(clip.ann.voiced[i]);
        d.f0.push_back(f0[i]);
        d.h_entropy.push_back(he[i]);
        d.h_max.push_back(hm[i]);
        d.voiced.push_back(he[i] > alpha_entropy);
      }
    }
    return d;
  };
  auto collect_dsp = [&](const std::vector<std::size_t>& idx) {
    SplitData d;
    for (std::size_t ci : idx) {
      const pnpe::AnnotatedClip clip = pnpe::load_clip(a.corpus, meta, meta.clips[ci]);
      const pnpe::PitchTrack t = pnpe::dsp_estimate(clip.audio, dsp_spec, dsp_opt);
      const std::size_t n = std::min(t.size(), clip.ann.size());
      for (std::size_t i = 0; i < n; ++i) {
        d.ref_f0.push_back(clip.ann.voiced[i] ? clip.ann.f0_hz[i] : engine.grid.fmin_hz);
        d.ref_v.push_back(clip.ann.voiced[i]);
        d.f0.push_back(t.f0_hz[i]);
        d.h_max.push_back(t.periodicity[i]);
      }
    }
    return d;
  };

  // Thresholds from the validation split.
  const SplitData neural_valid = collect_neural(valid_idx, 0.5);
  const double alpha_entropy =
      pnpe::search_threshold(neural_valid.h_entropy, neural_valid.ref_v).alpha;
  const double alpha_max = pnpe::search_threshold(neural_valid.h_max, neural_valid.ref_v).alpha;
  const SplitData dsp_valid = collect_dsp(valid_idx);
  const double alpha_dsp = pnpe::search_threshold(dsp_valid.h_max, dsp_valid.ref_v).alpha;

  std::vector<std::string> wavs;
  for (std::size_t ci : eval_idx)
    wavs.push_back((fs::path(a.corpus) / "clips" / (meta.clips[ci] + ".wav")).string());

  std::vector<BenchRow> rows;
  {
    BenchRow row;
    row.name = fs::path(a.model).stem().string();
    SplitData d = collect_neural(eval_idx, alpha_entropy);
    row.report = pnpe::evaluate(d.ref_f0, d.ref_v, d.f0, d.voiced);
    row.f1_entropy =
        pnpe::voicing_f1(d.ref_v, pnpe::voicing(d.h_entropy, alpha_entropy)).f1;
    row.f1_max = pnpe::voicing_f1(d.ref_v, pnpe::voicing(d.h_max, alpha_max)).f1;
    pnpe::DecodeOptions opts;
    opts.threshold = alpha_entropy;
    opts.window_bins = a.window_bins;
    auto estimator1 = [&](const pnpe::AudioBuffer& buf) {
      return pnpe::estimate(engine, buf, hop, opts, 1);
    };
    auto estimatorN = [&](const pnpe::AudioBuffer& buf) {
      return pnpe::estimate(engine, buf, hop, opts, 0);
    };
    row.rtf_single = pnpe::benchmark_rtf(estimator1, wavs, out_dir + "/neural", 1).rtf;
    row.rtf_all = pnpe::benchmark_rtf(estimatorN, wavs, out_dir + "/neural",
                                      static_cast<int>(pnpe::process_pool().size()))
                      .rtf;
    rows.push_back(row);
  }
  {
    BenchRow row;
    row.name = "cmnd";
    pnpe::DspOptions opt = dsp_opt;
    opt.voicing_threshold = alpha_dsp;
    SplitData d;
    for (std::size_t ci : eval_idx) {
      const pnpe::AnnotatedClip clip = pnpe::load_clip(a.corpus, meta, meta.clips[ci]);
      const pnpe::PitchTrack t = pnpe::dsp_estimate(clip.audio, dsp_spec, opt);
      const std::size_t n = std::min(t.size(), clip.ann.size());
      for (std::size_t i = 0; i < n; ++i) {
        d.ref_f0.push_back(clip.ann.voiced[i] ? clip.ann.f0_hz[i] : engine.grid.fmin_hz);
        d.ref_v.push_back(clip.ann.voiced[i]);
        d.f0.push_back(t.f0_hz[i]);
        d.voiced.push_back(t.voiced[i]);
        d.h_max.push_back(t.periodicity[i]);
      }
    }
    row.report = pnpe::evaluate(d.ref_f0, d.ref_v, d.f0, d.voiced);
    row.f1_max = pnpe::voicing_f1(d.ref_v, pnpe::voicing(d.h_max, alpha_dsp)).f1;
    auto estimator1 = [&](const pnpe::AudioBuffer& buf) {
      return pnpe::dsp_estimate(buf, dsp_spec, opt, 1);
    };
    auto estimatorN = [&](const pnpe::AudioBuffer& buf) {
      return pnpe::dsp_estimate(buf, dsp_spec, opt, 0);
    };
    row.rtf_single = pnpe::benchmark_rtf(estimator1, wavs, out_dir + "/cmnd", 1).rtf;
    row.rtf_all = pnpe::benchmark_rtf(estimatorN, wavs, out_dir + "/cmnd",
                                      static_cast<int>(pnpe::process_pool().size()))
                      .rtf;
    rows.push_back(row);
  }

  std::printf(
      "| Model | Dcents | RPA | RCA | F1 (entropy) | F1 (max) | RTF (1 thread) | RTF (all cores) "
      "|\n");
  std::printf("|---|---|---|---|---|---|---|---|\n");
  for (const BenchRow& r : rows) {
    auto f1s = [](double v) {
      char buf[32];
      if (v < 0.0) return std::string("-");
      std::snprintf(buf, sizeof(buf), "%.4f", v);
      return std::string(buf);
    };
    std::printf("| %s | %.2f | %.4f | %.4f | %s | %s | %.4f | %.4f |\n", r.name.c_str(),
                r.report.delta_cents, r.report.rpa, r.report.rca, f1s(r.f1_entropy).c_str(),
                f1s(r.f1_max).c_str(), r.rtf_single, r.rtf_all);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pnpe: neural pitch and periodicity estimation"};
  app.require_subcommand(1);
  std::function<int()> runner;

  InferArgs infer;
  CLI::App* cmd_infer = app.add_subcommand("infer", "estimate pitch from wav files");
  cmd_infer->add_option("--model", infer.model, "model weights (.pnpe)")->required();
  cmd_infer->add_option("--input", infer.inputs, "input wav file(s)")->required();
  cmd_infer->add_option("--output", infer.output, "output csv (or directory for several inputs)")
      ->required();
  cmd_infer->add_option("--hop-ms", infer.hop_ms, "hop size in milliseconds")
      ->capture_default_str();
  cmd_infer->add_option("--decoder", infer.decoder, "pitch decoder: argmax|weighted")
      ->capture_default_str();
  cmd_infer->add_option("--periodicity", infer.periodicity, "periodicity: entropy|max")
      ->capture_default_str();
  cmd_infer->add_option("--threshold", infer.threshold, "voicing threshold in [0,1]")
      ->capture_default_str();
  cmd_infer->add_option("--window-bins", infer.window_bins, "local expected value window (odd)")
      ->capture_default_str();
  cmd_infer->add_option("--threads", infer.threads, "thread count (0 = all cores)")
      ->capture_default_str();
  cmd_infer->callback([&]() { runner = [&]() { return run_infer(infer); }; });

  TrainArgs train;
  CLI::App* cmd_train = app.add_subcommand("train", "train a model on a corpus");
  cmd_train->add_option("--corpus", train.corpus, "corpus directory")->required();
  cmd_train->add_option("--output", train.output, "output model path (.pnpe)")->required();
  cmd_train->add_option("--arch", train.arch, "architecture: compact|reference|tiny")
      ->capture_default_str();
  cmd_train->add_option("--steps", train.steps, "training steps")->capture_default_str();
  cmd_train->add_option("--batch", train.batch, "batch size")->capture_default_str();
  cmd_train->add_option("--lr", train.lr, "Adam learning rate")->capture_default_str();
  cmd_train->add_option("--seed", train.seed, "seed for init, sampling, and the data split")
      ->capture_default_str();
  cmd_train->add_option("--blur-std-cents", train.blur_std_cents, "target blur in cents")
      ->capture_default_str();
  cmd_train->add_option("--checkpoint-every", train.checkpoint_every, "checkpoint interval")
      ->capture_default_str();
  cmd_train->add_option("--checkpoint-dir", train.checkpoint_dir, "checkpoint directory");
  cmd_train->add_option("--loss-log", train.loss_log, "write per-step loss csv here");
  cmd_train->add_flag("--voiced-only", train.voiced_only, "drop unvoiced frames (ablation)");
  cmd_train->add_option("--bins", train.bins, "pitch bins")->capture_default_str();
  cmd_train->add_option("--fmin", train.fmin, "grid fmin in Hz")->capture_default_str();
  cmd_train->add_option("--cents-per-bin", train.cents_per_bin, "grid bin width in cents")
      ->capture_default_str();
  cmd_train->callback([&]() { runner = [&]() { return run_train(train); }; });

  EvaluateArgs evaluate;
  CLI::App* cmd_eval = app.add_subcommand("evaluate", "score predictions against references");
  cmd_eval->add_option("--reference", evaluate.reference, "reference csv file or directory")
      ->required();
  cmd_eval->add_option("--prediction", evaluate.prediction, "prediction csv file or directory")
      ->required();
  cmd_eval->add_option("--eps-cents", evaluate.eps_cents, "pitch accuracy threshold")
      ->capture_default_str();
  cmd_eval->callback([&]() { runner = [&]() { return run_evaluate(evaluate); }; });

  SearchArgs search;
  CLI::App* cmd_search = app.add_subcommand("search-threshold", "fit the voicing threshold");
  cmd_search->add_option("--model", search.model, "model weights (.pnpe)")->required();
  cmd_search->add_option("--corpus", search.corpus, "corpus directory")->required();
  cmd_search->add_option("--split", search.split, "split: train|valid|test|all")
      ->capture_default_str();
  cmd_search->add_option("--periodicity", search.periodicity, "periodicity: entropy|max")
      ->capture_default_str();
  cmd_search->add_option("--hop-ms", search.hop_ms, "hop size in milliseconds")
      ->capture_default_str();
  cmd_search->add_option("--seed", search.seed, "data split seed")->capture_default_str();
  cmd_search->add_option("--threads", search.threads, "thread count (0 = all cores)")
      ->capture_default_str();
  cmd_search->callback([&]() { runner = [&]() { return run_search_threshold(search); }; });

  SynthArgs synth;
  CLI::App* cmd_synth = app.add_subcommand("synth", "materialize a synthetic corpus");
  cmd_synth->add_option("--output", synth.output, "corpus directory to create")->required();
  cmd_synth->add_option("--clips", synth.clips, "number of clips")->capture_default_str();
  cmd_synth->add_option("--seed", synth.seed, "corpus seed")->capture_default_str();
  cmd_synth->add_option("--duration", synth.duration, "clip seconds")->capture_default_str();
  cmd_synth->add_option("--snr", synth.snr_db, "background snr in dB")->capture_default_str();
  cmd_synth->add_option("--unvoiced-fraction", synth.unvoiced_fraction,
                        "fraction of unvoiced segments")
      ->capture_default_str();
  cmd_synth->add_option("--harmonics", synth.harmonics, "harmonic count")->capture_default_str();
  cmd_synth->add_option("--f0-min", synth.f0_min, "lowest f0 in Hz")->capture_default_str();
  cmd_synth->add_option("--f0-max", synth.f0_max, "highest f0 in Hz")->capture_default_str();
  cmd_synth->add_option("--vibrato-cents", synth.vibrato_cents, "vibrato depth")
      ->capture_default_str();
  cmd_synth->add_option("--vibrato-hz", synth.vibrato_hz, "vibrato rate")->capture_default_str();
  cmd_synth->add_option("--sample-rate", synth.sample_rate, "sample rate")->capture_default_str();
  cmd_synth->add_option("--window", synth.window, "analysis window in samples")
      ->capture_default_str();
  cmd_synth->add_option("--hop", synth.hop, "annotation hop in samples")->capture_default_str();
  cmd_synth->callback([&]() { runner = [&]() { return run_synth(synth); }; });

  BenchmarkArgs bench;
  CLI::App* cmd_bench = app.add_subcommand("benchmark", "metrics and speed table on a corpus");
  cmd_bench->add_option("--model", bench.model, "model weights (.pnpe)")->required();
  cmd_bench->add_option("--corpus", bench.corpus, "corpus directory")->required();
  cmd_bench->add_option("--split", bench.split, "split: train|valid|test|all")
      ->capture_default_str();
  cmd_bench->add_option("--output-dir", bench.output_dir, "where predictions are written");
  cmd_bench->add_option("--hop-ms", bench.hop_ms, "hop size in milliseconds")
      ->capture_default_str();
  cmd_bench->add_option("--seed", bench.seed, "data split seed")->capture_default_str();
  cmd_bench->add_option("--window-bins", bench.window_bins, "local expected value window")
      ->capture_default_str();
  cmd_bench->callback([&]() { runner = [&]() { return run_benchmark(bench); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    return runner();
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.message << "\n";
    return 4;
  } catch (const pnpe::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const pnpe::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const pnpe::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
