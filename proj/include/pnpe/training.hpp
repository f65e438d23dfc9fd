#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pnpe/bins.hpp"
#include "pnpe/common.hpp"
#include "pnpe/network.hpp"
#include "pnpe/rng.hpp"
#include "pnpe/tensor.hpp"
#include "pnpe/thread_pool.hpp"

namespace pnpe {

// target_bin of an unpitched frame; such frames are assigned a fresh random
// bin every time they are served, pushing the posterior toward uniform on
// aperiodic input.
constexpr int kUnvoiced = -1;

struct TrainExample {
  std::vector<float> frame;
  int target_bin = kUnvoiced;

  bool voiced() const { return target_bin != kUnvoiced; }
};

struct TrainConfig {
  int batch_size = 128;
  int total_steps = 3000;
  double learning_rate = 2e-4;
  std::uint64_t seed = 0;
  double blur_std_cents = 25.0;
  int checkpoint_interval = 0;  // 0 = no checkpoints
  std::string checkpoint_dir;
};

// Gaussian-blurred classification target: a bump of blur_std cents around the
// target bin (or a freshly drawn random bin when unvoiced), truncated to the
// grid and normalized to sum to 1.
inline std::vector<float> make_target(const BinGrid& grid, const TrainExample& example,
                                      double blur_std_cents, Rng& rng) {
  const int P = grid.num_bins;
  const int bin = example.voiced() ? example.target_bin
                                   : static_cast<int>(rng.uniform_int(P));
  if (bin < 0 || bin >= P) throw InvalidArgument("make_target: target bin out of range");
  std::vector<float> target(P, 0.0f);
  const double sigma = blur_std_cents / grid.cents_per_bin;
  if (sigma <= 0.0) {
    target[bin] = 1.0f;
    return target;
  }
  double sum = 0.0;
  for (int i = 0; i < P; ++i) {
    const double z = (i - bin) / sigma;
    const double w = std::exp(-0.5 * z * z);
    target[i] = static_cast<float>(w);
    sum += w;
  }
  const float inv = static_cast<float>(1.0 / sum);
  for (float& v : target) v *= inv;
  return target;
}

// Categorical cross entropy of logits (batch, P, 1) against target rows that
// each sum to 1: mean over the batch of logsumexp(logits) - <target, logits>.
// When dlogits is non-null it receives (softmax - target) * scale per row.
template <typename T>
T cce_loss_scaled(const Tensor3<T>& logits, const Tensor3<T>& targets, Tensor3<T>* dlogits,
                  T scale) {
  if (logits.batch != targets.batch || logits.channels != targets.channels)
    throw InvalidArgument("cce_loss: shape mismatch");
  const int P = logits.channels;
  if (dlogits) *dlogits = Tensor3<T>(logits.batch, P, 1);
  T total = T(0);
  for (int b = 0; b < logits.batch; ++b) {
    const T* z = logits.row(b, 0);
    const T* t = targets.row(b, 0);
    T tsum = T(0);
    T zmax = z[0];
    for (int i = 0; i < P; ++i) {
      if (!std::isfinite(static_cast<double>(z[i])))
        throw InvalidArgument("cce_loss: non-finite logit");
      if (z[i] > zmax) zmax = z[i];
      tsum += t[i];
    }
    if (std::abs(static_cast<double>(tsum) - 1.0) > 1e-3)
      throw InvalidArgument("cce_loss: target row does not sum to 1");
    T expsum = T(0), dot = T(0);
    for (int i = 0; i < P; ++i) {
      expsum += std::exp(z[i] - zmax);
      dot += t[i] * z[i];
    }
    const T lse = zmax + std::log(expsum);
    total += lse - dot;
    if (dlogits) {
      T* d = dlogits->row(b, 0);
      const T inv = T(1) / expsum;
      for (int i = 0; i < P; ++i) d[i] = (std::exp(z[i] - zmax) * inv - t[i]) * scale;
    }
  }
  return total;
}

template <typename T>
T cce_loss(const Tensor3<T>& logits, const Tensor3<T>& targets) {
  return cce_loss_scaled<T>(logits, targets, nullptr, T(1)) / static_cast<T>(logits.batch);
}

// Convenience wrapper matching the loss used in training: loss plus gradient.
template <typename T>
T cce_loss_backward(const Tensor3<T>& logits, const Tensor3<T>& targets, Tensor3<T>& dlogits) {
  const T scale = T(1) / static_cast<T>(logits.batch);
  return cce_loss_scaled<T>(logits, targets, &dlogits, scale) / static_cast<T>(logits.batch);
}

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0f), v_(n, 0.0f) {}

  void step(std::vector<float>& theta, const std::vector<float>& grad) {
    if (theta.size() != m_.size() || grad.size() != m_.size())
      throw InvalidArgument("Adam: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i];
      const double m = b1_ * m_[i] + (1.0 - b1_) * g;
      const double v = b2_ * v_[i] + (1.0 - b2_) * g * g;
      m_[i] = static_cast<float>(m);
      v_[i] = static_cast<float>(v);
      theta[i] -= static_cast<float>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<float> m_, v_;
};

// Runs the full training schedule: every step draws batch_size examples with
// replacement, builds blurred targets (unvoiced frames get a fresh random
// bin), and applies one Adam update. No early stopping; the step count is the
// only stopping rule. Returns the per-step loss log.
//
// Forward/backward parallelize over contiguous sub-batches; per-chunk
// gradients are reduced in chunk order, so a run is reproducible on a fixed
// machine and seed.
inline std::vector<float> train(const TrainConfig& cfg, const std::vector<TrainExample>& dataset,
                                const BinGrid& grid, Network<float>& net) {
  if (dataset.empty()) throw InvalidArgument("train: empty dataset");
  if (cfg.batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
  const int window = net.config().window_size;
  const int P = net.config().output_bins;
  if (grid.num_bins != P) throw InvalidArgument("train: grid size does not match network output");
  for (const TrainExample& e : dataset)
    if (static_cast<int>(e.frame.size()) != window)
      throw InvalidArgument("train: example frame size does not match the network window");

  Rng rng(cfg.seed);
  Adam opt(net.weights().size(), cfg.learning_rate);
  std::vector<float> loss_log;
  loss_log.reserve(cfg.total_steps);

  ThreadPool& pool = process_pool();
  const std::size_t n_chunks = std::min<std::size_t>(pool.size(), cfg.batch_size);
  std::vector<std::vector<float>> chunk_grads(n_chunks);
  std::vector<float> chunk_loss(n_chunks);

  for (int step = 0; step < cfg.total_steps; ++step) {
    // Draw the batch and its targets sequentially: the RNG stream must not
    // depend on worker scheduling.
    Tensor3<float> x(cfg.batch_size, 1, window);
    Tensor3<float> targets(cfg.batch_size, P, 1);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const TrainExample& e = dataset[rng.uniform_int(dataset.size())];
      std::copy(e.frame.begin(), e.frame.end(), x.row(b, 0));
      const std::vector<float> t = make_target(grid, e, cfg.blur_std_cents, rng);
      std::copy(t.begin(), t.end(), targets.row(b, 0));
    }

    const std::size_t chunk = (cfg.batch_size + n_chunks - 1) / n_chunks;
    pool.for_ranges(n_chunks, [&](std::size_t c0, std::size_t c1) {
      for (std::size_t c = c0; c < c1; ++c) {
        const int b0 = static_cast<int>(c * chunk);
        const int b1 = std::min<int>(cfg.batch_size, static_cast<int>((c + 1) * chunk));
        if (b0 >= b1) {
          chunk_loss[c] = 0.0f;
          chunk_grads[c].assign(net.weights().size(), 0.0f);
          continue;
        }
        Tensor3<float> xc(b1 - b0, 1, window);
        Tensor3<float> tc(b1 - b0, P, 1);
        std::copy(x.row(b0, 0), x.row(b0, 0) + static_cast<std::size_t>(b1 - b0) * window,
                  xc.data.begin());
        std::copy(targets.row(b0, 0), targets.row(b0, 0) + static_cast<std::size_t>(b1 - b0) * P,
                  tc.data.begin());
        typename Network<float>::Cache cache;
        Tensor3<float> logits = net.forward(xc, &cache);
        Tensor3<float> dlogits;
        const float scale = 1.0f / static_cast<float>(cfg.batch_size);
        chunk_loss[c] = cce_loss_scaled<float>(logits, tc, &dlogits, scale);
        chunk_grads[c].assign(net.weights().size(), 0.0f);
        net.backward(cache, dlogits, chunk_grads[c]);
      }
    });

    float loss_sum = 0.0f;
    for (std::size_t c = 0; c < n_chunks; ++c) loss_sum += chunk_loss[c];
    std::vector<float>& grad = chunk_grads[0];
    for (std::size_t c = 1; c < n_chunks; ++c)
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += chunk_grads[c][i];

    opt.step(net.weights(), grad);
    loss_log.push_back(loss_sum / static_cast<float>(cfg.batch_size));

    if (cfg.checkpoint_interval > 0 && !cfg.checkpoint_dir.empty() &&
        (step + 1) % cfg.checkpoint_interval == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "step_%06d.pnpe", step + 1);
      std::filesystem::create_directories(cfg.checkpoint_dir);
      save_params((std::filesystem::path(cfg.checkpoint_dir) / name).string(), net.to_params());
    }
  }
  return loss_log;
}

inline void write_loss_log(const std::string& path, const std::vector<float>& losses) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof(line), "%zu,%.9g\n", i, static_cast<double>(losses[i]));
    out << line;
  }
}

}  // namespace pnpe
