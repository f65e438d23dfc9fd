#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace pnpe {

// Persistent pool used for frame/batch-item parallelism. Work is split into
// contiguous index ranges; every reduction stays inside one range, so results
// do not depend on how many workers execute them.
class ThreadPool {
 public:
  explicit ThreadPool(unsigned n_threads) {
    if (n_threads < 1) n_threads = 1;
    for (unsigned i = 1; i < n_threads; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  std::size_t size() const { return workers_.size() + 1; }

  // Runs fn(begin, end) over a static partition of [0, n) and blocks until
  // every range is done. The calling thread executes the first range.
  // max_parts (0 = pool size) caps the parallelism of this one call.
  void for_ranges(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t max_parts = 0) {
    if (n == 0) return;
    std::size_t parts = std::min(n, size());
    if (max_parts > 0) parts = std::min(parts, max_parts);
    if (parts == 1) {
      fn(0, n);
      return;
    }
    std::atomic<std::size_t> remaining(parts - 1);
    {
      std::lock_guard<std::mutex> lk(mu_);
      const std::size_t chunk = (n + parts - 1) / parts;
      for (std::size_t p = 1; p < parts; ++p) {
        const std::size_t b = p * chunk;
        const std::size_t e = std::min(n, b + chunk);
        tasks_.emplace_back([&fn, &remaining, b, e] {
          if (b < e) fn(b, e);
          remaining.fetch_sub(1, std::memory_order_acq_rel);
        });
      }
    }
    cv_.notify_all();
    fn(0, std::min(n, (n + parts - 1) / parts));
    while (remaining.load(std::memory_order_acquire) != 0) std::this_thread::yield();
  }

 private:
  void worker_loop() {
    for (;;) {
      std::function<void()> task;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [this] { return stop_ || !tasks_.empty(); });
        if (stop_ && tasks_.empty()) return;
        task = std::move(tasks_.back());
        tasks_.pop_back();
      }
      task();
    }
  }

  std::vector<std::thread> workers_;
  std::vector<std::function<void()>> tasks_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
};

// parallel_for(n, fn) with fn(i) per index, over a shared process pool.
// Pool size is fixed on first use; pass threads > 0 before first use to pin it.
inline ThreadPool& process_pool(unsigned threads = 0) {
  static ThreadPool pool(threads > 0 ? threads : std::thread::hardware_concurrency());
  return pool;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t max_parts = 0) {
  process_pool().for_ranges(
      n,
      [&fn](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) fn(i);
      },
      max_parts);
}

}  // namespace pnpe
