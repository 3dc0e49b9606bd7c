#pragma once

// In-process stand-in for an MPI deployment: N workers, each owning one
// shard and one mutable state slot, driven in lockstep through
// all_execute / reduce_sum / broadcast.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <concepts>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "tadmm/error.hpp"
#include "tadmm/linalg.hpp"

namespace tadmm {

/// Number of parallel lanes: TADMM_THREADS if set, else hardware concurrency.
inline std::size_t default_lanes() {
  if (const char* env = std::getenv("TADMM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Fixed set of threads that run indexed tasks; the calling thread joins in.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t lanes = default_lanes()) {
    const std::size_t extra = lanes > 1 ? lanes - 1 : 0;
    threads_.reserve(extra);
    for (std::size_t i = 0; i < extra; ++i) threads_.emplace_back([this] { loop(); });
  }

  ~WorkerPool() {
    {
      std::lock_guard lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t lanes() const noexcept { return threads_.size() + 1; }

  /// Runs fn(0..tasks-1) and blocks until all have finished. The first
  /// exception thrown by any task is rethrown here.
  void run(std::size_t tasks, const std::function<void(std::size_t)>& fn) {
    if (tasks == 0) return;
    if (threads_.empty() || tasks == 1) {
      for (std::size_t i = 0; i < tasks; ++i) fn(i);
      return;
    }
    {
      std::lock_guard lk(mu_);
      fn_ = &fn;
      tasks_ = tasks;
      next_.store(0);
      pending_ = tasks;
      error_ = nullptr;
      ++generation_;
    }
    cv_.notify_all();
    work();
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    fn_ = nullptr;
    if (error_) std::rethrow_exception(std::exchange(error_, nullptr));
  }

 private:
  void loop() {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      work();
    }
  }

  void work() {
    for (;;) {
      const std::size_t i = next_.fetch_add(1);
      if (i >= tasks_) return;
      try {
        (*fn_)(i);
      } catch (...) {
        std::lock_guard lk(mu_);
        if (!error_) error_ = std::current_exception();
      }
      std::lock_guard lk(mu_);
      if (--pending_ == 0) done_cv_.notify_all();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* fn_ = nullptr;
  std::atomic<std::size_t> tasks_{0};
  std::atomic<std::size_t> next_{0};
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

/// Algorithm traffic and time is accounted separately from diagnostics
/// (residuals, objective logging).
enum class Phase { algorithm, diagnostic };

struct CommCounters {
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::uint64_t diag_bytes_up = 0;
  std::uint64_t diag_bytes_down = 0;
  /// Sum over workers of algorithm step durations.
  double compute_seconds = 0.0;
  /// Sum over workers of time spent waiting at barriers for the slowest worker.
  double barrier_wait_seconds = 0.0;
};

struct CollectiveResult {
  Vector payload;
  std::size_t contributing = 0;
};

template <class S>
concept ShardLike = requires(const S& s) {
  { s.rows() } -> std::convertible_to<std::size_t>;
  { s.cols() } -> std::convertible_to<std::size_t>;
};

template <ShardLike Shard, class State>
class Cluster {
 public:
  Cluster(std::vector<Shard> shards, std::vector<State> states, std::size_t lanes = default_lanes())
      : shards_(std::move(shards)), states_(std::move(states)) {
    detail::require(!shards_.empty(), "cluster: at least one shard is required");
    detail::require_dims(states_.size() == shards_.size(),
                         "cluster: state count does not match shard count");
    const std::size_t cols = shards_.front().cols();
    for (std::size_t i = 0; i < shards_.size(); ++i)
      detail::require_dims(shards_[i].cols() == cols,
                           "cluster: shard " + std::to_string(i) + " has " +
                               std::to_string(shards_[i].cols()) + " columns, expected " +
                               std::to_string(cols));
    pool_ = std::make_unique<WorkerPool>(std::min(lanes, shards_.size()));
  }

  std::size_t size() const noexcept { return shards_.size(); }
  std::size_t cols() const noexcept { return shards_.front().cols(); }
  std::size_t total_rows() const {
    std::size_t m = 0;
    for (const auto& s : shards_) m += s.rows();
    return m;
  }

  const Shard& shard(std::size_t i) const { return shards_.at(i); }
  std::span<const Shard> shards() const noexcept { return shards_; }
  State& state(std::size_t i) { return states_.at(i); }
  const State& state(std::size_t i) const { return states_.at(i); }

  /// Runs step(i, shard_i, state_i) on every worker exactly once, then
  /// waits for all of them. Returns the per-worker outputs in worker order.
  template <class F>
  auto all_execute(F&& step, Phase phase = Phase::algorithm) {
    using R = std::invoke_result_t<F&, std::size_t, const Shard&, State&>;
    const std::size_t n = shards_.size();
    std::vector<double> seconds(n, 0.0);
    auto timed = [&](std::size_t i, auto&& body) {
      const auto t0 = std::chrono::steady_clock::now();
      body();
      seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    if constexpr (std::is_void_v<R>) {
      pool_->run(n, [&](std::size_t i) { timed(i, [&] { step(i, shards_[i], states_[i]); }); });
      account(seconds, phase);
    } else {
      std::vector<R> out(n);
      pool_->run(n, [&](std::size_t i) {
        timed(i, [&] { out[i] = step(i, shards_[i], states_[i]); });
      });
      account(seconds, phase);
      return out;
    }
  }

  /// Ordered (ascending worker index) sum of one vector per worker.
  CollectiveResult reduce_sum(std::span<const Vector> payloads, Phase phase = Phase::algorithm) {
    detail::require_dims(payloads.size() == shards_.size(),
                         "reduce_sum: expected one payload per worker");
    const std::size_t len = payloads.front().size();
    CollectiveResult res{Vector(len, 0.0), payloads.size()};
    std::uint64_t bytes = 0;
    for (const auto& p : payloads) {
      detail::require_dims(p.size() == len, "reduce_sum: payload shapes differ");
      for (std::size_t k = 0; k < len; ++k) res.payload[k] += p[k];
      bytes += 8u * p.size();
    }
    (phase == Phase::algorithm ? counters_.bytes_up : counters_.diag_bytes_up) += bytes;
    return res;
  }

  /// Scalar reduction (one double per worker), e.g. residual norms.
  double reduce_scalar(std::span<const double> values, Phase phase = Phase::diagnostic) {
    detail::require_dims(values.size() == shards_.size(),
                         "reduce_scalar: expected one value per worker");
    double s = 0.0;
    for (double v : values) s += v;
    (phase == Phase::algorithm ? counters_.bytes_up : counters_.diag_bytes_up) +=
        8u * values.size();
    return s;
  }

  void broadcast(Vector x, Phase phase = Phase::algorithm) {
    detail::require(!x.empty(), "broadcast: empty payload");
    detail::require(all_finite(x), "broadcast: non-finite payload");
    (phase == Phase::algorithm ? counters_.bytes_down : counters_.diag_bytes_down) +=
        8u * x.size() * shards_.size();
    broadcast_ = std::move(x);
  }

  /// The most recent broadcast, as observed by every worker.
  const Vector& broadcast_value() const noexcept { return broadcast_; }

  /// Records traffic that does not go through reduce_sum (Gram upload).
  void count_upload(std::uint64_t bytes, Phase phase = Phase::algorithm) {
    (phase == Phase::algorithm ? counters_.bytes_up : counters_.diag_bytes_up) += bytes;
  }

  const CommCounters& counters() const noexcept { return counters_; }

 private:
  void account(const std::vector<double>& seconds, Phase phase) {
    if (phase != Phase::algorithm) return;
    const double slowest = *std::max_element(seconds.begin(), seconds.end());
    for (double s : seconds) {
      counters_.compute_seconds += s;
      counters_.barrier_wait_seconds += slowest - s;
    }
  }

  std::vector<Shard> shards_;
  std::vector<State> states_;
  std::unique_ptr<WorkerPool> pool_;
  Vector broadcast_;
  CommCounters counters_;
};

template <ShardLike Shard, class State>
Cluster<Shard, State> spawn(std::vector<Shard> shards, std::vector<State> states,
                            std::size_t lanes = default_lanes()) {
  return Cluster<Shard, State>(std::move(shards), std::move(states), lanes);
}

}  // namespace tadmm
