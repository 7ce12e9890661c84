#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>

#include "tunnelprof/errors.hpp"

namespace tunnelprof {

/// Bounded blocking FIFO used between the crypto and network stages.
/// push blocks while full (backpressure, never drops); pop blocks until an
/// item arrives or the queue is closed and drained.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  void push(T item) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) {
      throw ProfilerStateError("push on a closed queue");
    }
    items_.push_back(std::move(item));
    lock.unlock();
    not_empty_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) {
      return std::nullopt;  // closed and drained
    }
    T item = std::move(items_.front());
    items_.pop_front();
    lock.unlock();
    not_full_.notify_one();
    return item;
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }

  std::size_t capacity() const { return capacity_; }

 private:
  mutable std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  std::size_t capacity_;
  bool closed_ = false;
};

struct StageBenchResult {
  double sequential_seconds = 0.0;
  double pipelined_seconds = 0.0;

  double measured_speedup() const {
    return sequential_seconds > 0.0
               ? 1.0 - pipelined_seconds / sequential_seconds
               : 0.0;
  }
};

/// Runs `packets` items through produce-then-consume twice: once serially
/// on one thread, once with the consume stage on its own thread fed
/// through a BoundedQueue of the given capacity.
StageBenchResult run_two_stage_bench(int packets,
                                     const std::function<void()>& produce,
                                     const std::function<void()>& consume,
                                     std::size_t queue_capacity);

}  // namespace tunnelprof
