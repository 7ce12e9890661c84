#include "tunnelprof/pipeline.hpp"

namespace tunnelprof {

StageBenchResult run_two_stage_bench(int packets,
                                     const std::function<void()>& produce,
                                     const std::function<void()>& consume,
                                     std::size_t queue_capacity) {
  using Clock = std::chrono::steady_clock;
  StageBenchResult result;

  {
    const auto t0 = Clock::now();
    for (int i = 0; i < packets; ++i) {
      produce();
      consume();
    }
    result.sequential_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  }

  {
    BoundedQueue<int> queue(queue_capacity);
    const auto t0 = Clock::now();
    std::thread consumer([&] {
      while (queue.pop()) {
        consume();
      }
    });
    for (int i = 0; i < packets; ++i) {
      produce();
      queue.push(i);
    }
    queue.close();
    consumer.join();
    result.pipelined_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  }

  return result;
}

}  // namespace tunnelprof
