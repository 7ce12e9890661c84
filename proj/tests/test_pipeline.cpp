#include <doctest.h>

#include <atomic>
#include <thread>

#include "tunnelprof/pipeline.hpp"

using namespace tunnelprof;
using namespace std::chrono_literals;

TEST_CASE("bounded queue preserves FIFO order under backpressure") {
  BoundedQueue<int> q(4);
  std::vector<int> got;
  std::thread consumer([&] {
    while (auto v = q.pop()) {
      got.push_back(*v);
      std::this_thread::sleep_for(100us);  // keep the queue full
    }
  });
  for (int i = 0; i < 200; ++i) {
    q.push(i);
  }
  q.close();
  consumer.join();

  REQUIRE(got.size() == 200);
  for (int i = 0; i < 200; ++i) {
    CHECK(got[static_cast<std::size_t>(i)] == i);
  }
}

TEST_CASE("capacity-1 queue still moves every item") {
  BoundedQueue<int> q(1);
  std::atomic<int> sum{0};
  std::thread consumer([&] {
    while (auto v = q.pop()) {
      sum += *v;
    }
  });
  int expected = 0;
  for (int i = 1; i <= 100; ++i) {
    q.push(i);
    expected += i;
  }
  q.close();
  consumer.join();
  CHECK(sum == expected);
}

TEST_CASE("close drains remaining items before poppers see the end") {
  BoundedQueue<int> q(16);
  for (int i = 0; i < 10; ++i) q.push(i);
  q.close();
  int drained = 0;
  while (q.pop()) ++drained;
  CHECK(drained == 10);
  CHECK_THROWS_AS(q.push(1), ProfilerStateError);
}

TEST_CASE("multiple producers, one consumer") {
  BoundedQueue<int> q(8);
  std::atomic<int> count{0};
  std::thread consumer([&] {
    while (q.pop()) ++count;
  });
  std::vector<std::thread> producers;
  for (int t = 0; t < 3; ++t) {
    producers.emplace_back([&] {
      for (int i = 0; i < 500; ++i) q.push(i);
    });
  }
  for (auto& p : producers) p.join();
  q.close();
  consumer.join();
  CHECK(count == 1500);
}

TEST_CASE("two sleep stages overlap to the max-stage bound") {
  // produce 30 ms, consume 20 ms, 100 packets: sequential ~5.0 s, pipelined
  // ~3.0 s plus one 20 ms tail. Scaled down 20x here to keep the suite
  // quick; the acceptance suite runs the full-size configuration.
  const auto produce = [] { std::this_thread::sleep_for(1500us); };
  const auto consume = [] { std::this_thread::sleep_for(1000us); };
  const StageBenchResult r = run_two_stage_bench(100, produce, consume, 1024);

  const double expected_sequential = 100 * 0.0025;
  const double expected_pipelined = 100 * 0.0015 + 0.0010;
  CHECK(r.sequential_seconds == doctest::Approx(expected_sequential).epsilon(0.10));
  CHECK(r.pipelined_seconds == doctest::Approx(expected_pipelined).epsilon(0.10));
  CHECK(r.pipelined_seconds < r.sequential_seconds);
}
