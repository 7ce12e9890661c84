#include <doctest.h>

#include <thread>

#include "tunnelprof/rng.hpp"
#include "tunnelprof/transport.hpp"

using namespace tunnelprof;
using namespace std::chrono_literals;

namespace {
Address addr(std::uint8_t last, std::uint16_t port) { return Address({10, 0, 0, last}, port); }
}  // namespace

TEST_CASE("bind then send to self delivers immediately") {
  InProcNetwork net;
  auto ep = net.bind(addr(1, 7001));
  ep->send(encode_address(ep->address()), Bytes{1, 2, 3});
  auto d = ep->try_recv();
  REQUIRE(d.has_value());
  CHECK(d->payload == Bytes{1, 2, 3});
  CHECK(decode_address(d->source) == ep->address());
  CHECK_FALSE(ep->try_recv().has_value());
}

TEST_CASE("double bind of the same address is a bind error") {
  InProcNetwork net;
  auto ep = net.bind(addr(1, 7001));
  CHECK_THROWS_AS(net.bind(addr(1, 7001)), BindError);
  ep.reset();  // released addresses can be bound again
  CHECK_NOTHROW(net.bind(addr(1, 7001)));
}

TEST_CASE("eight endpoints are deliverable pairwise") {
  InProcNetwork net;
  std::vector<std::unique_ptr<Endpoint>> eps;
  for (std::uint8_t i = 0; i < 8; ++i) {
    eps.push_back(net.bind(addr(i, static_cast<std::uint16_t>(7100 + i))));
  }
  for (auto& from : eps) {
    for (auto& to : eps) {
      if (from == to) continue;
      from->send(encode_address(to->address()), Bytes{42});
    }
  }
  for (auto& ep : eps) {
    int received = 0;
    while (ep->try_recv()) ++received;
    CHECK(received == 7);
  }
  CHECK(net.dropped() == 0);
}

TEST_CASE("unknown destination is a counted drop") {
  InProcNetwork net;
  auto ep = net.bind(addr(1, 7001));
  ep->send(encode_address(addr(9, 9999)), Bytes{1});
  CHECK(net.dropped() == 1);
}

TEST_CASE("oversize datagrams are refused") {
  InProcNetwork net;
  auto ep = net.bind(addr(1, 7001));
  CHECK_THROWS_AS(ep->send(encode_address(ep->address()), Bytes(65508, 0)), OversizeError);
}

TEST_CASE("configured latency delays delivery") {
  InProcNetwork net;
  net.set_default_latency(5ms);
  auto a = net.bind(addr(1, 7001));
  auto b = net.bind(addr(2, 7002));
  const auto sent_at = std::chrono::steady_clock::now();
  a->send(encode_address(b->address()), Bytes{1});
  CHECK_FALSE(b->try_recv().has_value());
  auto d = b->recv_wait(100ms);
  const auto got_at = std::chrono::steady_clock::now();
  REQUIRE(d.has_value());
  CHECK(got_at - sent_at >= 5ms);
}

TEST_CASE("per-link FIFO and exactly-once over 10^4 datagrams") {
  InProcNetwork net;
  auto sink = net.bind(addr(9, 7999));
  auto a = net.bind(addr(1, 7001));
  auto b = net.bind(addr(2, 7002));

  constexpr int kPerSender = 5000;
  auto blast = [&](Endpoint& from, std::uint8_t tag) {
    for (int i = 0; i < kPerSender; ++i) {
      Bytes payload{tag, static_cast<std::uint8_t>(i >> 8), static_cast<std::uint8_t>(i)};
      from.send(encode_address(sink->address()), payload);
    }
  };
  std::thread ta([&] { blast(*a, 1); });
  std::thread tb([&] { blast(*b, 2); });
  ta.join();
  tb.join();

  int next_a = 0;
  int next_b = 0;
  int total = 0;
  while (auto d = sink->try_recv()) {
    const int seq = (d->payload[1] << 8) | d->payload[2];
    if (d->payload[0] == 1) {
      CHECK(seq == next_a);
      ++next_a;
    } else {
      CHECK(seq == next_b);
      ++next_b;
    }
    ++total;
  }
  CHECK(total == 2 * kPerSender);
  CHECK(net.dropped() == 0);
  CHECK(sink->delivered_total() == 2 * kPerSender);
  CHECK(sink->delivered_by_source().at(a->address().packed()) == kPerSender);
}

TEST_CASE("udp localhost endpoints exchange datagrams") {
  UdpNetwork net;
  auto a = net.bind(Address({127, 0, 0, 1}, 0));
  auto b = net.bind(Address({127, 0, 0, 1}, 0));
  REQUIRE(a->address().port != 0);
  REQUIRE(b->address().port != 0);

  a->send(encode_address(b->address()), Bytes{9, 9});
  auto d = b->recv_wait(500ms);
  REQUIRE(d.has_value());
  CHECK(d->payload == Bytes{9, 9});
  CHECK(decode_address(d->source) == a->address());

  SUBCASE("double bind of a concrete port fails") {
    CHECK_THROWS_AS(net.bind(a->address()), BindError);
  }
}

TEST_CASE("in-process and udp transports deliver identical bytes") {
  Rng rng(0xd1ff);
  std::vector<Bytes> payloads;
  for (int i = 0; i < 200; ++i) {
    Bytes p(64 + rng.next_u32() % 512);
    rng.fill(p);
    payloads.push_back(std::move(p));
  }

  auto run = [&](Network& net, const Address& a_addr, const Address& b_addr) {
    auto a = net.bind(a_addr);
    auto b = net.bind(b_addr);
    std::vector<Bytes> got;
    for (const auto& p : payloads) {
      a->send(encode_address(b->address()), p);
      auto d = b->recv_wait(500ms);
      REQUIRE(d.has_value());
      got.push_back(d->payload);
    }
    return got;
  };

  InProcNetwork inproc;
  UdpNetwork udp;
  const auto via_inproc = run(inproc, addr(1, 7001), addr(2, 7002));
  const auto via_udp = run(udp, Address({127, 0, 0, 1}, 0), Address({127, 0, 0, 1}, 0));
  CHECK(via_inproc == via_udp);
  CHECK(via_inproc == payloads);
}
