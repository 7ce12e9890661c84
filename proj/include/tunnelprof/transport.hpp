#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "tunnelprof/address.hpp"
#include "tunnelprof/bytes.hpp"
#include "tunnelprof/errors.hpp"

namespace tunnelprof {

inline constexpr std::size_t kMaxDatagramBytes = 65507;

/// A received datagram: source in 6-byte binary form plus the raw bytes,
/// which are always exactly one serialized cell.
struct Datagram {
  AddressBytes source{};
  Bytes payload;
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;

  virtual const Address& address() const = 0;

  /// Hands one datagram to the network. Throws OversizeError past the UDP
  /// payload limit; an unknown in-process destination is a counted drop,
  /// not an error (blind datagram semantics).
  virtual void send(const AddressBytes& dest, ByteView payload) = 0;

  virtual std::optional<Datagram> try_recv() = 0;
  virtual std::optional<Datagram> recv_wait(std::chrono::microseconds timeout) = 0;

  /// Datagrams delivered to this endpoint, keyed by packed source address.
  virtual std::unordered_map<std::uint64_t, std::uint64_t> delivered_by_source() const = 0;
  virtual std::uint64_t delivered_total() const = 0;
};

class Network {
 public:
  virtual ~Network() = default;

  /// Claims an address. Throws BindError when it is already in use.
  virtual std::unique_ptr<Endpoint> bind(const Address& address) = 0;

  /// Datagrams discarded because no endpoint owned the destination.
  virtual std::uint64_t dropped() const = 0;
};

/// Deterministic in-memory network: every datagram is delivered exactly
/// once, per-link FIFO, with an optional delivery latency per link.
class InProcNetwork : public Network {
 public:
  InProcNetwork() = default;
  explicit InProcNetwork(std::chrono::microseconds default_latency)
      : default_latency_(default_latency) {}

  std::unique_ptr<Endpoint> bind(const Address& address) override;
  std::uint64_t dropped() const override { return dropped_.load(std::memory_order_relaxed); }

  void set_default_latency(std::chrono::microseconds latency) { default_latency_ = latency; }
  void set_link_latency(const Address& src, const Address& dst,
                        std::chrono::microseconds latency);

  /// True when any bound endpoint holds a queued (possibly not yet
  /// eligible) datagram. Drives the deterministic scheduler's idle check.
  bool pending() const;

 private:
  friend class InProcEndpoint;
  struct Mailbox;

  void unbind(std::uint64_t key);
  void route(const AddressBytes& src, const AddressBytes& dest, ByteView payload);

  mutable std::mutex mutex_;
  std::unordered_map<std::uint64_t, std::shared_ptr<Mailbox>> mailboxes_;
  std::unordered_map<std::uint64_t, std::chrono::microseconds> link_latency_;
  std::chrono::microseconds default_latency_{0};
  std::atomic<std::uint64_t> dropped_{0};
};

/// Real UDP sockets on localhost. May drop under load; drops show up as a
/// shortfall between sent and delivered counts.
class UdpNetwork : public Network {
 public:
  std::unique_ptr<Endpoint> bind(const Address& address) override;
  std::uint64_t dropped() const override { return 0; }
};

}  // namespace tunnelprof
