#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>
#include <vector>

#include "tunnelprof/address.hpp"
#include "tunnelprof/cell.hpp"
#include "tunnelprof/crypto.hpp"
#include "tunnelprof/pipeline.hpp"
#include "tunnelprof/profiler.hpp"
#include "tunnelprof/rng.hpp"
#include "tunnelprof/transport.hpp"

namespace tunnelprof {

enum class Role { Seed, Relay, Exit, Sink };

const char* role_name(Role role);

enum class CircuitState { Building, Established, Destroyed };

struct CircuitHopInfo {
  Address address;
  std::uint32_t remote_circuit_id = 0;
};

/// Read-only view of a seed-side circuit; the hop keys stay inside the node.
struct CircuitInfo {
  std::uint32_t local_circuit_id = 0;
  CircuitState state = CircuitState::Building;
  std::vector<CircuitHopInfo> hops;
  int hop_count = 0;
};

/// Always-on plain counters, independent of the profiler registry.
struct NodeCounters {
  std::atomic<std::uint64_t> datagrams_received{0};
  std::atomic<std::uint64_t> datagrams_sent{0};
  std::atomic<std::uint64_t> data_relayed{0};
  std::atomic<std::uint64_t> unknown_circuit_drops{0};
  std::atomic<std::uint64_t> auth_failure_drops{0};
  std::atomic<std::uint64_t> malformed_drops{0};
  std::atomic<std::uint64_t> protocol_drops{0};
  std::atomic<std::uint64_t> extend_actions{0};

  std::uint64_t drops_total() const {
    return unknown_circuit_drops + auth_failure_drops + malformed_drops + protocol_drops;
  }
};

/// Order-sensitive content fingerprint (FNV-1a), used to compare delivered
/// byte streams between runs and send modes.
struct StreamRecord {
  std::uint64_t bytes = 0;
  std::uint64_t packets = 0;
  std::uint64_t fingerprint = 1469598103934665603ull;

  void update(ByteView payload) {
    for (auto b : payload) {
      fingerprint ^= b;
      fingerprint *= 1099511628211ull;
    }
    bytes += payload.size();
    packets += 1;
  }

  friend bool operator==(const StreamRecord&, const StreamRecord&) = default;
};

/// Sink-side accounting: payloads are counted, fingerprinted, and dropped.
struct DeliveryLedger {
  std::uint64_t bytes_received = 0;
  std::uint64_t packets_received = 0;
  std::chrono::steady_clock::time_point first_receipt{};
  std::chrono::steady_clock::time_point last_receipt{};
  std::map<std::uint64_t, StreamRecord> streams;  // keyed by (source, circuit id)

  void record(std::uint64_t stream_key, ByteView payload);

  double active_seconds() const {
    return std::chrono::duration<double>(last_receipt - first_receipt).count();
  }
  /// bytes / (last - first receipt); the sink's own view of goodput.
  double throughput_bps() const;

  static std::uint64_t stream_key(std::uint64_t packed_source, std::uint32_t circuit_id) {
    return packed_source * 0x100000001B3ull ^ circuit_id;
  }
};

/// Codec used on the datagram path: plain conversions, or the memoizing
/// cache when the address-codec optimization is switched on.
struct CodecContext {
  AddressCodecCache* cache = nullptr;

  AddressBytes encode(const Address& a) const {
    return cache != nullptr ? cache->encode(a) : encode_address(a);
  }
  Address decode(const AddressBytes& b) const {
    return cache != nullptr ? cache->decode(b) : decode_address(b);
  }
};

class NodeBase {
 public:
  NodeBase(Role role, Network& net, const Address& address,
           profiler::Registry& registry, CodecContext codec);
  virtual ~NodeBase() = default;

  Role role() const { return role_; }
  const Address& address() const { return address_; }
  Endpoint& endpoint() { return *endpoint_; }
  profiler::Registry& registry() { return registry_; }
  const NodeCounters& counters() const { return counters_; }

  /// Decodes the source, parses the cell, and dispatches to the role
  /// handler under this node's profiler context.
  void handle_datagram(const Datagram& datagram);

 protected:
  virtual void on_cell(const Address& source, Cell cell) = 0;

  /// Encodes the destination and ships one serialized cell. Labeled as
  /// send_packet when the caller is not already inside that scope.
  void transmit(const Address& dest, const Cell& cell, bool as_send_packet);

  Role role_;
  Address address_;
  profiler::Registry& registry_;
  CodecContext codec_;
  std::unique_ptr<Endpoint> endpoint_;
  NodeCounters counters_;
  mutable std::mutex mutex_;
};

/// Traffic origin: builds circuits with the telescoping handshake, applies
/// all onion layers, and sends sequentially or through the pipeline queue.
class SeedNode : public NodeBase {
 public:
  struct Config {
    bool deterministic_keys = false;
    std::uint64_t rng_seed = 0;
    bool pipelined = false;
    std::size_t queue_capacity = 1024;
  };

  SeedNode(Network& net, const Address& address, profiler::Registry& registry,
           CodecContext codec, Config config);
  ~SeedNode() override;

  /// Starts the handshake (or establishes a 0-hop circuit immediately) and
  /// returns the local circuit id.
  std::uint32_t begin_circuit(const std::vector<Address>& hop_addresses);

  CircuitInfo circuit_info(std::uint32_t circuit_id) const;
  CircuitState circuit_state(std::uint32_t circuit_id) const;
  /// 1-based index of the hop currently being negotiated; 0 when idle.
  int pending_hop(std::uint32_t circuit_id) const;
  /// Blocks until the circuit leaves Building or the timeout expires.
  bool wait_established(std::uint32_t circuit_id, std::chrono::milliseconds timeout);

  /// Sequential send: crypto_out then immediate transmit (0-hop circuits
  /// run the local encrypt/decrypt loop instead of touching the network).
  void send_packet(std::uint32_t circuit_id, ByteView payload);

  /// Pipelined send: the crypto stage enqueues onto the bounded FIFO; the
  /// network stage runs on this node's sender thread.
  void pipelined_send(std::uint32_t circuit_id, ByteView payload);

  /// Blocks until every enqueued cell has been handed to the transport.
  void flush_pipeline();

  /// Builds the DATA cell for one payload: onion_encrypt over all hop keys,
  /// labeled with the first hop's circuit id.
  Cell crypto_out(std::uint32_t circuit_id, ByteView payload);

  /// Sends DESTROY down the circuit and marks it destroyed. Idempotent.
  void destroy_circuit(std::uint32_t circuit_id);

  DeliveryLedger local_sink() const;
  std::uint64_t data_packets_sent() const { return data_packets_sent_.load(); }

 private:
  struct Hop {
    Address address;
    LayerKey key;
    std::uint32_t remote_circuit_id = 0;
  };

  struct CircuitRec {
    std::uint32_t local_id = 0;
    CircuitState state = CircuitState::Building;
    std::vector<Address> targets;
    std::vector<Hop> hops;
    std::optional<LayerKey> local_key;  // 0-hop circuits only
    int pending_hop = 0;
    std::optional<EphemeralKeypair> pending_keypair;
    std::optional<LayerKey> pending_key;        // psk mode
    KeyMaterial pending_confirm{};              // psk mode
  };

  struct QueueItem {
    bool local = false;
    Address dest;
    Cell cell;
    OnionPayload local_onion;   // 0-hop: sealed payload awaiting the loop
    std::uint32_t circuit_id = 0;
  };

  void on_cell(const Address& source, Cell cell) override;
  void start_next_hop(CircuitRec& rec);
  Bytes handshake_material(CircuitRec& rec);
  bool complete_hop(CircuitRec& rec, const Address& hop_addr, std::uint32_t remote_cid,
                    ByteView response_material);
  Cell crypto_out_locked(CircuitRec& rec, ByteView payload);
  void check_sendable(const CircuitRec& rec, std::size_t payload_size) const;
  std::uint32_t allocate_circuit_id();
  LayerKey make_local_key();
  void sender_loop();
  void run_local_loop(const OnionPayload& onion, LayerKey& key, std::uint32_t circuit_id);

  Config config_;
  KeyMaterial psk_root_{};
  Rng control_rng_;
  std::map<std::uint32_t, CircuitRec> circuits_;
  std::uint32_t next_circuit_id_ = 1;
  DeliveryLedger local_sink_;
  std::atomic<std::uint64_t> data_packets_sent_{0};

  std::condition_variable build_cv_;
  std::unique_ptr<BoundedQueue<QueueItem>> queue_;
  std::atomic<std::uint64_t> outstanding_{0};
  std::mutex flush_mutex_;
  std::condition_variable flush_cv_;
  std::thread sender_;
};

/// Intermediate node: peels one layer, relabels the circuit id, forwards.
/// Per-packet work does not depend on the circuit's total length.
class RelayNode : public NodeBase {
 public:
  RelayNode(Network& net, const Address& address, profiler::Registry& registry,
            CodecContext codec, bool deterministic_keys = false, std::uint64_t rng_seed = 0);

  std::size_t table_size() const;

 protected:
  RelayNode(Role role, Network& net, const Address& address, profiler::Registry& registry,
            CodecContext codec, bool deterministic_keys, std::uint64_t rng_seed,
            std::optional<Address> plaintext_sink);

  void on_cell(const Address& source, Cell cell) override;

 private:
  struct LinkLabel {
    std::uint64_t packed_address = 0;
    std::uint32_t circuit_id = 0;

    friend bool operator==(const LinkLabel&, const LinkLabel&) = default;
  };
  struct LinkLabelHash {
    std::size_t operator()(const LinkLabel& l) const {
      return std::hash<std::uint64_t>{}(l.packed_address * 0x9E3779B97F4A7C15ull ^ l.circuit_id);
    }
  };

  struct Entry {
    Address inbound_address;
    std::uint32_t inbound_cid = 0;
    std::optional<Address> outbound_address;
    std::uint32_t outbound_cid = 0;
    LayerKey key;
    bool terminal = false;  // outbound side carries plaintext (exit -> sink)
  };

  void handle_create(const Address& source, const Cell& cell);
  void handle_extend(const Address& source, const Cell& cell);
  void handle_created(const Address& source, const Cell& cell);
  void handle_extended(const Address& source, const Cell& cell);
  void handle_destroy(const Address& source, const Cell& cell);
  void handle_data(const Address& source, Cell cell);
  std::uint32_t allocate_link_id();

  std::optional<Address> plaintext_sink_;
  bool deterministic_keys_;
  KeyMaterial psk_root_{};
  std::unordered_map<LinkLabel, Entry, LinkLabelHash> table_;
  std::unordered_map<LinkLabel, LinkLabel, LinkLabelHash> outbound_index_;
  std::unordered_map<LinkLabel, LinkLabel, LinkLabelHash> pending_extends_;
  std::uint32_t next_link_id_ = 1;
};

/// Final circuit node: peels the last layer and forwards the plaintext to
/// the configured sink.
class ExitNode : public RelayNode {
 public:
  ExitNode(Network& net, const Address& address, profiler::Registry& registry,
           CodecContext codec, const Address& sink_address,
           bool deterministic_keys = false, std::uint64_t rng_seed = 0);
};

/// Terminal byte counter. Payloads are tallied and dropped on receipt; no
/// acknowledgement is ever sent.
class SinkNode : public NodeBase {
 public:
  SinkNode(Network& net, const Address& address, profiler::Registry& registry,
           CodecContext codec);

  DeliveryLedger ledger() const;

 protected:
  void on_cell(const Address& source, Cell cell) override;

 private:
  DeliveryLedger ledger_;
};

}  // namespace tunnelprof
