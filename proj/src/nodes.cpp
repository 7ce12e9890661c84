#include "tunnelprof/nodes.hpp"

#include <algorithm>
#include <cstring>

namespace tunnelprof {

namespace {

constexpr std::uint8_t kModePsk = 0;
constexpr std::uint8_t kModeX25519 = 1;
constexpr std::size_t kMaterialBytes = 32;

struct HandshakeOffer {
  std::uint8_t mode = kModePsk;
  std::array<std::uint8_t, kMaterialBytes> material{};
};

HandshakeOffer parse_offer(ByteView payload) {
  if (payload.size() != 1 + kMaterialBytes) {
    throw MalformedCellError("bad handshake payload length");
  }
  HandshakeOffer offer;
  offer.mode = payload[0];
  if (offer.mode != kModePsk && offer.mode != kModeX25519) {
    throw MalformedCellError("unknown handshake mode");
  }
  std::copy(payload.begin() + 1, payload.end(), offer.material.begin());
  return offer;
}

}  // namespace

const char* role_name(Role role) {
  switch (role) {
    case Role::Seed: return "seed";
    case Role::Relay: return "relay";
    case Role::Exit: return "exit";
    case Role::Sink: return "sink";
  }
  return "unknown";
}

void DeliveryLedger::record(std::uint64_t key, ByteView payload) {
  const auto now = std::chrono::steady_clock::now();
  if (packets_received == 0) {
    first_receipt = now;
  }
  last_receipt = now;
  bytes_received += payload.size();
  packets_received += 1;
  streams[key].update(payload);
}

double DeliveryLedger::throughput_bps() const {
  const double seconds = active_seconds();
  if (packets_received == 0 || seconds <= 0.0) {
    throw UndefinedGoodputError("no timed interval at the sink");
  }
  return static_cast<double>(bytes_received) / seconds;
}

NodeBase::NodeBase(Role role, Network& net, const Address& address,
                   profiler::Registry& registry, CodecContext codec)
    : role_(role),
      address_(address),
      registry_(registry),
      codec_(codec),
      endpoint_(net.bind(address)) {
  // UDP binds to port 0 come back with the kernel-assigned port.
  address_ = endpoint_->address();
}

void NodeBase::handle_datagram(const Datagram& datagram) {
  profiler::ContextGuard guard(registry_);
  counters_.datagrams_received.fetch_add(1, std::memory_order_relaxed);
  const Address source = codec_.decode(datagram.source);
  Cell cell;
  try {
    profiler::Scope scope(profiler::Label::parse_cell);
    cell = parse_cell(datagram.payload);
  } catch (const MalformedCellError&) {
    counters_.malformed_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  std::lock_guard lock(mutex_);
  on_cell(source, std::move(cell));
}

void NodeBase::transmit(const Address& dest, const Cell& cell, bool as_send_packet) {
  std::optional<profiler::Scope> scope;
  if (as_send_packet) {
    scope.emplace(profiler::Label::send_packet);
  }
  const AddressBytes wire_dest = codec_.encode(dest);
  endpoint_->send(wire_dest, serialize_cell(cell));
  counters_.datagrams_sent.fetch_add(1, std::memory_order_relaxed);
}

// --- SeedNode ---------------------------------------------------------

SeedNode::SeedNode(Network& net, const Address& address, profiler::Registry& registry,
                   CodecContext codec, Config config)
    : NodeBase(Role::Seed, net, address, registry, codec),
      config_(config),
      control_rng_(Rng::derive(config.rng_seed, "seed-control")) {
  if (config_.deterministic_keys) {
    psk_root_ = derive_psk_root(config_.rng_seed);
  }
  if (config_.pipelined) {
    queue_ = std::make_unique<BoundedQueue<QueueItem>>(config_.queue_capacity);
    sender_ = std::thread([this] { sender_loop(); });
  }
}

SeedNode::~SeedNode() {
  if (queue_) {
    flush_pipeline();
    queue_->close();
    if (sender_.joinable()) {
      sender_.join();
    }
  }
}

std::uint32_t SeedNode::allocate_circuit_id() {
  while (circuits_.count(next_circuit_id_) != 0 || next_circuit_id_ == 0) {
    ++next_circuit_id_;  // duplicate id: retry with a fresh one
  }
  return next_circuit_id_++;
}

LayerKey SeedNode::make_local_key() {
  if (config_.deterministic_keys) {
    std::array<std::uint8_t, kMaterialBytes> salt{};
    control_rng_.fill(salt);
    return LayerKey::derive(psk_root_, salt);
  }
  return LayerKey::generate();
}

std::uint32_t SeedNode::begin_circuit(const std::vector<Address>& hop_addresses) {
  if (hop_addresses.size() > 3) {
    throw ConfigError("at most 3 hops per circuit");
  }
  std::lock_guard lock(mutex_);
  const std::uint32_t cid = allocate_circuit_id();
  CircuitRec& rec = circuits_[cid];
  rec.local_id = cid;
  rec.targets = hop_addresses;
  if (hop_addresses.empty()) {
    rec.local_key = make_local_key();
    rec.state = CircuitState::Established;
    return cid;
  }
  rec.state = CircuitState::Building;
  start_next_hop(rec);
  return cid;
}

Bytes SeedNode::handshake_material(CircuitRec& rec) {
  Bytes material;
  if (config_.deterministic_keys) {
    std::array<std::uint8_t, kMaterialBytes> salt{};
    control_rng_.fill(salt);
    rec.pending_key = LayerKey::derive(psk_root_, salt);
    rec.pending_confirm = psk_confirm(rec.pending_key->material());
    material.push_back(kModePsk);
    material.insert(material.end(), salt.begin(), salt.end());
  } else {
    rec.pending_keypair = EphemeralKeypair::generate();
    material.push_back(kModeX25519);
    material.insert(material.end(), rec.pending_keypair->public_key.begin(),
                    rec.pending_keypair->public_key.end());
  }
  return material;
}

void SeedNode::start_next_hop(CircuitRec& rec) {
  const std::size_t next_index = rec.hops.size();  // 0-based target index
  rec.pending_hop = static_cast<int>(next_index) + 1;
  Bytes material = handshake_material(rec);
  if (next_index == 0) {
    Cell cell{rec.local_id, CellType::Create, std::move(material)};
    transmit(rec.targets[0], cell, false);
  } else {
    const AddressBytes next = codec_.encode(rec.targets[next_index]);
    Bytes payload(next.begin(), next.end());
    payload.insert(payload.end(), material.begin(), material.end());
    Cell cell{rec.hops[0].remote_circuit_id, CellType::Extend, std::move(payload)};
    transmit(rec.hops[0].address, cell, false);
  }
}

bool SeedNode::complete_hop(CircuitRec& rec, const Address& hop_addr,
                            std::uint32_t remote_cid, ByteView response_material) {
  if (response_material.size() != kMaterialBytes) {
    return false;
  }
  LayerKey key;
  if (config_.deterministic_keys) {
    if (!rec.pending_key) {
      return false;
    }
    if (!std::equal(response_material.begin(), response_material.end(),
                    rec.pending_confirm.begin())) {
      return false;
    }
    key = *rec.pending_key;
    rec.pending_key.reset();
  } else {
    if (!rec.pending_keypair) {
      return false;
    }
    std::array<std::uint8_t, 32> responder_pub{};
    std::copy(response_material.begin(), response_material.end(), responder_pub.begin());
    const auto shared = agree(*rec.pending_keypair, responder_pub);
    key = LayerKey::from_agreement(shared, rec.pending_keypair->public_key, responder_pub);
    rec.pending_keypair.reset();
  }
  rec.hops.push_back(Hop{hop_addr, std::move(key), remote_cid});
  if (rec.hops.size() == rec.targets.size()) {
    rec.state = CircuitState::Established;
    rec.pending_hop = 0;
    build_cv_.notify_all();
  } else {
    start_next_hop(rec);
  }
  return true;
}

void SeedNode::on_cell(const Address& source, Cell cell) {
  auto it = circuits_.find(cell.circuit_id);
  if (it == circuits_.end()) {
    counters_.unknown_circuit_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  CircuitRec& rec = it->second;
  if (rec.state != CircuitState::Building || rec.pending_hop == 0) {
    counters_.protocol_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  if (cell.cell_type == CellType::Created && rec.pending_hop == 1) {
    if (!complete_hop(rec, rec.targets[0], rec.local_id, cell.payload)) {
      counters_.protocol_drops.fetch_add(1, std::memory_order_relaxed);
    }
    return;
  }
  if (cell.cell_type == CellType::Extended && rec.pending_hop >= 2) {
    if (cell.payload.size() != 4 + kMaterialBytes) {
      counters_.protocol_drops.fetch_add(1, std::memory_order_relaxed);
      return;
    }
    const std::uint32_t new_cid = get_u32_be(ByteView(cell.payload).first(4));
    const auto hop_index = static_cast<std::size_t>(rec.pending_hop - 1);
    if (!complete_hop(rec, rec.targets[hop_index], new_cid,
                      ByteView(cell.payload).subspan(4))) {
      counters_.protocol_drops.fetch_add(1, std::memory_order_relaxed);
    }
    return;
  }
  (void)source;
  counters_.protocol_drops.fetch_add(1, std::memory_order_relaxed);
}

CircuitInfo SeedNode::circuit_info(std::uint32_t circuit_id) const {
  std::lock_guard lock(mutex_);
  auto it = circuits_.find(circuit_id);
  if (it == circuits_.end()) {
    throw CircuitStateError("unknown circuit id");
  }
  CircuitInfo info;
  info.local_circuit_id = it->second.local_id;
  info.state = it->second.state;
  for (const auto& hop : it->second.hops) {
    info.hops.push_back(CircuitHopInfo{hop.address, hop.remote_circuit_id});
  }
  info.hop_count = static_cast<int>(it->second.targets.size());
  return info;
}

CircuitState SeedNode::circuit_state(std::uint32_t circuit_id) const {
  std::lock_guard lock(mutex_);
  auto it = circuits_.find(circuit_id);
  if (it == circuits_.end()) {
    throw CircuitStateError("unknown circuit id");
  }
  return it->second.state;
}

int SeedNode::pending_hop(std::uint32_t circuit_id) const {
  std::lock_guard lock(mutex_);
  auto it = circuits_.find(circuit_id);
  return it == circuits_.end() ? 0 : it->second.pending_hop;
}

bool SeedNode::wait_established(std::uint32_t circuit_id, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  auto it = circuits_.find(circuit_id);
  if (it == circuits_.end()) {
    return false;
  }
  build_cv_.wait_for(lock, timeout,
                     [&] { return it->second.state != CircuitState::Building; });
  return it->second.state == CircuitState::Established;
}

void SeedNode::check_sendable(const CircuitRec& rec, std::size_t payload_size) const {
  if (rec.state != CircuitState::Established) {
    throw CircuitStateError("circuit is not established");
  }
  const std::size_t layers = std::max<std::size_t>(rec.targets.size(), 1);
  if (payload_size > max_onion_plaintext(layers)) {
    throw OversizeError("payload exceeds the onion layer budget");
  }
}

Cell SeedNode::crypto_out_locked(CircuitRec& rec, ByteView payload) {
  profiler::Scope scope(profiler::Label::crypto_out);
  std::vector<LayerKey*> keys;
  keys.reserve(rec.hops.size());
  for (auto& hop : rec.hops) {
    keys.push_back(&hop.key);
  }
  OnionPayload onion = onion_encrypt(payload, std::move(keys));
  const std::uint32_t wire_cid =
      rec.hops.empty() ? rec.local_id : rec.hops[0].remote_circuit_id;
  return Cell{wire_cid, CellType::Data, onion.to_bytes()};
}

Cell SeedNode::crypto_out(std::uint32_t circuit_id, ByteView payload) {
  profiler::ContextGuard guard(registry_);
  std::lock_guard lock(mutex_);
  auto it = circuits_.find(circuit_id);
  if (it == circuits_.end()) {
    throw CircuitStateError("unknown circuit id");
  }
  check_sendable(it->second, payload.size());
  return crypto_out_locked(it->second, payload);
}

void SeedNode::run_local_loop(const OnionPayload& onion, LayerKey& key,
                              std::uint32_t circuit_id) {
  OnionPayload plain = peel_layer(onion, key);
  local_sink_.record(DeliveryLedger::stream_key(address_.packed(), circuit_id),
                     plain.ciphertext);
}

void SeedNode::send_packet(std::uint32_t circuit_id, ByteView payload) {
  profiler::ContextGuard guard(registry_);
  profiler::Scope scope(profiler::Label::send_packet);
  std::lock_guard lock(mutex_);
  auto it = circuits_.find(circuit_id);
  if (it == circuits_.end()) {
    throw CircuitStateError("unknown circuit id");
  }
  CircuitRec& rec = it->second;
  check_sendable(rec, payload.size());
  Cell cell = crypto_out_locked(rec, payload);
  if (rec.hops.empty()) {
    // 0-hop: one full encrypt+decrypt pair on this node, no transport.
    OnionPayload sealed = onion_encrypt(payload, {&*rec.local_key});
    run_local_loop(sealed, *rec.local_key, rec.local_id);
  } else {
    transmit(rec.hops[0].address, cell, false);
  }
  data_packets_sent_.fetch_add(1, std::memory_order_relaxed);
}

void SeedNode::pipelined_send(std::uint32_t circuit_id, ByteView payload) {
  if (!queue_) {
    throw ConfigError("pipelining is not enabled on this node");
  }
  profiler::ContextGuard guard(registry_);
  QueueItem item;
  {
    std::lock_guard lock(mutex_);
    auto it = circuits_.find(circuit_id);
    if (it == circuits_.end()) {
      throw CircuitStateError("unknown circuit id");
    }
    CircuitRec& rec = it->second;
    check_sendable(rec, payload.size());
    item.cell = crypto_out_locked(rec, payload);
    item.circuit_id = rec.local_id;
    if (rec.hops.empty()) {
      item.local = true;
      item.local_onion = onion_encrypt(payload, {&*rec.local_key});
    } else {
      item.dest = rec.hops[0].address;
    }
  }
  outstanding_.fetch_add(1, std::memory_order_acq_rel);
  queue_->push(std::move(item));
  data_packets_sent_.fetch_add(1, std::memory_order_relaxed);
}

void SeedNode::sender_loop() {
  profiler::ContextGuard guard(registry_);
  while (auto item = queue_->pop()) {
    if (item->local) {
      profiler::Scope scope(profiler::Label::send_packet);
      std::lock_guard lock(mutex_);
      auto it = circuits_.find(item->circuit_id);
      if (it != circuits_.end() && it->second.local_key) {
        run_local_loop(item->local_onion, *it->second.local_key, item->circuit_id);
      }
    } else {
      transmit(item->dest, item->cell, true);
    }
    outstanding_.fetch_sub(1, std::memory_order_acq_rel);
    {
      std::lock_guard flush_lock(flush_mutex_);
    }
    flush_cv_.notify_all();
  }
}

void SeedNode::flush_pipeline() {
  if (!queue_) {
    return;
  }
  std::unique_lock lock(flush_mutex_);
  flush_cv_.wait(lock, [&] { return outstanding_.load(std::memory_order_acquire) == 0; });
}

void SeedNode::destroy_circuit(std::uint32_t circuit_id) {
  profiler::ContextGuard guard(registry_);
  profiler::Scope scope(profiler::Label::destroy_circuit);
  std::lock_guard lock(mutex_);
  auto it = circuits_.find(circuit_id);
  if (it == circuits_.end()) {
    throw CircuitStateError("unknown circuit id");
  }
  CircuitRec& rec = it->second;
  if (rec.state == CircuitState::Destroyed) {
    return;  // idempotent
  }
  if (!rec.hops.empty()) {
    transmit(rec.hops[0].address, Cell{rec.hops[0].remote_circuit_id, CellType::Destroy, {}},
             false);
  }
  rec.state = CircuitState::Destroyed;
  rec.pending_hop = 0;
  build_cv_.notify_all();
}

DeliveryLedger SeedNode::local_sink() const {
  std::lock_guard lock(mutex_);
  return local_sink_;
}

// --- RelayNode --------------------------------------------------------

RelayNode::RelayNode(Network& net, const Address& address, profiler::Registry& registry,
                     CodecContext codec, bool deterministic_keys, std::uint64_t rng_seed)
    : RelayNode(Role::Relay, net, address, registry, codec, deterministic_keys, rng_seed,
                std::nullopt) {}

RelayNode::RelayNode(Role role, Network& net, const Address& address,
                     profiler::Registry& registry, CodecContext codec,
                     bool deterministic_keys, std::uint64_t rng_seed,
                     std::optional<Address> plaintext_sink)
    : NodeBase(role, net, address, registry, codec),
      plaintext_sink_(plaintext_sink),
      deterministic_keys_(deterministic_keys) {
  if (deterministic_keys_) {
    psk_root_ = derive_psk_root(rng_seed);
  }
}

std::size_t RelayNode::table_size() const {
  std::lock_guard lock(mutex_);
  return table_.size();
}

std::uint32_t RelayNode::allocate_link_id() { return next_link_id_++; }

void RelayNode::on_cell(const Address& source, Cell cell) {
  switch (cell.cell_type) {
    case CellType::Create: handle_create(source, cell); return;
    case CellType::Extend: handle_extend(source, cell); return;
    case CellType::Created: handle_created(source, cell); return;
    case CellType::Extended: handle_extended(source, cell); return;
    case CellType::Destroy: handle_destroy(source, cell); return;
    case CellType::Data: handle_data(source, std::move(cell)); return;
  }
}

void RelayNode::handle_create(const Address& source, const Cell& cell) {
  HandshakeOffer offer;
  try {
    offer = parse_offer(cell.payload);
  } catch (const MalformedCellError&) {
    counters_.malformed_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }

  Entry entry;
  entry.inbound_address = source;
  entry.inbound_cid = cell.circuit_id;
  Bytes response(kMaterialBytes, 0);
  if (offer.mode == kModePsk) {
    entry.key = LayerKey::derive(psk_root_, offer.material);
    const KeyMaterial confirm = psk_confirm(entry.key.material());
    std::copy(confirm.begin(), confirm.end(), response.begin());
  } else {
    const EphemeralKeypair kp = EphemeralKeypair::generate();
    const auto shared = agree(kp, offer.material);
    entry.key = LayerKey::from_agreement(shared, offer.material, kp.public_key);
    std::copy(kp.public_key.begin(), kp.public_key.end(), response.begin());
  }
  if (plaintext_sink_) {
    entry.outbound_address = *plaintext_sink_;
    entry.outbound_cid = allocate_link_id();
    entry.terminal = true;
  }
  const LinkLabel inbound{source.packed(), cell.circuit_id};
  table_[inbound] = std::move(entry);
  transmit(source, Cell{cell.circuit_id, CellType::Created, std::move(response)}, false);
}

void RelayNode::handle_extend(const Address& source, const Cell& cell) {
  const LinkLabel inbound{source.packed(), cell.circuit_id};
  auto it = table_.find(inbound);
  if (it == table_.end()) {
    counters_.unknown_circuit_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  Entry& entry = it->second;
  if (entry.terminal) {
    counters_.protocol_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  if (entry.outbound_address) {
    // Mid-circuit: pass the request down the established prefix.
    transmit(*entry.outbound_address,
             Cell{entry.outbound_cid, CellType::Extend, cell.payload}, false);
    return;
  }
  if (cell.payload.size() != 6 + 1 + kMaterialBytes) {
    counters_.malformed_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  AddressBytes next_bytes;
  std::copy_n(cell.payload.begin(), 6, next_bytes.begin());
  const Address next = codec_.decode(next_bytes);
  counters_.extend_actions.fetch_add(1, std::memory_order_relaxed);
  const std::uint32_t new_cid = allocate_link_id();
  pending_extends_[LinkLabel{next.packed(), new_cid}] = inbound;
  Bytes create_payload(cell.payload.begin() + 6, cell.payload.end());
  transmit(next, Cell{new_cid, CellType::Create, std::move(create_payload)}, false);
}

void RelayNode::handle_created(const Address& source, const Cell& cell) {
  const LinkLabel outbound{source.packed(), cell.circuit_id};
  auto pending = pending_extends_.find(outbound);
  if (pending == pending_extends_.end()) {
    counters_.protocol_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  const LinkLabel inbound = pending->second;
  pending_extends_.erase(pending);
  auto it = table_.find(inbound);
  if (it == table_.end()) {
    counters_.protocol_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  Entry& entry = it->second;
  entry.outbound_address = source;
  entry.outbound_cid = cell.circuit_id;
  outbound_index_[outbound] = inbound;

  Bytes payload;
  put_u32_be(payload, cell.circuit_id);
  payload.insert(payload.end(), cell.payload.begin(), cell.payload.end());
  transmit(entry.inbound_address, Cell{entry.inbound_cid, CellType::Extended, std::move(payload)},
           false);
}

void RelayNode::handle_extended(const Address& source, const Cell& cell) {
  const LinkLabel outbound{source.packed(), cell.circuit_id};
  auto idx = outbound_index_.find(outbound);
  if (idx == outbound_index_.end()) {
    counters_.protocol_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  auto it = table_.find(idx->second);
  if (it == table_.end()) {
    counters_.protocol_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  transmit(it->second.inbound_address,
           Cell{it->second.inbound_cid, CellType::Extended, cell.payload}, false);
}

void RelayNode::handle_destroy(const Address& source, const Cell& cell) {
  const LinkLabel inbound{source.packed(), cell.circuit_id};
  auto it = table_.find(inbound);
  if (it == table_.end()) {
    return;  // double destroy is a no-op
  }
  Entry entry = std::move(it->second);
  table_.erase(it);
  if (entry.outbound_address) {
    outbound_index_.erase(LinkLabel{entry.outbound_address->packed(), entry.outbound_cid});
    if (!entry.terminal) {
      transmit(*entry.outbound_address, Cell{entry.outbound_cid, CellType::Destroy, {}}, false);
    }
  }
}

void RelayNode::handle_data(const Address& source, Cell cell) {
  profiler::Scope scope(profiler::Label::relay_packet);
  const LinkLabel inbound{source.packed(), cell.circuit_id};
  auto it = table_.find(inbound);
  if (it == table_.end()) {
    counters_.unknown_circuit_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  Entry& entry = it->second;
  if (!entry.outbound_address) {
    counters_.protocol_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  OnionPayload peeled;
  try {
    const OnionPayload onion = OnionPayload::from_bytes(cell.payload);
    peeled = peel_layer(onion, entry.key);
  } catch (const MalformedCellError&) {
    counters_.malformed_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  } catch (const NoLayerError&) {
    counters_.malformed_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  } catch (const AuthenticationError&) {
    counters_.auth_failure_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  transmit(*entry.outbound_address,
           Cell{entry.outbound_cid, CellType::Data, peeled.to_bytes()}, true);
  counters_.data_relayed.fetch_add(1, std::memory_order_relaxed);
}

ExitNode::ExitNode(Network& net, const Address& address, profiler::Registry& registry,
                   CodecContext codec, const Address& sink_address,
                   bool deterministic_keys, std::uint64_t rng_seed)
    : RelayNode(Role::Exit, net, address, registry, codec, deterministic_keys, rng_seed,
                sink_address) {}

// --- SinkNode ---------------------------------------------------------

SinkNode::SinkNode(Network& net, const Address& address, profiler::Registry& registry,
                   CodecContext codec)
    : NodeBase(Role::Sink, net, address, registry, codec) {}

void SinkNode::on_cell(const Address& source, Cell cell) {
  profiler::Scope scope(profiler::Label::sink_receive);
  if (cell.cell_type != CellType::Data) {
    counters_.protocol_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  OnionPayload onion;
  try {
    onion = OnionPayload::from_bytes(cell.payload);
  } catch (const MalformedCellError&) {
    counters_.malformed_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  if (onion.layers_remaining != 0) {
    counters_.malformed_drops.fetch_add(1, std::memory_order_relaxed);
    return;
  }
  ledger_.record(DeliveryLedger::stream_key(source.packed(), cell.circuit_id),
                 onion.ciphertext);
}

DeliveryLedger SinkNode::ledger() const {
  std::lock_guard lock(mutex_);
  return ledger_;
}

}  // namespace tunnelprof
