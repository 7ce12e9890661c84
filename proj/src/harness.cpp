#include "tunnelprof/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tunnelprof/rng.hpp"

#include <nlohmann/json.hpp>

namespace tunnelprof {

namespace {
using SteadyClock = std::chrono::steady_clock;
using json = nlohmann::ordered_json;
}  // namespace

const char* transport_name(TransportKind t) {
  return t == TransportKind::InProc ? "inproc" : "udp";
}

const char* exec_mode_name(ExecMode m) {
  return m == ExecMode::Deterministic ? "deterministic" : "threads";
}

TransportKind parse_transport(const std::string& name) {
  if (name == "inproc") return TransportKind::InProc;
  if (name == "udp") return TransportKind::Udp;
  throw ConfigError("unknown transport: " + name);
}

ExecMode parse_exec_mode(const std::string& name) {
  if (name == "deterministic" || name == "det") return ExecMode::Deterministic;
  if (name == "threads") return ExecMode::Threads;
  throw ConfigError("unknown execution mode: " + name);
}

profiler::Clock parse_clock(const std::string& name) {
  if (name == "cpu") return profiler::Clock::Cpu;
  if (name == "wall") return profiler::Clock::Wall;
  throw ConfigError("unknown clock: " + name);
}

void ScenarioConfig::validate() const {
  if (hop_counts.empty()) {
    throw ConfigError("hop_counts must not be empty");
  }
  for (int h : hop_counts) {
    if (h < 0 || h > 3) {
      throw ConfigError("hop counts must be within 0..3");
    }
  }
  if (circuits < 1) {
    throw ConfigError("circuits must be >= 1");
  }
  if (payload_bytes == 0) {
    throw ConfigError("payload_bytes must be positive");
  }
  if (total_bytes_per_run < payload_bytes) {
    throw ConfigError("total_bytes_per_run must be >= payload_bytes");
  }
  const int max_hops = *std::max_element(hop_counts.begin(), hop_counts.end());
  if (payload_bytes > max_onion_plaintext(std::max(max_hops, 1))) {
    throw ConfigError("payload_bytes exceeds the onion layer budget");
  }
}

double RoleResult::seconds_for(const std::string& label) const {
  for (const auto& fs : stats) {
    if (fs.name == label) return fs.total_seconds;
  }
  return 0.0;
}

double RoleResult::inclusive_seconds_for(const std::string& label) const {
  for (const auto& fs : stats) {
    if (fs.name == label) return fs.inclusive_seconds;
  }
  return 0.0;
}

std::uint64_t RoleResult::ncalls_for(const std::string& label) const {
  for (const auto& fs : stats) {
    if (fs.name == label) return fs.ncalls;
  }
  return 0;
}

bool ScenarioResult::ok() const {
  return std::all_of(runs.begin(), runs.end(),
                     [](const HopRun& r) { return r.error.empty(); });
}

const HopRun& ScenarioResult::run_for_hops(int hops) const {
  for (const auto& run : runs) {
    if (run.hops == hops) return run;
  }
  throw ReportError("result has no run for " + std::to_string(hops) + " hops");
}

double measure_goodput(const HopRun& run) {
  if (run.wall_seconds <= 0.0 || run.bytes_delivered == 0) {
    throw UndefinedGoodputError("zero-duration or empty run for " +
                                std::to_string(run.hops) + " hops");
  }
  return static_cast<double>(run.bytes_delivered) / run.wall_seconds;
}

// --- Driver -------------------------------------------------------------

Driver::Driver(ExecMode mode, InProcNetwork* inproc) : mode_(mode), inproc_(inproc) {}

Driver::~Driver() { stop(); }

void Driver::add_node(NodeBase& node) { nodes_.push_back(&node); }

void Driver::start() {
  if (mode_ != ExecMode::Threads || started_) {
    return;
  }
  started_ = true;
  stop_.store(false);
  for (NodeBase* node : nodes_) {
    pumps_.emplace_back([this, node] {
      while (!stop_.load(std::memory_order_acquire)) {
        if (auto d = node->endpoint().recv_wait(std::chrono::microseconds(500))) {
          node->handle_datagram(*d);
        }
      }
      // Final sweep so teardown does not strand queued datagrams.
      while (auto d = node->endpoint().try_recv()) {
        node->handle_datagram(*d);
      }
    });
  }
}

void Driver::stop() {
  stop_.store(true, std::memory_order_release);
  for (auto& t : pumps_) {
    if (t.joinable()) t.join();
  }
  pumps_.clear();
  started_ = false;
}

bool Driver::pump_round() {
  bool progressed = false;
  for (NodeBase* node : nodes_) {
    while (auto d = node->endpoint().try_recv()) {
      node->handle_datagram(*d);
      progressed = true;
    }
  }
  return progressed;
}

void Driver::pump_until_idle() {
  for (;;) {
    if (pump_round()) {
      continue;
    }
    // Nothing deliverable right now; latency-delayed datagrams may still
    // be queued, so wait for them to become eligible.
    if (inproc_ != nullptr && inproc_->pending()) {
      std::this_thread::sleep_for(std::chrono::microseconds(100));
      continue;
    }
    return;
  }
}

bool Driver::drain_until(const std::function<bool()>& pred,
                         std::chrono::milliseconds timeout) {
  const auto deadline = SteadyClock::now() + timeout;
  for (;;) {
    if (pred()) {
      return true;
    }
    if (mode_ == ExecMode::Deterministic) {
      pump_until_idle();
      if (pred()) {
        return true;
      }
      if (inproc_ != nullptr && !inproc_->pending()) {
        // In-process delivery is exactly-once: quiescent and still short
        // means no more bytes are coming... unless a pipelined sender is
        // still pushing, which the caller rules out by flushing first.
        return false;
      }
    }
    if (SteadyClock::now() >= deadline) {
      return false;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
}

std::uint32_t Driver::create_circuit(SeedNode& seed, const std::vector<Address>& hops,
                                     std::chrono::milliseconds timeout) {
  profiler::ContextGuard guard(seed.registry());
  profiler::Scope scope(profiler::Label::create_circuit);
  const std::uint32_t cid = seed.begin_circuit(hops);
  if (hops.empty()) {
    return cid;
  }
  if (mode_ == ExecMode::Threads) {
    if (!seed.wait_established(cid, timeout)) {
      const int idx = seed.pending_hop(cid);
      throw BuildError(idx > 0 ? idx : 1, "handshake timeout");
    }
    return cid;
  }
  const auto deadline = SteadyClock::now() + timeout;
  for (;;) {
    pump_until_idle();
    const CircuitState state = seed.circuit_state(cid);
    if (state == CircuitState::Established) {
      return cid;
    }
    if (state == CircuitState::Destroyed) {
      throw BuildError(1, "circuit destroyed while building");
    }
    // Quiet in-process network and still building: the pending hop never
    // answered. UDP keeps polling until the deadline.
    if (inproc_ != nullptr || SteadyClock::now() >= deadline) {
      const int idx = seed.pending_hop(cid);
      throw BuildError(idx > 0 ? idx : 1, "handshake timeout");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
}

// --- topology -----------------------------------------------------------

namespace {

struct Topology {
  explicit Topology(const ScenarioConfig& config) : config_(config) {
    if (config.transport == TransportKind::InProc) {
      inproc_ = std::make_unique<InProcNetwork>(config.link_latency);
    } else {
      udp_ = std::make_unique<UdpNetwork>();
    }
    if (config.cached_codec) {
      cache_ = std::make_unique<AddressCodecCache>();
    }
    const CodecContext codec{cache_.get()};

    for (Role role : {Role::Seed, Role::Relay, Role::Exit, Role::Sink}) {
      registries_[role] = std::make_unique<profiler::Registry>();
    }

    sink_ = std::make_unique<SinkNode>(net(), make_address(5), *registries_[Role::Sink], codec);
    exit_ = std::make_unique<ExitNode>(net(), make_address(4), *registries_[Role::Exit], codec,
                                       sink_->address(), config.deterministic_keys,
                                       config.rng_seed);
    relay1_ = std::make_unique<RelayNode>(net(), make_address(2), *registries_[Role::Relay],
                                          codec, config.deterministic_keys, config.rng_seed);
    relay2_ = std::make_unique<RelayNode>(net(), make_address(3), *registries_[Role::Relay],
                                          codec, config.deterministic_keys, config.rng_seed);
    SeedNode::Config seed_cfg;
    seed_cfg.deterministic_keys = config.deterministic_keys;
    seed_cfg.rng_seed = config.rng_seed;
    seed_cfg.pipelined = config.pipelined;
    seed_cfg.queue_capacity = config.queue_capacity;
    seed_ = std::make_unique<SeedNode>(net(), make_address(1), *registries_[Role::Seed], codec,
                                       seed_cfg);

    driver_ = std::make_unique<Driver>(config.mode, inproc_.get());
    driver_->add_node(*seed_);
    driver_->add_node(*relay1_);
    driver_->add_node(*relay2_);
    driver_->add_node(*exit_);
    driver_->add_node(*sink_);
    driver_->start();
  }

  Network& net() { return inproc_ ? static_cast<Network&>(*inproc_) : *udp_; }

  Address make_address(int index) const {
    if (config_.transport == TransportKind::InProc) {
      return Address({10, 42, 0, static_cast<std::uint8_t>(index)},
                     static_cast<std::uint16_t>(9000 + index));
    }
    return Address({127, 0, 0, 1}, 0);  // kernel-assigned port
  }

  std::vector<Address> hop_list(int hops) const {
    switch (hops) {
      case 0: return {};
      case 1: return {exit_->address()};
      case 2: return {relay1_->address(), exit_->address()};
      default: return {relay1_->address(), relay2_->address(), exit_->address()};
    }
  }

  void start_profilers() {
    for (auto& [role, reg] : registries_) {
      reg->start(config_.clock);
    }
  }

  void stop_profilers() {
    for (auto& [role, reg] : registries_) {
      if (reg->running()) reg->stop();
    }
  }

  DropStats drops() const {
    DropStats d;
    d.transport = inproc_ ? inproc_->dropped() : 0;
    for (const NodeBase* node :
         {static_cast<const NodeBase*>(seed_.get()), static_cast<const NodeBase*>(relay1_.get()),
          static_cast<const NodeBase*>(relay2_.get()), static_cast<const NodeBase*>(exit_.get()),
          static_cast<const NodeBase*>(sink_.get())}) {
      const NodeCounters& c = node->counters();
      d.unknown_circuit += c.unknown_circuit_drops.load();
      d.auth_failure += c.auth_failure_drops.load();
      d.malformed += c.malformed_drops.load();
      d.protocol += c.protocol_drops.load();
    }
    return d;
  }

  ScenarioConfig config_;
  std::unique_ptr<InProcNetwork> inproc_;
  std::unique_ptr<UdpNetwork> udp_;
  std::unique_ptr<AddressCodecCache> cache_;
  std::map<Role, std::unique_ptr<profiler::Registry>> registries_;
  std::unique_ptr<SinkNode> sink_;
  std::unique_ptr<ExitNode> exit_;
  std::unique_ptr<RelayNode> relay1_;
  std::unique_ptr<RelayNode> relay2_;
  std::unique_ptr<SeedNode> seed_;
  std::unique_ptr<Driver> driver_;
};

void send_one(Topology& topo, std::uint32_t cid, ByteView payload) {
  if (topo.config_.pipelined) {
    topo.seed_->pipelined_send(cid, payload);
  } else {
    topo.seed_->send_packet(cid, payload);
  }
}

struct StreamPhase {
  std::uint64_t packets_sent = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_delivered = 0;
  std::uint64_t packets_delivered = 0;
  double wall_seconds = 0.0;
  bool complete = false;
};

/// Streams `bytes_per_circuit` down every circuit and waits for delivery.
StreamPhase stream_payloads(Topology& topo, const std::vector<std::uint32_t>& circuits,
                            int hops, std::uint64_t bytes_per_circuit, bool interleave) {
  const ScenarioConfig& config = topo.config_;
  const std::uint64_t per_packet = config.payload_bytes;
  const std::uint64_t packets_per_circuit = (bytes_per_circuit + per_packet - 1) / per_packet;

  std::vector<Rng> rngs;
  rngs.reserve(circuits.size());
  for (std::size_t i = 0; i < circuits.size(); ++i) {
    rngs.push_back(Rng::derive(config.rng_seed, "payload", static_cast<std::uint64_t>(hops), i));
  }

  const std::uint64_t baseline_delivered =
      hops == 0 ? topo.seed_->local_sink().bytes_received : topo.sink_->ledger().bytes_received;

  StreamPhase phase;
  Bytes payload(per_packet);
  const auto t0 = SteadyClock::now();

  auto send_packet_on = [&](std::size_t circuit_index) {
    {
      profiler::ContextGuard guard(topo.seed_->registry());
      profiler::Scope scope(profiler::Label::generate_payload);
      rngs[circuit_index].fill(payload);
    }
    send_one(topo, circuits[circuit_index], payload);
    phase.packets_sent += 1;
    phase.bytes_sent += payload.size();
    if (config.mode == ExecMode::Deterministic && !config.pipelined) {
      topo.driver_->pump_until_idle();
    }
  };

  if (interleave) {
    for (std::uint64_t p = 0; p < packets_per_circuit; ++p) {
      for (std::size_t c = 0; c < circuits.size(); ++c) {
        send_packet_on(c);
      }
    }
  } else {
    for (std::size_t c = 0; c < circuits.size(); ++c) {
      for (std::uint64_t p = 0; p < packets_per_circuit; ++p) {
        send_packet_on(c);
      }
    }
  }

  if (config.pipelined) {
    topo.seed_->flush_pipeline();
  }

  const std::uint64_t expected = baseline_delivered + phase.bytes_sent;
  auto delivered_bytes = [&]() -> std::uint64_t {
    return hops == 0 ? topo.seed_->local_sink().bytes_received
                     : topo.sink_->ledger().bytes_received;
  };
  phase.complete = topo.driver_->drain_until(
      [&] { return delivered_bytes() >= expected; }, config.drain_timeout);
  phase.wall_seconds = std::chrono::duration<double>(SteadyClock::now() - t0).count();

  const DeliveryLedger ledger =
      hops == 0 ? topo.seed_->local_sink() : topo.sink_->ledger();
  phase.bytes_delivered = ledger.bytes_received - baseline_delivered;
  phase.packets_delivered = ledger.packets_received;  // caller rebases when needed
  return phase;
}

std::map<std::string, std::map<std::string, std::uint64_t>> expected_ncalls_for(
    int h, std::uint64_t c, std::uint64_t n) {
  std::map<std::string, std::map<std::string, std::uint64_t>> expected;
  auto& seed = expected["seed"];
  seed["send_packet"] = n;
  seed["crypto_out"] = n;
  seed["encrypt_str"] = h == 0 ? 2 * n : n;
  seed["decrypt_str"] = h == 0 ? n : 0;
  seed["encode_address"] = h == 0 ? 0 : n + 2 * c * static_cast<std::uint64_t>(h);
  seed["decode_address"] = h == 0 ? 0 : c * static_cast<std::uint64_t>(h);
  seed["relay_packet"] = 0;

  auto& relay = expected["relay"];
  const std::uint64_t relayed = n * static_cast<std::uint64_t>(std::max(0, h - 1));
  relay["relay_packet"] = relayed;
  relay["decrypt_str"] = relayed;
  relay["send_packet"] = relayed;
  relay["encrypt_str"] = 0;
  relay["crypto_out"] = 0;
  relay["encode_address"] = h == 2 ? 4 * c + n : (h == 3 ? 10 * c + 2 * n : 0);
  relay["decode_address"] = h == 2 ? 5 * c + n : (h == 3 ? 12 * c + 2 * n : 0);

  auto& exit = expected["exit"];
  const std::uint64_t exiting = h >= 1 ? n : 0;
  exit["relay_packet"] = exiting;
  exit["decrypt_str"] = exiting;
  exit["send_packet"] = exiting;
  exit["encrypt_str"] = 0;
  exit["crypto_out"] = 0;
  exit["encode_address"] = h >= 1 ? c + n : 0;
  exit["decode_address"] = h >= 1 ? 2 * c + n : 0;

  auto& sink = expected["sink"];
  sink["decode_address"] = exiting;
  for (const char* label :
       {"encrypt_str", "decrypt_str", "encode_address", "crypto_out", "send_packet",
        "relay_packet"}) {
    sink.emplace(label, 0);
  }
  return expected;
}

RoleResult role_result_from(profiler::Registry& registry) {
  RoleResult rr;
  rr.stats = registry.snapshot();
  rr.breakdown = profiler::categorize(rr.stats);
  try {
    rr.estimated_pipeline_speedup = profiler::estimate_pipeline_speedup(rr.breakdown);
    rr.estimate_defined = true;
  } catch (const UndefinedEstimateError&) {
    rr.estimate_defined = false;
  }
  return rr;
}

HopRun run_one_hop(const ScenarioConfig& config, int hops) {
  HopRun run;
  run.hops = hops;

  Topology topo(config);
  topo.start_profilers();

  std::vector<std::uint32_t> circuits;
  try {
    for (int i = 0; i < config.circuits; ++i) {
      circuits.push_back(topo.driver_->create_circuit(*topo.seed_, topo.hop_list(hops),
                                                      config.handshake_timeout));
    }
  } catch (const BuildError& e) {
    run.error = "circuit build failed at hop " + std::to_string(e.failed_hop()) + ": " + e.what();
    topo.stop_profilers();
    return run;
  }

  const StreamPhase phase = stream_payloads(topo, circuits, hops, config.total_bytes_per_run,
                                            config.interleave_circuits);
  run.packets_sent = phase.packets_sent;
  run.bytes_sent = phase.bytes_sent;
  run.bytes_delivered = phase.bytes_delivered;
  run.wall_seconds = phase.wall_seconds;

  for (std::uint32_t cid : circuits) {
    topo.seed_->destroy_circuit(cid);
  }
  if (config.mode == ExecMode::Deterministic) {
    topo.driver_->pump_until_idle();
  } else {
    // Let DESTROY propagate before the registries stop.
    topo.driver_->drain_until(
        [&] {
          return topo.relay1_->table_size() == 0 && topo.relay2_->table_size() == 0 &&
                 topo.exit_->table_size() == 0;
        },
        std::chrono::milliseconds(2000));
  }
  topo.stop_profilers();

  const DeliveryLedger ledger =
      hops == 0 ? topo.seed_->local_sink() : topo.sink_->ledger();
  run.packets_delivered = ledger.packets_received;
  run.delivered_streams = ledger.streams;
  try {
    run.sink_throughput_bps = ledger.throughput_bps();
  } catch (const UndefinedGoodputError&) {
    run.sink_throughput_bps = 0.0;
  }

  run.drops = topo.drops();
  for (auto& [role, registry] : topo.registries_) {
    run.roles[role] = role_result_from(*registry);
  }
  if (config.transport == TransportKind::InProc) {
    run.expected_ncalls = expected_ncalls_for(hops, static_cast<std::uint64_t>(config.circuits),
                                              run.packets_sent);
  }
  try {
    run.goodput_bps = measure_goodput(run);
  } catch (const UndefinedGoodputError&) {
    run.goodput_bps = 0.0;
    if (run.error.empty()) {
      run.error = "no bytes delivered";
    }
  }
  if (!phase.complete && run.error.empty()) {
    run.error = "delivery incomplete: " + std::to_string(run.bytes_delivered) + "/" +
                std::to_string(run.bytes_sent) + " bytes";
  }

  topo.driver_->stop();
  return run;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& config) {
  config.validate();
  ScenarioResult result;
  result.config = config;
  for (int hops : config.hop_counts) {
    result.runs.push_back(run_one_hop(config, hops));
  }
  return result;
}

// --- scenario files ------------------------------------------------------

namespace {

int column_of(std::size_t offset) { return static_cast<int>(offset) + 1; }

ScenarioCommand parse_scenario_line(const std::string& line, int line_no) {
  ScenarioCommand cmd;
  std::size_t pos = 0;
  if (line.empty() || line[0] != '@') {
    throw ScenarioParseError(line_no, 1, "line must start with @<offset-seconds>");
  }
  pos = 1;
  std::size_t offset_end = line.find(' ', pos);
  if (offset_end == std::string::npos) {
    offset_end = line.size();
  }
  {
    const char* first = line.data() + pos;
    const char* last = line.data() + offset_end;
    auto [ptr, ec] = std::from_chars(first, last, cmd.at_seconds);
    if (ec != std::errc{} || ptr != last || first == last) {
      throw ScenarioParseError(line_no, column_of(pos), "bad offset");
    }
  }

  auto next_token = [&](std::size_t& cursor) -> std::pair<std::string, std::size_t> {
    while (cursor < line.size() && line[cursor] == ' ') ++cursor;
    const std::size_t start = cursor;
    while (cursor < line.size() && line[cursor] != ' ') ++cursor;
    return {line.substr(start, cursor - start), start};
  };

  std::size_t cursor = offset_end;
  auto [command, command_col] = next_token(cursor);
  if (command.empty()) {
    throw ScenarioParseError(line_no, column_of(cursor), "missing command");
  }

  auto parse_u64 = [&](std::uint64_t& out) {
    auto [token, col] = next_token(cursor);
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
    if (ec != std::errc{} || ptr != token.data() + token.size() || token.empty()) {
      throw ScenarioParseError(line_no, column_of(col), "bad integer argument");
    }
  };

  if (command == "build_circuits") {
    cmd.kind = ScenarioCommand::Kind::BuildCircuits;
    std::uint64_t n = 0;
    std::uint64_t hops = 0;
    parse_u64(n);
    parse_u64(hops);
    if (hops > 3) {
      throw ScenarioParseError(line_no, column_of(command_col), "hops must be 0..3");
    }
    cmd.circuits = static_cast<int>(n);
    cmd.hops = static_cast<int>(hops);
  } else if (command == "send") {
    cmd.kind = ScenarioCommand::Kind::Send;
    parse_u64(cmd.bytes);
  } else if (command == "destroy_all") {
    cmd.kind = ScenarioCommand::Kind::DestroyAll;
  } else if (command == "snapshot") {
    cmd.kind = ScenarioCommand::Kind::Snapshot;
    auto [label, col] = next_token(cursor);
    if (label.empty()) {
      throw ScenarioParseError(line_no, column_of(col), "snapshot needs a label");
    }
    cmd.label = label;
  } else {
    throw ScenarioParseError(line_no, column_of(command_col),
                             "unknown command: " + command);
  }
  return cmd;
}

}  // namespace

std::vector<ScenarioCommand> parse_scenario_text(const std::string& text) {
  std::vector<ScenarioCommand> commands;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') {
      continue;
    }
    commands.push_back(parse_scenario_line(line.substr(first), line_no));
  }
  std::stable_sort(commands.begin(), commands.end(),
                   [](const ScenarioCommand& a, const ScenarioCommand& b) {
                     return a.at_seconds < b.at_seconds;
                   });
  return commands;
}

std::vector<ScenarioCommand> parse_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open scenario file: " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario_text(buffer.str());
}

ScriptResult run_scenario_script(const std::vector<ScenarioCommand>& commands,
                                 const ScenarioConfig& config) {
  config.validate();
  ScriptResult result;
  result.config = config;

  Topology topo(config);
  topo.start_profilers();

  std::vector<std::uint32_t> circuits;
  int current_hops = 0;
  const auto start = SteadyClock::now();

  for (const auto& cmd : commands) {
    const auto due = start + std::chrono::duration_cast<SteadyClock::duration>(
                                 std::chrono::duration<double>(cmd.at_seconds));
    if (due > SteadyClock::now()) {
      std::this_thread::sleep_until(due);
    }
    switch (cmd.kind) {
      case ScenarioCommand::Kind::BuildCircuits: {
        for (int i = 0; i < cmd.circuits; ++i) {
          circuits.push_back(topo.driver_->create_circuit(*topo.seed_, topo.hop_list(cmd.hops),
                                                          config.handshake_timeout));
        }
        current_hops = cmd.hops;
        break;
      }
      case ScenarioCommand::Kind::Send: {
        if (circuits.empty()) {
          throw Error("scenario send with no circuits built");
        }
        // `send <bytes>` streams a total byte count round-robin over the
        // live circuits.
        const std::uint64_t per_circuit =
            (cmd.bytes + circuits.size() - 1) / circuits.size();
        StreamPhase phase = stream_payloads(topo, circuits, current_hops, per_circuit, true);
        ScriptSendPhase sp;
        sp.hops = current_hops;
        sp.bytes_sent = phase.bytes_sent;
        sp.bytes_delivered = phase.bytes_delivered;
        sp.wall_seconds = phase.wall_seconds;
        sp.goodput_bps = phase.wall_seconds > 0.0
                             ? static_cast<double>(phase.bytes_delivered) / phase.wall_seconds
                             : 0.0;
        result.send_phases.push_back(sp);
        break;
      }
      case ScenarioCommand::Kind::DestroyAll: {
        for (std::uint32_t cid : circuits) {
          topo.seed_->destroy_circuit(cid);
        }
        circuits.clear();
        if (config.mode == ExecMode::Deterministic) {
          topo.driver_->pump_until_idle();
        }
        break;
      }
      case ScenarioCommand::Kind::Snapshot: {
        std::map<Role, RoleResult> roles;
        for (auto& [role, registry] : topo.registries_) {
          roles[role] = role_result_from(*registry);
        }
        result.snapshots.emplace_back(cmd.label, std::move(roles));
        break;
      }
    }
  }

  topo.stop_profilers();
  result.drops = topo.drops();
  topo.driver_->stop();
  return result;
}

// --- JSON ---------------------------------------------------------------

namespace {

json config_to_json(const ScenarioConfig& c) {
  json j;
  j["hop_counts"] = c.hop_counts;
  j["circuits"] = c.circuits;
  j["payload_bytes"] = c.payload_bytes;
  j["total_bytes_per_run"] = c.total_bytes_per_run;
  j["transport"] = transport_name(c.transport);
  j["clock"] = profiler::clock_name(c.clock);
  j["pipelined"] = c.pipelined;
  j["deterministic_keys"] = c.deterministic_keys;
  j["rng_seed"] = c.rng_seed;
  j["link_latency_us"] = c.link_latency.count();
  j["cached_codec"] = c.cached_codec;
  j["mode"] = exec_mode_name(c.mode);
  j["interleave_circuits"] = c.interleave_circuits;
  j["queue_capacity"] = c.queue_capacity;
  return j;
}

json stats_to_json(const profiler::Snapshot& stats) {
  json rows = json::array();
  for (const auto& fs : stats) {
    json row;
    row["label"] = fs.name;
    row["ncalls"] = fs.ncalls;
    row["total_seconds"] = fs.total_seconds;
    row["inclusive_seconds"] = fs.inclusive_seconds;
    row["clock"] = profiler::clock_name(fs.clock);
    row["category"] = profiler::category_name(fs.category);
    rows.push_back(std::move(row));
  }
  return rows;
}

json role_result_to_json(const RoleResult& rr) {
  json j;
  j["stats"] = stats_to_json(rr.stats);
  json bd;
  bd["crypto_fraction"] = rr.breakdown.crypto_fraction;
  bd["networking_fraction"] = rr.breakdown.networking_fraction;
  bd["other_fraction"] = rr.breakdown.other_fraction;
  bd["crypto_seconds"] = rr.breakdown.crypto_seconds;
  bd["networking_seconds"] = rr.breakdown.networking_seconds;
  bd["other_seconds"] = rr.breakdown.other_seconds;
  bd["total_seconds"] = rr.breakdown.total_seconds;
  bd["undefined_fractions"] = rr.breakdown.undefined_fractions;
  j["breakdown"] = std::move(bd);
  if (rr.estimate_defined) {
    j["estimated_pipeline_speedup"] = rr.estimated_pipeline_speedup;
  } else {
    j["estimated_pipeline_speedup"] = nullptr;
  }
  return j;
}

json drops_to_json(const DropStats& d) {
  json j;
  j["transport"] = d.transport;
  j["unknown_circuit"] = d.unknown_circuit;
  j["auth_failure"] = d.auth_failure;
  j["malformed"] = d.malformed;
  j["protocol"] = d.protocol;
  j["total"] = d.total();
  return j;
}

}  // namespace

std::string result_to_json_string(const ScenarioResult& result, int indent) {
  json j;
  j["config"] = config_to_json(result.config);
  json runs = json::array();
  for (const auto& run : result.runs) {
    json r;
    r["hops"] = run.hops;
    r["error"] = run.error;
    r["wall_seconds"] = run.wall_seconds;
    r["goodput_bytes_per_second"] = run.goodput_bps;
    r["sink_throughput_bytes_per_second"] = run.sink_throughput_bps;
    r["packets_sent"] = run.packets_sent;
    r["bytes_sent"] = run.bytes_sent;
    r["packets_delivered"] = run.packets_delivered;
    r["bytes_delivered"] = run.bytes_delivered;
    r["drops"] = drops_to_json(run.drops);
    json roles;
    for (const auto& [role, rr] : run.roles) {
      roles[role_name(role)] = role_result_to_json(rr);
    }
    r["roles"] = std::move(roles);
    json expected;
    for (const auto& [role, labels] : run.expected_ncalls) {
      expected[role] = labels;
    }
    r["expected_ncalls"] = std::move(expected);
    runs.push_back(std::move(r));
  }
  j["runs"] = std::move(runs);
  return j.dump(indent) + "\n";
}

std::string script_result_to_json_string(const ScriptResult& result, int indent) {
  json j;
  j["config"] = config_to_json(result.config);
  json snaps = json::array();
  for (const auto& [label, roles] : result.snapshots) {
    json s;
    s["label"] = label;
    json jr;
    for (const auto& [role, rr] : roles) {
      jr[role_name(role)] = role_result_to_json(rr);
    }
    s["roles"] = std::move(jr);
    snaps.push_back(std::move(s));
  }
  j["snapshots"] = std::move(snaps);
  json phases = json::array();
  for (const auto& p : result.send_phases) {
    json jp;
    jp["hops"] = p.hops;
    jp["bytes_sent"] = p.bytes_sent;
    jp["bytes_delivered"] = p.bytes_delivered;
    jp["wall_seconds"] = p.wall_seconds;
    jp["goodput_bytes_per_second"] = p.goodput_bps;
    phases.push_back(std::move(jp));
  }
  j["send_phases"] = std::move(phases);
  j["drops"] = drops_to_json(result.drops);
  return j.dump(indent) + "\n";
}

}  // namespace tunnelprof
