#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "tunnelprof/nodes.hpp"
#include "tunnelprof/profiler.hpp"
#include "tunnelprof/transport.hpp"

namespace tunnelprof {

enum class TransportKind { InProc, Udp };
enum class ExecMode { Deterministic, Threads };

const char* transport_name(TransportKind t);
const char* exec_mode_name(ExecMode m);
TransportKind parse_transport(const std::string& name);   // throws ConfigError
ExecMode parse_exec_mode(const std::string& name);        // throws ConfigError
profiler::Clock parse_clock(const std::string& name);     // throws ConfigError

struct ScenarioConfig {
  std::vector<int> hop_counts{0, 1, 2, 3};
  int circuits = 4;
  std::size_t payload_bytes = 1024;
  std::uint64_t total_bytes_per_run = 5 * 1024 * 1024;  // per circuit
  TransportKind transport = TransportKind::InProc;
  profiler::Clock clock = profiler::Clock::Cpu;
  bool pipelined = false;
  bool deterministic_keys = false;
  std::uint64_t rng_seed = 0;
  std::chrono::microseconds link_latency{0};

  // Extensions beyond the core knobs.
  bool cached_codec = false;
  ExecMode mode = ExecMode::Deterministic;
  bool interleave_circuits = false;
  std::size_t queue_capacity = 1024;
  std::chrono::milliseconds handshake_timeout{2000};
  std::chrono::milliseconds drain_timeout{20000};

  void validate() const;  // throws ConfigError
};

struct RoleResult {
  profiler::Snapshot stats;
  profiler::CategoryBreakdown breakdown;
  double estimated_pipeline_speedup = 0.0;
  bool estimate_defined = false;

  /// Exclusive seconds for one label; 0 when the label never ran.
  double seconds_for(const std::string& label) const;
  double inclusive_seconds_for(const std::string& label) const;
  std::uint64_t ncalls_for(const std::string& label) const;
};

struct DropStats {
  std::uint64_t transport = 0;
  std::uint64_t unknown_circuit = 0;
  std::uint64_t auth_failure = 0;
  std::uint64_t malformed = 0;
  std::uint64_t protocol = 0;

  std::uint64_t total() const {
    return transport + unknown_circuit + auth_failure + malformed + protocol;
  }
};

struct HopRun {
  int hops = 0;
  std::string error;  // empty on success
  std::map<Role, RoleResult> roles;

  double wall_seconds = 0.0;       // streaming phase, send start -> last delivery
  double goodput_bps = 0.0;
  double sink_throughput_bps = 0.0;  // sink's own first->last receipt view

  std::uint64_t packets_sent = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t packets_delivered = 0;
  std::uint64_t bytes_delivered = 0;
  DropStats drops;
  std::map<std::uint64_t, StreamRecord> delivered_streams;

  /// Harness-side ground truth: role name -> label -> expected exact ncalls.
  std::map<std::string, std::map<std::string, std::uint64_t>> expected_ncalls;
};

struct ScenarioResult {
  ScenarioConfig config;
  std::vector<HopRun> runs;

  bool ok() const;
  const HopRun& run_for_hops(int hops) const;  // throws ReportError when absent
};

/// Runs the full experiment: per hop count, build `circuits` circuits,
/// stream total_bytes_per_run per circuit, destroy, snapshot per role.
ScenarioResult run_scenario(const ScenarioConfig& config);

/// goodput = delivered payload bytes / streaming wall duration.
double measure_goodput(const HopRun& run);  // throws UndefinedGoodputError

// --- scenario files ----------------------------------------------------

struct ScenarioCommand {
  enum class Kind { BuildCircuits, Send, DestroyAll, Snapshot };

  double at_seconds = 0.0;
  Kind kind = Kind::Send;
  int circuits = 0;        // BuildCircuits
  int hops = 0;            // BuildCircuits
  std::uint64_t bytes = 0; // Send
  std::string label;       // Snapshot
};

/// Parses `@<offset-seconds> <command> <args...>` lines. Blank lines and
/// lines starting with '#' are skipped. Throws ScenarioParseError with the
/// offending line and column.
std::vector<ScenarioCommand> parse_scenario_file(const std::filesystem::path& path);
std::vector<ScenarioCommand> parse_scenario_text(const std::string& text);

struct ScriptSendPhase {
  int hops = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_delivered = 0;
  double wall_seconds = 0.0;
  double goodput_bps = 0.0;
};

struct ScriptResult {
  ScenarioConfig config;
  std::vector<std::pair<std::string, std::map<Role, RoleResult>>> snapshots;
  std::vector<ScriptSendPhase> send_phases;
  DropStats drops;
};

/// Executes a timed command list against one live topology.
ScriptResult run_scenario_script(const std::vector<ScenarioCommand>& commands,
                                 const ScenarioConfig& config);

std::string result_to_json_string(const ScenarioResult& result, int indent = 2);
std::string script_result_to_json_string(const ScriptResult& result, int indent = 2);

// --- node orchestration -------------------------------------------------

/// Owns the delivery loop. Deterministic mode pumps every node round-robin
/// on the calling thread; Threads mode gives each node its own pump thread.
class Driver {
 public:
  Driver(ExecMode mode, InProcNetwork* inproc);
  ~Driver();

  void add_node(NodeBase& node);
  void start();
  void stop();

  /// Deterministic delivery: handles everything currently deliverable and
  /// returns once the network is quiet.
  void pump_until_idle();

  /// Pumps (or waits) until pred() holds; false on timeout/quiescence.
  bool drain_until(const std::function<bool()>& pred, std::chrono::milliseconds timeout);

  /// Blocking circuit build. Throws BuildError carrying the 1-based index
  /// of the hop that failed to answer.
  std::uint32_t create_circuit(SeedNode& seed, const std::vector<Address>& hops,
                               std::chrono::milliseconds timeout);

 private:
  bool pump_round();

  ExecMode mode_;
  InProcNetwork* inproc_;
  std::vector<NodeBase*> nodes_;
  std::vector<std::thread> pumps_;
  std::atomic<bool> stop_{false};
  bool started_ = false;
};

}  // namespace tunnelprof
