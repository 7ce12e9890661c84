#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "tunnelprof/errors.hpp"

namespace tunnelprof::profiler {

enum class Clock { Cpu, Wall };

const char* clock_name(Clock c);

/// Instrumentation labels. The first seven are the tunnel function taxonomy;
/// the rest are harness-side labels that land in the "other" category.
enum class Label : std::uint8_t {
  encrypt_str,
  decrypt_str,
  encode_address,
  decode_address,
  crypto_out,
  send_packet,
  relay_packet,
  generate_payload,
  create_circuit,
  destroy_circuit,
  parse_cell,
  sink_receive,
  kCount,
};

inline constexpr std::size_t kLabelCount = static_cast<std::size_t>(Label::kCount);

const char* label_name(Label label);

enum class Category { Crypto, Networking, Other };

const char* category_name(Category c);

/// One profiled function: exact call count plus exclusive (self) time.
/// Inclusive time is kept alongside for the nesting cross-check.
struct FunctionStats {
  std::string name;
  std::uint64_t ncalls = 0;
  double total_seconds = 0.0;      // exclusive
  double inclusive_seconds = 0.0;
  Clock clock = Clock::Cpu;
  Category category = Category::Other;
};

using Snapshot = std::vector<FunctionStats>;

/// Label sets used to split a snapshot into crypto / networking / other.
struct Taxonomy {
  std::vector<std::string> crypto;
  std::vector<std::string> networking;
};

/// The paper taxonomy: crypto = {encrypt_str, decrypt_str, encode_address,
/// decode_address, crypto_out}; networking = {send_packet, relay_packet}.
const Taxonomy& default_taxonomy();

Category categorize_label(const std::string& name, const Taxonomy& taxonomy);

struct CategoryBreakdown {
  double crypto_fraction = 0.0;
  double networking_fraction = 0.0;
  double other_fraction = 0.0;
  double crypto_seconds = 0.0;
  double networking_seconds = 0.0;
  double other_seconds = 0.0;
  double total_seconds = 0.0;
  bool undefined_fractions = false;

  static CategoryBreakdown from_fractions(double crypto, double networking, double other);
};

CategoryBreakdown categorize(const Snapshot& stats, const Taxonomy& taxonomy = default_taxonomy());

/// Perfect-overlap bound for a two-stage crypto/send pipeline:
/// min(crypto, networking) / total. Throws UndefinedEstimateError when the
/// breakdown has no time in it.
double estimate_pipeline_speedup(const CategoryBreakdown& breakdown);

/// Per-context timing registry. Each node role owns one. Recording goes to
/// per-thread slots (no shared lock on the hot path) and is merged when a
/// snapshot is taken.
class Registry {
 public:
  Registry();
  ~Registry();
  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  void start(Clock clock, bool reset = true);
  void stop();  // throws ProfilerStateError when not running
  bool running() const { return running_.load(std::memory_order_acquire); }
  Clock clock() const { return clock_; }

  Snapshot snapshot(const Taxonomy& taxonomy = default_taxonomy()) const;

  std::uint64_t id() const { return id_; }

  struct LabelCell {
    std::atomic<std::uint64_t> ncalls{0};
    std::atomic<std::uint64_t> exclusive_ns{0};
    std::atomic<std::uint64_t> inclusive_ns{0};
  };

  struct Slot {
    std::array<LabelCell, kLabelCount> cells;
  };

  Slot* slot_for_current_thread();

 private:
  void reset_slots();

  std::uint64_t id_;
  std::atomic<bool> running_{false};
  Clock clock_ = Clock::Cpu;
  mutable std::mutex slots_mutex_;
  std::deque<Slot> slots_;
  std::unordered_map<std::thread::id, Slot*> slot_index_;
};

/// Makes `registry` the recording target for Scope objects on this thread
/// until destruction. Guards nest; the previous context is restored.
class ContextGuard {
 public:
  explicit ContextGuard(Registry& registry);
  ~ContextGuard();
  ContextGuard(const ContextGuard&) = delete;
  ContextGuard& operator=(const ContextGuard&) = delete;

 private:
  Registry* previous_;
};

Registry* current_context();

/// RAII timed region. Records into the current thread context, if any is
/// active and running. Nested scopes do not double-count: a child's total
/// is subtracted from its parent's exclusive time.
class Scope {
 public:
  explicit Scope(Label label);
  ~Scope();
  Scope(const Scope&) = delete;
  Scope& operator=(const Scope&) = delete;

 private:
  Registry* registry_ = nullptr;
  Registry::Slot* slot_ = nullptr;
  Label label_{};
  std::uint64_t start_ns_ = 0;
  std::uint64_t child_ns_ = 0;
  Scope* parent_ = nullptr;
};

/// Serializes a snapshot as `label,ncalls,total_seconds,clock,category`
/// with rows sorted by label.
void write_stats_csv(std::ostream& out, const Snapshot& stats);

}  // namespace tunnelprof::profiler
