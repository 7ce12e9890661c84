#include "tunnelprof/profiler.hpp"

#include <time.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>

namespace tunnelprof::profiler {

namespace {

std::uint64_t read_clock_ns(Clock clock) {
  timespec ts;
  clock_gettime(clock == Clock::Cpu ? CLOCK_THREAD_CPUTIME_ID : CLOCK_MONOTONIC, &ts);
  return static_cast<std::uint64_t>(ts.tv_sec) * 1'000'000'000ull +
         static_cast<std::uint64_t>(ts.tv_nsec);
}

thread_local Registry* t_context = nullptr;
thread_local Scope* t_scope_top = nullptr;

// One-entry slot cache: node loops hit the same registry repeatedly.
thread_local std::uint64_t t_cached_registry_id = 0;
thread_local Registry::Slot* t_cached_slot = nullptr;

std::atomic<std::uint64_t> g_next_registry_id{1};

constexpr const char* kLabelNames[kLabelCount] = {
    "encrypt_str",  "decrypt_str",     "encode_address", "decode_address",
    "crypto_out",   "send_packet",     "relay_packet",   "generate_payload",
    "create_circuit", "destroy_circuit", "parse_cell",    "sink_receive",
};

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

const char* clock_name(Clock c) { return c == Clock::Cpu ? "cpu" : "wall"; }

const char* label_name(Label label) {
  return kLabelNames[static_cast<std::size_t>(label)];
}

const char* category_name(Category c) {
  switch (c) {
    case Category::Crypto: return "crypto";
    case Category::Networking: return "networking";
    case Category::Other: return "other";
  }
  return "other";
}

const Taxonomy& default_taxonomy() {
  static const Taxonomy taxonomy{
      {"encrypt_str", "decrypt_str", "encode_address", "decode_address", "crypto_out"},
      {"send_packet", "relay_packet"},
  };
  return taxonomy;
}

Category categorize_label(const std::string& name, const Taxonomy& taxonomy) {
  if (std::find(taxonomy.crypto.begin(), taxonomy.crypto.end(), name) != taxonomy.crypto.end()) {
    return Category::Crypto;
  }
  if (std::find(taxonomy.networking.begin(), taxonomy.networking.end(), name) !=
      taxonomy.networking.end()) {
    return Category::Networking;
  }
  return Category::Other;
}

CategoryBreakdown CategoryBreakdown::from_fractions(double crypto, double networking,
                                                    double other) {
  CategoryBreakdown bd;
  bd.crypto_fraction = crypto;
  bd.networking_fraction = networking;
  bd.other_fraction = other;
  bd.crypto_seconds = crypto;
  bd.networking_seconds = networking;
  bd.other_seconds = other;
  bd.total_seconds = crypto + networking + other;
  bd.undefined_fractions = bd.total_seconds <= 0.0;
  return bd;
}

CategoryBreakdown categorize(const Snapshot& stats, const Taxonomy& taxonomy) {
  CategoryBreakdown bd;
  for (const auto& fs : stats) {
    switch (categorize_label(fs.name, taxonomy)) {
      case Category::Crypto: bd.crypto_seconds += fs.total_seconds; break;
      case Category::Networking: bd.networking_seconds += fs.total_seconds; break;
      case Category::Other: bd.other_seconds += fs.total_seconds; break;
    }
  }
  bd.total_seconds = bd.crypto_seconds + bd.networking_seconds + bd.other_seconds;
  if (bd.total_seconds > 0.0) {
    bd.crypto_fraction = bd.crypto_seconds / bd.total_seconds;
    bd.networking_fraction = bd.networking_seconds / bd.total_seconds;
    bd.other_fraction = bd.other_seconds / bd.total_seconds;
  } else {
    bd.undefined_fractions = true;
  }
  return bd;
}

double estimate_pipeline_speedup(const CategoryBreakdown& breakdown) {
  if (breakdown.undefined_fractions || breakdown.total_seconds <= 0.0) {
    throw UndefinedEstimateError("no time recorded; speedup estimate undefined");
  }
  return std::min(breakdown.crypto_seconds, breakdown.networking_seconds) /
         breakdown.total_seconds;
}

Registry::Registry() : id_(g_next_registry_id.fetch_add(1, std::memory_order_relaxed)) {}

Registry::~Registry() {
  // Invalidate any thread's one-entry cache that might point at our slots.
  if (t_cached_registry_id == id_) {
    t_cached_registry_id = 0;
    t_cached_slot = nullptr;
  }
}

void Registry::start(Clock clock, bool reset) {
  clock_ = clock;
  if (reset) reset_slots();
  running_.store(true, std::memory_order_release);
}

void Registry::stop() {
  if (!running_.load(std::memory_order_acquire)) {
    throw ProfilerStateError("profiler stop without start");
  }
  running_.store(false, std::memory_order_release);
}

void Registry::reset_slots() {
  std::lock_guard lock(slots_mutex_);
  for (auto& slot : slots_) {
    for (auto& cell : slot.cells) {
      cell.ncalls.store(0, std::memory_order_relaxed);
      cell.exclusive_ns.store(0, std::memory_order_relaxed);
      cell.inclusive_ns.store(0, std::memory_order_relaxed);
    }
  }
}

Registry::Slot* Registry::slot_for_current_thread() {
  if (t_cached_registry_id == id_) {
    return t_cached_slot;
  }
  std::lock_guard lock(slots_mutex_);
  auto& slot = slot_index_[std::this_thread::get_id()];
  if (slot == nullptr) {
    slot = &slots_.emplace_back();
  }
  t_cached_registry_id = id_;
  t_cached_slot = slot;
  return slot;
}

Snapshot Registry::snapshot(const Taxonomy& taxonomy) const {
  std::array<std::uint64_t, kLabelCount> ncalls{};
  std::array<std::uint64_t, kLabelCount> excl{};
  std::array<std::uint64_t, kLabelCount> incl{};
  {
    std::lock_guard lock(slots_mutex_);
    for (const auto& slot : slots_) {
      for (std::size_t i = 0; i < kLabelCount; ++i) {
        ncalls[i] += slot.cells[i].ncalls.load(std::memory_order_relaxed);
        excl[i] += slot.cells[i].exclusive_ns.load(std::memory_order_relaxed);
        incl[i] += slot.cells[i].inclusive_ns.load(std::memory_order_relaxed);
      }
    }
  }
  Snapshot out;
  for (std::size_t i = 0; i < kLabelCount; ++i) {
    if (ncalls[i] == 0) continue;
    FunctionStats fs;
    fs.name = kLabelNames[i];
    fs.ncalls = ncalls[i];
    fs.total_seconds = static_cast<double>(excl[i]) * 1e-9;
    fs.inclusive_seconds = static_cast<double>(incl[i]) * 1e-9;
    fs.clock = clock_;
    fs.category = categorize_label(fs.name, taxonomy);
    out.push_back(std::move(fs));
  }
  std::sort(out.begin(), out.end(),
            [](const FunctionStats& a, const FunctionStats& b) { return a.name < b.name; });
  return out;
}

ContextGuard::ContextGuard(Registry& registry) : previous_(t_context) {
  t_context = &registry;
}

ContextGuard::~ContextGuard() { t_context = previous_; }

Registry* current_context() { return t_context; }

Scope::Scope(Label label) : label_(label) {
  Registry* reg = t_context;
  if (reg == nullptr || !reg->running()) {
    return;
  }
  registry_ = reg;
  slot_ = reg->slot_for_current_thread();
  parent_ = t_scope_top;
  t_scope_top = this;
  start_ns_ = read_clock_ns(reg->clock());
}

Scope::~Scope() {
  if (registry_ == nullptr) {
    return;
  }
  const std::uint64_t total = read_clock_ns(registry_->clock()) - start_ns_;
  t_scope_top = parent_;
  // Stop while a scope is open discards that scope's sample.
  if (registry_->running()) {
    auto& cell = slot_->cells[static_cast<std::size_t>(label_)];
    cell.ncalls.fetch_add(1, std::memory_order_relaxed);
    cell.inclusive_ns.fetch_add(total, std::memory_order_relaxed);
    cell.exclusive_ns.fetch_add(total - std::min(total, child_ns_),
                                std::memory_order_relaxed);
  }
  if (parent_ != nullptr) {
    parent_->child_ns_ += total;
  }
}

void write_stats_csv(std::ostream& out, const Snapshot& stats) {
  Snapshot sorted = stats;
  std::sort(sorted.begin(), sorted.end(),
            [](const FunctionStats& a, const FunctionStats& b) { return a.name < b.name; });
  out << "label,ncalls,total_seconds,clock,category\n";
  for (const auto& fs : sorted) {
    std::string line = fs.name;
    line += ',';
    line += std::to_string(fs.ncalls);
    line += ',';
    append_double(line, fs.total_seconds);
    line += ',';
    line += clock_name(fs.clock);
    line += ',';
    line += category_name(fs.category);
    line += '\n';
    out << line;
  }
}

}  // namespace tunnelprof::profiler
