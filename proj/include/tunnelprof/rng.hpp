#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace tunnelprof {

/// Deterministic byte stream for reproducible workloads. Output is defined
/// as successive mt19937_64 draws serialized little-endian, so identical
/// seeds give identical bytes on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Stable seed derivation: FNV-1a over (seed, purpose, a, b).
  static Rng derive(std::uint64_t seed, std::string_view purpose,
                    std::uint64_t a = 0, std::uint64_t b = 0);

  std::uint64_t next_u64() { return engine_(); }
  std::uint32_t next_u32() { return static_cast<std::uint32_t>(engine_() >> 32); }

  void fill(std::span<std::uint8_t> out) {
    std::size_t i = 0;
    while (i < out.size()) {
      std::uint64_t v = engine_();
      for (int b = 0; b < 8 && i < out.size(); ++b, ++i) {
        out[i] = static_cast<std::uint8_t>(v >> (8 * b));
      }
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tunnelprof
