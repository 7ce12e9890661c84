#include "tunnelprof/rng.hpp"

namespace tunnelprof {

Rng Rng::derive(std::uint64_t seed, std::string_view purpose, std::uint64_t a,
                std::uint64_t b) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  mix(seed);
  for (char c : purpose) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ull;
  }
  mix(a);
  mix(b);
  return Rng(h);
}

}  // namespace tunnelprof
