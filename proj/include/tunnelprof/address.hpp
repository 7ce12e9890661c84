#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "tunnelprof/bytes.hpp"

namespace tunnelprof {

/// 6-byte wire form of an address: 4 host octets + big-endian port.
using AddressBytes = std::array<std::uint8_t, 6>;

/// IPv4 host/port pair. All internal routing state works with this type or
/// its 6-byte binary form; dotted-quad strings appear only at CLI boundaries.
struct Address {
  std::array<std::uint8_t, 4> host{};
  std::uint16_t port = 0;

  Address() = default;
  Address(std::array<std::uint8_t, 4> h, std::uint16_t p) : host(h), port(p) {}

  /// Parses "a.b.c.d" plus a separate port. Throws MalformedAddressError.
  static Address from_string(const std::string& dotted_quad, std::uint16_t port);
  /// Parses "a.b.c.d:port". Throws MalformedAddressError.
  static Address from_string(const std::string& host_port);

  std::string to_string() const;

  /// Packs host+port into the low 48 bits; handy as a hash/map key.
  std::uint64_t packed() const {
    return (static_cast<std::uint64_t>(host[0]) << 40) |
           (static_cast<std::uint64_t>(host[1]) << 32) |
           (static_cast<std::uint64_t>(host[2]) << 24) |
           (static_cast<std::uint64_t>(host[3]) << 16) |
           static_cast<std::uint64_t>(port);
  }

  friend bool operator==(const Address&, const Address&) = default;
};

struct AddressHash {
  std::size_t operator()(const Address& a) const {
    return std::hash<std::uint64_t>{}(a.packed());
  }
};

inline std::uint64_t packed_address_bytes(const AddressBytes& b) {
  std::uint64_t v = 0;
  for (auto octet : b) v = (v << 8) | octet;
  return v;
}

/// Address -> 6 bytes: host octets in order, then port big-endian.
AddressBytes encode_address(const Address& addr);

/// Exact inverse of encode_address. Throws MalformedAddressError on a
/// buffer that is not exactly 6 bytes.
Address decode_address(ByteView bytes);
Address decode_address(const AddressBytes& bytes);

/// Memoizing codec cache. Each distinct input is converted at most once;
/// repeat inputs are served from the cache and bump the hit counters.
/// Safe for concurrent use from several recording contexts.
class AddressCodecCache {
 public:
  AddressBytes encode(const Address& addr);
  Address decode(const AddressBytes& bytes);

  std::uint64_t encode_conversions() const { return encode_conversions_.load(std::memory_order_relaxed); }
  std::uint64_t encode_hits() const { return encode_hits_.load(std::memory_order_relaxed); }
  std::uint64_t decode_conversions() const { return decode_conversions_.load(std::memory_order_relaxed); }
  std::uint64_t decode_hits() const { return decode_hits_.load(std::memory_order_relaxed); }
  std::uint64_t conversions() const { return encode_conversions() + decode_conversions(); }
  std::uint64_t hits() const { return encode_hits() + decode_hits(); }

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<Address, AddressBytes, AddressHash> encode_map_;
  std::unordered_map<std::uint64_t, Address> decode_map_;
  std::atomic<std::uint64_t> encode_conversions_{0};
  std::atomic<std::uint64_t> encode_hits_{0};
  std::atomic<std::uint64_t> decode_conversions_{0};
  std::atomic<std::uint64_t> decode_hits_{0};
};

AddressBytes cached_encode_address(const Address& addr, AddressCodecCache& cache);
Address cached_decode_address(const AddressBytes& bytes, AddressCodecCache& cache);

}  // namespace tunnelprof
