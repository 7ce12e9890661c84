#include "tunnelprof/address.hpp"

#include <charconv>
#include <cstdio>

#include "tunnelprof/errors.hpp"
#include "tunnelprof/profiler.hpp"

namespace tunnelprof {

namespace {

std::uint16_t parse_port(std::string_view text) {
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value > 65535) {
    throw MalformedAddressError("bad port: " + std::string(text));
  }
  return static_cast<std::uint16_t>(value);
}

std::array<std::uint8_t, 4> parse_host(std::string_view text) {
  std::array<std::uint8_t, 4> host{};
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) {
    std::size_t end = (i == 3) ? text.size() : text.find('.', pos);
    if (end == std::string_view::npos) {
      throw MalformedAddressError("expected dotted quad: " + std::string(text));
    }
    unsigned octet = 0;
    auto piece = text.substr(pos, end - pos);
    auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), octet);
    if (ec != std::errc{} || ptr != piece.data() + piece.size() || octet > 255 || piece.empty()) {
      throw MalformedAddressError("bad host octet in: " + std::string(text));
    }
    host[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(octet);
    pos = end + 1;
  }
  return host;
}

}  // namespace

Address Address::from_string(const std::string& dotted_quad, std::uint16_t port) {
  return Address(parse_host(dotted_quad), port);
}

Address Address::from_string(const std::string& host_port) {
  auto colon = host_port.rfind(':');
  if (colon == std::string::npos) {
    throw MalformedAddressError("expected host:port, got: " + host_port);
  }
  return Address(parse_host(std::string_view(host_port).substr(0, colon)),
                 parse_port(std::string_view(host_port).substr(colon + 1)));
}

std::string Address::to_string() const {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u:%u", host[0], host[1], host[2], host[3], port);
  return buf;
}

AddressBytes encode_address(const Address& addr) {
  profiler::Scope scope(profiler::Label::encode_address);
  AddressBytes out;
  out[0] = addr.host[0];
  out[1] = addr.host[1];
  out[2] = addr.host[2];
  out[3] = addr.host[3];
  out[4] = static_cast<std::uint8_t>(addr.port >> 8);
  out[5] = static_cast<std::uint8_t>(addr.port);
  return out;
}

Address decode_address(ByteView bytes) {
  if (bytes.size() != 6) {
    throw MalformedAddressError("address must be exactly 6 bytes, got " +
                                std::to_string(bytes.size()));
  }
  AddressBytes fixed;
  std::copy(bytes.begin(), bytes.end(), fixed.begin());
  return decode_address(fixed);
}

Address decode_address(const AddressBytes& bytes) {
  profiler::Scope scope(profiler::Label::decode_address);
  Address addr;
  addr.host = {bytes[0], bytes[1], bytes[2], bytes[3]};
  addr.port = static_cast<std::uint16_t>((bytes[4] << 8) | bytes[5]);
  return addr;
}

AddressBytes AddressCodecCache::encode(const Address& addr) {
  profiler::Scope scope(profiler::Label::encode_address);
  {
    std::shared_lock lock(mutex_);
    auto it = encode_map_.find(addr);
    if (it != encode_map_.end()) {
      encode_hits_.fetch_add(1, std::memory_order_relaxed);
      return it->second;
    }
  }
  AddressBytes converted{addr.host[0], addr.host[1], addr.host[2], addr.host[3],
                         static_cast<std::uint8_t>(addr.port >> 8),
                         static_cast<std::uint8_t>(addr.port)};
  std::unique_lock lock(mutex_);
  auto [it, inserted] = encode_map_.emplace(addr, converted);
  if (inserted) {
    encode_conversions_.fetch_add(1, std::memory_order_relaxed);
  } else {
    encode_hits_.fetch_add(1, std::memory_order_relaxed);
  }
  return it->second;
}

Address AddressCodecCache::decode(const AddressBytes& bytes) {
  profiler::Scope scope(profiler::Label::decode_address);
  const std::uint64_t key = packed_address_bytes(bytes);
  {
    std::shared_lock lock(mutex_);
    auto it = decode_map_.find(key);
    if (it != decode_map_.end()) {
      decode_hits_.fetch_add(1, std::memory_order_relaxed);
      return it->second;
    }
  }
  Address converted;
  converted.host = {bytes[0], bytes[1], bytes[2], bytes[3]};
  converted.port = static_cast<std::uint16_t>((bytes[4] << 8) | bytes[5]);
  std::unique_lock lock(mutex_);
  auto [it, inserted] = decode_map_.emplace(key, converted);
  if (inserted) {
    decode_conversions_.fetch_add(1, std::memory_order_relaxed);
  } else {
    decode_hits_.fetch_add(1, std::memory_order_relaxed);
  }
  return it->second;
}

AddressBytes cached_encode_address(const Address& addr, AddressCodecCache& cache) {
  return cache.encode(addr);
}

Address cached_decode_address(const AddressBytes& bytes, AddressCodecCache& cache) {
  return cache.decode(bytes);
}

}  // namespace tunnelprof
