#include <doctest.h>

#include "tunnelprof/address.hpp"
#include "tunnelprof/bytes.hpp"
#include "tunnelprof/errors.hpp"
#include "tunnelprof/rng.hpp"

using namespace tunnelprof;

namespace {

Address random_address(Rng& rng) {
  return Address({static_cast<std::uint8_t>(rng.next_u32()),
                  static_cast<std::uint8_t>(rng.next_u32()),
                  static_cast<std::uint8_t>(rng.next_u32()),
                  static_cast<std::uint8_t>(rng.next_u32())},
                 static_cast<std::uint16_t>(rng.next_u32()));
}

std::string hex_of(const AddressBytes& b) { return to_hex(ByteView(b.data(), b.size())); }

}  // namespace

TEST_CASE("encode_address fixed layouts") {
  CHECK(hex_of(encode_address(Address({0, 0, 0, 0}, 0))) == "000000000000");
  // manual big-endian layout: 127.0.0.1 -> 7f 00 00 01, port 8000 = 0x1f40
  CHECK(hex_of(encode_address(Address({127, 0, 0, 1}, 8000))) == "7f0000011f40");
  CHECK(hex_of(encode_address(Address({255, 255, 255, 255}, 65535))) == "ffffffffffff");
}

TEST_CASE("decode_address inverts encode and rejects bad lengths") {
  CHECK(decode_address(ByteView(from_hex("000000000000"))) == Address({0, 0, 0, 0}, 0));
  CHECK(decode_address(ByteView(from_hex("7f0000011f40"))) == Address({127, 0, 0, 1}, 8000));
  const Bytes five = from_hex("7f00000101");
  CHECK_THROWS_AS(decode_address(ByteView(five)), MalformedAddressError);
  const Bytes seven = from_hex("7f0000011f4000");
  CHECK_THROWS_AS(decode_address(ByteView(seven)), MalformedAddressError);
}

TEST_CASE("codec bijection on corners and random addresses") {
  for (const Address& corner :
       {Address({0, 0, 0, 0}, 0), Address({255, 255, 255, 255}, 65535),
        Address({0, 0, 0, 0}, 65535), Address({255, 255, 255, 255}, 0)}) {
    CHECK(decode_address(encode_address(corner)) == corner);
  }
  Rng rng(0x5eed);
  for (int i = 0; i < 2000; ++i) {
    const Address a = random_address(rng);
    CHECK(decode_address(encode_address(a)) == a);
  }
}

TEST_CASE("cached codec memoizes and counts hits") {
  AddressCodecCache cache;
  const Address a({127, 0, 0, 1}, 8000);

  const AddressBytes first = cached_encode_address(a, cache);
  const AddressBytes second = cached_encode_address(a, cache);
  CHECK(first == second);
  CHECK(first == encode_address(a));
  CHECK(cache.encode_conversions() == 1);
  CHECK(cache.encode_hits() == 1);

  SUBCASE("1000 calls over 10 distinct addresses convert 10 times") {
    AddressCodecCache fresh;
    std::vector<Address> addrs;
    for (int i = 0; i < 10; ++i) {
      addrs.push_back(Address({10, 0, 0, static_cast<std::uint8_t>(i)}, 7000));
    }
    for (int call = 0; call < 1000; ++call) {
      cached_encode_address(addrs[static_cast<std::size_t>(call % 10)], fresh);
    }
    CHECK(fresh.encode_conversions() == 10);
    CHECK(fresh.encode_hits() == 990);
  }
}

TEST_CASE("cached codec agrees with the plain codec") {
  AddressCodecCache cache;
  Rng rng(0xcafe);
  for (int i = 0; i < 10000; ++i) {
    // A narrow byte range forces plenty of repeats through the cache.
    const Address a({10, 0, static_cast<std::uint8_t>(rng.next_u32() % 4),
                     static_cast<std::uint8_t>(rng.next_u32() % 64)},
                    static_cast<std::uint16_t>(7000 + rng.next_u32() % 16));
    const AddressBytes plain = encode_address(a);
    CHECK(cached_encode_address(a, cache) == plain);
    CHECK(cached_decode_address(plain, cache) == decode_address(plain));
  }
  CHECK(cache.encode_conversions() <= 4 * 64 * 16);
  CHECK(cache.encode_conversions() + cache.encode_hits() == 10000);
}

TEST_CASE("address string forms round-trip at the CLI boundary") {
  const Address a = Address::from_string("192.168.1.20:8080");
  CHECK(a == Address({192, 168, 1, 20}, 8080));
  CHECK(a.to_string() == "192.168.1.20:8080");
  CHECK_THROWS_AS(Address::from_string("not-an-address"), MalformedAddressError);
  CHECK_THROWS_AS(Address::from_string("1.2.3.4:99999"), MalformedAddressError);
  CHECK_THROWS_AS(Address::from_string("1.2.3.456:80"), MalformedAddressError);
}
