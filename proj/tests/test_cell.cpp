#include <doctest.h>

#include "tunnelprof/bytes.hpp"
#include "tunnelprof/cell.hpp"
#include "tunnelprof/rng.hpp"

using namespace tunnelprof;

TEST_CASE("serialize_cell matches the wire layout byte for byte") {
  // [magic 54][circuit id 00000001][type DATA=00][len 0001][payload 78]
  const Cell cell{1, CellType::Data, Bytes{'x'}};
  CHECK(to_hex(ByteView(serialize_cell(cell))) == "540000000100000178");

  const Cell destroy{0xdeadbeef, CellType::Destroy, {}};
  CHECK(to_hex(ByteView(serialize_cell(destroy))) == "54deadbeef050000");
}

TEST_CASE("parse_cell inverts serialize_cell on random cells") {
  Rng rng(0x7777);
  for (int i = 0; i < 500; ++i) {
    Cell cell;
    cell.circuit_id = rng.next_u32();
    cell.cell_type = static_cast<CellType>(rng.next_u32() % 6);
    cell.payload.resize(rng.next_u32() % 2048);
    rng.fill(cell.payload);
    CHECK(parse_cell(ByteView(serialize_cell(cell))) == cell);
  }
}

TEST_CASE("parse_cell rejects malformed buffers") {
  const Bytes good = serialize_cell(Cell{7, CellType::Data, Bytes{'a', 'b'}});

  SUBCASE("truncated buffer") {
    const Bytes truncated(good.begin(), good.end() - 1);
    CHECK_THROWS_AS(parse_cell(ByteView(truncated)), MalformedCellError);
  }
  SUBCASE("short header") {
    const Bytes tiny(good.begin(), good.begin() + 5);
    CHECK_THROWS_AS(parse_cell(ByteView(tiny)), MalformedCellError);
  }
  SUBCASE("bad magic") {
    Bytes bad = good;
    bad[0] = 0x55;
    CHECK_THROWS_AS(parse_cell(ByteView(bad)), MalformedCellError);
  }
  SUBCASE("unknown cell type") {
    Bytes bad = good;
    bad[5] = 6;
    CHECK_THROWS_AS(parse_cell(ByteView(bad)), MalformedCellError);
  }
  SUBCASE("length mismatch") {
    Bytes bad = good;
    bad[7] = 3;  // claims 3 payload bytes, carries 2
    CHECK_THROWS_AS(parse_cell(ByteView(bad)), MalformedCellError);
  }
  SUBCASE("oversize payload refuses to serialize") {
    Cell big{1, CellType::Data, Bytes(65536, 0)};
    CHECK_THROWS_AS(serialize_cell(big), OversizeError);
  }
}
