#pragma once

#include <cstdint>

#include "tunnelprof/bytes.hpp"
#include "tunnelprof/errors.hpp"

namespace tunnelprof {

inline constexpr std::uint8_t kCellMagic = 0x54;
inline constexpr std::size_t kCellHeaderBytes = 8;
inline constexpr std::size_t kMaxCellPayload = 65535;

enum class CellType : std::uint8_t {
  Data = 0,
  Create = 1,
  Created = 2,
  Extend = 3,
  Extended = 4,
  Destroy = 5,
};

const char* cell_type_name(CellType t);

/// Wire unit: [magic 0x54][circuit_id u32 BE][type u8][payload len u16 BE][payload].
/// Layered encryption applies to Data payloads only.
struct Cell {
  std::uint32_t circuit_id = 0;
  CellType cell_type = CellType::Data;
  Bytes payload;

  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Throws OversizeError when the payload does not fit 16 bits.
Bytes serialize_cell(const Cell& cell);

/// Exact inverse of serialize_cell. Throws MalformedCellError on a short
/// buffer, bad magic, unknown cell type, or a length mismatch.
Cell parse_cell(ByteView bytes);

}  // namespace tunnelprof
