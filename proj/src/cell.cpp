#include "tunnelprof/cell.hpp"

namespace tunnelprof {

const char* cell_type_name(CellType t) {
  switch (t) {
    case CellType::Data: return "DATA";
    case CellType::Create: return "CREATE";
    case CellType::Created: return "CREATED";
    case CellType::Extend: return "EXTEND";
    case CellType::Extended: return "EXTENDED";
    case CellType::Destroy: return "DESTROY";
  }
  return "UNKNOWN";
}

Bytes serialize_cell(const Cell& cell) {
  if (cell.payload.size() > kMaxCellPayload) {
    throw OversizeError("cell payload exceeds 65535 bytes");
  }
  Bytes out;
  out.reserve(kCellHeaderBytes + cell.payload.size());
  out.push_back(kCellMagic);
  put_u32_be(out, cell.circuit_id);
  out.push_back(static_cast<std::uint8_t>(cell.cell_type));
  put_u16_be(out, static_cast<std::uint16_t>(cell.payload.size()));
  out.insert(out.end(), cell.payload.begin(), cell.payload.end());
  return out;
}

Cell parse_cell(ByteView bytes) {
  if (bytes.size() < kCellHeaderBytes) {
    throw MalformedCellError("cell shorter than header");
  }
  if (bytes[0] != kCellMagic) {
    throw MalformedCellError("bad cell magic");
  }
  const std::uint8_t type = bytes[5];
  if (type > static_cast<std::uint8_t>(CellType::Destroy)) {
    throw MalformedCellError("unknown cell type " + std::to_string(type));
  }
  const std::uint16_t length = get_u16_be(bytes.subspan(6, 2));
  if (bytes.size() != kCellHeaderBytes + length) {
    throw MalformedCellError("cell length mismatch");
  }
  Cell cell;
  cell.circuit_id = get_u32_be(bytes.subspan(1, 4));
  cell.cell_type = static_cast<CellType>(type);
  cell.payload.assign(bytes.begin() + kCellHeaderBytes, bytes.end());
  return cell;
}

}  // namespace tunnelprof
