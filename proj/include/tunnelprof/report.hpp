#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tunnelprof/harness.hpp"

namespace tunnelprof {

enum class TableKind { Relative, Absolute, Goodput };

/// Tabular view of a result: one row per function label, one value column
/// per hop count. Relative columns each sum to 1.
struct ReportTable {
  std::string caption;
  TableKind kind = TableKind::Relative;
  std::vector<int> hop_columns;
  std::vector<std::pair<std::string, std::vector<double>>> rows;

  friend bool operator==(const ReportTable&, const ReportTable&) = default;
};

/// Per-function fractions of tunnel-total exclusive time for one role.
/// Functions below a 1% floor in every requested column fold into an
/// `other-small` row. Throws ReportError when a (hop, role) cell is absent.
ReportTable emit_relative_table(const ScenarioResult& result, Role role,
                                std::span<const int> hop_columns);

/// Top-20 functions by summed exclusive seconds across all hop columns,
/// descending, ties broken by label.
ReportTable emit_absolute_table(const ScenarioResult& result, Role role);

void write_table_csv(std::ostream& out, const ReportTable& table);
std::string table_to_csv(const ReportTable& table);

/// Parses a CSV produced by write_table_csv back into rows/columns.
ReportTable parse_table_csv(std::istream& in, TableKind kind);

/// `hops,bytes_per_second`, one row per hop count.
void write_goodput_csv(std::ostream& out, const ScenarioResult& result);

/// Writes the whole results directory: result.json, stats_<hop>_<role>.csv,
/// goodput.csv, and the relative/absolute report tables.
void write_scenario_artifacts(const ScenarioResult& result,
                              const std::filesystem::path& out_dir);

/// Results directory for a scripted run: result.json plus
/// stats_<label>_<role>.csv per snapshot and goodput.csv per send phase.
void write_script_artifacts(const ScriptResult& result,
                            const std::filesystem::path& out_dir);

}  // namespace tunnelprof
