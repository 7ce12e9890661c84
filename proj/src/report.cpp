#include "tunnelprof/report.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace tunnelprof {

namespace {

constexpr double kFoldFloor = 0.01;
constexpr const char* kFoldLabel = "other-small";

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

std::string hops_suffix(std::span<const int> hops) {
  std::string out;
  for (std::size_t i = 0; i < hops.size(); ++i) {
    if (i > 0) out += '-';
    out += std::to_string(hops[i]);
  }
  return out;
}

const RoleResult& role_cell(const ScenarioResult& result, Role role, int hops) {
  const HopRun& run = result.run_for_hops(hops);
  auto it = run.roles.find(role);
  if (it == run.roles.end()) {
    throw ReportError(std::string("result has no cell for role ") + role_name(role) + " at " +
                      std::to_string(hops) + " hops");
  }
  return it->second;
}

/// Rows sorted by max value across columns, descending, label as tie-break.
void sort_rows(std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  auto row_peak = [](const std::pair<std::string, std::vector<double>>& row) {
    double peak = 0.0;
    for (double v : row.second) peak = std::max(peak, v);
    return peak;
  };
  std::sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
    const double pa = row_peak(a);
    const double pb = row_peak(b);
    if (pa != pb) return pa > pb;
    return a.first < b.first;
  });
}

}  // namespace

ReportTable emit_relative_table(const ScenarioResult& result, Role role,
                                std::span<const int> hop_columns) {
  ReportTable table;
  table.kind = TableKind::Relative;
  table.caption = std::string("relative ") + profiler::clock_name(result.config.clock) +
                  " time per function, " + role_name(role) + " node";
  table.hop_columns.assign(hop_columns.begin(), hop_columns.end());

  std::map<std::string, std::vector<double>> fractions;
  std::set<std::string> labels;
  std::vector<double> totals(hop_columns.size(), 0.0);

  for (std::size_t col = 0; col < hop_columns.size(); ++col) {
    const RoleResult& cell = role_cell(result, role, hop_columns[col]);
    for (const auto& fs : cell.stats) {
      labels.insert(fs.name);
      totals[col] += fs.total_seconds;
    }
  }
  for (const auto& label : labels) {
    fractions[label].assign(hop_columns.size(), 0.0);
  }
  for (std::size_t col = 0; col < hop_columns.size(); ++col) {
    const RoleResult& cell = role_cell(result, role, hop_columns[col]);
    for (const auto& fs : cell.stats) {
      fractions[fs.name][col] = totals[col] > 0.0 ? fs.total_seconds / totals[col] : 0.0;
    }
  }

  std::vector<double> folded(hop_columns.size(), 0.0);
  bool any_folded = false;
  for (const auto& [label, values] : fractions) {
    const bool small = std::all_of(values.begin(), values.end(),
                                   [](double v) { return v < kFoldFloor; });
    if (small) {
      any_folded = true;
      for (std::size_t col = 0; col < values.size(); ++col) {
        folded[col] += values[col];
      }
    } else {
      table.rows.emplace_back(label, values);
    }
  }
  sort_rows(table.rows);
  if (any_folded) {
    table.rows.emplace_back(kFoldLabel, folded);
  }
  return table;
}

ReportTable emit_absolute_table(const ScenarioResult& result, Role role) {
  ReportTable table;
  table.kind = TableKind::Absolute;
  table.caption = std::string("absolute ") + profiler::clock_name(result.config.clock) +
                  " seconds per function, " + role_name(role) + " node";
  for (const auto& run : result.runs) {
    table.hop_columns.push_back(run.hops);
  }

  std::map<std::string, std::vector<double>> seconds;
  for (std::size_t col = 0; col < table.hop_columns.size(); ++col) {
    const RoleResult& cell = role_cell(result, role, table.hop_columns[col]);
    for (const auto& fs : cell.stats) {
      auto& row = seconds[fs.name];
      row.resize(table.hop_columns.size(), 0.0);
      row[col] = fs.total_seconds;
    }
  }
  for (auto& [label, values] : seconds) {
    values.resize(table.hop_columns.size(), 0.0);
    table.rows.emplace_back(label, values);
  }

  std::sort(table.rows.begin(), table.rows.end(), [](const auto& a, const auto& b) {
    const double ta = std::accumulate(a.second.begin(), a.second.end(), 0.0);
    const double tb = std::accumulate(b.second.begin(), b.second.end(), 0.0);
    if (ta != tb) return ta > tb;
    return a.first < b.first;
  });
  if (table.rows.size() > 20) {
    table.rows.resize(20);
  }
  return table;
}

void write_table_csv(std::ostream& out, const ReportTable& table) {
  std::string line = "label";
  for (int hops : table.hop_columns) {
    line += ",hops_" + std::to_string(hops);
  }
  line += '\n';
  out << line;
  for (const auto& [label, values] : table.rows) {
    line = label;
    for (double v : values) {
      line += ',';
      append_double(line, v);
    }
    line += '\n';
    out << line;
  }
}

std::string table_to_csv(const ReportTable& table) {
  std::ostringstream out;
  write_table_csv(out, table);
  return out.str();
}

ReportTable parse_table_csv(std::istream& in, TableKind kind) {
  ReportTable table;
  table.kind = kind;
  std::string line;
  if (!std::getline(in, line)) {
    throw ReportError("empty report CSV");
  }
  std::size_t pos = line.find(',');
  while (pos != std::string::npos) {
    std::size_t next = line.find(',', pos + 1);
    std::string column = line.substr(pos + 1, next == std::string::npos ? next : next - pos - 1);
    if (column.rfind("hops_", 0) != 0) {
      throw ReportError("bad report CSV header column: " + column);
    }
    table.hop_columns.push_back(std::stoi(column.substr(5)));
    pos = next;
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> values;
    std::size_t start = line.find(',');
    const std::string label = line.substr(0, start);
    while (start != std::string::npos) {
      std::size_t next = line.find(',', start + 1);
      const std::string token =
          line.substr(start + 1, next == std::string::npos ? next : next - start - 1);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc{} || ptr != token.data() + token.size()) {
        throw ReportError("bad report CSV value: " + token);
      }
      values.push_back(v);
      start = next;
    }
    table.rows.emplace_back(label, std::move(values));
  }
  return table;
}

void write_goodput_csv(std::ostream& out, const ScenarioResult& result) {
  out << "hops,bytes_per_second\n";
  for (const auto& run : result.runs) {
    std::string line = std::to_string(run.hops);
    line += ',';
    append_double(line, run.goodput_bps);
    line += '\n';
    out << line;
  }
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << contents;
}

std::string stats_csv_for(const profiler::Snapshot& stats) {
  std::ostringstream out;
  profiler::write_stats_csv(out, stats);
  return out.str();
}

}  // namespace

void write_scenario_artifacts(const ScenarioResult& result,
                              const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "result.json", result_to_json_string(result));

  for (const auto& run : result.runs) {
    for (const auto& [role, rr] : run.roles) {
      const std::string name =
          "stats_" + std::to_string(run.hops) + "_" + role_name(role) + ".csv";
      write_file(out_dir / name, stats_csv_for(rr.stats));
    }
  }

  {
    std::ostringstream out;
    write_goodput_csv(out, result);
    write_file(out_dir / "goodput.csv", out.str());
  }

  std::vector<int> hops;
  for (const auto& run : result.runs) {
    hops.push_back(run.hops);
  }
  const std::string suffix = hops_suffix(hops);
  for (Role role : {Role::Seed, Role::Relay, Role::Exit, Role::Sink}) {
    bool present = true;
    for (const auto& run : result.runs) {
      if (run.roles.find(role) == run.roles.end()) {
        present = false;
        break;
      }
    }
    if (!present) continue;
    write_file(out_dir / ("relative_" + std::string(role_name(role)) + "_" + suffix + ".csv"),
               table_to_csv(emit_relative_table(result, role, hops)));
    write_file(out_dir / ("absolute_" + std::string(role_name(role)) + "_" + suffix + ".csv"),
               table_to_csv(emit_absolute_table(result, role)));
  }
}

void write_script_artifacts(const ScriptResult& result,
                            const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "result.json", script_result_to_json_string(result));
  for (const auto& [label, roles] : result.snapshots) {
    for (const auto& [role, rr] : roles) {
      const std::string name = "stats_" + label + "_" + role_name(role) + ".csv";
      write_file(out_dir / name, stats_csv_for(rr.stats));
    }
  }
  std::ostringstream out;
  out << "hops,bytes_per_second\n";
  for (const auto& phase : result.send_phases) {
    std::string line = std::to_string(phase.hops);
    line += ',';
    append_double(line, phase.goodput_bps);
    line += '\n';
    out << line;
  }
  write_file(out_dir / "goodput.csv", out.str());
}

}  // namespace tunnelprof
