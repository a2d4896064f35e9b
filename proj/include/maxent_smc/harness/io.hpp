#pragma once

// Text formatting, hashing and CSV writers shared by the experiment runners.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "maxent_smc/sgld.hpp"
#include "maxent_smc/solver.hpp"
#include "maxent_smc/version.hpp"

namespace maxent_smc::harness {

/// File could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 17 significant digits: enough to round-trip any double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join_doubles(std::span<const double> values, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    out += format_double(values[i]);
  }
  return out;
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes atomically enough for our purposes: full content or an IoError.
inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

/// Provenance lines prefixed with '#'; readers skip them.
struct Provenance {
  std::string kind;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline void write_provenance(std::ostream& out, const Provenance& p) {
  out << "# maxent-smc " << p.kind << "\n";
  out << "# version=" << kVersion << "\n";
  out << "# seed=" << p.seed << "\n";
  out << "# config_hash=" << p.config_hash << "\n";
}

/// Columns: n, delta_n, lambda_1..lambda_J, drift_norm, misfit_norm
/// (misfit_norm empty when the oracle was not evaluated at that row).
inline void write_trace_csv(std::ostream& out, const SolverTrace& trace, std::size_t parameter_count,
                            const Provenance& provenance) {
  write_provenance(out, provenance);
  out << "n,delta_n";
  for (std::size_t j = 1; j <= parameter_count; ++j) out << ",lambda_" << j;
  out << ",drift_norm,misfit_norm\n";
  for (const auto& r : trace.records) {
    out << r.n << ',' << format_double(r.delta) << ',' << join_doubles(r.lambda) << ','
        << format_double(r.drift_norm()) << ',';
    if (r.misfit) out << format_double(*r.misfit);
    out << '\n';
  }
}

/// Columns: n, delta_n, lambda_1..lambda_J.
inline void write_samples_csv(std::ostream& out, const std::vector<WeightedSample>& samples,
                              std::size_t parameter_count, const Provenance& provenance) {
  write_provenance(out, provenance);
  out << "n,delta_n";
  for (std::size_t j = 1; j <= parameter_count; ++j) out << ",lambda_" << j;
  out << '\n';
  for (const auto& s : samples) {
    out << s.n << ',' << format_double(s.weight) << ',' << join_doubles(s.lambda) << '\n';
  }
}

/// Parsed numeric CSV: header names and rows; '#' lines skipped, empty cells are NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvTable parse_csv(std::string_view text) {
  CsvTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (table.header.empty()) {
      table.header = split(line);
      continue;
    }
    std::vector<double> row;
    for (const auto& cell : split(line)) {
      row.push_back(cell.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(cell));
    }
    if (row.size() != table.header.size()) throw IoError("CSV row has wrong number of cells");
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace maxent_smc::harness
