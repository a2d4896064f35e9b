#pragma once

// Observation files.
//
// Text layout (default):
//   # maxent-smc observations
//   # version=1.0.0
//   # d=4
//   # M=3
//   # seed=7
//   # sampler=exact            (or mcmc, which marks approximate draws)
//   # lambda=0.5,-1,...        (only for synthetic data)
//   # config_hash=...
//   0110
//   1011
//   0000
// Row character i is x_{i+1}.
//
// Packed binary layout (little endian), for large M:
//   "MXSMCOB1" | u64 d | u64 M | u64 seed | u64 flags | u64 J | J x f64 lambda | M x u64 words
// flags: bit 0 = lambda present, bit 1 = mcmc sampler.

#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "maxent_smc/harness/io.hpp"
#include "maxent_smc/model.hpp"
#include "maxent_smc/solver.hpp"

namespace maxent_smc::harness {

struct ObservationFile {
  std::size_t dimension = 0;
  std::uint64_t seed = 0;
  std::string sampler = "exact";
  std::optional<std::vector<double>> lambda;  // generating parameters, when synthetic
  std::string config_hash;
  std::vector<BitState> rows;

  ObservationSet observations() const { return ObservationSet{dimension, rows}; }
};

inline constexpr std::string_view kBinaryMagic = "MXSMCOB1";

inline std::string format_observations_text(const ObservationFile& file) {
  std::ostringstream out;
  out << "# maxent-smc observations\n";
  out << "# version=" << kVersion << "\n";
  out << "# d=" << file.dimension << "\n";
  out << "# M=" << file.rows.size() << "\n";
  out << "# seed=" << file.seed << "\n";
  out << "# sampler=" << file.sampler << "\n";
  if (file.lambda) out << "# lambda=" << join_doubles(*file.lambda) << "\n";
  if (!file.config_hash.empty()) out << "# config_hash=" << file.config_hash << "\n";
  for (const auto& row : file.rows) out << to_bit_string(row, file.dimension) << '\n';
  return out.str();
}

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline std::uint64_t get_u64(std::string_view in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw ConfigError("binary observation file is truncated");
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= std::uint64_t{static_cast<unsigned char>(in[pos + b])} << (8 * b);
  pos += 8;
  return v;
}

}  // namespace detail

inline std::string format_observations_binary(const ObservationFile& file) {
  std::string out(kBinaryMagic);
  detail::put_u64(out, file.dimension);
  detail::put_u64(out, file.rows.size());
  detail::put_u64(out, file.seed);
  const std::uint64_t flags = (file.lambda ? 1U : 0U) | (file.sampler == "mcmc" ? 2U : 0U);
  detail::put_u64(out, flags);
  detail::put_u64(out, file.lambda ? file.lambda->size() : 0);
  if (file.lambda) {
    for (double v : *file.lambda) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  for (const auto& row : file.rows) detail::put_u64(out, row.word);
  return out;
}

inline ObservationFile parse_observations_binary(std::string_view in) {
  ObservationFile file;
  std::size_t pos = kBinaryMagic.size();
  file.dimension = detail::get_u64(in, pos);
  const auto count = detail::get_u64(in, pos);
  file.seed = detail::get_u64(in, pos);
  const auto flags = detail::get_u64(in, pos);
  const auto j = detail::get_u64(in, pos);
  if (file.dimension == 0 || file.dimension > kMaxBits) throw ConfigError("binary observations: bad dimension");
  file.sampler = (flags & 2U) ? "mcmc" : "exact";
  if (flags & 1U) {
    std::vector<double> lambda(j);
    for (auto& v : lambda) v = std::bit_cast<double>(detail::get_u64(in, pos));
    file.lambda = std::move(lambda);
  }
  if (in.size() - pos != count * 8) throw ConfigError("binary observations: row count does not match header");
  file.rows.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    BitState x{detail::get_u64(in, pos)};
    if (!x.fits(file.dimension)) throw ConfigError("binary observations: row has bits beyond d");
    file.rows.push_back(x);
  }
  return file;
}

inline ObservationFile parse_observations_text(std::string_view text) {
  ObservationFile file;
  std::optional<std::size_t> declared_count;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool have_d = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      const auto value = line.substr(eq + 1);
      try {
        if (key == "d") {
          file.dimension = std::stoul(value);
          have_d = true;
        } else if (key == "M") {
          declared_count = std::stoul(value);
        } else if (key == "seed") {
          file.seed = std::stoull(value);
        } else if (key == "sampler") {
          file.sampler = value;
        } else if (key == "config_hash") {
          file.config_hash = value;
        } else if (key == "lambda") {
          std::vector<double> lambda;
          std::istringstream ls(value);
          std::string cell;
          while (std::getline(ls, cell, ',')) lambda.push_back(std::stod(cell));
          file.lambda = std::move(lambda);
        }
      } catch (const std::logic_error&) {
        throw ConfigError("observations line " + std::to_string(line_no) + ": bad header value");
      }
      continue;
    }
    if (!have_d) throw ConfigError("observations: header must declare d before the first row");
    if (line.size() != file.dimension) {
      throw ConfigError("observations line " + std::to_string(line_no) + ": expected " +
                        std::to_string(file.dimension) + " bits, got " + std::to_string(line.size()));
    }
    file.rows.push_back(parse_bit_string(line));
  }
  if (!have_d) throw ConfigError("observations: missing d header");
  if (!declared_count) throw ConfigError("observations: missing M header");
  if (*declared_count != file.rows.size()) {
    throw ConfigError("observations: header declares M=" + std::to_string(*declared_count) + " but file has " +
                      std::to_string(file.rows.size()) + " rows");
  }
  return file;
}

inline ObservationFile parse_observations(std::string_view content) {
  if (content.substr(0, kBinaryMagic.size()) == kBinaryMagic) return parse_observations_binary(content);
  return parse_observations_text(content);
}

inline ObservationFile read_observations(const std::filesystem::path& path) {
  return parse_observations(read_file(path));
}

}  // namespace maxent_smc::harness
