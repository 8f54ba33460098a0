#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace claimrl::util {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

/// splitmix64-based mixing of a run seed with a step and an index.
std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t step, std::uint64_t index);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Minimal CSV reader for numeric logs: header names and rows of fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
  std::vector<double> numbers(std::string_view name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace claimrl::util
