#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stormcast::csv {

/// Splits one CSV line on commas. Double-quoted fields may contain commas.
std::vector<std::string> split_line(std::string_view line);

/// Whole-file reader with a header lookup. Blank lines are dropped.
class Table {
 public:
  static Table read(const std::filesystem::path& path);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::optional<std::size_t> find(std::string_view column) const;
  /// Throws DataError naming the column and file when absent.
  std::size_t require(std::string_view column) const;

 private:
  std::filesystem::path path_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Round-trip formatting for doubles.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);

}  // namespace stormcast::csv
