#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace icl {

// Shortest decimal string that parses back to the same double. Infinities are
// written as inf / -inf, NaN as nan.
std::string format_double(double value);

// Fixed-header CSV table. Cells are written verbatim; the writers below only
// emit numbers and identifiers, none of which need quoting.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  void add_row(std::vector<std::string> cells);
  const std::vector<std::string>& header() const noexcept { return header_; }
  std::size_t rows() const noexcept { return rows_.size(); }

  std::string str() const;
  // IoError on failure; parent directories are created.
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace icl
