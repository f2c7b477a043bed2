#pragma once

#include "flatfiber/error.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace flatfiber {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Round-trip representation of a double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// A CSV table: one `#` header line with provenance hash and column names, then data rows.
class CsvTable {
 public:
  CsvTable(std::string config_hash, std::vector<std::string> columns)
      : hash_(std::move(config_hash)), columns_(std::move(columns)) {}

  /// Appends one row; cells are doubles (printed with 17 significant digits), integers or strings.
  template <class... Cells>
  void add(const Cells&... cells) {
    std::vector<std::string> row;
    row.reserve(sizeof...(cells));
    (row.push_back(cell(cells)), ...);
    commit(row);
  }

  [[nodiscard]] std::size_t rows() const { return rows_; }

  [[nodiscard]] std::string str() const {
    std::string out = "# config_hash=" + hash_ + " columns=";
    for (std::size_t i = 0; i < columns_.size(); ++i) out += (i ? "," : "") + columns_[i];
    out += "\n";
    return out + body_;
  }

  /// Writes to `path` (truncating); throws IoError.
  void write(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    const std::string s = str();
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!f) throw IoError("write failed for " + path.string());
  }

 private:
  static std::string cell(double v) { return format_double(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(long long v) { return std::to_string(v); }
  static std::string cell(unsigned long v) { return std::to_string(v); }
  static std::string cell(unsigned long long v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }

  void commit(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size()) {
      throw ArgumentError("CsvTable: row has " + std::to_string(cells.size()) + " cells, expected " +
                          std::to_string(columns_.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) body_ += (i ? "," : "") + cells[i];
    body_ += "\n";
    ++rows_;
  }

  std::string hash_;
  std::vector<std::string> columns_;
  std::string body_;
  std::size_t rows_ = 0;
};

/// A CSV file read back: column names from the header line, numeric cells.
struct CsvData {
  std::string config_hash;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw ArgumentError("CsvData: no column '" + name + "'");
  }
  [[nodiscard]] double number(std::size_t row, const std::string& name) const {
    return std::stod(rows.at(row).at(column(name)));
  }
};

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

inline CsvData read_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  CsvData d;
  std::string line;
  if (!std::getline(f, line) || line.rfind("# config_hash=", 0) != 0) {
    throw IoError(path.string() + ": missing header line");
  }
  const std::size_t sp = line.find(" columns=");
  if (sp == std::string::npos) throw IoError(path.string() + ": header without columns");
  d.config_hash = line.substr(14, sp - 14);
  d.columns = split(std::string_view(line).substr(sp + 9), ',');
  while (std::getline(f, line)) {
    if (!line.empty()) d.rows.push_back(split(line, ','));
  }
  return d;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace flatfiber
