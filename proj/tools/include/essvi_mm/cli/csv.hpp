#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace essvi_mm::cli {

// Formats with 17 significant digits so values round-trip exactly.
std::string format_double(double x);

// Buffers rows in memory and publishes the file with a temp-file rename.
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header);

  CsvWriter& cell(double x);
  CsvWriter& cell(long long x);
  CsvWriter& cell(int x) { return cell(static_cast<long long>(x)); }
  CsvWriter& cell(const std::string& x);
  void end_row();

  std::size_t rows() const { return rows_; }
  std::string str() const { return out_.str(); }
  void commit(const std::string& path) const;

 private:
  std::ostringstream out_;
  std::size_t columns_ = 0;
  std::size_t in_row_ = 0;
  std::size_t rows_ = 0;
};

// Writes `content` to `path` via a sibling temp file and rename.
void write_file_atomic(const std::string& path, const std::string& content);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // throws std::runtime_error if absent
  double number(std::size_t row, const std::string& name) const;
};

// Throws std::runtime_error if the file is missing or ragged.
CsvTable read_csv(const std::string& path);

}  // namespace essvi_mm::cli
