#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace twmq {

// Minimal CSV support for the fixed numeric schemas used by the tool:
// comma-separated, '.' decimal separator, UTF-8, '#' comment lines.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line per row
};

CsvTable read_csv(const std::string& path);

double parse_double(const std::string& field, const std::string& context);
int parse_int(const std::string& field, const std::string& context);

// 17 significant digits: doubles round-trip exactly through text
std::string format_double(double v);

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  // "# twmq <version> config=<hash> seed=<seed>"
  void comment(const std::string& text);
  void row(const std::vector<std::string>& fields);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
};

std::uint64_t fnv1a64(const std::string& text);

}  // namespace twmq
