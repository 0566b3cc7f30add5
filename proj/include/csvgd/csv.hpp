#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace csvgd {

/// Shortest decimal string that parses back to exactly v ('.' decimal).
std::string format_double(double v);

std::vector<std::string> split_csv_line(const std::string& line);
double parse_double(const std::string& s);

/// Comma-delimited writer with a header row. Opens for truncation unless
/// append is set, in which case the header is only written to empty files.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header,
            bool append = false);

  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(long long v);
  CsvWriter& operator<<(std::size_t v) { return *this << static_cast<long long>(v); }
  CsvWriter& operator<<(int v) { return *this << static_cast<long long>(v); }
  CsvWriter& operator<<(const std::string& s);
  CsvWriter& operator<<(const char* s) { return *this << std::string(s); }
  /// Empty cell.
  CsvWriter& skip();
  void end_row();
  void flush() { out_.flush(); }

 private:
  void sep();

  std::ofstream out_;
  bool row_started_ = false;
};

}  // namespace csvgd
