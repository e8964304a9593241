#pragma once

#include <string>
#include <vector>

namespace glam {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

/// Reads a comma-separated file. Fields are taken verbatim (no quoting).
CsvTable read_csv(const std::string& path);

/// Writes a table; caller is responsible for field contents being comma-free.
void write_csv(const std::string& path, const CsvTable& table);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

/// Strict double parse; throws ValidationError naming `context` on failure.
double parse_double(const std::string& text, const std::string& context);

}  // namespace glam
