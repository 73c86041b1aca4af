#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

namespace safenav {

// Malformed or unreadable input file. The message always names the file and,
// where possible, the offending field.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Fixed-format number rendering for CSV and table output. `%.17g` round-trips
// doubles exactly; `fixed` is used for human-facing tables.
std::string format_exact(double value);
std::string format_fixed(double value, int decimals);

}  // namespace safenav
