#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace salfeat {

std::string_view trim_eol(std::string_view line);
std::vector<std::string_view> split_fields(std::string_view line, char delim);

// Shortest decimal text that parses back to the same double.
std::string format_real(double v);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace salfeat
