#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "abc/tensor.hpp"

namespace abc {

// 17 significant digits; parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::vector<std::string_view> split_csv_line(std::string_view line);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Dense matrix as CSV rows without a header.
std::string matrix_to_csv(const Tensor& m);
Tensor matrix_from_csv(const std::string& text);

}  // namespace abc
