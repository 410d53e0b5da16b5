#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ditcache {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool all_finite(const std::vector<double>& v);

// FNV-1a 64-bit content hash, hex encoded. Used for manifest content ids.
std::string content_id(const std::string& bytes);
std::string content_id_of_file(const std::filesystem::path& path);

// Write via a temp file + rename so readers never observe partial contents.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace ditcache
