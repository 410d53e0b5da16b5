#pragma once

#include <filesystem>

#include "ditcache/dit.hpp"

namespace ditcache {

// Versioned little-endian binary container: config header + named flat
// parameter arrays. Layout documented in docs/formats.md.
std::string model_to_bytes(const DiTModel& m);
DiTModel model_from_bytes(const std::string& bytes);
void save_model(const DiTModel& m, const std::filesystem::path& path);
DiTModel load_model(const std::filesystem::path& path);

}  // namespace ditcache
