#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace hicle::io {

// Writes through a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace hicle::io
