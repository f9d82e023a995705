#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace ttfs::io {

// Whole-file read; throws IoError naming the path.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a half-written file. Missing parent directories are created.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ttfs::io
