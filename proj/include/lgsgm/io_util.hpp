#pragma once

#include <filesystem>
#include <string>

namespace lgsgm {

// Reads a whole file; IoError when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

// Writes to "<path>.tmp" and renames over `path` once the data is flushed,
// so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace lgsgm
