#pragma once

#include <string>

namespace drmn {

/// Reads a whole file; throws DataError when it cannot be opened.
std::string read_file(const std::string& path);

/// Writes to `path.tmp` and renames over `path`, so readers never observe a
/// partially written file.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace drmn
