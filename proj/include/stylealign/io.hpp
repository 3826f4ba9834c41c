#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace stylealign {

/// Writes via a sibling temporary file and rename, so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);
/// Git blob object id: SHA-1 over "blob <size>\0" followed by the bytes.
std::string git_blob_hash(std::string_view bytes);

}  // namespace stylealign
