#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace twb {

std::string read_file(const std::filesystem::path& path);

// Plain truncating write. Throws IoFailure.
void write_file(const std::filesystem::path& path, std::string_view content);

// Writes to a sibling temporary and renames it over `path`, so readers see
// either the old or the new content.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Fails with IoFailure if the file already exists.
void write_file_exclusive(const std::filesystem::path& path, std::string_view content);

void append_line(const std::filesystem::path& path, std::string_view line);

std::string sha256_hex(std::string_view data);

// 32 hex characters from the OS entropy source.
std::string random_token(std::size_t bytes = 16);

// UTC, second precision: 2024-05-01T12:00:00Z
std::string utc_timestamp();

}  // namespace twb
