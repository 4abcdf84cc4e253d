#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace wdyn::io {

// Writes to a sibling temp file and renames it over `path`, so readers see
// either the previous file or the complete new one.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

std::string read_file(const std::filesystem::path& path);

// Shortest round-trip decimal form; locale independent.
std::string format_number(double value);
std::string format_number(float value);

// The double whose shortest decimal form equals the float's shortest form,
// so JSON emitters print 0.001 rather than 0.0010000000474974513.
double widen(float value);

} // namespace wdyn::io
