#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace traitgeo {

/// Write `contents` to a sibling temp file and rename it over `path`, so a
/// reader never observes a truncated file. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Whole-file read. Throws IoError.
std::string read_file(const std::filesystem::path& path);

/// Minimal CSV support: comma separated, double-quoted fields may contain
/// commas and doubled quotes. No embedded newlines.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

/// Lines of `text` with trailing '\r' stripped; empty lines dropped.
std::vector<std::string> nonempty_lines(std::string_view text);

}  // namespace traitgeo
