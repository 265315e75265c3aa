#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace cytoclip {

nlohmann::json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

// Writes to `<path>.tmp` then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

} // namespace cytoclip
