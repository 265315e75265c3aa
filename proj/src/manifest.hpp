#pragma once

#include "region_extractor.hpp"
#include "tiler.hpp"

#include <filesystem>
#include <variant>
#include <vector>

#include <json.hpp>

namespace cytoclip::manifest {

nlohmann::json to_json(const regions::RegionImageRecord& r);
nlohmann::json to_json(const tiles::TileRecord& t);
regions::RegionImageRecord region_from_json(const nlohmann::json& j);
tiles::TileRecord tile_from_json(const nlohmann::json& j);

// One compact JSON object per line, keys sorted; written atomically.
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

using Records = std::variant<std::vector<regions::RegionImageRecord>, std::vector<tiles::TileRecord>>;

// Region vs tile manifest is detected from the first record ("grid_x" marks tiles).
Records load_records(const std::filesystem::path& path);
void save_records(const std::filesystem::path& path, const Records& records);

} // namespace cytoclip::manifest
