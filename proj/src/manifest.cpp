#include "manifest.hpp"

#include "error.hpp"
#include "json_util.hpp"

#include <sstream>

namespace cytoclip::manifest {

namespace {

nlohmann::json bbox_json(const geometry::BBox& b) { return {b.x0, b.y0, b.x1, b.y1}; }

geometry::BBox bbox_from(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) fail(ErrorKind::Parse, "bbox must be [x0, y0, x1, y1]");
    geometry::BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (b.x0 > b.x1 || b.y0 > b.y1) fail(ErrorKind::Parse, "bbox has x0 > x1 or y0 > y1");
    return b;
}

} // namespace

nlohmann::json to_json(const regions::RegionImageRecord& r) {
    nlohmann::json j = {{"section_id", r.section_id},
                        {"label", r.label},
                        {"part", r.part ? nlohmann::json(*r.part) : nlohmann::json(nullptr)},
                        {"crop_kind", regions::to_string(r.crop_kind)},
                        {"bbox", bbox_json(r.bbox)},
                        {"mask_path", r.mask_path ? nlohmann::json(*r.mask_path) : nlohmann::json(nullptr)},
                        {"multi_labels", r.multi_labels},
                        {"resolution_um_per_px", r.resolution_um_per_px},
                        {"image_path", r.image_path}};
    if (r.square_min_dim) {
        j["square_min_dim"] = *r.square_min_dim;
        j["square"] = r.square;
    }
    return j;
}

nlohmann::json to_json(const tiles::TileRecord& t) {
    return {{"section_id", t.section_id}, {"grid_x", t.grid_x},       {"grid_y", t.grid_y},
            {"bbox", bbox_json(t.bbox)},  {"label", t.label},         {"overlap", t.overlap},
            {"image_path", t.image_path}, {"virtual", t.is_virtual}};
}

regions::RegionImageRecord region_from_json(const nlohmann::json& j) {
    try {
        regions::RegionImageRecord r;
        r.section_id = j.at("section_id").get<std::string>();
        r.label = j.at("label").get<std::string>();
        if (j.contains("part") && !j.at("part").is_null()) r.part = j.at("part").get<int>();
        r.crop_kind = regions::crop_kind_from_string(j.at("crop_kind").get<std::string>());
        r.bbox = bbox_from(j.at("bbox"));
        if (j.contains("mask_path") && !j.at("mask_path").is_null()) r.mask_path = j.at("mask_path").get<std::string>();
        r.multi_labels = j.at("multi_labels").get<std::vector<std::string>>();
        r.resolution_um_per_px = j.at("resolution_um_per_px").get<double>();
        r.image_path = j.at("image_path").get<std::string>();
        if (j.contains("square_min_dim")) r.square_min_dim = j.at("square_min_dim").get<int>();
        if (j.contains("square")) r.square = j.at("square").get<bool>();
        if (r.multi_labels.empty() || r.multi_labels.front() != r.label)
            fail(ErrorKind::Parse, "record multi_labels must start with the primary label");
        if (r.crop_kind == regions::CropKind::ExactBBoxMasked && !r.mask_path)
            fail(ErrorKind::Parse, "ExactBBoxMasked record without mask_path");
        return r;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, std::string("region record malformed: ") + e.what());
    }
}

tiles::TileRecord tile_from_json(const nlohmann::json& j) {
    try {
        tiles::TileRecord t;
        t.section_id = j.at("section_id").get<std::string>();
        t.grid_x = j.at("grid_x").get<long>();
        t.grid_y = j.at("grid_y").get<long>();
        t.bbox = bbox_from(j.at("bbox"));
        t.label = j.at("label").get<std::string>();
        t.overlap = j.at("overlap").get<double>();
        t.image_path = j.at("image_path").get<std::string>();
        t.is_virtual = j.value("virtual", true);
        return t;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, std::string("tile record malformed: ") + e.what());
    }
}

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += r.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<nlohmann::json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            rows.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

Records load_records(const std::filesystem::path& path) {
    const auto rows = read_jsonl(path);
    if (!rows.empty() && rows.front().contains("grid_x")) {
        std::vector<tiles::TileRecord> out;
        for (const auto& r : rows) out.push_back(tile_from_json(r));
        return out;
    }
    std::vector<regions::RegionImageRecord> out;
    for (const auto& r : rows) out.push_back(region_from_json(r));
    return out;
}

void save_records(const std::filesystem::path& path, const Records& records) {
    std::vector<nlohmann::json> rows;
    std::visit([&](const auto& v) {
        for (const auto& r : v) rows.push_back(to_json(r));
    }, records);
    write_jsonl(path, rows);
}

} // namespace cytoclip::manifest
