#include "annotation.hpp"

#include "error.hpp"
#include "json_util.hpp"

#include <algorithm>

#include <json.hpp>

namespace cytoclip {

namespace {

geometry::Ring parse_ring(const nlohmann::json& coords) {
    geometry::Ring ring;
    ring.reserve(coords.size());
    for (const auto& pt : coords) {
        if (!pt.is_array() || pt.size() < 2) fail(ErrorKind::Parse, "annotation: coordinate must be [x, y]");
        ring.push_back({pt[0].get<double>(), pt[1].get<double>()});
    }
    return ring;
}

geometry::Polygon parse_polygon(const nlohmann::json& rings) {
    if (!rings.is_array() || rings.empty()) fail(ErrorKind::Parse, "annotation: polygon needs at least one ring");
    std::vector<geometry::Ring> holes;
    for (std::size_t i = 1; i < rings.size(); ++i) holes.push_back(parse_ring(rings[i]));
    return geometry::Polygon(parse_ring(rings[0]), std::move(holes));
}

nlohmann::json ring_to_json(const geometry::Ring& ring) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : ring) out.push_back({p.x, p.y});
    out.push_back({ring.front().x, ring.front().y});
    return out;
}

} // namespace

AnnotatedSection parse_annotation(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    AnnotatedSection s;
    try {
        const auto& props = doc.at("properties");
        s.section_id = props.at("section_id").get<std::string>();
        s.resolution_um_per_px = props.at("resolution_um_per_px").get<double>();
        s.width = props.at("width").get<std::size_t>();
        s.height = props.at("height").get<std::size_t>();
        if (props.contains("image")) s.image_path = base_dir / props.at("image").get<std::string>();
        for (const auto& f : doc.at("features")) {
            const std::string region = f.at("properties").at("region_id").get<std::string>();
            const auto& geom = f.at("geometry");
            const std::string type = geom.at("type").get<std::string>();
            try {
                if (type == "Polygon") {
                    s.regions.push_back({region, parse_polygon(geom.at("coordinates"))});
                } else if (type == "MultiPolygon") {
                    for (const auto& p : geom.at("coordinates")) s.regions.push_back({region, parse_polygon(p)});
                } else {
                    fail(ErrorKind::Parse, "annotation: unsupported geometry type " + type);
                }
            } catch (const Error& e) {
                fail(ErrorKind::Parse, "annotation " + s.section_id + ", region " + region + ": " + e.what());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, std::string("annotation malformed: ") + e.what());
    }
    if (!(s.resolution_um_per_px > 0.0)) fail(ErrorKind::Parse, "annotation: resolution must be > 0");
    return s;
}

AnnotatedSection load_annotation(const std::filesystem::path& path) {
    return parse_annotation(read_json_file(path), std::filesystem::absolute(path).parent_path());
}

nlohmann::json annotation_to_json(const AnnotatedSection& section, const std::string& image_ref) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& r : section.regions) {
        nlohmann::json rings = nlohmann::json::array();
        rings.push_back(ring_to_json(r.polygon.exterior()));
        for (const auto& h : r.polygon.holes()) rings.push_back(ring_to_json(h));
        features.push_back({{"type", "Feature"},
                            {"properties", {{"region_id", r.region_id}}},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}}});
    }
    return {{"type", "FeatureCollection"},
            {"properties",
             {{"section_id", section.section_id},
              {"resolution_um_per_px", section.resolution_um_per_px},
              {"width", section.width},
              {"height", section.height},
              {"image", image_ref}}},
            {"features", features}};
}

void save_annotation(const std::filesystem::path& path, const AnnotatedSection& section, const std::string& image_ref) {
    write_file_atomic(path, annotation_to_json(section, image_ref).dump(1) + "\n");
}

std::vector<std::filesystem::path> list_annotations(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) fail(ErrorKind::Io, "not a directory: " + dir.string());
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".geojson") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace cytoclip
