#pragma once

#include "geometry.hpp"

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace cytoclip {

struct LabeledPolygon {
    std::string region_id;
    geometry::Polygon polygon;
};

// One histological section: raster reference + labelled polygons.
struct AnnotatedSection {
    std::string section_id;
    double resolution_um_per_px = 0.0;
    std::size_t width = 0;
    std::size_t height = 0;
    std::filesystem::path image_path;  // absolute after loading
    std::vector<LabeledPolygon> regions;
};

// GeoJSON FeatureCollection subset: top-level "properties" carries
// section_id / resolution_um_per_px / width / height / image; each feature has
// properties.region_id and a Polygon or MultiPolygon geometry in pixel units.
AnnotatedSection parse_annotation(const nlohmann::json& doc, const std::filesystem::path& base_dir);
AnnotatedSection load_annotation(const std::filesystem::path& path);
nlohmann::json annotation_to_json(const AnnotatedSection& section, const std::string& image_ref);
void save_annotation(const std::filesystem::path& path, const AnnotatedSection& section, const std::string& image_ref);

// Annotation files (*.geojson) in a directory, sorted by file name.
std::vector<std::filesystem::path> list_annotations(const std::filesystem::path& dir);

} // namespace cytoclip
