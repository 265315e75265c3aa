#pragma once

#include "annotation.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "nomenclature.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cytoclip::regions {

enum class CropKind { ExactBBox, ExactBBoxMasked, SquareBBox };

const char* to_string(CropKind kind);
CropKind crop_kind_from_string(const std::string& s);

struct RegionImageRecord {
    std::string section_id;
    std::string label;
    std::optional<int> part;
    CropKind crop_kind = CropKind::ExactBBox;
    std::optional<int> square_min_dim;  // SquareBBox only
    bool square = true;                 // false when the section forced a non-square fallback
    geometry::BBox bbox;                // integral pixel coordinates
    std::optional<std::string> mask_path;
    std::vector<std::string> multi_labels;  // primary first
    double resolution_um_per_px = 0.0;
    std::string image_path;
};

// Caption text used for training: "<label>[ part <n>]".
std::string primary_caption(const RegionImageRecord& record);
// Multi-region caption: labels joined by "; ", primary (with part suffix) first.
std::string multi_caption(const RegionImageRecord& record);

struct CropConfig {
    bool exact = true;
    bool exact_masked = true;
    bool square = true;
    std::vector<int> square_min_dims{336, 224};
    double multi_label_threshold = 0.80;
};

struct ExtractionParams {
    geometry::SizeFilter size_filter{400.0, 3.0};
    double dfs_threshold = 20.0;
    CropConfig crops;
    double expected_resolution_um = 16.0;
};

struct LabeledPolygons {
    std::string label;
    std::vector<geometry::Polygon> polygons;
};

// Groups the section's polygons under their resolved labels (excluded regions
// dropped), sorted by label.
std::vector<LabeledPolygons> merge_by_label(const AnnotatedSection& section, const nomenclature::NomenclatureTree& tree,
                                            const nomenclature::MergePolicy& policy);

// Neighbour labels whose merged polygons are included in `crop` by more than
// `threshold` (strict), primary first, then by descending inclusion, then name.
std::vector<std::string> assign_multi_region_labels(const std::string& primary, const geometry::BBox& crop,
                                                    std::span<const LabeledPolygons> all_labeled,
                                                    double threshold = 0.80);

// Geometry-only planning: labels, parts, crop boxes and output file names. No I/O.
std::vector<RegionImageRecord> plan_region_images(const AnnotatedSection& section,
                                                  const nomenclature::NomenclatureTree& tree,
                                                  const nomenclature::MergePolicy& policy,
                                                  const ExtractionParams& params);

// Plans, then reads the section raster and writes crops (and masks) under
// out_dir. Record paths are relative to out_dir.
std::vector<RegionImageRecord> extract_region_images(const AnnotatedSection& section,
                                                     const nomenclature::NomenclatureTree& tree,
                                                     const nomenclature::MergePolicy& policy,
                                                     const ExtractionParams& params,
                                                     const std::filesystem::path& out_dir);

// Crop pixels for a planned record from an in-memory section raster.
Image render_crop(const RegionImageRecord& record, const Image& section_image,
                  std::span<const geometry::Polygon> group_polygons);

// Downscales (bicubic, aspect preserved) when larger than target, then centres
// on a zero-filled target x target canvas.
Image pad_to_square(const Image& image, std::size_t target_dim);

} // namespace cytoclip::regions
