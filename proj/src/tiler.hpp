#pragma once

#include "annotation.hpp"
#include "geometry.hpp"
#include "nomenclature.hpp"

#include <string>
#include <vector>

namespace cytoclip::tiles {

struct TileRecord {
    std::string section_id;
    long grid_x = 0;
    long grid_y = 0;
    geometry::BBox bbox;
    std::string label;
    double overlap = 0.0;
    std::string image_path;  // section raster (virtual tile) or materialised tile file
    bool is_virtual = true;
};

struct TilerParams {
    std::size_t tile_size = 224;
    double min_overlap = 0.40;  // strict: a candidate needs overlap > min_overlap
    double expected_resolution_um = 2.0;
    unsigned jobs = 1;
};

struct LabelOverlap {
    std::string label;
    double overlap = 0.0;
};

// Per-label overlap fractions of one tile, summed over each label's polygons;
// labels with zero overlap omitted. Sorted by label.
std::vector<LabelOverlap> tile_overlaps(const geometry::BBox& tile, const AnnotatedSection& section,
                                        const nomenclature::NomenclatureTree& tree);

// Non-overlapping row-major grid anchored at (0,0); partial edge tiles and tiles
// without a candidate above min_overlap are omitted. Label = argmax overlap,
// ties broken by the lexicographically smaller name. Labels are the leaf
// structure names from `tree`.
std::vector<TileRecord> tile_section(const AnnotatedSection& section, const nomenclature::NomenclatureTree& tree,
                                     const TilerParams& params = {});

} // namespace cytoclip::tiles
