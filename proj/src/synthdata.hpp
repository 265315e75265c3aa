#pragma once

#include "annotation.hpp"
#include "geometry.hpp"
#include "image.hpp"
#include "nomenclature.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cytoclip::synth {

struct RegionSpec {
    std::string region_id;
    geometry::Polygon polygon;
    double dot_density = 0.0;  // dots / px^2
    double dot_radius = 2.0;   // px
    std::uint8_t gray_level = 60;
};

struct SynthSpec {
    std::string section_id;
    std::size_t width = 0;
    std::size_t height = 0;
    double resolution_um_per_px = 16.0;
    std::vector<RegionSpec> regions;
    std::uint64_t seed = 0;
    std::uint8_t background_level = 255;
    std::uint8_t tissue_level = 220;
};

struct SynthSection {
    AnnotatedSection annotation;
    Image image;
    std::vector<std::size_t> dot_counts;  // per region
};

// True when the interiors of a and b intersect (shared edges do not count).
bool polygons_overlap(const geometry::Polygon& a, const geometry::Polygon& b);

// Throws on overlapping polygons, negative densities/radii, or (with a tree)
// region ids missing from the taxonomy.
void validate_spec(const SynthSpec& spec, const nomenclature::NomenclatureTree* tree = nullptr);

// Paints tissue inside each polygon, then a Poisson(density * area) number of
// uniformly placed disks of the region's radius and gray level, clipped to the
// polygon. Deterministic in spec.seed.
SynthSection generate_section(const SynthSpec& spec);

inline constexpr std::size_t kHistogramBins = 16;
inline constexpr std::size_t kFeatureDim = kHistogramBins + 2;

struct FeatureParams {
    // Pixels with 0 < value < dark_threshold are cell foreground; 0 is padding.
    std::uint8_t dark_threshold = 160;
};

// [16-bin gray histogram (fractions), blobs per non-padding pixel, mean blob radius].
std::vector<double> feature_extract(const Image& patch, const FeatureParams& params = {});

struct RegionTemplate {
    std::string region_id;
    double dot_density = 0.0;
    double dot_radius = 2.0;
    std::uint8_t gray_level = 60;
};

struct GridSuiteParams {
    std::size_t sections = 20;
    std::size_t cols = 4;
    std::size_t rows = 2;
    double cell = 300.0;
    double margin = 15.0;
    double jitter = 10.0;
    double resolution_um_per_px = 16.0;
    std::uint64_t seed = 0;
    std::vector<RegionTemplate> regions;  // at most cols * rows
};

// Eight leaf regions of the demo taxonomy with well separated density,
// dot radius and gray level.
std::vector<RegionTemplate> default_region_templates();

// Sections whose regions are random star-shaped polygons on a jittered grid
// (a seeded permutation of the templates per section).
std::vector<SynthSpec> make_grid_suite(const GridSuiteParams& params);

// Guillotine partition of the section into integer rectangles (some notched
// into L-shapes, some left as background), labelled from `region_ids`.
// Pixel-centre counting equals exact area on these polygons.
SynthSpec make_rectilinear_spec(const std::string& section_id, std::size_t width, std::size_t height,
                                const std::vector<std::string>& region_ids, std::uint64_t seed,
                                double resolution_um_per_px = 2.0);

} // namespace cytoclip::synth
