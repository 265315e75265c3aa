#pragma once

#include "region_extractor.hpp"
#include "tiler.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cytoclip::split {

struct LabelSplitStats {
    std::size_t sections = 0;
    std::size_t val_sections = 0;  // whole-region: held-out sections; tiles: sections with no train tile
    std::size_t train_records = 0;
    std::size_t val_records = 0;
    std::size_t val_same_section = 0;   // tiles only
    std::size_t val_cross_section = 0;  // tiles only
};

struct SplitResult {
    std::vector<std::size_t> train;  // indices into the input, ascending
    std::vector<std::size_t> val;
    std::vector<std::string> uncovered_labels;  // labels with no validation data
    std::map<std::string, LabelSplitStats> per_label;
};

// Deterministic Fisher-Yates over mt19937_64 with rejection-sampled indices.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed);

std::uint64_t label_seed(std::uint64_t seed, const std::string& label);

// Per label, ceil(fraction * #sections) sections (at most #sections - 1) are
// drawn by a seeded shuffle; all of that label's records in those sections go
// to validation.
SplitResult split_whole_region(std::span<const regions::RegionImageRecord> records, double val_fraction,
                               std::uint64_t seed);

// Per label, floor(fraction * #tiles) validation tiles (at most #tiles - 1),
// filled by whole held-out sections up to round(cross_section_ratio * n_val)
// and then by random tiles of sections that stay in training.
SplitResult split_tiles(std::span<const tiles::TileRecord> records, double val_fraction, std::uint64_t seed,
                        double cross_section_ratio = 0.5);

std::string split_report(const SplitResult& result);

} // namespace cytoclip::split
