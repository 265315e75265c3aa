#pragma once

#include "contrastive.hpp"
#include "region_extractor.hpp"
#include "synthdata.hpp"
#include "tiler.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace cytoclip::pipeline {

namespace fs = std::filesystem;

struct SynthConfig {
    std::string layout = "grid";  // "grid" (whole-region, 16 um/px) or "rectilinear" (tiles, 2 um/px)
    synth::GridSuiteParams grid;
    std::size_t rect_sections = 4;
    std::size_t rect_width = 1120;
    std::size_t rect_height = 1120;
    double rect_resolution_um_per_px = 2.0;
};

struct Config {
    fs::path taxonomy;
    fs::path policy;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    SynthConfig synth;
    regions::ExtractionParams region;
    tiles::TilerParams tile;
    bool materialize_tiles = false;
    double val_fraction = 0.2;
    double cross_section_ratio = 0.5;
    contrastive::TrainConfig train;
    std::string lr_schedule = "constant";
    std::string caption = "primary";  // or "multi"
    synth::FeatureParams features;
    std::size_t feature_input_size = 0;  // > 0: pad_to_square before feature extraction
    std::vector<std::size_t> recall_k{1, 5, 10};
};

// Defaults, with taxonomy/policy pointing at the shipped demo files when found.
Config default_config();

// Unknown keys are rejected; relative taxonomy/policy paths resolve against base_dir.
Config parse_config(const nlohmann::json& doc, const fs::path& base_dir);
Config load_config(const fs::path& path);
nlohmann::json config_to_json(const Config& config);

// Logs "cytoclip: <msg>" to stderr.
void log(const std::string& msg);

// A stage writes `.incomplete` into its output directory first and removes it
// last; inputs from a directory still carrying the marker are refused.
inline constexpr const char* kIncompleteMarker = ".incomplete";

struct TaxonomySummary {
    std::size_t nodes = 0;
    std::size_t roots = 0;
    std::size_t max_depth = 0;
    std::size_t leaves = 0;
    std::vector<std::string> labels;
};

struct SplitSummary {
    std::size_t train = 0;
    std::size_t val = 0;
    std::vector<std::string> uncovered_labels;
};

struct TrainSummary {
    std::size_t records = 0;
    std::vector<double> epoch_loss;
};

struct ClassifySummary {
    std::size_t samples = 0;
    std::size_t labels = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    double multi_precision = 0.0;
    double multi_recall = 0.0;
    double multi_f1 = 0.0;
};

struct RetrievalSummary {
    std::vector<std::size_t> k;
    std::vector<double> image_to_text;
    std::vector<double> text_to_image;
    std::vector<double> image_to_image;
};

struct SegmentSummary {
    std::size_t tiles = 0;
    double mean_tile_overlap = 0.0;
    std::optional<double> agreement;  // when the section annotation is available
    std::optional<double> oracle_agreement;  // same map built from the manifest's own labels
};

TaxonomySummary run_parse_taxonomy(const Config& config, const fs::path& out_dir);
std::size_t run_synth(const Config& config, const fs::path& out_dir);
std::size_t run_prep_regions(const Config& config, const fs::path& sections_dir, const fs::path& out_dir);
std::size_t run_prep_tiles(const Config& config, const fs::path& sections_dir, const fs::path& out_dir);
SplitSummary run_split(const Config& config, const fs::path& manifest, const fs::path& out_dir);
TrainSummary run_train(const Config& config, const fs::path& manifest, const fs::path& out_dir);
std::size_t run_embed(const Config& config, const fs::path& checkpoint, const fs::path& manifest,
                      const fs::path& out_dir);
// Label set = primary labels of `manifest`, plus those of `labels_manifest` if given.
ClassifySummary run_eval_classify(const Config& config, const fs::path& checkpoint, const fs::path& manifest,
                                  const fs::path& out_dir, const std::optional<fs::path>& labels_manifest = {});
RetrievalSummary run_eval_retrieval(const Config& config, const fs::path& checkpoint, const fs::path& manifest,
                                    const fs::path& out_dir);
// Coarse segmentation of one section from a tile manifest. Ground truth comes
// from `<sections_dir>/<section_id>.geojson` when sections_dir is given.
SegmentSummary run_segment(const Config& config, const fs::path& checkpoint, const fs::path& tile_manifest,
                           const std::string& section_id, const std::optional<fs::path>& sections_dir,
                           const fs::path& out_dir);

// Feature vectors for manifest records (paths relative to manifest_dir).
std::vector<std::vector<double>> region_features(const std::vector<regions::RegionImageRecord>& records,
                                                 const fs::path& manifest_dir, const Config& config);
std::vector<std::vector<double>> tile_features(const std::vector<tiles::TileRecord>& records,
                                               const fs::path& manifest_dir, const Config& config);

} // namespace cytoclip::pipeline
