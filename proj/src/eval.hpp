#pragma once

#include "contrastive.hpp"
#include "tiler.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cytoclip::eval {

struct RankedLabel {
    std::string label;
    double score = 0.0;
};

// Labels by descending cosine similarity to the image embedding; ties by name.
std::vector<RankedLabel> classify_zero_shot(std::span<const double> image_embedding,
                                            const contrastive::Matrix& label_embeddings,
                                            std::span<const std::string> label_names);

struct ClassStats {
    std::size_t support = 0;
    std::size_t predicted = 0;
    std::size_t true_positive = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct ClassificationReport {
    std::map<std::string, ClassStats> per_class;
    std::map<std::pair<std::string, std::string>, std::size_t> confusion;  // (truth, prediction) -> count
    double precision = 0.0;  // support-weighted
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    std::size_t samples = 0;
};

ClassificationReport weighted_prf(std::span<const std::string> predictions, std::span<const std::string> truths);

// Hit iff `primary` is among the first k ranked labels.
bool multi_label_hit(std::span<const RankedLabel> ranked, const std::string& primary, std::size_t k);

struct MultiLabelOutcome {
    std::vector<bool> hits;
    ClassificationReport report;  // a hit counts as predicting the primary label, else top-1
};

// k per record = size of that record's multi-label list.
MultiLabelOutcome multi_label_hit_rate(std::span<const std::vector<RankedLabel>> ranked,
                                       std::span<const std::vector<std::string>> multi_labels);

struct RecallResult {
    double recall = 0.0;               // macro average over counted queries
    std::size_t queries_counted = 0;
    std::size_t queries_without_relevant = 0;
};

// Per query, relevant = corpus items with an equal label; ranking by descending
// cosine similarity, ties by corpus index. With exclude_self, corpus item i is
// removed from query i's ranking (image-to-image over one set).
RecallResult recall_at_k(const contrastive::Matrix& queries, const contrastive::Matrix& corpus,
                         std::span<const std::string> query_labels, std::span<const std::string> corpus_labels,
                         std::size_t k, bool exclude_self = false);

inline constexpr std::uint16_t kBackgroundLabel = 0;

struct LabelMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint16_t> ids;
};

// Fills each tile's block with its predicted label id; other pixels get
// kBackgroundLabel. Throws Error(Domain) on overlapping tiles.
LabelMap coarse_segmentation(std::span<const tiles::TileRecord> tiles, std::span<const std::uint16_t> predicted_ids,
                             std::size_t width, std::size_t height);

// Pixel-centre rasterisation of the section's polygons, each painted with the
// id of its leaf structure name; names missing from `ids` stay background.
LabelMap rasterize_ground_truth(const AnnotatedSection& section, const nomenclature::NomenclatureTree& tree,
                                const std::map<std::string, std::uint16_t>& ids);

struct PixelAgreement {
    std::size_t compared = 0;
    std::size_t agreeing = 0;
    double fraction = 0.0;
};

// With covered_only, only pixels the prediction labels (non-background) count.
PixelAgreement pixel_agreement(const LabelMap& predicted, const LabelMap& truth, bool covered_only = true);

} // namespace cytoclip::eval
