#include "eval.hpp"

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace cytoclip::eval {

std::vector<RankedLabel> classify_zero_shot(std::span<const double> image_embedding,
                                            const contrastive::Matrix& label_embeddings,
                                            std::span<const std::string> label_names) {
    if (label_names.empty()) fail(ErrorKind::InvalidArgument, "classify_zero_shot: empty label set");
    if (label_embeddings.rows != label_names.size() || label_embeddings.cols != image_embedding.size())
        fail(ErrorKind::Shape, "classify_zero_shot: label embedding shape mismatch");
    std::vector<RankedLabel> out;
    out.reserve(label_names.size());
    for (std::size_t l = 0; l < label_names.size(); ++l) {
        double s = 0.0;
        const auto row = label_embeddings.row(l);
        for (std::size_t k = 0; k < row.size(); ++k) s += row[k] * image_embedding[k];
        out.push_back({label_names[l], s});
    }
    std::sort(out.begin(), out.end(), [](const RankedLabel& a, const RankedLabel& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.label < b.label;
    });
    return out;
}

ClassificationReport weighted_prf(std::span<const std::string> predictions, std::span<const std::string> truths) {
    if (predictions.size() != truths.size()) fail(ErrorKind::Shape, "weighted_prf: length mismatch");
    if (truths.empty()) fail(ErrorKind::InvalidArgument, "weighted_prf: empty input");
    ClassificationReport rep;
    rep.samples = truths.size();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        auto& t = rep.per_class[truths[i]];
        ++t.support;
        ++rep.per_class[predictions[i]].predicted;
        ++rep.confusion[{truths[i], predictions[i]}];
        if (truths[i] == predictions[i]) {
            ++rep.per_class[truths[i]].true_positive;
            ++correct;
        }
    }
    for (auto& [label, s] : rep.per_class) {
        s.precision = s.predicted ? static_cast<double>(s.true_positive) / static_cast<double>(s.predicted) : 0.0;
        s.recall = s.support ? static_cast<double>(s.true_positive) / static_cast<double>(s.support) : 0.0;
        s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
        const double w = static_cast<double>(s.support) / static_cast<double>(rep.samples);
        rep.precision += w * s.precision;
        rep.recall += w * s.recall;
        rep.f1 += w * s.f1;
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(rep.samples);
    return rep;
}

bool multi_label_hit(std::span<const RankedLabel> ranked, const std::string& primary, std::size_t k) {
    const std::size_t limit = std::min(k, ranked.size());
    for (std::size_t i = 0; i < limit; ++i)
        if (ranked[i].label == primary) return true;
    return false;
}

MultiLabelOutcome multi_label_hit_rate(std::span<const std::vector<RankedLabel>> ranked,
                                       std::span<const std::vector<std::string>> multi_labels) {
    if (ranked.size() != multi_labels.size()) fail(ErrorKind::Shape, "multi_label_hit_rate: length mismatch");
    MultiLabelOutcome out;
    std::vector<std::string> preds;
    std::vector<std::string> truths;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (multi_labels[i].empty()) fail(ErrorKind::InvalidArgument, "record without labels");
        if (ranked[i].empty()) fail(ErrorKind::InvalidArgument, "empty ranking");
        const std::string& primary = multi_labels[i].front();
        const bool hit = multi_label_hit(ranked[i], primary, multi_labels[i].size());
        out.hits.push_back(hit);
        truths.push_back(primary);
        preds.push_back(hit ? primary : ranked[i].front().label);
    }
    out.report = weighted_prf(preds, truths);
    return out;
}

RecallResult recall_at_k(const contrastive::Matrix& queries, const contrastive::Matrix& corpus,
                         std::span<const std::string> query_labels, std::span<const std::string> corpus_labels,
                         std::size_t k, bool exclude_self) {
    if (k == 0) fail(ErrorKind::InvalidArgument, "recall_at_k: K must be >= 1");
    if (queries.rows != query_labels.size() || corpus.rows != corpus_labels.size() || queries.cols != corpus.cols)
        fail(ErrorKind::Shape, "recall_at_k: shape mismatch");
    if (exclude_self && queries.rows != corpus.rows)
        fail(ErrorKind::Shape, "recall_at_k: exclude_self needs queries and corpus to be the same set");

    RecallResult res;
    double sum = 0.0;
    std::vector<std::size_t> idx;
    std::vector<double> score(corpus.rows);
    for (std::size_t q = 0; q < queries.rows; ++q) {
        idx.clear();
        std::size_t relevant = 0;
        for (std::size_t c = 0; c < corpus.rows; ++c) {
            if (exclude_self && c == q) continue;
            idx.push_back(c);
            double s = 0.0;
            for (std::size_t d = 0; d < corpus.cols; ++d) s += queries(q, d) * corpus(c, d);
            score[c] = s;
            if (corpus_labels[c] == query_labels[q]) ++relevant;
        }
        if (relevant == 0) {
            ++res.queries_without_relevant;
            continue;
        }
        const std::size_t top = std::min(k, idx.size());
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(top), idx.end(),
                          [&](std::size_t a, std::size_t b) {
                              if (score[a] != score[b]) return score[a] > score[b];
                              return a < b;
                          });
        std::size_t found = 0;
        for (std::size_t r = 0; r < top; ++r)
            if (corpus_labels[idx[r]] == query_labels[q]) ++found;
        sum += static_cast<double>(found) / static_cast<double>(relevant);
        ++res.queries_counted;
    }
    res.recall = res.queries_counted ? sum / static_cast<double>(res.queries_counted) : 0.0;
    return res;
}

LabelMap coarse_segmentation(std::span<const tiles::TileRecord> tiles, std::span<const std::uint16_t> predicted_ids,
                             std::size_t width, std::size_t height) {
    if (tiles.size() != predicted_ids.size()) fail(ErrorKind::Shape, "coarse_segmentation: one prediction per tile");
    LabelMap map{width, height, std::vector<std::uint16_t>(width * height, kBackgroundLabel)};
    std::vector<char> covered(width * height, 0);
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        const auto& b = tiles[t].bbox;
        const auto x0 = static_cast<std::size_t>(std::max(0.0, b.x0));
        const auto y0 = static_cast<std::size_t>(std::max(0.0, b.y0));
        const auto x1 = std::min(width, static_cast<std::size_t>(std::max(0.0, b.x1)));
        const auto y1 = std::min(height, static_cast<std::size_t>(std::max(0.0, b.y1)));
        for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = x0; x < x1; ++x) {
                const std::size_t i = y * width + x;
                if (covered[i])
                    fail(ErrorKind::Domain, "coarse_segmentation: overlapping tiles at (" + std::to_string(x) + ", " +
                                                std::to_string(y) + ")");
                covered[i] = 1;
                map.ids[i] = predicted_ids[t];
            }
    }
    return map;
}

LabelMap rasterize_ground_truth(const AnnotatedSection& section, const nomenclature::NomenclatureTree& tree,
                                const std::map<std::string, std::uint16_t>& ids) {
    const std::size_t w = section.width, h = section.height;
    LabelMap map{w, h, std::vector<std::uint16_t>(w * h, kBackgroundLabel)};
    const geometry::BBox frame{0.0, 0.0, static_cast<double>(w), static_cast<double>(h)};
    for (const auto& r : section.regions) {
        const auto it = ids.find(tree.node(r.region_id).name);
        if (it == ids.end()) continue;
        geometry::BBox b = geometry::exact_bbox(std::span(&r.polygon, 1));
        b = {std::max(b.x0, frame.x0), std::max(b.y0, frame.y0), std::min(b.x1, frame.x1), std::min(b.y1, frame.y1)};
        if (b.x0 >= b.x1 || b.y0 >= b.y1) continue;
        const auto mask = geometry::rasterize_mask(r.polygon, b);
        const auto ox = static_cast<std::size_t>(std::floor(b.x0));
        const auto oy = static_cast<std::size_t>(std::floor(b.y0));
        for (std::size_t row = 0; row < mask.height; ++row)
            for (std::size_t col = 0; col < mask.width; ++col)
                if (mask.at(col, row)) map.ids[(oy + row) * w + ox + col] = it->second;
    }
    return map;
}

PixelAgreement pixel_agreement(const LabelMap& predicted, const LabelMap& truth, bool covered_only) {
    if (predicted.width != truth.width || predicted.height != truth.height)
        fail(ErrorKind::Shape, "pixel_agreement: label maps differ in size");
    PixelAgreement out;
    for (std::size_t i = 0; i < predicted.ids.size(); ++i) {
        if (covered_only && predicted.ids[i] == kBackgroundLabel) continue;
        ++out.compared;
        if (predicted.ids[i] == truth.ids[i]) ++out.agreeing;
    }
    out.fraction = out.compared ? static_cast<double>(out.agreeing) / static_cast<double>(out.compared) : 0.0;
    return out;
}

} // namespace cytoclip::eval
