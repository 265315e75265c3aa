#include "tiler.hpp"

#include "error.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

namespace cytoclip::tiles {

namespace {

struct IndexedPolygon {
    const geometry::Polygon* polygon;
    geometry::BBox bounds;
    std::size_t label_index;
};

struct LabelIndex {
    std::vector<std::string> labels;  // sorted
    std::vector<IndexedPolygon> polygons;
};

LabelIndex index_section(const AnnotatedSection& section, const nomenclature::NomenclatureTree& tree) {
    std::map<std::string, std::size_t> ids;
    for (const auto& r : section.regions) {
        if (!tree.contains(r.region_id))
            fail(ErrorKind::Domain, "section " + section.section_id + " references unknown region id " + r.region_id);
        ids.emplace(tree.node(r.region_id).name, 0);
    }
    LabelIndex idx;
    for (auto& [name, i] : ids) {
        i = idx.labels.size();
        idx.labels.push_back(name);
    }
    for (const auto& r : section.regions) {
        const geometry::Polygon& p = r.polygon;
        idx.polygons.push_back({&p, geometry::exact_bbox(std::span(&p, 1)), ids.at(tree.node(r.region_id).name)});
    }
    return idx;
}

std::vector<double> overlaps_for(const geometry::BBox& tile, const LabelIndex& idx) {
    std::vector<double> per_label(idx.labels.size(), 0.0);
    for (const auto& ip : idx.polygons) {
        const auto& b = ip.bounds;
        if (b.x1 <= tile.x0 || b.x0 >= tile.x1 || b.y1 <= tile.y0 || b.y0 >= tile.y1) continue;
        per_label[ip.label_index] += geometry::clipped_area(*ip.polygon, tile);
    }
    const double a = tile.area();
    for (double& v : per_label) v = std::clamp(v / a, 0.0, 1.0);
    return per_label;
}

} // namespace

std::vector<LabelOverlap> tile_overlaps(const geometry::BBox& tile, const AnnotatedSection& section,
                                        const nomenclature::NomenclatureTree& tree) {
    const LabelIndex idx = index_section(section, tree);
    const auto per_label = overlaps_for(tile, idx);
    std::vector<LabelOverlap> out;
    for (std::size_t i = 0; i < per_label.size(); ++i)
        if (per_label[i] > 0.0) out.push_back({idx.labels[i], per_label[i]});
    return out;
}

std::vector<TileRecord> tile_section(const AnnotatedSection& section, const nomenclature::NomenclatureTree& tree,
                                     const TilerParams& params) {
    if (std::abs(section.resolution_um_per_px - params.expected_resolution_um) > 1e-9)
        fail(ErrorKind::Domain, "section " + section.section_id + " is at " +
                                    std::to_string(section.resolution_um_per_px) + " um/px, tiler expects " +
                                    std::to_string(params.expected_resolution_um));
    if (params.tile_size == 0) fail(ErrorKind::InvalidArgument, "tile size must be > 0");

    const LabelIndex idx = index_section(section, tree);
    const std::size_t cols = section.width / params.tile_size;
    const std::size_t rows = section.height / params.tile_size;
    const double ts = static_cast<double>(params.tile_size);

    std::vector<std::optional<TileRecord>> slots(cols * rows);
    parallel_for(slots.size(), params.jobs, [&](std::size_t i) {
        const std::size_t gx = i % cols;
        const std::size_t gy = i / cols;
        const geometry::BBox tile{gx * ts, gy * ts, (gx + 1) * ts, (gy + 1) * ts};
        const auto per_label = overlaps_for(tile, idx);
        std::optional<std::size_t> best;
        for (std::size_t l = 0; l < per_label.size(); ++l) {
            if (!(per_label[l] > params.min_overlap)) continue;
            // labels are sorted, so strict '>' keeps the smaller name on ties
            if (!best || per_label[l] > per_label[*best]) best = l;
        }
        if (!best) return;
        TileRecord rec;
        rec.section_id = section.section_id;
        rec.grid_x = static_cast<long>(gx);
        rec.grid_y = static_cast<long>(gy);
        rec.bbox = tile;
        rec.label = idx.labels[*best];
        rec.overlap = per_label[*best];
        rec.image_path = section.image_path.string();
        slots[i] = std::move(rec);
    });

    std::vector<TileRecord> out;
    for (auto& s : slots)
        if (s) out.push_back(std::move(*s));
    return out;
}

} // namespace cytoclip::tiles
