#include "region_extractor.hpp"

#include "error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace cytoclip::regions {

namespace {

struct PlannedRecord {
    RegionImageRecord record;
    std::vector<geometry::Polygon> group;
};

std::string slug(const std::string& s) {
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
        else if (!out.empty() && out.back() != '_') out.push_back('_');
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out.empty() ? "region" : out;
}

geometry::BBox pixel_bbox(const geometry::BBox& b, std::size_t width, std::size_t height) {
    return {std::clamp(std::floor(b.x0), 0.0, static_cast<double>(width)),
            std::clamp(std::floor(b.y0), 0.0, static_cast<double>(height)),
            std::clamp(std::ceil(b.x1), 0.0, static_cast<double>(width)),
            std::clamp(std::ceil(b.y1), 0.0, static_cast<double>(height))};
}

geometry::SquareBox pixel_square(const geometry::BBox& exact, std::size_t width, std::size_t height, int min_dim) {
    geometry::SquareBox sq =
        geometry::square_bbox(exact, static_cast<double>(width), static_cast<double>(height), min_dim);
    const double w = std::round(sq.box.width());
    const double h = std::round(sq.box.height());
    sq.box.x0 = std::floor(sq.box.x0);
    sq.box.y0 = std::floor(sq.box.y0);
    sq.box.x1 = sq.box.x0 + w;
    sq.box.y1 = sq.box.y0 + h;
    return sq;
}

std::vector<PlannedRecord> plan(const AnnotatedSection& section, const nomenclature::NomenclatureTree& tree,
                                const nomenclature::MergePolicy& policy, const ExtractionParams& params) {
    if (std::abs(section.resolution_um_per_px - params.expected_resolution_um) > 1e-9)
        fail(ErrorKind::Domain, "section " + section.section_id + " is at " +
                                    std::to_string(section.resolution_um_per_px) + " um/px, expected " +
                                    std::to_string(params.expected_resolution_um));
    const auto labeled = merge_by_label(section, tree, policy);
    const std::string section_slug = slug(section.section_id);

    std::vector<PlannedRecord> out;
    for (const auto& lp : labeled) {
        std::vector<geometry::Polygon> kept;
        for (const auto& p : lp.polygons)
            if (geometry::passes_size_filter(p, params.size_filter)) kept.push_back(p);
        if (kept.empty()) continue;

        const auto groups = geometry::proximity_groups(kept, params.dfs_threshold);
        for (std::size_t g = 0; g < groups.size(); ++g) {
            std::vector<geometry::Polygon> group;
            for (std::size_t idx : groups[g]) group.push_back(kept[idx]);
            const geometry::BBox exact = pixel_bbox(geometry::exact_bbox(group), section.width, section.height);

            RegionImageRecord base;
            base.section_id = section.section_id;
            base.label = lp.label;
            if (groups.size() > 1) base.part = static_cast<int>(g + 1);
            base.resolution_um_per_px = section.resolution_um_per_px;
            base.multi_labels = {lp.label};
            std::string stem = section_slug + "/" + slug(lp.label);
            if (base.part) stem += "_part" + std::to_string(*base.part);

            if (params.crops.exact) {
                RegionImageRecord r = base;
                r.crop_kind = CropKind::ExactBBox;
                r.bbox = exact;
                r.image_path = stem + "_exact.pgm";
                out.push_back({std::move(r), group});
            }
            if (params.crops.exact_masked) {
                RegionImageRecord r = base;
                r.crop_kind = CropKind::ExactBBoxMasked;
                r.bbox = exact;
                r.image_path = stem + "_masked.pgm";
                r.mask_path = stem + "_mask.pgm";
                out.push_back({std::move(r), group});
            }
            if (params.crops.square) {
                for (int dim : params.crops.square_min_dims) {
                    RegionImageRecord r = base;
                    r.crop_kind = CropKind::SquareBBox;
                    r.square_min_dim = dim;
                    const auto sq = pixel_square(exact, section.width, section.height, dim);
                    r.bbox = sq.box;
                    r.square = sq.square;
                    r.image_path = stem + "_square" + std::to_string(dim) + ".pgm";
                    r.multi_labels =
                        assign_multi_region_labels(lp.label, r.bbox, labeled, params.crops.multi_label_threshold);
                    out.push_back({std::move(r), group});
                }
            }
        }
    }
    return out;
}

} // namespace

const char* to_string(CropKind kind) {
    switch (kind) {
    case CropKind::ExactBBox: return "ExactBBox";
    case CropKind::ExactBBoxMasked: return "ExactBBoxMasked";
    case CropKind::SquareBBox: return "SquareBBox";
    }
    return "?";
}

CropKind crop_kind_from_string(const std::string& s) {
    if (s == "ExactBBox") return CropKind::ExactBBox;
    if (s == "ExactBBoxMasked") return CropKind::ExactBBoxMasked;
    if (s == "SquareBBox") return CropKind::SquareBBox;
    fail(ErrorKind::Parse, "unknown crop kind: " + s);
}

std::string primary_caption(const RegionImageRecord& record) {
    if (record.part) return record.label + " part " + std::to_string(*record.part);
    return record.label;
}

std::string multi_caption(const RegionImageRecord& record) {
    std::string out = primary_caption(record);
    for (std::size_t i = 1; i < record.multi_labels.size(); ++i) out += "; " + record.multi_labels[i];
    return out;
}

std::vector<LabeledPolygons> merge_by_label(const AnnotatedSection& section, const nomenclature::NomenclatureTree& tree,
                                            const nomenclature::MergePolicy& policy) {
    std::map<std::string, std::vector<geometry::Polygon>> by_label;
    for (const auto& r : section.regions) {
        if (!tree.contains(r.region_id))
            fail(ErrorKind::Domain, "section " + section.section_id + " references unknown region id " + r.region_id);
        if (auto label = nomenclature::resolve_label(tree, policy, r.region_id))
            by_label[*label].push_back(r.polygon);
    }
    std::vector<LabeledPolygons> out;
    for (auto& [label, polys] : by_label) out.push_back({label, std::move(polys)});
    return out;
}

std::vector<std::string> assign_multi_region_labels(const std::string& primary, const geometry::BBox& crop,
                                                    std::span<const LabeledPolygons> all_labeled, double threshold) {
    std::vector<std::pair<double, std::string>> neighbours;
    for (const auto& lp : all_labeled) {
        if (lp.label == primary) continue;
        double inside = 0.0;
        double total = 0.0;
        for (const auto& p : lp.polygons) {
            inside += geometry::clipped_area(p, crop);
            total += geometry::area(p);
        }
        if (total <= 0.0) continue;
        const double inclusion = inside / total;
        if (inclusion > threshold) neighbours.emplace_back(inclusion, lp.label);
    }
    std::sort(neighbours.begin(), neighbours.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out{primary};
    for (auto& [inc, label] : neighbours) out.push_back(std::move(label));
    return out;
}

std::vector<RegionImageRecord> plan_region_images(const AnnotatedSection& section,
                                                  const nomenclature::NomenclatureTree& tree,
                                                  const nomenclature::MergePolicy& policy,
                                                  const ExtractionParams& params) {
    std::vector<RegionImageRecord> out;
    for (auto& p : plan(section, tree, policy, params)) out.push_back(std::move(p.record));
    return out;
}

Image render_crop(const RegionImageRecord& record, const Image& section_image,
                  std::span<const geometry::Polygon> group_polygons) {
    const auto x0 = static_cast<long>(record.bbox.x0);
    const auto y0 = static_cast<long>(record.bbox.y0);
    const auto w = static_cast<std::size_t>(record.bbox.width());
    const auto h = static_cast<std::size_t>(record.bbox.height());
    Image img = crop(section_image, x0, y0, w, h);
    if (record.crop_kind == CropKind::ExactBBoxMasked) {
        std::vector<std::uint8_t> keep(w * h, 0);
        for (const auto& p : group_polygons) {
            const auto m = geometry::rasterize_mask(p, record.bbox);
            for (std::size_t i = 0; i < keep.size(); ++i) keep[i] |= m.bits[i];
        }
        for (std::size_t i = 0; i < keep.size(); ++i)
            if (!keep[i])
                for (std::size_t c = 0; c < img.channels; ++c) img.pixels[i * img.channels + c] = 0;
    }
    return img;
}

std::vector<RegionImageRecord> extract_region_images(const AnnotatedSection& section,
                                                     const nomenclature::NomenclatureTree& tree,
                                                     const nomenclature::MergePolicy& policy,
                                                     const ExtractionParams& params,
                                                     const std::filesystem::path& out_dir) {
    auto planned = plan(section, tree, policy, params);
    if (section.image_path.empty()) fail(ErrorKind::Io, "section " + section.section_id + " has no image");
    const Image image = read_pnm(section.image_path);
    if (image.width != section.width || image.height != section.height)
        fail(ErrorKind::Domain, "section " + section.section_id + ": annotation is " + std::to_string(section.width) +
                                    "x" + std::to_string(section.height) + " but image is " +
                                    std::to_string(image.width) + "x" + std::to_string(image.height));
    std::vector<RegionImageRecord> out;
    out.reserve(planned.size());
    for (auto& p : planned) {
        const Image img = render_crop(p.record, image, p.group);
        write_pnm(out_dir / p.record.image_path, img);
        if (p.record.mask_path) {
            Image mask(img.width, img.height, 1, 0);
            for (const auto& poly : p.group) {
                const auto m = geometry::rasterize_mask(poly, p.record.bbox);
                for (std::size_t i = 0; i < m.bits.size(); ++i)
                    if (m.bits[i]) mask.pixels[i] = 255;
            }
            write_pnm(out_dir / *p.record.mask_path, mask);
        }
        out.push_back(std::move(p.record));
    }
    return out;
}

Image pad_to_square(const Image& image, std::size_t target_dim) {
    if (image.empty()) fail(ErrorKind::InvalidArgument, "pad_to_square of empty image");
    if (target_dim == 0) fail(ErrorKind::InvalidArgument, "pad_to_square target must be > 0");
    Image src = image;
    if (src.width > target_dim || src.height > target_dim) {
        const double scale =
            static_cast<double>(target_dim) / static_cast<double>(std::max(src.width, src.height));
        const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(src.width * scale)));
        const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(src.height * scale)));
        src = resize_bicubic(src, std::min(w, target_dim), std::min(h, target_dim));
    }
    if (src.width == target_dim && src.height == target_dim) return src;
    Image out(target_dim, target_dim, src.channels, 0);
    const std::size_t ox = (target_dim - src.width) / 2;
    const std::size_t oy = (target_dim - src.height) / 2;
    for (std::size_t y = 0; y < src.height; ++y)
        for (std::size_t x = 0; x < src.width; ++x)
            for (std::size_t c = 0; c < src.channels; ++c) out.at(ox + x, oy + y, c) = src.at(x, y, c);
    return out;
}

} // namespace cytoclip::regions
