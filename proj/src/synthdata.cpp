#include "synthdata.hpp"

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace cytoclip::synth {

namespace {

double boundary_distance(const geometry::Polygon& poly, geometry::Point p) {
    double best = std::numeric_limits<double>::infinity();
    auto visit = [&](const geometry::Ring& r) {
        for (std::size_t i = 0; i < r.size(); ++i)
            best = std::min(best, geometry::point_segment_distance(p, r[i], r[(i + 1) % r.size()]));
    };
    visit(poly.exterior());
    for (const auto& h : poly.holes()) visit(h);
    return best;
}

bool strictly_inside(const geometry::Polygon& poly, geometry::Point p) {
    return geometry::contains(poly, p) && boundary_distance(poly, p) > 1e-9;
}

// Vertices, edge midpoints and points just inside each edge of `a`.
std::vector<geometry::Point> probe_points(const geometry::Polygon& a) {
    std::vector<geometry::Point> pts;
    const auto& r = a.exterior();
    const bool ccw = geometry::signed_ring_area(r) > 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const auto p = r[i];
        const auto q = r[(i + 1) % r.size()];
        pts.push_back(p);
        const geometry::Point mid{(p.x + q.x) / 2, (p.y + q.y) / 2};
        pts.push_back(mid);
        const double len = std::hypot(q.x - p.x, q.y - p.y);
        if (len > 0.0) {
            // left normal points inward for counter-clockwise rings
            double nx = -(q.y - p.y) / len;
            double ny = (q.x - p.x) / len;
            if (!ccw) {
                nx = -nx;
                ny = -ny;
            }
            const double step = std::min(1e-3, len * 1e-3);
            const geometry::Point in{mid.x + nx * step, mid.y + ny * step};
            if (geometry::contains(a, in)) pts.push_back(in);
        }
    }
    return pts;
}

geometry::Polygon star_polygon(std::mt19937_64& rng, double cx, double cy, double radius) {
    std::uniform_int_distribution<int> count(8, 12);
    std::uniform_real_distribution<double> scale(0.75, 1.0);
    std::uniform_real_distribution<double> wobble(-0.25, 0.25);
    const int n = count(rng);
    geometry::Ring ring;
    for (int k = 0; k < n; ++k) {
        const double angle = 2.0 * std::numbers::pi * (k + 0.5 + wobble(rng)) / n;
        const double r = radius * scale(rng);
        ring.push_back({std::round((cx + r * std::cos(angle)) * 4.0) / 4.0, std::round((cy + r * std::sin(angle)) * 4.0) / 4.0});
    }
    return geometry::Polygon(std::move(ring));
}

} // namespace

bool polygons_overlap(const geometry::Polygon& a, const geometry::Polygon& b) {
    const geometry::Polygon pa[] = {a};
    const geometry::Polygon pb[] = {b};
    const auto ba = geometry::exact_bbox(pa);
    const auto bb = geometry::exact_bbox(pb);
    if (ba.x1 <= bb.x0 || bb.x1 <= ba.x0 || ba.y1 <= bb.y0 || bb.y1 <= ba.y0) return false;

    const auto& ra = a.exterior();
    const auto& rb = b.exterior();
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const auto a0 = ra[i];
        const auto a1 = ra[(i + 1) % ra.size()];
        for (std::size_t j = 0; j < rb.size(); ++j) {
            const auto b0 = rb[j];
            const auto b1 = rb[(j + 1) % rb.size()];
            auto cross = [](geometry::Point o, geometry::Point p, geometry::Point q) {
                return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
            };
            const double d1 = cross(b0, b1, a0);
            const double d2 = cross(b0, b1, a1);
            const double d3 = cross(a0, a1, b0);
            const double d4 = cross(a0, a1, b1);
            if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
        }
    }
    for (const auto& p : probe_points(a))
        if (strictly_inside(b, p)) return true;
    for (const auto& p : probe_points(b))
        if (strictly_inside(a, p)) return true;
    return false;
}

void validate_spec(const SynthSpec& spec, const nomenclature::NomenclatureTree* tree) {
    if (spec.width == 0 || spec.height == 0) fail(ErrorKind::InvalidArgument, "synthetic section has zero size");
    for (std::size_t i = 0; i < spec.regions.size(); ++i) {
        const auto& r = spec.regions[i];
        if (!(r.dot_density >= 0.0) || !(r.dot_radius >= 0.0))
            fail(ErrorKind::InvalidArgument, "region " + r.region_id + ": density and radius must be >= 0");
        if (tree && !tree->contains(r.region_id))
            fail(ErrorKind::InvalidArgument, "region " + r.region_id + " is not in the taxonomy");
        for (std::size_t j = i + 1; j < spec.regions.size(); ++j)
            if (polygons_overlap(r.polygon, spec.regions[j].polygon))
                fail(ErrorKind::Domain, "overlapping region polygons: " + r.region_id + " and " +
                                            spec.regions[j].region_id + " in " + spec.section_id);
    }
}

SynthSection generate_section(const SynthSpec& spec) {
    validate_spec(spec);
    SynthSection out;
    out.image = Image(spec.width, spec.height, 1, spec.background_level);
    out.annotation.section_id = spec.section_id;
    out.annotation.resolution_um_per_px = spec.resolution_um_per_px;
    out.annotation.width = spec.width;
    out.annotation.height = spec.height;

    const geometry::BBox frame{0.0, 0.0, static_cast<double>(spec.width), static_cast<double>(spec.height)};
    std::vector<geometry::Mask> masks;
    std::vector<geometry::BBox> boxes;
    for (const auto& r : spec.regions) {
        out.annotation.regions.push_back({r.region_id, r.polygon});
        const geometry::Polygon one[] = {r.polygon};
        auto b = geometry::exact_bbox(one);
        b = {std::max(0.0, std::floor(b.x0)), std::max(0.0, std::floor(b.y0)), std::min(frame.x1, std::ceil(b.x1)),
             std::min(frame.y1, std::ceil(b.y1))};
        boxes.push_back(b);
        masks.push_back(geometry::rasterize_mask(r.polygon, b));
        const auto& m = masks.back();
        for (std::size_t y = 0; y < m.height; ++y)
            for (std::size_t x = 0; x < m.width; ++x)
                if (m.at(x, y))
                    out.image.at(static_cast<std::size_t>(b.x0) + x, static_cast<std::size_t>(b.y0) + y) =
                        spec.tissue_level;
    }

    std::mt19937_64 rng(spec.seed);
    for (std::size_t i = 0; i < spec.regions.size(); ++i) {
        const auto& r = spec.regions[i];
        const auto& b = boxes[i];
        const auto& m = masks[i];
        const double mean = r.dot_density * geometry::area(r.polygon);
        std::size_t count = 0;
        if (mean > 0.0) count = static_cast<std::size_t>(std::poisson_distribution<long long>(mean)(rng));
        out.dot_counts.push_back(count);
        std::uniform_real_distribution<double> ux(b.x0, b.x1);
        std::uniform_real_distribution<double> uy(b.y0, b.y1);
        const double rad = r.dot_radius;
        for (std::size_t k = 0; k < count; ++k) {
            geometry::Point c;
            do c = {ux(rng), uy(rng)};
            while (!geometry::contains(r.polygon, c));
            const long xa = std::max<long>(static_cast<long>(b.x0), static_cast<long>(std::floor(c.x - rad)));
            const long xb = std::min<long>(static_cast<long>(b.x1) - 1, static_cast<long>(std::ceil(c.x + rad)));
            const long ya = std::max<long>(static_cast<long>(b.y0), static_cast<long>(std::floor(c.y - rad)));
            const long yb = std::min<long>(static_cast<long>(b.y1) - 1, static_cast<long>(std::ceil(c.y + rad)));
            for (long y = ya; y <= yb; ++y)
                for (long x = xa; x <= xb; ++x) {
                    const double dx = x + 0.5 - c.x;
                    const double dy = y + 0.5 - c.y;
                    if (dx * dx + dy * dy > rad * rad) continue;
                    const auto mx = static_cast<std::size_t>(x - static_cast<long>(b.x0));
                    const auto my = static_cast<std::size_t>(y - static_cast<long>(b.y0));
                    if (m.at(mx, my)) out.image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = r.gray_level;
                }
        }
    }
    return out;
}

std::vector<double> feature_extract(const Image& patch, const FeatureParams& params) {
    std::vector<double> f(kFeatureDim, 0.0);
    if (patch.empty()) return f;
    const std::size_t w = patch.width;
    const std::size_t h = patch.height;
    std::vector<std::uint8_t> gray(w * h);
    for (std::size_t i = 0; i < w * h; ++i) {
        unsigned sum = 0;
        for (std::size_t c = 0; c < patch.channels; ++c) sum += patch.pixels[i * patch.channels + c];
        gray[i] = static_cast<std::uint8_t>(sum / patch.channels);
    }
    std::size_t non_padding = 0;
    for (std::uint8_t g : gray) {
        f[g * kHistogramBins / 256] += 1.0;
        if (g != 0) ++non_padding;
    }
    for (std::size_t b = 0; b < kHistogramBins; ++b) f[b] /= static_cast<double>(w * h);

    // 4-connected components of foreground pixels.
    std::vector<char> seen(w * h, 0);
    std::vector<std::size_t> stack;
    std::size_t blobs = 0;
    std::size_t blob_pixels = 0;
    auto fg = [&](std::size_t i) { return gray[i] != 0 && gray[i] < params.dark_threshold; };
    for (std::size_t i = 0; i < w * h; ++i) {
        if (seen[i] || !fg(i)) continue;
        ++blobs;
        seen[i] = 1;
        stack.push_back(i);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            ++blob_pixels;
            const std::size_t x = p % w;
            const std::size_t y = p / w;
            auto push = [&](std::size_t q) {
                if (!seen[q] && fg(q)) {
                    seen[q] = 1;
                    stack.push_back(q);
                }
            };
            if (x > 0) push(p - 1);
            if (x + 1 < w) push(p + 1);
            if (y > 0) push(p - w);
            if (y + 1 < h) push(p + w);
        }
    }
    if (blobs > 0 && non_padding > 0) {
        f[kHistogramBins] = static_cast<double>(blobs) / static_cast<double>(non_padding);
        f[kHistogramBins + 1] =
            std::sqrt(static_cast<double>(blob_pixels) / static_cast<double>(blobs) / std::numbers::pi);
    }
    return f;
}

std::vector<RegionTemplate> default_region_templates() {
    return {
        {"ca1", 0.0010, 1.5, 20},
        {"mediodorsal_nucleus", 0.0020, 2.0, 40},
        {"lateral_nucleus_amygdala", 0.0035, 2.5, 56},
        {"pontine_nuclei", 0.0050, 1.5, 72},
        {"principal_olive", 0.0070, 2.0, 88},
        {"sc_superficial", 0.0095, 2.5, 104},
        {"external_granular_layer", 0.0125, 1.5, 120},
        {"caudate", 0.0160, 2.0, 136},
    };
}

std::vector<SynthSpec> make_grid_suite(const GridSuiteParams& params) {
    if (params.regions.size() > params.cols * params.rows)
        fail(ErrorKind::InvalidArgument, "more region templates than grid cells");
    const double radius = params.cell / 2.0 - params.margin - params.jitter;
    if (!(radius > 0.0)) fail(ErrorKind::InvalidArgument, "grid cell too small for margin and jitter");
    std::vector<SynthSpec> specs;
    std::mt19937_64 rng(params.seed);
    std::uniform_real_distribution<double> jit(-params.jitter, params.jitter);
    for (std::size_t s = 0; s < params.sections; ++s) {
        SynthSpec spec;
        char id[32];
        std::snprintf(id, sizeof id, "section_%03zu", s + 1);
        spec.section_id = id;
        spec.width = static_cast<std::size_t>(params.cell * static_cast<double>(params.cols));
        spec.height = static_cast<std::size_t>(params.cell * static_cast<double>(params.rows));
        spec.resolution_um_per_px = params.resolution_um_per_px;
        spec.seed = rng();
        std::vector<std::size_t> cells(params.cols * params.rows);
        for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
        std::shuffle(cells.begin(), cells.end(), rng);
        for (std::size_t r = 0; r < params.regions.size(); ++r) {
            const auto& t = params.regions[r];
            const double cx = (static_cast<double>(cells[r] % params.cols) + 0.5) * params.cell + jit(rng);
            const double cy = (static_cast<double>(cells[r] / params.cols) + 0.5) * params.cell + jit(rng);
            spec.regions.push_back({t.region_id, star_polygon(rng, cx, cy, radius), t.dot_density, t.dot_radius, t.gray_level});
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

SynthSpec make_rectilinear_spec(const std::string& section_id, std::size_t width, std::size_t height,
                                const std::vector<std::string>& region_ids, std::uint64_t seed,
                                double resolution_um_per_px) {
    if (region_ids.empty()) fail(ErrorKind::InvalidArgument, "no region ids");
    struct Rect {
        long x0, y0, x1, y1;
    };
    std::mt19937_64 rng(seed);
    std::vector<Rect> rects{{0, 0, static_cast<long>(width), static_cast<long>(height)}};
    const std::size_t target = 6 + rng() % 10;
    constexpr long kMinSide = 40;
    while (rects.size() < target) {
        auto it = std::max_element(rects.begin(), rects.end(), [](const Rect& a, const Rect& b) {
            return (a.x1 - a.x0) * (a.y1 - a.y0) < (b.x1 - b.x0) * (b.y1 - b.y0);
        });
        Rect r = *it;
        const bool vertical = (r.x1 - r.x0) >= (r.y1 - r.y0);
        const long lo = (vertical ? r.x0 : r.y0) + kMinSide;
        const long hi = (vertical ? r.x1 : r.y1) - kMinSide;
        if (hi <= lo) break;
        const long cut = lo + static_cast<long>(rng() % static_cast<std::uint64_t>(hi - lo));
        Rect a = r, b = r;
        if (vertical) a.x1 = b.x0 = cut;
        else a.y1 = b.y0 = cut;
        *it = a;
        rects.push_back(b);
    }

    SynthSpec spec;
    spec.section_id = section_id;
    spec.width = width;
    spec.height = height;
    spec.resolution_um_per_px = resolution_um_per_px;
    spec.seed = seed;
    for (const auto& r : rects) {
        if (rng() % 7 == 0) continue;  // background
        const auto& id = region_ids[rng() % region_ids.size()];
        const double x0 = static_cast<double>(r.x0), y0 = static_cast<double>(r.y0);
        const double x1 = static_cast<double>(r.x1), y1 = static_cast<double>(r.y1);
        geometry::Ring ring;
        if (rng() % 2 == 0) {
            ring = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
        } else {
            // L-shape: notch out the top-right corner
            const double nx = x0 + static_cast<double>(1 + rng() % static_cast<std::uint64_t>(r.x1 - r.x0 - 1));
            const double ny = y0 + static_cast<double>(1 + rng() % static_cast<std::uint64_t>(r.y1 - r.y0 - 1));
            ring = {{x0, y0}, {nx, y0}, {nx, ny}, {x1, ny}, {x1, y1}, {x0, y1}};
        }
        spec.regions.push_back({id, geometry::Polygon(std::move(ring)), 0.0, 0.0, 0});
    }
    return spec;
}

} // namespace cytoclip::synth
