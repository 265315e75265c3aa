#include "geometry.hpp"

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace cytoclip::geometry {

namespace {

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

int sign(double v) { return (v > 0.0) - (v < 0.0); }

bool on_segment(Point p, Point a, Point b) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

Ring normalize_ring(Ring ring) {
    if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
    return ring;
}

bool ring_is_simple(const Ring& ring) {
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point a0 = ring[i];
        const Point a1 = ring[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            const Point b0 = ring[j];
            const Point b1 = ring[(j + 1) % n];
            if (adjacent) {
                // Adjacent edges may only share their common vertex; a fold-back
                // (collinear overlap) is a self-intersection.
                const Point shared = (j == i + 1) ? a1 : a0;
                const Point other_a = (j == i + 1) ? a0 : a1;
                const Point other_b = (j == i + 1) ? b1 : b0;
                if (cross(shared, other_a, other_b) == 0.0) {
                    const double dot = (other_a.x - shared.x) * (other_b.x - shared.x) +
                                       (other_a.y - shared.y) * (other_b.y - shared.y);
                    if (dot > 0.0 && n > 3) return false;
                }
                continue;
            }
            if (segments_intersect(a0, a1, b0, b1)) return false;
        }
    }
    return true;
}

void validate_ring(const Ring& ring, const char* what) {
    if (ring.size() < 3) fail(ErrorKind::Domain, std::string("invalid ") + what + ": fewer than 3 vertices");
    for (const auto& p : ring) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            fail(ErrorKind::Domain, std::string("invalid ") + what + ": non-finite vertex");
    }
    if (signed_ring_area(ring) == 0.0) fail(ErrorKind::Domain, std::string("invalid ") + what + ": zero area");
    if (!ring_is_simple(ring)) fail(ErrorKind::Domain, std::string("invalid ") + what + ": self-intersecting");
}

bool ring_contains(const Ring& ring, Point p) {
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point a = ring[i];
        const Point b = ring[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

double ring_distance(const Ring& a, const Ring& b) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Point a0 = a[i];
        const Point a1 = a[(i + 1) % a.size()];
        for (std::size_t j = 0; j < b.size(); ++j) {
            best = std::min(best, segment_distance(a0, a1, b[j], b[(j + 1) % b.size()]));
            if (best == 0.0) return 0.0;
        }
    }
    return best;
}

Ring clip_ring(const Ring& ring, const BBox& r) {
    Ring out = ring;
    auto clip_edge = [&out](auto inside, auto intersect) {
        if (out.empty()) return;
        Ring in = std::move(out);
        out.clear();
        Point prev = in.back();
        bool prev_in = inside(prev);
        for (const Point cur : in) {
            const bool cur_in = inside(cur);
            if (cur_in) {
                if (!prev_in) out.push_back(intersect(prev, cur));
                out.push_back(cur);
            } else if (prev_in) {
                out.push_back(intersect(prev, cur));
            }
            prev = cur;
            prev_in = cur_in;
        }
    };
    auto at_x = [](Point a, Point b, double x) {
        const double t = (x - a.x) / (b.x - a.x);
        return Point{x, a.y + t * (b.y - a.y)};
    };
    auto at_y = [](Point a, Point b, double y) {
        const double t = (y - a.y) / (b.y - a.y);
        return Point{a.x + t * (b.x - a.x), y};
    };
    clip_edge([&](Point p) { return p.x >= r.x0; }, [&](Point a, Point b) { return at_x(a, b, r.x0); });
    clip_edge([&](Point p) { return p.x <= r.x1; }, [&](Point a, Point b) { return at_x(a, b, r.x1); });
    clip_edge([&](Point p) { return p.y >= r.y0; }, [&](Point a, Point b) { return at_y(a, b, r.y0); });
    clip_edge([&](Point p) { return p.y <= r.y1; }, [&](Point a, Point b) { return at_y(a, b, r.y1); });
    return out;
}

} // namespace

Polygon::Polygon(Ring exterior, std::vector<Ring> holes) : exterior_(normalize_ring(std::move(exterior))) {
    validate_ring(exterior_, "exterior ring");
    holes_.reserve(holes.size());
    for (auto& h : holes) {
        Ring hole = normalize_ring(std::move(h));
        validate_ring(hole, "hole ring");
        for (const auto& p : hole) {
            if (!ring_contains(exterior_, p)) {
                // Vertices on the exterior boundary are tolerated.
                bool on_boundary = false;
                for (std::size_t i = 0; i < exterior_.size() && !on_boundary; ++i)
                    on_boundary = point_segment_distance(p, exterior_[i], exterior_[(i + 1) % exterior_.size()]) == 0.0;
                if (!on_boundary) fail(ErrorKind::Domain, "invalid hole ring: vertex outside exterior");
            }
        }
        holes_.push_back(std::move(hole));
    }
}

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

double signed_ring_area(const Ring& ring) {
    double twice = 0.0;
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point a = ring[i];
        const Point b = ring[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    return 0.5 * twice;
}

double area(const Polygon& polygon) {
    double a = std::abs(signed_ring_area(polygon.exterior()));
    for (const auto& h : polygon.holes()) a -= std::abs(signed_ring_area(h));
    return std::max(a, 0.0);
}

double perimeter(const Polygon& polygon) {
    const Ring& r = polygon.exterior();
    double p = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const Point a = r[i];
        const Point b = r[(i + 1) % r.size()];
        p += std::hypot(b.x - a.x, b.y - a.y);
    }
    return p;
}

bool passes_size_filter(const Polygon& polygon, const SizeFilter& filter) {
    const double a = area(polygon);
    const double p = perimeter(polygon);
    if (p <= 0.0) return false;
    return a >= filter.min_area && a / p >= filter.min_area_perimeter_ratio;
}

double point_segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

bool segments_intersect(Point a0, Point a1, Point b0, Point b1) {
    const int d1 = sign(cross(b0, b1, a0));
    const int d2 = sign(cross(b0, b1, a1));
    const int d3 = sign(cross(a0, a1, b0));
    const int d4 = sign(cross(a0, a1, b1));
    if (d1 * d2 < 0 && d3 * d4 < 0) return true;
    if (d1 == 0 && on_segment(a0, b0, b1)) return true;
    if (d2 == 0 && on_segment(a1, b0, b1)) return true;
    if (d3 == 0 && on_segment(b0, a0, a1)) return true;
    if (d4 == 0 && on_segment(b1, a0, a1)) return true;
    return false;
}

double segment_distance(Point a0, Point a1, Point b0, Point b1) {
    if (segments_intersect(a0, a1, b0, b1)) return 0.0;
    return std::min({point_segment_distance(a0, b0, b1), point_segment_distance(a1, b0, b1),
                     point_segment_distance(b0, a0, a1), point_segment_distance(b1, a0, a1)});
}

bool contains(const Polygon& polygon, Point p) {
    bool inside = ring_contains(polygon.exterior(), p);
    for (const auto& h : polygon.holes())
        if (ring_contains(h, p)) inside = !inside;
    return inside;
}

double min_distance(const Polygon& a, const Polygon& b) {
    if (contains(b, a.exterior().front()) || contains(a, b.exterior().front())) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    auto visit = [&](const Ring& ra) {
        best = std::min(best, ring_distance(ra, b.exterior()));
        for (const auto& hb : b.holes()) best = std::min(best, ring_distance(ra, hb));
    };
    visit(a.exterior());
    for (const auto& ha : a.holes()) visit(ha);
    return best;
}

std::vector<std::vector<std::size_t>> proximity_groups(std::span<const Polygon> polygons, double threshold) {
    if (!(threshold >= 0.0)) fail(ErrorKind::InvalidArgument, "proximity threshold must be >= 0");
    const std::size_t n = polygons.size();
    // Pairwise distances once; the DFS then walks the thresholded graph.
    std::vector<char> near(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool close = std::isinf(threshold) || min_distance(polygons[i], polygons[j]) <= threshold;
            near[i * n + j] = near[j * n + i] = close;
        }
    }
    std::vector<char> seen(n, 0);
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t start = 0; start < n; ++start) {
        if (seen[start]) continue;
        std::vector<std::size_t> group;
        std::vector<std::size_t> stack{start};
        seen[start] = 1;
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            group.push_back(cur);
            for (std::size_t k = 0; k < n; ++k) {
                if (!seen[k] && near[cur * n + k]) {
                    seen[k] = 1;
                    stack.push_back(k);
                }
            }
        }
        std::sort(group.begin(), group.end());
        groups.push_back(std::move(group));
    }
    return groups;
}

BBox exact_bbox(std::span<const Polygon> polygons) {
    if (polygons.empty()) fail(ErrorKind::InvalidArgument, "exact_bbox of empty polygon set");
    BBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& poly : polygons) {
        for (const auto& p : poly.exterior()) {
            b.x0 = std::min(b.x0, p.x);
            b.y0 = std::min(b.y0, p.y);
            b.x1 = std::max(b.x1, p.x);
            b.y1 = std::max(b.y1, p.y);
        }
    }
    return b;
}

SquareBox square_bbox(const BBox& bbox, double section_width, double section_height, double min_dim) {
    if (!(min_dim > 0.0)) fail(ErrorKind::InvalidArgument, "square_bbox: min_dim must be > 0");
    const double side = std::max({bbox.width(), bbox.height(), min_dim});
    SquareBox out;
    auto place = [&](double lo, double hi, double extent, double& a, double& b) {
        const double c = 0.5 * (lo + hi);
        a = c - 0.5 * side;
        b = a + side;
        if (side > extent) {
            a = 0.0;
            b = extent;
            out.square = false;
        } else if (a < 0.0) {
            b -= a;
            a = 0.0;
        } else if (b > extent) {
            a -= b - extent;
            b = extent;
        }
    };
    place(bbox.x0, bbox.x1, section_width, out.box.x0, out.box.x1);
    place(bbox.y0, bbox.y1, section_height, out.box.y0, out.box.y1);
    return out;
}

Mask rasterize_mask(const Polygon& polygon, const BBox& bbox) {
    const double gx0 = std::floor(bbox.x0);
    const double gy0 = std::floor(bbox.y0);
    Mask mask;
    mask.width = static_cast<std::size_t>(std::max(0.0, std::ceil(bbox.x1) - gx0));
    mask.height = static_cast<std::size_t>(std::max(0.0, std::ceil(bbox.y1) - gy0));
    mask.bits.assign(mask.width * mask.height, 0);

    std::vector<const Ring*> rings{&polygon.exterior()};
    for (const auto& h : polygon.holes()) rings.push_back(&h);

    std::vector<double> xs;
    for (std::size_t row = 0; row < mask.height; ++row) {
        const double py = gy0 + static_cast<double>(row) + 0.5;
        xs.clear();
        for (const Ring* ring : rings) {
            const std::size_t n = ring->size();
            for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
                const Point a = (*ring)[i];
                const Point b = (*ring)[j];
                if ((a.y > py) != (b.y > py)) xs.push_back((b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x);
            }
        }
        std::sort(xs.begin(), xs.end());
        // Pixel is inside iff an odd number of crossings lie strictly to its right.
        std::size_t k = 0;
        for (std::size_t col = 0; col < mask.width; ++col) {
            const double px = gx0 + static_cast<double>(col) + 0.5;
            while (k < xs.size() && xs[k] <= px) ++k;
            mask.bits[row * mask.width + col] = static_cast<std::uint8_t>((xs.size() - k) % 2);
        }
    }
    return mask;
}

double clipped_area(const Polygon& polygon, const BBox& rect) {
    double a = std::abs(signed_ring_area(clip_ring(polygon.exterior(), rect)));
    for (const auto& h : polygon.holes()) a -= std::abs(signed_ring_area(clip_ring(h, rect)));
    return std::max(a, 0.0);
}

double overlap_fraction(const BBox& tile, const Polygon& polygon) {
    const double tile_area = tile.area();
    if (!(tile_area > 0.0)) fail(ErrorKind::InvalidArgument, "overlap_fraction: degenerate tile");
    return std::clamp(clipped_area(polygon, tile) / tile_area, 0.0, 1.0);
}

} // namespace cytoclip::geometry
