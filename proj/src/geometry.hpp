#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cytoclip::geometry {

struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

using Ring = std::vector<Point>;

// Simple polygon with optional holes, in pixel units. Construction validates:
// each ring has >= 3 distinct vertices, no self-intersections, positive area,
// and holes lie inside the exterior. A repeated closing vertex is dropped.
class Polygon {
public:
    explicit Polygon(Ring exterior, std::vector<Ring> holes = {});

    const Ring& exterior() const noexcept { return exterior_; }
    const std::vector<Ring>& holes() const noexcept { return holes_; }

private:
    Ring exterior_;
    std::vector<Ring> holes_;
};

struct BBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    double width() const noexcept { return x1 - x0; }
    double height() const noexcept { return y1 - y0; }
    double area() const noexcept { return width() * height(); }
    bool contains(const BBox& o) const noexcept {
        return o.x0 >= x0 && o.y0 >= y0 && o.x1 <= x1 && o.y1 <= y1;
    }
    friend bool operator==(const BBox&, const BBox&) = default;
};

struct SizeFilter {
    double min_area = 0.0;                  // px^2
    double min_area_perimeter_ratio = 0.0;  // px
};

struct SquareBox {
    BBox box;
    bool square = true;  // false when the section is smaller than the side in some dimension
};

struct Mask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> bits;  // row-major, 0 or 1

    std::uint8_t at(std::size_t col, std::size_t row) const { return bits[row * width + col]; }
    std::size_t count() const;
};

double signed_ring_area(const Ring& ring);
double area(const Polygon& polygon);
double perimeter(const Polygon& polygon);
bool passes_size_filter(const Polygon& polygon, const SizeFilter& filter);

double point_segment_distance(Point p, Point a, Point b);
double segment_distance(Point a0, Point a1, Point b0, Point b1);
bool segments_intersect(Point a0, Point a1, Point b0, Point b1);

// Even-odd rule over all rings (holes included).
bool contains(const Polygon& polygon, Point p);

double min_distance(const Polygon& a, const Polygon& b);

// Connected components of the graph whose edges join polygons with
// min_distance <= threshold, found by depth-first search. Groups are ordered by
// their smallest member; members ascend.
std::vector<std::vector<std::size_t>> proximity_groups(std::span<const Polygon> polygons,
                                                       double threshold);

BBox exact_bbox(std::span<const Polygon> polygons);

SquareBox square_bbox(const BBox& bbox, double section_width, double section_height, double min_dim);

// Pixel grid starting at (floor(x0), floor(y0)); a pixel is set iff its centre is inside.
Mask rasterize_mask(const Polygon& polygon, const BBox& bbox);

// Area of polygon ∩ axis-aligned rectangle (exact, Sutherland-Hodgman per ring).
double clipped_area(const Polygon& polygon, const BBox& rect);

double overlap_fraction(const BBox& tile, const Polygon& polygon);

} // namespace cytoclip::geometry
