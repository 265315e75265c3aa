#include "error.hpp"
#include "image.hpp"
#include "nomenclature.hpp"
#include "oracles.hpp"
#include "region_extractor.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <numeric>

using namespace cytoclip;
using geometry::BBox;
using geometry::Polygon;

namespace {

Polygon rect(double x0, double y0, double x1, double y1) { return Polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}); }

struct Demo {
    nomenclature::NomenclatureTree tree = nomenclature::load_nomenclature(testutil::kDataDir + "/taxonomy_demo.json");
    nomenclature::MergePolicy policy = nomenclature::load_policy(testutil::kDataDir + "/policy_default.json");
};

AnnotatedSection section_with(std::vector<LabeledPolygon> regions, std::size_t w = 600, std::size_t h = 600) {
    AnnotatedSection s;
    s.section_id = "s1";
    s.resolution_um_per_px = 16.0;
    s.width = w;
    s.height = h;
    s.regions = std::move(regions);
    return s;
}

Image gradient_image(std::size_t w, std::size_t h) {
    Image img(w, h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) img.at(x, y) = static_cast<std::uint8_t>(1 + (x * 7 + y * 13) % 250);
    return img;
}

} // namespace

TEST_CASE("pad_to_square") {
    const Image same = gradient_image(224, 224);
    CHECK(regions::pad_to_square(same, 224) == same);

    const Image narrow = gradient_image(100, 224);
    const Image padded = regions::pad_to_square(narrow, 224);
    CHECK(padded.width == 224);
    CHECK(padded.height == 224);
    for (std::size_t y = 0; y < 224; ++y) {
        for (std::size_t x = 0; x < 62; ++x) CHECK(padded.at(x, y) == 0);
        for (std::size_t x = 162; x < 224; ++x) CHECK(padded.at(x, y) == 0);
        for (std::size_t x = 0; x < 100; ++x) CHECK(padded.at(62 + x, y) == narrow.at(x, y));
    }
    // pixel mass preserved without downscale
    const auto mass = [](const Image& i) { return std::accumulate(i.pixels.begin(), i.pixels.end(), 0ull); };
    CHECK(mass(padded) == mass(narrow));

    const Image wide = gradient_image(448, 224);
    const Image down = regions::pad_to_square(wide, 224);
    const Image expected_core = resize_bicubic(wide, 224, 112);
    CHECK(down.width == 224);
    for (std::size_t y = 0; y < 224; ++y)
        for (std::size_t x = 0; x < 224; ++x) {
            if (y < 56 || y >= 168) CHECK(down.at(x, y) == 0);
            else CHECK(down.at(x, y) == expected_core.at(x, y - 56));
        }
    CHECK_THROWS_AS(regions::pad_to_square(Image(), 224), Error);
}

TEST_CASE("bicubic resize") {
    // identity size keeps pixels; constant images stay constant
    const Image g = gradient_image(17, 9);
    CHECK(resize_bicubic(g, 17, 9) == g);
    const Image flat(40, 30, 1, 77);
    const Image r = resize_bicubic(flat, 13, 50);
    for (auto v : r.pixels) CHECK(v == 77);

    // Catmull-Rom weights at the half-pixel phase of a 2x upscale of a step
    Image step(4, 1);
    step.pixels = {0, 0, 200, 200};
    const Image up = resize_bicubic(step, 8, 1);
    CHECK(up.width == 8);
    CHECK(up.at(0, 0) == 0);
    CHECK(up.at(7, 0) == 200);
    // monotone across the edge for this symmetric step
    for (std::size_t x = 2; x + 1 < 6; ++x) CHECK(up.at(x, 0) <= up.at(x + 1, 0));
}

TEST_CASE("PNM round trip") {
    testutil::TempDir dir("pnm");
    const Image g = gradient_image(31, 7);
    write_pnm(dir / "a.pgm", g);
    CHECK(read_pnm(dir / "a.pgm") == g);
    Image rgb(5, 4, 3);
    for (std::size_t i = 0; i < rgb.pixels.size(); ++i) rgb.pixels[i] = static_cast<std::uint8_t>(i * 3);
    write_pnm(dir / "b.ppm", rgb);
    CHECK(read_pnm(dir / "b.ppm") == rgb);
    std::vector<std::uint16_t> ids{0, 1, 300, 65535, 7, 9};
    write_pgm16(dir / "c.pgm", 3, 2, ids);
    std::size_t w = 0, h = 0;
    CHECK(read_pgm16(dir / "c.pgm", w, h) == ids);
    CHECK(w == 3);
    CHECK(h == 2);
    CHECK_THROWS_AS(read_pnm(dir / "missing.pgm"), Error);
}

TEST_CASE("one blob passing filters gives four records without parts") {
    Demo d;
    const auto s = section_with({{"ca1", rect(100, 100, 180, 160)}});
    const auto recs = regions::plan_region_images(s, d.tree, d.policy, {});
    REQUIRE(recs.size() == 4);
    CHECK(recs[0].crop_kind == regions::CropKind::ExactBBox);
    CHECK(recs[1].crop_kind == regions::CropKind::ExactBBoxMasked);
    CHECK(recs[1].mask_path.has_value());
    CHECK(recs[2].crop_kind == regions::CropKind::SquareBBox);
    CHECK(recs[2].square_min_dim == 336);
    CHECK(recs[3].square_min_dim == 224);
    for (const auto& r : recs) {
        CHECK(r.label == "Hippocampus");
        CHECK_FALSE(r.part.has_value());
        CHECK(r.multi_labels.front() == "Hippocampus");
    }
    CHECK(recs[0].bbox == BBox{100, 100, 180, 160});
    CHECK(recs[2].bbox.width() == 336);
    CHECK(recs[3].bbox.height() == 224);
}

TEST_CASE("distant groups get part numbers, slivers and excluded regions are dropped") {
    Demo d;
    const auto s = section_with({
        {"ca1", rect(10, 10, 60, 60)},
        {"ca3", rect(400, 400, 460, 450)},        // same label, far away
        {"caudate", rect(200, 10, 1200 / 6.0 + 800, 12)},  // 1000x2 sliver
        {"lateral_ventricle", rect(300, 100, 380, 180)},
    }, 1200, 600);
    regions::ExtractionParams p;
    p.crops.square = false;
    const auto recs = regions::plan_region_images(s, d.tree, d.policy, p);
    REQUIRE(recs.size() == 4);
    for (const auto& r : recs) CHECK(r.label == "Hippocampus");
    CHECK(recs[0].part == 1);
    CHECK(recs[2].part == 2);
    CHECK(regions::primary_caption(recs[2]) == "Hippocampus part 2");
}

TEST_CASE("close groups merge into one record set") {
    Demo d;
    const auto s = section_with({{"ca1", rect(10, 10, 60, 60)}, {"ca3", rect(75, 10, 125, 60)}});
    regions::ExtractionParams p;
    p.crops.square = false;
    p.crops.exact_masked = false;
    const auto recs = regions::plan_region_images(s, d.tree, d.policy, p);
    REQUIRE(recs.size() == 1);
    CHECK_FALSE(recs[0].part.has_value());
    CHECK(recs[0].bbox == BBox{10, 10, 125, 60});
}

TEST_CASE("resolution mismatch is rejected") {
    Demo d;
    auto s = section_with({{"ca1", rect(10, 10, 60, 60)}});
    s.resolution_um_per_px = 2.0;
    CHECK_THROWS_AS(regions::plan_region_images(s, d.tree, d.policy, {}), Error);
}

TEST_CASE("multi-region labels: strict threshold and ordering") {
    const BBox crop{0, 0, 100, 100};
    std::vector<regions::LabeledPolygons> all{
        {"A", {rect(10, 10, 20, 20)}},      // 1.00
        {"B", {rect(92, 0, 102, 10)}},      // 0.80 exactly -> excluded
        {"C", {rect(5, 50, 15, 60)}},       // 1.00, ties with A -> by name after A
        {"D", {rect(91, 50, 101, 60)}},     // 0.90
        {"E", {rect(50, 95, 60, 105)}},     // 0.50
        {"P", {rect(40, 40, 60, 60)}},      // primary
    };
    CHECK(regions::assign_multi_region_labels("P", crop, all, 0.80) ==
          std::vector<std::string>{"P", "A", "C", "D"});
    // neighbour 79% inside -> excluded
    std::vector<regions::LabeledPolygons> n79{{"N", {rect(0, 0, 100, 10)}}};
    CHECK(regions::assign_multi_region_labels("P", {0, 0, 79, 100}, n79, 0.80) == std::vector<std::string>{"P"});
    // multi-part neighbour: inclusion over its full merged extent
    std::vector<regions::LabeledPolygons> parts{{"M", {rect(10, 10, 20, 20), rect(500, 500, 510, 510)}}};
    CHECK(regions::assign_multi_region_labels("P", crop, parts, 0.40) == std::vector<std::string>{"P", "M"});
    CHECK(regions::assign_multi_region_labels("P", crop, parts, 0.50) == std::vector<std::string>{"P"});
}

TEST_CASE("multi-region labels agree with a pixel-count inclusion oracle") {
    oracle::Rng rng(21);
    for (int i = 0; i < 30; ++i) {
        std::vector<regions::LabeledPolygons> all;
        for (int k = 0; k < 4; ++k) {
            const double x = std::floor(rng.uni(0, 150)), y = std::floor(rng.uni(0, 150));
            all.push_back({std::string(1, static_cast<char>('A' + k)),
                           {rect(x, y, x + std::floor(rng.uni(5, 40)), y + std::floor(rng.uni(5, 40)))}});
        }
        const BBox crop{20, 20, 140, 140};
        const auto got = regions::assign_multi_region_labels("Z", crop, all, 0.8);
        std::vector<std::pair<double, std::string>> want;
        for (const auto& lp : all) {
            const auto& p = lp.polygons[0];
            std::size_t in = 0, total = 0;
            for (double y = 0.5; y < 200; y += 1)
                for (double x = 0.5; x < 200; x += 1)
                    if (oracle::ray_cast(p, x, y)) {
                        ++total;
                        if (x > crop.x0 && x < crop.x1 && y > crop.y0 && y < crop.y1) ++in;
                    }
            const double inc = static_cast<double>(in) / static_cast<double>(total);
            if (inc > 0.8) want.emplace_back(-inc, lp.label);
        }
        std::sort(want.begin(), want.end());
        std::vector<std::string> expected{"Z"};
        for (const auto& w : want) expected.push_back(w.second);
        CHECK(got == expected);
    }
}

TEST_CASE("extract writes crops and masks consistent with the polygons") {
    Demo d;
    testutil::TempDir dir("extract");
    const Image img = gradient_image(400, 300);
    write_pnm(dir / "sec.pgm", img);
    auto s = section_with({{"ca1", Polygon({{50, 40}, {170, 60}, {120, 150}})}, {"caudate", rect(220, 100, 330, 200)}},
                          400, 300);
    s.image_path = dir / "sec.pgm";
    const auto out = dir / "out";
    const auto recs = regions::extract_region_images(s, d.tree, d.policy, {}, out);
    REQUIRE(recs.size() == 8);
    for (const auto& r : recs) {
        const Image crop = read_pnm(out / r.image_path);
        CHECK(crop.width == static_cast<std::size_t>(r.bbox.width()));
        CHECK(crop.height == static_cast<std::size_t>(r.bbox.height()));
        if (r.crop_kind == regions::CropKind::ExactBBox)
            CHECK(crop == cytoclip::crop(img, static_cast<long>(r.bbox.x0), static_cast<long>(r.bbox.y0), crop.width,
                                         crop.height));
        if (r.crop_kind != regions::CropKind::ExactBBoxMasked) continue;
        const Image mask = read_pnm(out / *r.mask_path);
        const auto& poly = r.label == "Hippocampus" ? s.regions[0].polygon : s.regions[1].polygon;
        for (std::size_t y = 0; y < crop.height; ++y)
            for (std::size_t x = 0; x < crop.width; ++x) {
                const bool inside = oracle::ray_cast(poly, r.bbox.x0 + x + 0.5, r.bbox.y0 + y + 0.5);
                CHECK((mask.at(x, y) == 255) == inside);
                if (!inside) CHECK(crop.at(x, y) == 0);
                else CHECK(crop.at(x, y) == img.at(static_cast<std::size_t>(r.bbox.x0) + x,
                                                   static_cast<std::size_t>(r.bbox.y0) + y));
            }
    }

    s.width = 401;
    CHECK_THROWS_AS(regions::extract_region_images(s, d.tree, d.policy, {}, out), Error);
    s.width = 400;
    s.image_path = dir / "nope.pgm";
    CHECK_THROWS_AS(regions::extract_region_images(s, d.tree, d.policy, {}, out), Error);
}
