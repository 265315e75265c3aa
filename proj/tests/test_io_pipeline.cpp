#include "annotation.hpp"
#include "error.hpp"
#include "json_util.hpp"
#include "manifest.hpp"
#include "pipeline.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <json.hpp>

using namespace cytoclip;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

pipeline::Config small_config() {
    auto c = pipeline::default_config();
    c.taxonomy = testutil::kDataDir + "/taxonomy_demo.json";
    c.policy = testutil::kDataDir + "/policy_default.json";
    c.synth.grid.sections = 3;
    c.train.epochs = 3;
    return c;
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::InvalidArgument;
}

} // namespace

TEST_CASE("annotation round trip") {
    testutil::TempDir dir("ann");
    AnnotatedSection s;
    s.section_id = "sec_01";
    s.resolution_um_per_px = 16;
    s.width = 40;
    s.height = 30;
    s.regions.push_back({"ca1", geometry::Polygon({{1, 1}, {10, 1}, {10, 9}}, {})});
    s.regions.push_back(
        {"caudate", geometry::Polygon({{12, 2}, {30, 2}, {30, 20}, {12, 20}}, {{{15, 5}, {20, 5}, {20, 10}, {15, 10}}})});
    save_annotation(dir / "sec_01.geojson", s, "sec_01.pgm");
    const auto back = load_annotation(dir / "sec_01.geojson");
    CHECK(back.section_id == "sec_01");
    CHECK(back.width == 40);
    CHECK(back.image_path == dir / "sec_01.pgm");
    REQUIRE(back.regions.size() == 2);
    CHECK(back.regions[1].region_id == "caudate");
    CHECK(geometry::area(back.regions[1].polygon) == doctest::Approx(18 * 18 - 25));
    CHECK(list_annotations(dir.path()) == std::vector<fs::path>{dir / "sec_01.geojson"});

    json bad = annotation_to_json(s, "x.pgm");
    bad["properties"].erase("width");
    CHECK(kind_of([&] { parse_annotation(bad, dir.path()); }) == ErrorKind::Parse);
}

TEST_CASE("manifest round trip") {
    testutil::TempDir dir("man");
    regions::RegionImageRecord r;
    r.section_id = "s";
    r.label = "Pons";
    r.part = 2;
    r.crop_kind = regions::CropKind::SquareBBox;
    r.square_min_dim = 224;
    r.bbox = {1, 2, 225, 226};
    r.multi_labels = {"Pons", "Medulla"};
    r.resolution_um_per_px = 16;
    r.image_path = "s/pons_part2_square224.pgm";
    manifest::save_records(dir / "r.jsonl", std::vector{r});
    const auto rs = std::get<0>(manifest::load_records(dir / "r.jsonl"));
    REQUIRE(rs.size() == 1);
    CHECK(rs[0].part == 2);
    CHECK(rs[0].multi_labels == r.multi_labels);
    CHECK(rs[0].bbox == r.bbox);
    CHECK(rs[0].crop_kind == regions::CropKind::SquareBBox);

    tiles::TileRecord t;
    t.section_id = "s";
    t.grid_x = 3;
    t.grid_y = 1;
    t.bbox = {672, 224, 896, 448};
    t.label = "CA1";
    t.overlap = 0.625;
    t.image_path = "../s.pgm";
    manifest::save_records(dir / "t.jsonl", std::vector{t});
    const auto ts = std::get<1>(manifest::load_records(dir / "t.jsonl"));
    REQUIRE(ts.size() == 1);
    CHECK(ts[0].overlap == 0.625);
    CHECK(ts[0].is_virtual);

    // a record whose multi-label list does not lead with its label is malformed
    json j = manifest::to_json(r);
    j["multi_labels"] = {"Medulla"};
    CHECK_THROWS_AS(manifest::region_from_json(j), Error);
}

TEST_CASE("config parsing") {
    const auto base = pipeline::default_config();
    CHECK(base.region.crops.multi_label_threshold == 0.80);
    CHECK(base.tile.min_overlap == 0.40);
    CHECK(base.val_fraction == 0.2);
    CHECK(base.train.epochs == 50);
    CHECK(base.train.batch_size == 64);
    CHECK(base.train.optimizer.lr == 5e-5);

    const auto c = pipeline::parse_config(json{{"seed", 9}, {"tile", {{"min_overlap", 0.5}}}}, "/tmp");
    CHECK(c.seed == 9);
    CHECK(c.tile.min_overlap == 0.5);
    // round trip through JSON
    const auto again = pipeline::parse_config(pipeline::config_to_json(c), "/");
    CHECK(pipeline::config_to_json(again) == pipeline::config_to_json(c));

    CHECK(kind_of([] { pipeline::parse_config(json{{"sede", 1}}, "/"); }) == ErrorKind::Parse);
    CHECK(kind_of([] { pipeline::parse_config(json{{"tile", {{"size", 0}}}}, "/"); }) != ErrorKind::Io);
    CHECK_THROWS_AS(pipeline::parse_config(json{{"split", {{"val_fraction", 1.5}}}}, "/"), Error);
    CHECK_THROWS_AS(pipeline::load_config("/nonexistent/cfg.json"), Error);
}

TEST_CASE("pipeline stages are byte-reproducible and independent of jobs") {
    testutil::TempDir dir("pipe");
    auto cfg = small_config();
    CHECK(pipeline::run_synth(cfg, dir / "sections") == 3);
    CHECK(pipeline::run_prep_regions(cfg, dir / "sections", dir / "r1") > 0);
    cfg.jobs = 4;
    pipeline::run_prep_regions(cfg, dir / "sections", dir / "r4");
    CHECK(testutil::slurp(dir / "r1/manifest.jsonl") == testutil::slurp(dir / "r4/manifest.jsonl"));
    for (const auto& e : fs::recursive_directory_iterator(dir / "r1"))
        if (e.is_regular_file()) CHECK(testutil::slurp(e.path()) == testutil::slurp(dir / "r4" / fs::relative(e.path(), dir / "r1")));

    cfg.jobs = 1;
    pipeline::run_split(cfg, dir / "r1/manifest.jsonl", dir / "s1");
    pipeline::run_split(cfg, dir / "r1/manifest.jsonl", dir / "s2");
    for (const char* f : {"train.jsonl", "val.jsonl", "split_report.txt"})
        CHECK(testutil::slurp(dir / "s1" / f) == testutil::slurp(dir / "s2" / f));
    CHECK_FALSE(fs::exists(dir / "s1" / pipeline::kIncompleteMarker));

    const auto t1 = pipeline::run_train(cfg, dir / "s1/train.jsonl", dir / "m1");
    const auto t2 = pipeline::run_train(cfg, dir / "s1/train.jsonl", dir / "m2");
    CHECK(t1.epoch_loss == t2.epoch_loss);
    CHECK(testutil::slurp(dir / "m1/model.ckpt") == testutil::slurp(dir / "m2/model.ckpt"));

    const auto cls = pipeline::run_eval_classify(cfg, dir / "m1/model.ckpt", dir / "s1/val.jsonl", dir / "e",
                                                 dir / "s1/train.jsonl");
    CHECK(cls.samples > 0);
    const auto report = read_json_file(dir / "e/classify_report.json");
    CHECK(report.contains("weighted_f1"));
}

TEST_CASE("partial outputs and missing inputs are refused") {
    testutil::TempDir dir("partial");
    const auto cfg = small_config();
    pipeline::run_synth(cfg, dir / "sections");
    std::ofstream(dir / "sections" / pipeline::kIncompleteMarker) << "";
    CHECK(kind_of([&] { pipeline::run_prep_regions(cfg, dir / "sections", dir / "out"); }) == ErrorKind::Domain);
    fs::remove(dir / "sections" / pipeline::kIncompleteMarker);
    CHECK_THROWS_AS(pipeline::run_split(cfg, dir / "missing.jsonl", dir / "s"), Error);
    CHECK_THROWS_AS(pipeline::run_prep_regions(cfg, dir / "nowhere", dir / "out"), Error);
}
