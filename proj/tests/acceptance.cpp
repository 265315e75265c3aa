// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.
// Every tolerance and runtime limit is pinned here.

#include "contrastive.hpp"
#include "eval.hpp"
#include "geometry.hpp"
#include "manifest.hpp"
#include "nomenclature.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"
#include "region_extractor.hpp"
#include "splitter.hpp"
#include "synthdata.hpp"
#include "tiler.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>

using namespace cytoclip;
using contrastive::Matrix;
namespace fs = std::filesystem;

namespace {

constexpr double kLossTol = 1e-9;
constexpr double kScriptedTol = 1e-6;
constexpr double kScriptedN3 = 0.551445;
constexpr double kGradTol = 1e-5;
constexpr double kFdStep = 1e-5;
constexpr double kOverlapTol = 1.0 / 224.0;
constexpr double kAreaRelTol = 0.01;
constexpr std::size_t kMonteCarloSamples = 1'000'000;
constexpr double kMetricTol = 1e-12;
constexpr double kMinE2eF1 = 0.95;
constexpr double kSegTol = 1e-12;

const std::string kData = CYTOCLIP_TEST_DATA_DIR;

struct Outcome {
    bool pass = true;
    std::string detail;
};

struct Criterion {
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
};

std::string fmt(double v, int prec = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& tag) {
    const auto p = fs::temp_directory_path() / ("cytoclip_accept_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Outcome loss_exactness() {
    Outcome o;
    oracle::Rng rng(1);
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
        const double l = contrastive::symmetric_ce_loss(Matrix(1, 1, rng.uni(-1, 1)), rng.uni(0.01, 100));
        if (l != 0.0) o.pass = false;
    }
    for (std::size_t n = 2; n <= 64; ++n) {
        const double err = std::abs(contrastive::symmetric_ce_loss(Matrix(n, n, rng.uni(-1, 1)), rng.uni(0.01, 100)) -
                                    std::log(static_cast<double>(n)));
        worst = std::max(worst, err);
    }
    if (worst > kLossTol) o.pass = false;
    Matrix eye(3, 3);
    for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
    const double n3 = contrastive::symmetric_ce_loss(eye, 1.0);
    if (std::abs(n3 - kScriptedN3) > kScriptedTol) o.pass = false;
    o.detail = "max |L - ln N| = " + fmt(worst, 3) + ", N=3 identity = " + fmt(n3, 9);
    return o;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += std::max(a[i] * a[i], b[i] * b[i]);
    }
    return den == 0 ? std::sqrt(num) : std::sqrt(num / den);
}

Outcome gradient_correctness() {
    oracle::Rng rng(2);
    double worst = 0;
    for (int b = 0; b < 100; ++b) {
        const std::size_t n = 1 + rng.idx(8), d = 1 + rng.idx(16);
        Matrix img(n, d), txt(n, d);
        for (auto& v : img.data) v = rng.normal();
        for (auto& v : txt.data) v = rng.normal();
        const double ls = rng.uni(-1.0, 3.0);
        const auto g = contrastive::loss_gradients(img, txt, ls);
        std::vector<double> analytic, numeric;
        for (int which = 0; which < 2; ++which) {
            const Matrix& base = which ? txt : img;
            const Matrix& grad = which ? g.d_text : g.d_image;
            for (std::size_t i = 0; i < base.data.size(); ++i) {
                Matrix p = base, m = base;
                p.data[i] += kFdStep;
                m.data[i] -= kFdStep;
                const double fp = which ? oracle::raw_loss(img, p, ls) : oracle::raw_loss(p, txt, ls);
                const double fm = which ? oracle::raw_loss(img, m, ls) : oracle::raw_loss(m, txt, ls);
                numeric.push_back((fp - fm) / (2 * kFdStep));
                analytic.push_back(grad.data[i]);
            }
        }
        numeric.push_back((oracle::raw_loss(img, txt, ls + kFdStep) - oracle::raw_loss(img, txt, ls - kFdStep)) /
                          (2 * kFdStep));
        analytic.push_back(g.d_logit_scale);
        worst = std::max(worst, rel_err(analytic, numeric));
    }
    return {worst < kGradTol, "max relative error " + fmt(worst, 3) + " over 100 batches"};
}

Outcome geometry_oracles() {
    oracle::Rng rng(3);
    std::size_t closure_bad = 0;
    for (int inst = 0; inst < 500; ++inst) {
        const std::size_t n = 1 + rng.idx(20);
        std::vector<geometry::Polygon> ps;
        for (std::size_t i = 0; i < n; ++i)
            ps.emplace_back(oracle::random_star(rng, {rng.uni(0, 300), rng.uni(0, 300)}, 5, 25, 3 + rng.idx(10)));
        std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) dist[i][j] = oracle::polygon_distance(ps[i], ps[j]);
        const double t = rng.uni(0, 60);
        auto got = geometry::proximity_groups(ps, t);
        for (auto& g : got) std::sort(g.begin(), g.end());
        std::sort(got.begin(), got.end());
        if (got != oracle::closure_groups(dist, t)) ++closure_bad;
    }

    double worst_overlap = 0;
    for (int i = 0; i < 1000; ++i) {
        const double x0 = std::floor(rng.uni(0, 300)), y0 = std::floor(rng.uni(0, 300));
        const geometry::BBox tile{x0, y0, x0 + 224, y0 + 224};
        const geometry::Polygon p(oracle::random_star(rng, {rng.uni(50, 450), rng.uni(50, 450)}, 20, 220, 3 + rng.idx(14)));
        worst_overlap = std::max(worst_overlap, std::abs(geometry::overlap_fraction(tile, p) - oracle::pixel_overlap(tile, p)));
    }

    double worst_area = 0;
    for (int i = 0; i < 100; ++i) {
        const geometry::Polygon p(oracle::random_star(rng, {0, 0}, 10, 100, 3 + rng.idx(20)));
        const double mc = oracle::monte_carlo_area(p, kMonteCarloSamples, rng);
        worst_area = std::max(worst_area, std::abs(geometry::area(p) - mc) / mc);
    }
    return {closure_bad == 0 && worst_overlap <= kOverlapTol && worst_area <= kAreaRelTol,
            std::to_string(closure_bad) + "/500 closure mismatches, max overlap error " + fmt(worst_overlap, 3) +
                ", max area error " + fmt(100 * worst_area, 3) + "%"};
}

Outcome tiler_oracle() {
    const auto tree = nomenclature::load_nomenclature(kData + "/taxonomy_demo.json");
    std::vector<std::string> ids;
    for (const auto& t : synth::default_region_templates()) ids.push_back(t.region_id);
    oracle::Rng rng(4);
    std::size_t emitted = 0, mismatches = 0;
    constexpr long kT = 224;
    for (int s = 0; s < 50; ++s) {
        const std::size_t w = 448 + rng.idx(900), h = 448 + rng.idx(900);
        const auto spec = synth::make_rectilinear_spec("r" + std::to_string(s), w, h, ids, 1000 + s);
        AnnotatedSection sec;
        sec.section_id = spec.section_id;
        sec.resolution_um_per_px = spec.resolution_um_per_px;
        sec.width = w;
        sec.height = h;
        for (const auto& r : spec.regions) sec.regions.push_back({r.region_id, r.polygon});
        const auto got = tiles::tile_section(sec, tree);

        // label raster by ray casting at pixel centres, polygons disjoint
        std::vector<int> owner(w * h, -1);
        for (std::size_t k = 0; k < sec.regions.size(); ++k) {
            const auto& poly = sec.regions[k].polygon;
            double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
            for (const auto& q : poly.exterior()) {
                x0 = std::min(x0, q.x), y0 = std::min(y0, q.y), x1 = std::max(x1, q.x), y1 = std::max(y1, q.y);
            }
            for (auto y = static_cast<std::size_t>(std::max(0.0, y0)); y < std::min<double>(h, y1); ++y)
                for (auto x = static_cast<std::size_t>(std::max(0.0, x0)); x < std::min<double>(w, x1); ++x)
                    if (oracle::ray_cast(poly, x + 0.5, y + 0.5)) owner[y * w + x] = static_cast<int>(k);
        }
        std::map<std::pair<long, long>, std::string> want;
        for (long gy = 0; (gy + 1) * kT <= static_cast<long>(h); ++gy)
            for (long gx = 0; (gx + 1) * kT <= static_cast<long>(w); ++gx) {
                std::map<std::string, long> count;
                for (long y = gy * kT; y < (gy + 1) * kT; ++y)
                    for (long x = gx * kT; x < (gx + 1) * kT; ++x)
                        if (int k = owner[y * w + x]; k >= 0) ++count[tree.node(sec.regions[k].region_id).name];
                std::string best;
                long best_n = 0;
                for (const auto& [label, n] : count)  // map order: first max wins the name tie-break
                    if (n > best_n) best = label, best_n = n;
                if (best_n * 5 > 2 * kT * kT) want[{gx, gy}] = best;
            }
        std::map<std::pair<long, long>, std::string> have;
        for (const auto& t : got) have[{t.grid_x, t.grid_y}] = t.label;
        emitted += have.size();
        if (have != want) ++mismatches;
    }
    return {mismatches == 0, std::to_string(mismatches) + "/50 sections disagree, " + std::to_string(emitted) + " tiles"};
}

Outcome threshold_fidelity() {
    const auto tree = nomenclature::parse_nomenclature(nlohmann::json::array(
        {{{"id", "r"}, {"name", "R"}}, {{"id", "a"}, {"name", "A"}, {"parent", "r"}}}));
    auto tile_with = [&](double right) {
        AnnotatedSection s;
        s.section_id = "t";
        s.resolution_um_per_px = 2.0;
        s.width = s.height = 10;
        s.regions.push_back({"a", geometry::Polygon({{0, 0}, {right, 0}, {right, 10}, {0, 10}})});
        tiles::TilerParams p;
        p.tile_size = 10;
        return tiles::tile_section(s, tree, p).size();
    };
    const std::size_t at40 = tile_with(4.0), above40 = tile_with(4.0 + 1e-3);

    const geometry::BBox crop{0, 0, 10, 10};
    auto neighbour = [&](double shift) {
        std::vector<regions::LabeledPolygons> all{
            {"N", {geometry::Polygon({{2 - shift, 0}, {12 - shift, 0}, {12 - shift, 10}, {2 - shift, 10}})}}};
        return regions::assign_multi_region_labels("P", crop, all, 0.80).size() - 1;
    };
    const std::size_t at80 = neighbour(0.0), above80 = neighbour(1e-3);
    return {at40 == 0 && above40 == 1 && at80 == 0 && above80 == 1,
            "tile 0.40 -> " + std::to_string(at40) + ", 0.40+e -> " + std::to_string(above40) + "; neighbour 0.80 -> " +
                std::to_string(at80) + ", 0.80+e -> " + std::to_string(above80)};
}

Outcome metric_oracles() {
    oracle::Rng rng(6);
    auto labels = [&](std::size_t n, std::size_t k) {
        std::vector<std::string> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back("c" + std::to_string(rng.idx(k)));
        return v;
    };
    double prf_err = 0;
    for (int t = 0; t < 300; ++t) {
        const std::size_t n = 1 + rng.idx(200), k = 1 + rng.idx(10);
        const auto truth = labels(n, k), pred = labels(n, k);
        const auto got = eval::weighted_prf(pred, truth);
        const auto want = oracle::brute_prf(pred, truth);
        prf_err = std::max({prf_err, std::abs(got.precision - want.precision), std::abs(got.recall - want.recall),
                            std::abs(got.f1 - want.f1), std::abs(got.accuracy - want.accuracy)});
    }
    double recall_err = 0;
    std::size_t count_bad = 0, non_monotone = 0;
    for (int t = 0; t < 60; ++t) {
        const std::size_t nq = 1 + rng.idx(50), nc = 1 + rng.idx(500), d = 2 + rng.idx(10);
        const bool self = t % 3 == 0;
        const auto Q = oracle::random_unit_rows(rng, nq, d);
        const auto C = self ? Q : oracle::random_unit_rows(rng, nc, d);
        const auto ql = labels(nq, 1 + rng.idx(8));
        const auto cl = self ? ql : labels(C.rows, 1 + rng.idx(8));
        double prev = -1;
        for (std::size_t k : {1, 2, 3, 5, 10, 20, 50, 100, 500, 1000}) {
            const auto got = eval::recall_at_k(Q, C, ql, cl, k, self);
            const auto want = oracle::brute_recall(Q, C, ql, cl, k, self);
            recall_err = std::max(recall_err, std::abs(got.recall - want.recall));
            if (got.queries_counted != want.counted || got.queries_without_relevant != want.without) ++count_bad;
            if (got.recall < prev) ++non_monotone;
            prev = got.recall;
        }
    }
    return {prf_err <= kMetricTol && recall_err <= kMetricTol && count_bad == 0 && non_monotone == 0,
            "PRF max error " + fmt(prf_err, 3) + ", Recall@K max error " + fmt(recall_err, 3) + ", " +
                std::to_string(non_monotone) + " monotonicity violations"};
}

Outcome split_law() {
    oracle::Rng rng(7);
    std::size_t leaks = 0, unstable = 0;
    for (int t = 0; t < 200; ++t) {
        std::vector<regions::RegionImageRecord> recs;
        const std::size_t n = 1 + rng.idx(300);
        for (std::size_t i = 0; i < n; ++i) {
            regions::RegionImageRecord r;
            r.label = "L" + std::to_string(rng.idx(12));
            r.section_id = "s" + std::to_string(rng.idx(25));
            r.multi_labels = {r.label};
            recs.push_back(r);
        }
        const double frac = rng.uni(0.05, 0.95);
        const auto a = split::split_whole_region(recs, frac, static_cast<std::uint64_t>(t));
        const auto b = split::split_whole_region(recs, frac, static_cast<std::uint64_t>(t));
        std::set<std::pair<std::string, std::string>> train;
        for (auto i : a.train) train.emplace(recs[i].label, recs[i].section_id);
        for (auto i : a.val)
            if (train.contains({recs[i].label, recs[i].section_id})) ++leaks;
        if (a.train != b.train || a.val != b.val || split::split_report(a) != split::split_report(b)) ++unstable;
    }

    // byte-level, through the stage that writes the manifests
    const auto dir = scratch("split");
    auto cfg = pipeline::default_config();
    cfg.synth.grid.sections = 6;
    pipeline::run_synth(cfg, dir / "sections");
    pipeline::run_prep_regions(cfg, dir / "sections", dir / "regions");
    pipeline::run_split(cfg, dir / "regions/manifest.jsonl", dir / "a");
    pipeline::run_split(cfg, dir / "regions/manifest.jsonl", dir / "b");
    bool identical = true;
    for (const char* f : {"train.jsonl", "val.jsonl", "split_report.txt"})
        identical = identical && slurp(dir / "a" / f) == slurp(dir / "b" / f) && !slurp(dir / "a" / f).empty();
    fs::remove_all(dir);
    return {leaks == 0 && unstable == 0 && identical, std::to_string(leaks) + " (label, section) leaks, " +
                                                          std::to_string(unstable) + " unstable splits, manifests " +
                                                          (identical ? "byte-identical" : "differ")};
}

Outcome end_to_end() {
    const auto dir = scratch("e2e");
    auto cfg = pipeline::default_config();
    cfg.synth.grid.sections = 20;
    cfg.train.epochs = 50;
    cfg.train.batch_size = 64;
    cfg.train.optimizer.lr = 5e-5;
    const auto sections = pipeline::run_synth(cfg, dir / "sections");
    const auto records = pipeline::run_prep_regions(cfg, dir / "sections", dir / "regions");
    const auto split = pipeline::run_split(cfg, dir / "regions/manifest.jsonl", dir / "split");
    const auto train = pipeline::run_train(cfg, dir / "split/train.jsonl", dir / "model");
    const auto cls = pipeline::run_eval_classify(cfg, dir / "model/model.ckpt", dir / "split/val.jsonl", dir / "eval",
                                                 dir / "split/train.jsonl");
    fs::remove_all(dir);
    return {sections == 20 && cls.f1 >= kMinE2eF1 && cls.multi_f1 >= cls.f1,
            std::to_string(records) + " records (" + std::to_string(split.train) + "/" + std::to_string(split.val) +
                "), loss " + fmt(train.epoch_loss.front(), 4) + " -> " + fmt(train.epoch_loss.back(), 4) +
                ", weighted F1 " + fmt(cls.f1, 4) + ", multi-label F1 " + fmt(cls.multi_f1, 4)};
}

Outcome coarse_segmentation() {
    const auto tree = nomenclature::load_nomenclature(kData + "/taxonomy_demo.json");
    std::vector<std::string> ids;
    for (const auto& t : synth::default_region_templates()) ids.push_back(t.region_id);
    std::map<std::string, std::uint16_t> label_ids;
    for (const auto& id : ids) label_ids.emplace(tree.node(id).name, static_cast<std::uint16_t>(label_ids.size() + 1));

    bool pass = true;
    double worst_margin = 1e300;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto spec = synth::make_rectilinear_spec("seg", 1120, 896, ids, 500 + s);
        const auto sec = synth::generate_section(spec).annotation;
        const auto tl = tiles::tile_section(sec, tree);
        if (tl.empty()) continue;
        std::vector<std::uint16_t> pred;
        double mean = 0;
        for (const auto& t : tl) {
            pred.push_back(label_ids.at(t.label));
            mean += t.overlap;
        }
        mean /= static_cast<double>(tl.size());
        const auto seg = eval::coarse_segmentation(tl, pred, sec.width, sec.height);
        const auto agree = eval::pixel_agreement(seg, eval::rasterize_ground_truth(sec, tree, label_ids));
        worst_margin = std::min(worst_margin, agree.fraction - mean);
        if (agree.fraction < mean - kSegTol) pass = false;
    }

    // same check through the segment stage, whose oracle map uses the manifest labels
    const auto dir = scratch("seg");
    auto cfg = pipeline::default_config();
    cfg.synth.layout = "rectilinear";
    cfg.synth.rect_sections = 2;
    cfg.train.epochs = 2;
    pipeline::run_synth(cfg, dir / "sections");
    pipeline::run_prep_tiles(cfg, dir / "sections", dir / "tiles");
    pipeline::run_train(cfg, dir / "tiles/manifest.jsonl", dir / "model");
    const auto tiles_all = std::get<1>(manifest::load_records(dir / "tiles/manifest.jsonl"));
    const auto sum = pipeline::run_segment(cfg, dir / "model/model.ckpt", dir / "tiles/manifest.jsonl",
                                           tiles_all.front().section_id, dir / "sections", dir / "seg");
    fs::remove_all(dir);
    const bool stage_ok = sum.oracle_agreement && *sum.oracle_agreement >= sum.mean_tile_overlap - kSegTol;
    return {pass && stage_ok, "min (agreement - mean overlap) " + fmt(worst_margin, 3) + " over 10 sections; stage " +
                                  (sum.oracle_agreement ? fmt(*sum.oracle_agreement, 6) : std::string("n/a")) +
                                  " vs mean overlap " + fmt(sum.mean_tile_overlap, 6)};
}

} // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"loss exactness", 1.0, loss_exactness},
        {"gradient correctness", 10.0, gradient_correctness},
        {"geometry oracles", 60.0, geometry_oracles},
        {"tiler oracle", 60.0, tiler_oracle},
        {"threshold fidelity", 60.0, threshold_fidelity},
        {"metric oracles", 60.0, metric_oracles},
        {"split law", 60.0, split_law},
        {"end-to-end synthetic", 300.0, end_to_end},
        {"coarse segmentation", 60.0, coarse_segmentation},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.limit_s;
        const bool ok = o.pass && in_time;
        failures += !ok;
        std::printf("%s  %-22s %s [%.2fs, limit %.0fs]\n", ok ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs,
                    c.limit_s);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
