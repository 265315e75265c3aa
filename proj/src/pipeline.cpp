#include "pipeline.hpp"

#include "error.hpp"
#include "eval.hpp"
#include "image.hpp"
#include "json_util.hpp"
#include "manifest.hpp"
#include "nomenclature.hpp"
#include "parallel.hpp"
#include "splitter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#ifndef CYTOCLIP_DATA_DIR
#define CYTOCLIP_DATA_DIR ""
#endif

namespace cytoclip::pipeline {

namespace {

using nlohmann::json;

// Reads keys of one config object and remembers which were consumed so that
// misspelt keys are reported instead of silently ignored.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) fail(ErrorKind::Parse, "config: " + label() + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            fail(ErrorKind::Parse, "config: " + path(key) + ": " + e.what());
        }
    }

    std::optional<Section> sub(const char* key) {
        if (!j_.contains(key)) return std::nullopt;
        seen_.insert(key);
        return Section(j_.at(key), path(key));
    }

    const json* raw(const char* key) {
        if (!j_.contains(key)) return nullptr;
        seen_.insert(key);
        return &j_.at(key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.contains(k)) fail(ErrorKind::Parse, "config: unknown key " + path(k.c_str()));
    }

    std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

private:
    std::string label() const { return where_.empty() ? "top level" : where_; }
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

void check(bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::Parse, "config: " + msg);
}

class StageOutput {
public:
    StageOutput(const fs::path& dir, const char* stage) : dir_(dir), stage_(stage) {
        fs::create_directories(dir_);
        if (fs::exists(marker())) log(std::string(stage_) + ": " + dir_.string() + " holds an interrupted run; overwriting");
        write_file_atomic(marker(), std::string(stage_) + "\n");
    }
    void commit() { fs::remove(marker()); }
    const fs::path& dir() const { return dir_; }

private:
    fs::path marker() const { return dir_ / kIncompleteMarker; }
    fs::path dir_;
    const char* stage_;
};

void require_complete(const fs::path& dir) {
    if (fs::exists(dir / kIncompleteMarker))
        fail(ErrorKind::Domain, "partial output in " + dir.string() + " (interrupted run); re-run the stage that produced it");
}

void require_file(const fs::path& p, const char* what) {
    if (!fs::is_regular_file(p)) fail(ErrorKind::Io, std::string("missing ") + what + ": " + p.string());
    require_complete(p.parent_path().empty() ? fs::path(".") : p.parent_path());
}

std::vector<fs::path> section_files(const fs::path& dir) {
    require_complete(dir);
    auto files = list_annotations(dir);
    if (files.empty()) fail(ErrorKind::Io, "no *.geojson sections in " + dir.string());
    return files;
}

struct Taxonomy {
    nomenclature::NomenclatureTree tree;
    nomenclature::MergePolicy policy;
};

Taxonomy load_taxonomy(const Config& c) {
    if (c.taxonomy.empty()) fail(ErrorKind::InvalidArgument, "config key 'taxonomy' is required");
    if (c.policy.empty()) fail(ErrorKind::InvalidArgument, "config key 'policy' is required");
    Taxonomy t{nomenclature::load_nomenclature(c.taxonomy), nomenclature::load_policy(c.policy)};
    t.policy.validate(t.tree);
    return t;
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(digits);
    ss << v;
    return ss.str();
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

std::string rebase(const std::string& p, const fs::path& from, const fs::path& to) {
    if (fs::path(p).is_absolute() || from == to) return p;
    return fs::weakly_canonical(from / p).lexically_relative(to).generic_string();
}

fs::path canonical_dir(const fs::path& p) { return fs::weakly_canonical(fs::absolute(p)); }

fs::path manifest_dir(const fs::path& manifest) { return canonical_dir(manifest).parent_path(); }

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

// Labels, multi-labels, captions and features of a manifest, whichever kind it is.
struct Dataset {
    std::vector<std::string> labels;
    std::vector<std::vector<std::string>> multi_labels;
    std::vector<std::string> captions;
    std::vector<std::vector<double>> features;
};

Dataset load_dataset(const Config& c, const fs::path& manifest) {
    require_file(manifest, "manifest");
    const fs::path dir = manifest_dir(manifest);
    Dataset d;
    std::visit(
        [&](const auto& recs) {
            using R = typename std::decay_t<decltype(recs)>::value_type;
            for (const auto& r : recs) {
                d.labels.push_back(r.label);
                if constexpr (std::is_same_v<R, regions::RegionImageRecord>) {
                    d.multi_labels.push_back(r.multi_labels);
                    d.captions.push_back(c.caption == "multi" ? regions::multi_caption(r)
                                                              : regions::primary_caption(r));
                } else {
                    d.multi_labels.push_back({r.label});
                    d.captions.push_back(r.label);
                }
            }
            if constexpr (std::is_same_v<R, regions::RegionImageRecord>) d.features = region_features(recs, dir, c);
            else d.features = tile_features(recs, dir, c);
        },
        manifest::load_records(manifest));
    if (d.labels.empty()) fail(ErrorKind::Domain, "manifest is empty: " + manifest.string());
    return d;
}

std::vector<double> features_of(Image img, const Config& c) {
    if (c.feature_input_size > 0) img = regions::pad_to_square(img, c.feature_input_size);
    return synth::feature_extract(img, c.features);
}

json class_table(const eval::ClassificationReport& r) {
    json per = json::object();
    for (const auto& [name, s] : r.per_class)
        per[name] = {{"support", s.support}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
    json confusion = json::array();
    for (const auto& [key, n] : r.confusion) confusion.push_back({{"truth", key.first}, {"predicted", key.second}, {"count", n}});
    return {{"samples", r.samples},
            {"weighted", {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}}},
            {"accuracy", r.accuracy},
            {"per_class", per},
            {"confusion", confusion}};
}

std::uint64_t section_seed(std::uint64_t seed, std::size_t i) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

void log(const std::string& msg) {
    static std::mutex m;
    std::lock_guard lock(m);
    std::cerr << "cytoclip: " << msg << '\n';
}

Config default_config() {
    Config c;
    c.synth.grid.regions = synth::default_region_templates();
    const fs::path data = CYTOCLIP_DATA_DIR;
    if (!data.empty() && fs::exists(data / "taxonomy_demo.json")) {
        c.taxonomy = data / "taxonomy_demo.json";
        c.policy = data / "policy_default.json";
    }
    return c;
}

Config parse_config(const json& doc, const fs::path& base_dir) {
    Config c = default_config();
    Section top(doc, "");
    auto resolve = [&](const char* key, fs::path& out) {
        std::string s;
        top.get(key, s);
        if (!s.empty()) out = fs::path(s).is_absolute() ? fs::path(s) : base_dir / s;
    };
    resolve("taxonomy", c.taxonomy);
    resolve("policy", c.policy);
    top.get("seed", c.seed);
    top.get("jobs", c.jobs);

    if (auto s = top.sub("synth")) {
        auto& g = c.synth.grid;
        s->get("layout", c.synth.layout);
        s->get("sections", g.sections);
        s->get("cols", g.cols);
        s->get("rows", g.rows);
        s->get("cell", g.cell);
        s->get("margin", g.margin);
        s->get("jitter", g.jitter);
        s->get("resolution_um_per_px", g.resolution_um_per_px);
        s->get("rect_sections", c.synth.rect_sections);
        s->get("rect_width", c.synth.rect_width);
        s->get("rect_height", c.synth.rect_height);
        s->get("rect_resolution_um_per_px", c.synth.rect_resolution_um_per_px);
        if (const json* regs = s->raw("regions")) {
            check(regs->is_array() && !regs->empty(), "synth.regions must be a non-empty array");
            g.regions.clear();
            for (const auto& r : *regs) {
                Section rs(r, "synth.regions[]");
                synth::RegionTemplate t;
                int gray = t.gray_level;
                rs.get("region_id", t.region_id);
                rs.get("dot_density", t.dot_density);
                rs.get("dot_radius", t.dot_radius);
                rs.get("gray_level", gray);
                rs.finish();
                check(!t.region_id.empty(), "synth.regions[].region_id is required");
                check(gray >= 0 && gray <= 255, "synth.regions[].gray_level must be in [0, 255]");
                t.gray_level = static_cast<std::uint8_t>(gray);
                g.regions.push_back(t);
            }
        }
        s->finish();
    }
    if (auto s = top.sub("region")) {
        auto& r = c.region;
        s->get("min_area", r.size_filter.min_area);
        s->get("min_area_perimeter_ratio", r.size_filter.min_area_perimeter_ratio);
        s->get("dfs_threshold", r.dfs_threshold);
        s->get("multi_label_threshold", r.crops.multi_label_threshold);
        s->get("exact", r.crops.exact);
        s->get("exact_masked", r.crops.exact_masked);
        s->get("square", r.crops.square);
        s->get("square_min_dims", r.crops.square_min_dims);
        s->get("expected_resolution_um", r.expected_resolution_um);
        s->finish();
    }
    if (auto s = top.sub("tile")) {
        s->get("size", c.tile.tile_size);
        s->get("min_overlap", c.tile.min_overlap);
        s->get("expected_resolution_um", c.tile.expected_resolution_um);
        s->get("materialize", c.materialize_tiles);
        s->finish();
    }
    if (auto s = top.sub("split")) {
        s->get("val_fraction", c.val_fraction);
        s->get("cross_section_ratio", c.cross_section_ratio);
        s->finish();
    }
    if (auto s = top.sub("train")) {
        auto& t = c.train;
        s->get("epochs", t.epochs);
        s->get("batch_size", t.batch_size);
        s->get("lr", t.optimizer.lr);
        s->get("beta1", t.optimizer.beta1);
        s->get("beta2", t.optimizer.beta2);
        s->get("eps", t.optimizer.eps);
        s->get("weight_decay", t.optimizer.weight_decay);
        s->get("embed_dim", t.embed_dim);
        s->get("text_dim", t.text_dim);
        s->get("init_std", t.init_std);
        s->get("init_logit_scale", t.init_logit_scale);
        s->get("lr_schedule", c.lr_schedule);
        s->get("caption", c.caption);
        s->finish();
    }
    if (auto s = top.sub("features")) {
        int dark = c.features.dark_threshold;
        s->get("dark_threshold", dark);
        s->get("input_size", c.feature_input_size);
        check(dark >= 1 && dark <= 255, "features.dark_threshold must be in [1, 255]");
        c.features.dark_threshold = static_cast<std::uint8_t>(dark);
        s->finish();
    }
    if (auto s = top.sub("eval")) {
        s->get("recall_k", c.recall_k);
        s->finish();
    }
    top.finish();

    check(c.jobs >= 1, "jobs must be >= 1");
    check(c.synth.layout == "grid" || c.synth.layout == "rectilinear", "synth.layout must be grid or rectilinear");
    check(c.region.size_filter.min_area >= 0 && c.region.size_filter.min_area_perimeter_ratio >= 0,
          "region size filter thresholds must be >= 0");
    check(c.region.dfs_threshold >= 0, "region.dfs_threshold must be >= 0");
    check(c.region.crops.multi_label_threshold >= 0 && c.region.crops.multi_label_threshold <= 1,
          "region.multi_label_threshold must be in [0, 1]");
    for (int d : c.region.crops.square_min_dims) check(d > 0, "region.square_min_dims must be positive");
    check(c.tile.tile_size > 0, "tile.size must be > 0");
    check(c.tile.min_overlap >= 0 && c.tile.min_overlap < 1, "tile.min_overlap must be in [0, 1)");
    check(c.val_fraction >= 0 && c.val_fraction < 1, "split.val_fraction must be in [0, 1)");
    check(c.cross_section_ratio >= 0 && c.cross_section_ratio <= 1, "split.cross_section_ratio must be in [0, 1]");
    check(c.train.epochs >= 1 && c.train.batch_size >= 1, "train.epochs and train.batch_size must be >= 1");
    check(c.train.optimizer.lr > 0, "train.lr must be > 0");
    check(c.train.embed_dim >= 1 && c.train.text_dim >= 1, "train dimensions must be >= 1");
    check(c.lr_schedule == "constant", "train.lr_schedule: only \"constant\" is implemented");
    check(c.caption == "primary" || c.caption == "multi", "train.caption must be primary or multi");
    check(!c.recall_k.empty(), "eval.recall_k must not be empty");
    for (auto k : c.recall_k) check(k >= 1, "eval.recall_k entries must be >= 1");
    return c;
}

Config load_config(const fs::path& path) {
    return parse_config(read_json_file(path), canonical_dir(path).parent_path());
}

json config_to_json(const Config& c) {
    json regs = json::array();
    for (const auto& t : c.synth.grid.regions)
        regs.push_back({{"region_id", t.region_id},
                        {"dot_density", t.dot_density},
                        {"dot_radius", t.dot_radius},
                        {"gray_level", t.gray_level}});
    const auto& g = c.synth.grid;
    const auto& r = c.region;
    const auto& t = c.train;
    return {
        {"taxonomy", c.taxonomy.string()},
        {"policy", c.policy.string()},
        {"seed", c.seed},
        {"jobs", c.jobs},
        {"synth",
         {{"layout", c.synth.layout},
          {"sections", g.sections},
          {"cols", g.cols},
          {"rows", g.rows},
          {"cell", g.cell},
          {"margin", g.margin},
          {"jitter", g.jitter},
          {"resolution_um_per_px", g.resolution_um_per_px},
          {"rect_sections", c.synth.rect_sections},
          {"rect_width", c.synth.rect_width},
          {"rect_height", c.synth.rect_height},
          {"rect_resolution_um_per_px", c.synth.rect_resolution_um_per_px},
          {"regions", regs}}},
        {"region",
         {{"min_area", r.size_filter.min_area},
          {"min_area_perimeter_ratio", r.size_filter.min_area_perimeter_ratio},
          {"dfs_threshold", r.dfs_threshold},
          {"multi_label_threshold", r.crops.multi_label_threshold},
          {"exact", r.crops.exact},
          {"exact_masked", r.crops.exact_masked},
          {"square", r.crops.square},
          {"square_min_dims", r.crops.square_min_dims},
          {"expected_resolution_um", r.expected_resolution_um}}},
        {"tile",
         {{"size", c.tile.tile_size},
          {"min_overlap", c.tile.min_overlap},
          {"expected_resolution_um", c.tile.expected_resolution_um},
          {"materialize", c.materialize_tiles}}},
        {"split", {{"val_fraction", c.val_fraction}, {"cross_section_ratio", c.cross_section_ratio}}},
        {"train",
         {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr", t.optimizer.lr},
          {"beta1", t.optimizer.beta1},
          {"beta2", t.optimizer.beta2},
          {"eps", t.optimizer.eps},
          {"weight_decay", t.optimizer.weight_decay},
          {"embed_dim", t.embed_dim},
          {"text_dim", t.text_dim},
          {"init_std", t.init_std},
          {"init_logit_scale", t.init_logit_scale},
          {"lr_schedule", c.lr_schedule},
          {"caption", c.caption}}},
        {"features", {{"dark_threshold", c.features.dark_threshold}, {"input_size", c.feature_input_size}}},
        {"eval", {{"recall_k", c.recall_k}}},
    };
}

std::vector<std::vector<double>> region_features(const std::vector<regions::RegionImageRecord>& records,
                                                 const fs::path& dir, const Config& c) {
    std::vector<std::vector<double>> out(records.size());
    parallel_for(records.size(), c.jobs, [&](std::size_t i) { out[i] = features_of(read_pnm(dir / records[i].image_path), c); });
    return out;
}

std::vector<std::vector<double>> tile_features(const std::vector<tiles::TileRecord>& records, const fs::path& dir,
                                               const Config& c) {
    std::map<std::string, std::size_t> slot;
    std::vector<std::string> paths;
    for (const auto& r : records)
        if (slot.emplace(r.image_path, paths.size()).second) paths.push_back(r.image_path);
    std::vector<Image> images(paths.size());
    parallel_for(paths.size(), c.jobs, [&](std::size_t i) { images[i] = read_pnm(dir / paths[i]); });

    std::vector<std::vector<double>> out(records.size());
    parallel_for(records.size(), c.jobs, [&](std::size_t i) {
        const auto& r = records[i];
        const Image& src = images[slot.at(r.image_path)];
        if (!r.is_virtual) {
            out[i] = features_of(src, c);
            return;
        }
        const auto w = static_cast<std::size_t>(r.bbox.width());
        const auto h = static_cast<std::size_t>(r.bbox.height());
        out[i] = features_of(crop(src, static_cast<long>(r.bbox.x0), static_cast<long>(r.bbox.y0), w, h), c);
    });
    return out;
}

TaxonomySummary run_parse_taxonomy(const Config& config, const fs::path& out_dir) {
    const Taxonomy t = load_taxonomy(config);
    StageOutput out(out_dir, "parse-taxonomy");
    TaxonomySummary s;
    s.nodes = t.tree.nodes().size();
    s.roots = t.tree.roots().size();
    s.max_depth = t.tree.max_depth();
    const auto leaves = t.tree.leaves();
    s.leaves = leaves.size();
    s.labels = nomenclature::distinct_leaf_labels(t.tree, t.policy);

    json mapping = json::object();
    for (const auto& id : leaves) {
        const auto l = nomenclature::resolve_label(t.tree, t.policy, id);
        mapping[id] = l ? json(*l) : json(nullptr);
    }
    const json doc = {{"nodes", s.nodes},   {"roots", t.tree.roots()}, {"max_depth", s.max_depth},
                      {"leaves", s.leaves}, {"distinct_labels", s.labels}, {"leaf_labels", mapping}};
    write_file_atomic(out_dir / "taxonomy_summary.json", doc.dump(1) + "\n");
    out.commit();
    log("parse-taxonomy: " + std::to_string(s.nodes) + " nodes, " + std::to_string(s.labels.size()) +
        " distinct training labels");
    return s;
}

std::size_t run_synth(const Config& config, const fs::path& out_dir) {
    const Taxonomy t = load_taxonomy(config);
    std::vector<synth::SynthSpec> specs;
    if (config.synth.layout == "grid") {
        auto params = config.synth.grid;
        params.seed = config.seed;
        specs = synth::make_grid_suite(params);
    } else {
        const auto& templates = config.synth.grid.regions;
        std::vector<std::string> ids;
        for (const auto& r : templates) ids.push_back(r.region_id);
        for (std::size_t i = 0; i < config.synth.rect_sections; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "tiles_%03zu", i);
            auto spec = synth::make_rectilinear_spec(name, config.synth.rect_width, config.synth.rect_height, ids,
                                                     section_seed(config.seed, i),
                                                     config.synth.rect_resolution_um_per_px);
            for (auto& r : spec.regions) {
                const auto it = std::find_if(templates.begin(), templates.end(),
                                             [&](const auto& tpl) { return tpl.region_id == r.region_id; });
                r.dot_density = it->dot_density;
                r.dot_radius = it->dot_radius;
                r.gray_level = it->gray_level;
            }
            specs.push_back(std::move(spec));
        }
    }
    for (const auto& s : specs) synth::validate_spec(s, &t.tree);

    StageOutput out(out_dir, "synth");
    parallel_for(specs.size(), config.jobs, [&](std::size_t i) {
        const auto sec = synth::generate_section(specs[i]);
        const std::string id = specs[i].section_id;
        write_pnm(out_dir / (id + ".pgm"), sec.image);
        save_annotation(out_dir / (id + ".geojson"), sec.annotation, id + ".pgm");
    });
    out.commit();
    log("synth: wrote " + std::to_string(specs.size()) + " " + config.synth.layout + " sections to " + out_dir.string());
    return specs.size();
}

std::size_t run_prep_regions(const Config& config, const fs::path& sections_dir, const fs::path& out_dir) {
    const Taxonomy t = load_taxonomy(config);
    const auto files = section_files(sections_dir);
    StageOutput out(out_dir, "prep-regions");
    std::vector<std::vector<regions::RegionImageRecord>> per_section(files.size());
    parallel_for(files.size(), config.jobs, [&](std::size_t i) {
        per_section[i] = regions::extract_region_images(load_annotation(files[i]), t.tree, t.policy, config.region, out_dir);
    });
    std::vector<regions::RegionImageRecord> all;
    for (auto& v : per_section) std::move(v.begin(), v.end(), std::back_inserter(all));
    manifest::save_records(out_dir / "manifest.jsonl", all);
    out.commit();
    log("prep-regions: " + std::to_string(all.size()) + " records from " + std::to_string(files.size()) + " sections");
    return all.size();
}

std::size_t run_prep_tiles(const Config& config, const fs::path& sections_dir, const fs::path& out_dir) {
    const Taxonomy t = load_taxonomy(config);
    const auto files = section_files(sections_dir);
    StageOutput out(out_dir, "prep-tiles");
    const fs::path base = canonical_dir(out_dir);
    auto params = config.tile;
    params.jobs = 1;
    std::vector<std::vector<tiles::TileRecord>> per_section(files.size());
    parallel_for(files.size(), config.jobs, [&](std::size_t i) {
        const auto section = load_annotation(files[i]);
        auto recs = tiles::tile_section(section, t.tree, params);
        if (config.materialize_tiles) {
            const Image img = read_pnm(section.image_path);
            for (auto& r : recs) {
                const std::string rel = "tiles/" + section.section_id + "/" + std::to_string(r.grid_x) + "_" +
                                        std::to_string(r.grid_y) + ".pgm";
                write_pnm(out_dir / rel, crop(img, static_cast<long>(r.bbox.x0), static_cast<long>(r.bbox.y0),
                                              params.tile_size, params.tile_size));
                r.image_path = rel;
                r.is_virtual = false;
            }
        } else {
            const std::string rel = fs::weakly_canonical(section.image_path).lexically_relative(base).generic_string();
            for (auto& r : recs) {
                r.image_path = rel;
                r.is_virtual = true;
            }
        }
        per_section[i] = std::move(recs);
    });
    std::vector<tiles::TileRecord> all;
    for (auto& v : per_section) std::move(v.begin(), v.end(), std::back_inserter(all));
    manifest::save_records(out_dir / "manifest.jsonl", all);
    out.commit();
    log("prep-tiles: " + std::to_string(all.size()) + " labelled tiles from " + std::to_string(files.size()) +
        " sections");
    return all.size();
}

SplitSummary run_split(const Config& config, const fs::path& manifest_path, const fs::path& out_dir) {
    require_file(manifest_path, "manifest");
    const auto records = manifest::load_records(manifest_path);
    StageOutput out(out_dir, "split");
    const fs::path from = manifest_dir(manifest_path);
    const fs::path to = canonical_dir(out_dir);

    SplitSummary s;
    split::SplitResult res;
    manifest::Records train, val;
    std::visit(
        [&](const auto& recs) {
            using V = std::decay_t<decltype(recs)>;
            if constexpr (std::is_same_v<V, std::vector<regions::RegionImageRecord>>)
                res = split::split_whole_region(recs, config.val_fraction, config.seed);
            else
                res = split::split_tiles(recs, config.val_fraction, config.seed, config.cross_section_ratio);
            auto pick = [&](const std::vector<std::size_t>& idx) {
                V subset;
                for (auto i : idx) {
                    auto r = recs[i];
                    r.image_path = rebase(r.image_path, from, to);
                    if constexpr (std::is_same_v<V, std::vector<regions::RegionImageRecord>>)
                        if (r.mask_path) r.mask_path = rebase(*r.mask_path, from, to);
                    subset.push_back(std::move(r));
                }
                return subset;
            };
            train = pick(res.train);
            val = pick(res.val);
        },
        records);
    manifest::save_records(out_dir / "train.jsonl", train);
    manifest::save_records(out_dir / "val.jsonl", val);
    write_file_atomic(out_dir / "split_report.txt", split::split_report(res));
    out.commit();
    s.train = res.train.size();
    s.val = res.val.size();
    s.uncovered_labels = res.uncovered_labels;
    log("split: " + std::to_string(s.train) + " train / " + std::to_string(s.val) + " val, " +
        std::to_string(s.uncovered_labels.size()) + " labels without validation data");
    return s;
}

TrainSummary run_train(const Config& config, const fs::path& manifest_path, const fs::path& out_dir) {
    const Dataset d = load_dataset(config, manifest_path);
    auto tc = config.train;
    tc.seed = config.seed;
    log("train-toy: " + std::to_string(d.labels.size()) + " records, " + std::to_string(tc.epochs) + " epochs, batch " +
        std::to_string(tc.batch_size));
    const auto res = contrastive::train_toy(d.features, d.captions, tc);

    StageOutput out(out_dir, "train-toy");
    contrastive::save_checkpoint(out_dir / "model.ckpt", res.model);
    std::vector<json> curve;
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) curve.push_back({{"epoch", e + 1}, {"mean_loss", res.epoch_loss[e]}});
    manifest::write_jsonl(out_dir / "loss_curve.jsonl", curve);
    out.commit();
    log("train-toy: loss " + fixed(res.epoch_loss.front()) + " -> " + fixed(res.epoch_loss.back()) +
        ", logit_scale " + fixed(res.model.temperature.logit_scale()));
    return {d.labels.size(), res.epoch_loss};
}

std::size_t run_embed(const Config& config, const fs::path& checkpoint, const fs::path& manifest_path,
                      const fs::path& out_dir) {
    require_file(checkpoint, "checkpoint");
    const auto model = contrastive::load_checkpoint(checkpoint);
    const Dataset d = load_dataset(config, manifest_path);
    const auto names = sorted_unique(d.labels);

    StageOutput out(out_dir, "embed");
    contrastive::save_embeddings(out_dir / "image_embeddings.bin", model.encode_images(d.features));
    contrastive::save_embeddings(out_dir / "text_embeddings.bin", model.encode_texts(names));
    const json index = {{"image_labels", d.labels}, {"text_labels", names}};
    write_file_atomic(out_dir / "embeddings_index.json", index.dump(1) + "\n");
    out.commit();
    log("embed: " + std::to_string(d.labels.size()) + " images, " + std::to_string(names.size()) + " label texts");
    return d.labels.size();
}

ClassifySummary run_eval_classify(const Config& config, const fs::path& checkpoint, const fs::path& manifest_path,
                                  const fs::path& out_dir, const std::optional<fs::path>& labels_manifest) {
    require_file(checkpoint, "checkpoint");
    const auto model = contrastive::load_checkpoint(checkpoint);
    const Dataset d = load_dataset(config, manifest_path);
    std::vector<std::string> names = d.labels;
    if (labels_manifest) {
        require_file(*labels_manifest, "label manifest");
        std::visit([&](const auto& recs) { for (const auto& r : recs) names.push_back(r.label); },
                   manifest::load_records(*labels_manifest));
    }
    names = sorted_unique(std::move(names));

    const auto text = model.encode_texts(names);
    const auto images = model.encode_images(d.features);
    std::vector<std::vector<eval::RankedLabel>> ranked(d.labels.size());
    parallel_for(ranked.size(), config.jobs,
                 [&](std::size_t i) { ranked[i] = eval::classify_zero_shot(images.row(i), text, names); });
    std::vector<std::string> top1;
    for (const auto& r : ranked) top1.push_back(r.front().label);
    const auto single = eval::weighted_prf(top1, d.labels);
    const auto multi = eval::multi_label_hit_rate(ranked, d.multi_labels);

    StageOutput out(out_dir, "eval-classify");
    const json doc = {{"labels", names},
                      {"weighted_f1", single.f1},
                      {"multi_label_weighted_f1", multi.report.f1},
                      {"single_label", class_table(single)},
                      {"multi_label", class_table(multi.report)}};
    write_file_atomic(out_dir / "classify_report.json", doc.dump(1) + "\n");

    std::string txt = "Region classification (weighted average)\n";
    txt += pad("Evaluation", 16) + pad("Precision", 11) + pad("Recall", 11) + "F1\n";
    txt += pad("single-label", 16) + pad(fixed(single.precision, 3), 11) + pad(fixed(single.recall, 3), 11) +
           fixed(single.f1, 3) + "\n";
    txt += pad("multi-label", 16) + pad(fixed(multi.report.precision, 3), 11) + pad(fixed(multi.report.recall, 3), 11) +
           fixed(multi.report.f1, 3) + "\n\nPer class (single-label)\n";
    std::size_t w = 8;
    for (const auto& [name, st] : single.per_class) w = std::max(w, name.size() + 2);
    txt += pad("Label", w) + pad("Support", 9) + pad("Precision", 11) + pad("Recall", 11) + "F1\n";
    for (const auto& [name, st] : single.per_class)
        txt += pad(name, w) + pad(std::to_string(st.support), 9) + pad(fixed(st.precision, 3), 11) +
               pad(fixed(st.recall, 3), 11) + fixed(st.f1, 3) + "\n";
    write_file_atomic(out_dir / "classify_report.txt", txt);
    out.commit();

    ClassifySummary s{single.samples, names.size(), single.precision, single.recall, single.f1, single.accuracy,
                      multi.report.precision, multi.report.recall, multi.report.f1};
    log("eval-classify: weighted F1 " + fixed(s.f1) + " (multi-label " + fixed(s.multi_f1) + ") over " +
        std::to_string(s.samples) + " records");
    return s;
}

RetrievalSummary run_eval_retrieval(const Config& config, const fs::path& checkpoint, const fs::path& manifest_path,
                                    const fs::path& out_dir) {
    require_file(checkpoint, "checkpoint");
    const auto model = contrastive::load_checkpoint(checkpoint);
    const Dataset d = load_dataset(config, manifest_path);
    const auto names = sorted_unique(d.labels);
    const auto text = model.encode_texts(names);
    const auto images = model.encode_images(d.features);

    RetrievalSummary s;
    s.k = config.recall_k;
    json rows = json::array();
    std::string txt = "Recall@K retrieval\n" + pad("Task", 16);
    for (auto k : s.k) txt += pad("R@" + std::to_string(k), 9);
    txt += "\n";
    auto task = [&](const char* name, std::vector<double>& into, auto&& run) {
        std::vector<eval::RecallResult> results(s.k.size());
        parallel_for(s.k.size(), config.jobs, [&](std::size_t i) { results[i] = run(s.k[i]); });
        json cells = json::object();
        txt += pad(name, 16);
        for (std::size_t i = 0; i < s.k.size(); ++i) {
            into.push_back(results[i].recall);
            cells["R@" + std::to_string(s.k[i])] = {{"recall", results[i].recall},
                                                   {"queries", results[i].queries_counted},
                                                   {"queries_without_relevant", results[i].queries_without_relevant}};
            txt += pad(fixed(results[i].recall, 3), 9);
        }
        txt += "\n";
        rows.push_back({{"task", name}, {"results", cells}});
    };
    task("image-to-text", s.image_to_text, [&](std::size_t k) { return eval::recall_at_k(images, text, d.labels, names, k); });
    task("text-to-image", s.text_to_image, [&](std::size_t k) { return eval::recall_at_k(text, images, names, d.labels, k); });
    task("image-to-image", s.image_to_image,
         [&](std::size_t k) { return eval::recall_at_k(images, images, d.labels, d.labels, k, true); });

    StageOutput out(out_dir, "eval-retrieval");
    write_file_atomic(out_dir / "retrieval_report.json", json({{"labels", names}, {"tasks", rows}}).dump(1) + "\n");
    write_file_atomic(out_dir / "retrieval_report.txt", txt);
    out.commit();
    log("eval-retrieval: " + std::to_string(d.labels.size()) + " images, " + std::to_string(names.size()) + " labels");
    return s;
}

SegmentSummary run_segment(const Config& config, const fs::path& checkpoint, const fs::path& tile_manifest,
                           const std::string& section_id, const std::optional<fs::path>& sections_dir,
                           const fs::path& out_dir) {
    require_file(checkpoint, "checkpoint");
    require_file(tile_manifest, "tile manifest");
    const auto model = contrastive::load_checkpoint(checkpoint);
    const auto records = manifest::load_records(tile_manifest);
    const auto* all = std::get_if<std::vector<tiles::TileRecord>>(&records);
    if (!all) fail(ErrorKind::InvalidArgument, "segment needs a tile manifest: " + tile_manifest.string());

    std::vector<std::string> names;
    std::vector<tiles::TileRecord> tiles;
    for (const auto& r : *all) {
        names.push_back(r.label);
        if (r.section_id == section_id) tiles.push_back(r);
    }
    if (tiles.empty()) fail(ErrorKind::Domain, "no tiles for section " + section_id + " in " + tile_manifest.string());
    names = sorted_unique(std::move(names));
    if (names.size() >= 0xffff) fail(ErrorKind::Domain, "too many labels for a 16-bit label map");
    std::map<std::string, std::uint16_t> ids;
    for (std::size_t i = 0; i < names.size(); ++i) ids[names[i]] = static_cast<std::uint16_t>(i + 1);

    std::optional<AnnotatedSection> section;
    if (sections_dir) {
        require_complete(*sections_dir);
        const fs::path p = *sections_dir / (section_id + ".geojson");
        if (!fs::is_regular_file(p)) fail(ErrorKind::Io, "missing section annotation: " + p.string());
        section = load_annotation(p);
    }
    std::size_t width = 0, height = 0;
    if (section) {
        width = section->width;
        height = section->height;
    } else {
        for (const auto& t : tiles) {
            width = std::max(width, static_cast<std::size_t>(t.bbox.x1));
            height = std::max(height, static_cast<std::size_t>(t.bbox.y1));
        }
    }

    const auto feats = tile_features(tiles, manifest_dir(tile_manifest), config);
    const auto text = model.encode_texts(names);
    const auto images = model.encode_images(feats);
    std::vector<std::uint16_t> predicted(tiles.size()), oracle(tiles.size());
    parallel_for(tiles.size(), config.jobs, [&](std::size_t i) {
        predicted[i] = ids.at(eval::classify_zero_shot(images.row(i), text, names).front().label);
    });
    double overlap_sum = 0.0;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        oracle[i] = ids.at(tiles[i].label);
        overlap_sum += tiles[i].overlap;
    }
    const auto map = eval::coarse_segmentation(tiles, predicted, width, height);

    SegmentSummary s;
    s.tiles = tiles.size();
    s.mean_tile_overlap = overlap_sum / static_cast<double>(tiles.size());
    if (section) {
        const auto tree = load_taxonomy(config).tree;
        const auto truth = eval::rasterize_ground_truth(*section, tree, ids);
        s.agreement = eval::pixel_agreement(map, truth).fraction;
        s.oracle_agreement = eval::pixel_agreement(eval::coarse_segmentation(tiles, oracle, width, height), truth).fraction;
    }

    StageOutput out(out_dir, "segment");
    write_pgm16(out_dir / (section_id + "_segmentation.pgm"), width, height, map.ids);
    json legend = json::object();
    legend[std::to_string(eval::kBackgroundLabel)] = "background";
    for (const auto& [name, id] : ids) legend[std::to_string(id)] = name;
    json report = {{"section_id", section_id},
                   {"tiles", s.tiles},
                   {"mean_tile_overlap", s.mean_tile_overlap},
                   {"legend", legend},
                   {"pixel_agreement", s.agreement ? json(*s.agreement) : json(nullptr)},
                   {"oracle_pixel_agreement", s.oracle_agreement ? json(*s.oracle_agreement) : json(nullptr)}};
    write_file_atomic(out_dir / (section_id + "_segmentation.json"), report.dump(1) + "\n");
    out.commit();
    log("segment: " + section_id + ", " + std::to_string(s.tiles) + " tiles" +
        (s.agreement ? ", pixel agreement " + fixed(*s.agreement) : std::string()));
    return s;
}

} // namespace cytoclip::pipeline
