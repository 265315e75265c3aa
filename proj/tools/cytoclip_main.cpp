#include "cytoclip/cytoclip.h"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

int report(cyto_status s, const char* what) {
    if (s == CYTO_OK) return kExitOk;
    std::cerr << "cytoclip: " << what << " failed (" << cyto_status_name(s) << "): " << cyto_last_error() << '\n';
    return kExitDomain;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cytoclip: region/tile dataset preparation, toy contrastive training and evaluation"};
    app.fallthrough();
    app.require_subcommand(1);

    std::string config_path;
    std::optional<unsigned> jobs;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "cytoclip_out";
    bool print_config = false;
    app.add_option("--config", config_path, "Config file (JSON); overrides $CYTOCLIP_CONFIG");
    app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
    app.add_flag("--print-config", print_config, "Print the effective config to stdout before running");

    std::string sections, manifest, checkpoint, labels_from, section_id;
    std::function<int(const cyto_config*)> action;

    auto* sub = app.add_subcommand("parse-taxonomy", "Summarise the taxonomy and its label mapping");
    sub->callback([&] {
        action = [&](const cyto_config* c) {
            cyto_taxonomy_summary s{};
            const int rc = report(cyto_run_parse_taxonomy(c, out_dir.c_str(), &s), "parse-taxonomy");
            if (rc == kExitOk)
                std::printf("nodes %zu, roots %zu, max depth %zu, leaves %zu, distinct labels %zu\n", s.nodes, s.roots,
                            s.max_depth, s.leaves, s.labels);
            return rc;
        };
    });

    sub = app.add_subcommand("synth", "Generate synthetic annotated sections");
    sub->callback([&] {
        action = [&](const cyto_config* c) {
            size_t n = 0;
            const int rc = report(cyto_run_synth(c, out_dir.c_str(), &n), "synth");
            if (rc == kExitOk) std::printf("sections %zu\n", n);
            return rc;
        };
    });

    for (const char* name : {"prep-regions", "prep-tiles"}) {
        const bool tiles = std::string(name) == "prep-tiles";
        sub = app.add_subcommand(name, tiles ? "Tile sections at full resolution" : "Extract whole-region crops");
        sub->add_option("--sections", sections, "Directory of section annotations")->required();
        sub->callback([&, tiles, name] {
            action = [&, tiles, name](const cyto_config* c) {
                size_t n = 0;
                const auto s = tiles ? cyto_run_prep_tiles(c, sections.c_str(), out_dir.c_str(), &n)
                                     : cyto_run_prep_regions(c, sections.c_str(), out_dir.c_str(), &n);
                const int rc = report(s, name);
                if (rc == kExitOk) std::printf("records %zu\n", n);
                return rc;
            };
        });
    }

    sub = app.add_subcommand("split", "80:20 train/validation split of a manifest");
    sub->add_option("--manifest", manifest, "Input manifest")->required();
    sub->callback([&] {
        action = [&](const cyto_config* c) {
            cyto_split_summary s{};
            const int rc = report(cyto_run_split(c, manifest.c_str(), out_dir.c_str(), &s), "split");
            if (rc == kExitOk) std::printf("train %zu, val %zu, uncovered labels %zu\n", s.train, s.val, s.uncovered_labels);
            return rc;
        };
    });

    sub = app.add_subcommand("train-toy", "Train the toy dual encoder");
    sub->add_option("--manifest", manifest, "Training manifest")->required();
    sub->callback([&] {
        action = [&](const cyto_config* c) {
            cyto_train_summary s{};
            const int rc = report(cyto_run_train_toy(c, manifest.c_str(), out_dir.c_str(), &s), "train-toy");
            if (rc == kExitOk)
                std::printf("records %zu, epochs %zu, loss %.6f -> %.6f\n", s.records, s.epochs, s.first_loss, s.last_loss);
            return rc;
        };
    });

    sub = app.add_subcommand("embed", "Write image and label-text embeddings");
    sub->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    sub->add_option("--manifest", manifest, "Manifest to embed")->required();
    sub->callback([&] {
        action = [&](const cyto_config* c) {
            size_t n = 0;
            const int rc = report(cyto_run_embed(c, checkpoint.c_str(), manifest.c_str(), out_dir.c_str(), &n), "embed");
            if (rc == kExitOk) std::printf("records %zu\n", n);
            return rc;
        };
    });

    sub = app.add_subcommand("eval-classify", "Zero-shot region classification report");
    sub->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    sub->add_option("--manifest", manifest, "Evaluation manifest")->required();
    sub->add_option("--labels-from", labels_from, "Extra manifest whose labels join the candidate set");
    sub->callback([&] {
        action = [&](const cyto_config* c) {
            cyto_classify_summary s{};
            const int rc = report(cyto_run_eval_classify(c, checkpoint.c_str(), manifest.c_str(), opt(labels_from),
                                                         out_dir.c_str(), &s),
                                  "eval-classify");
            if (rc == kExitOk)
                std::printf("samples %zu, labels %zu\nweighted precision %.4f recall %.4f f1 %.4f\n"
                            "multi-label precision %.4f recall %.4f f1 %.4f\n",
                            s.samples, s.labels, s.precision, s.recall, s.f1, s.multi_precision, s.multi_recall,
                            s.multi_f1);
            return rc;
        };
    });

    sub = app.add_subcommand("eval-retrieval", "Recall@K for image/text retrieval");
    sub->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    sub->add_option("--manifest", manifest, "Evaluation manifest")->required();
    sub->callback([&] {
        action = [&](const cyto_config* c) {
            cyto_retrieval_summary s{};
            const int rc = report(cyto_run_eval_retrieval(c, checkpoint.c_str(), manifest.c_str(), out_dir.c_str(), &s),
                                  "eval-retrieval");
            if (rc == kExitOk)
                for (size_t i = 0; i < s.count; ++i)
                    std::printf("R@%zu image-to-text %.4f text-to-image %.4f image-to-image %.4f\n", s.k[i],
                                s.image_to_text[i], s.text_to_image[i], s.image_to_image[i]);
            return rc;
        };
    });

    sub = app.add_subcommand("segment", "Coarse segmentation of one section from tile predictions");
    sub->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    sub->add_option("--manifest", manifest, "Tile manifest")->required();
    sub->add_option("--section-id", section_id, "Section to segment")->required();
    sub->add_option("--sections", sections, "Directory of section annotations (enables pixel agreement)");
    sub->callback([&] {
        action = [&](const cyto_config* c) {
            cyto_segment_summary s{};
            const int rc = report(cyto_run_segment(c, checkpoint.c_str(), manifest.c_str(), section_id.c_str(),
                                                   opt(sections), out_dir.c_str(), &s),
                                  "segment");
            if (rc == kExitOk) {
                std::printf("tiles %zu, mean tile overlap %.4f\n", s.tiles, s.mean_tile_overlap);
                if (s.has_agreement)
                    std::printf("pixel agreement %.4f (oracle predictions %.4f)\n", s.agreement, s.oracle_agreement);
            }
            return rc;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (config_path.empty())
        if (const char* env = std::getenv("CYTOCLIP_CONFIG"); env && *env) config_path = env;

    cyto_config* config = nullptr;
    const cyto_status loaded = config_path.empty() ? cyto_config_default(&config) : cyto_config_load(config_path.c_str(), &config);
    if (loaded != CYTO_OK) {
        std::cerr << "cytoclip: bad config " << config_path << ": " << cyto_last_error() << '\n';
        return kExitUsage;
    }
    if (seed) cyto_config_set_seed(config, *seed);
    if (jobs) cyto_config_set_jobs(config, *jobs);
    if (print_config) {
        char* text = nullptr;
        if (cyto_config_to_json(config, &text) == CYTO_OK) {
            std::printf("%s\n", text);
            cyto_string_free(text);
        }
    }

    const int rc = action(config);
    cyto_config_free(config);
    return rc;
}
