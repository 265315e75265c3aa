#include "cytoclip/cytoclip.h"

#include "contrastive.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "nomenclature.hpp"
#include "pipeline.hpp"

#include <cstring>
#include <new>
#include <string>

struct cyto_config {
    cytoclip::pipeline::Config config;
};

struct cyto_taxonomy {
    cytoclip::nomenclature::NomenclatureTree tree;
    cytoclip::nomenclature::MergePolicy policy;
};

namespace {

thread_local std::string g_last_error;

cyto_status status_of(cytoclip::ErrorKind k) {
    using cytoclip::ErrorKind;
    switch (k) {
    case ErrorKind::InvalidArgument: return CYTO_ERR_INVALID_ARGUMENT;
    case ErrorKind::Parse: return CYTO_ERR_PARSE;
    case ErrorKind::Io: return CYTO_ERR_IO;
    case ErrorKind::Domain: return CYTO_ERR_DOMAIN;
    case ErrorKind::Shape: return CYTO_ERR_SHAPE;
    }
    return CYTO_ERR_INTERNAL;
}

template <typename Fn>
cyto_status guarded(Fn&& fn) {
    g_last_error.clear();
    try {
        fn();
        return CYTO_OK;
    } catch (const cytoclip::Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        g_last_error = e.what();
        return CYTO_ERR_IO;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return CYTO_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return CYTO_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return CYTO_ERR_INTERNAL;
    }
}

void need(const void* p, const char* name) {
    if (!p) cytoclip::fail(cytoclip::ErrorKind::InvalidArgument, std::string(name) + " must not be NULL");
}

char* dup(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

cytoclip::contrastive::Matrix matrix(const double* data, std::size_t rows, std::size_t cols) {
    cytoclip::contrastive::Matrix m(rows, cols);
    if (rows * cols != 0) std::memcpy(m.data.data(), data, rows * cols * sizeof(double));
    return m;
}

std::vector<std::string> strings(const char* const* s, std::size_t n, const char* name) {
    need(s, name);
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        need(s[i], name);
        out.emplace_back(s[i]);
    }
    return out;
}

const cytoclip::pipeline::Config& cfg(const cyto_config* c) {
    need(c, "config");
    return c->config;
}

} // namespace

extern "C" {

const char* cyto_last_error(void) { return g_last_error.c_str(); }

const char* cyto_status_name(cyto_status s) {
    switch (s) {
    case CYTO_OK: return "ok";
    case CYTO_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CYTO_ERR_PARSE: return "parse error";
    case CYTO_ERR_IO: return "i/o error";
    case CYTO_ERR_DOMAIN: return "domain error";
    case CYTO_ERR_SHAPE: return "shape mismatch";
    case CYTO_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* cyto_version(void) { return "0.1.0"; }

void cyto_string_free(char* s) { delete[] s; }

cyto_status cyto_config_default(cyto_config** out) {
    return guarded([&] {
        need(out, "out");
        *out = new cyto_config{cytoclip::pipeline::default_config()};
    });
}

cyto_status cyto_config_load(const char* path, cyto_config** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = nullptr;
        *out = new cyto_config{cytoclip::pipeline::load_config(path)};
    });
}

cyto_status cyto_config_parse(const char* json_text, const char* base_dir, cyto_config** out) {
    return guarded([&] {
        need(json_text, "json_text");
        need(out, "out");
        *out = nullptr;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(json_text);
        } catch (const nlohmann::json::parse_error& e) {
            cytoclip::fail(cytoclip::ErrorKind::Parse, std::string("config: ") + e.what());
        }
        *out = new cyto_config{cytoclip::pipeline::parse_config(doc, base_dir ? base_dir : ".")};
    });
}

void cyto_config_free(cyto_config* config) { delete config; }

cyto_status cyto_config_set_seed(cyto_config* config, uint64_t seed) {
    return guarded([&] {
        need(config, "config");
        config->config.seed = seed;
    });
}

cyto_status cyto_config_set_jobs(cyto_config* config, unsigned jobs) {
    return guarded([&] {
        need(config, "config");
        if (jobs == 0) cytoclip::fail(cytoclip::ErrorKind::InvalidArgument, "jobs must be >= 1");
        config->config.jobs = jobs;
    });
}

cyto_status cyto_config_to_json(const cyto_config* config, char** out_json) {
    return guarded([&] {
        need(out_json, "out_json");
        *out_json = dup(cytoclip::pipeline::config_to_json(cfg(config)).dump(2));
    });
}

cyto_status cyto_taxonomy_load(const char* taxonomy_path, const char* policy_path, cyto_taxonomy** out) {
    return guarded([&] {
        need(taxonomy_path, "taxonomy_path");
        need(policy_path, "policy_path");
        need(out, "out");
        *out = nullptr;
        auto tree = cytoclip::nomenclature::load_nomenclature(taxonomy_path);
        auto policy = cytoclip::nomenclature::load_policy(policy_path);
        policy.validate(tree);
        *out = new cyto_taxonomy{std::move(tree), std::move(policy)};
    });
}

void cyto_taxonomy_free(cyto_taxonomy* taxonomy) { delete taxonomy; }

cyto_status cyto_taxonomy_resolve(const cyto_taxonomy* taxonomy, const char* region_id, char** out_label) {
    return guarded([&] {
        need(taxonomy, "taxonomy");
        need(region_id, "region_id");
        need(out_label, "out_label");
        *out_label = nullptr;
        if (!taxonomy->tree.contains(region_id))
            cytoclip::fail(cytoclip::ErrorKind::InvalidArgument, std::string("unknown region id ") + region_id);
        if (auto l = cytoclip::nomenclature::resolve_label(taxonomy->tree, taxonomy->policy, region_id))
            *out_label = dup(*l);
    });
}

cyto_status cyto_taxonomy_label_count(const cyto_taxonomy* taxonomy, size_t* out_count) {
    return guarded([&] {
        need(taxonomy, "taxonomy");
        need(out_count, "out_count");
        *out_count = cytoclip::nomenclature::distinct_leaf_labels(taxonomy->tree, taxonomy->policy).size();
    });
}

cyto_status cyto_taxonomy_max_depth(const cyto_taxonomy* taxonomy, size_t* out_depth) {
    return guarded([&] {
        need(taxonomy, "taxonomy");
        need(out_depth, "out_depth");
        *out_depth = taxonomy->tree.max_depth();
    });
}

cyto_status cyto_symmetric_ce_loss(const double* sim, size_t n, double tau, double* out_loss) {
    return guarded([&] {
        need(sim, "sim");
        need(out_loss, "out_loss");
        *out_loss = cytoclip::contrastive::symmetric_ce_loss(matrix(sim, n, n), tau);
    });
}

cyto_status cyto_loss_gradients(const double* image, const double* text, size_t n, size_t d, double logit_scale,
                                double* out_loss, double* d_image, double* d_text, double* d_logit_scale) {
    return guarded([&] {
        need(image, "image");
        need(text, "text");
        const auto g = cytoclip::contrastive::loss_gradients(matrix(image, n, d), matrix(text, n, d), logit_scale);
        if (out_loss) *out_loss = g.loss;
        if (d_image) std::memcpy(d_image, g.d_image.data.data(), g.d_image.data.size() * sizeof(double));
        if (d_text) std::memcpy(d_text, g.d_text.data.data(), g.d_text.data.size() * sizeof(double));
        if (d_logit_scale) *d_logit_scale = g.d_logit_scale;
    });
}

cyto_status cyto_recall_at_k(const double* queries, size_t n_queries, const double* corpus, size_t n_corpus, size_t d,
                             const char* const* query_labels, const char* const* corpus_labels, size_t k,
                             int exclude_self, double* out_recall, size_t* out_counted, size_t* out_without_relevant) {
    return guarded([&] {
        need(queries, "queries");
        need(corpus, "corpus");
        need(out_recall, "out_recall");
        const auto ql = strings(query_labels, n_queries, "query_labels");
        const auto cl = strings(corpus_labels, n_corpus, "corpus_labels");
        const auto r = cytoclip::eval::recall_at_k(matrix(queries, n_queries, d), matrix(corpus, n_corpus, d), ql, cl,
                                                   k, exclude_self != 0);
        *out_recall = r.recall;
        if (out_counted) *out_counted = r.queries_counted;
        if (out_without_relevant) *out_without_relevant = r.queries_without_relevant;
    });
}

cyto_status cyto_run_parse_taxonomy(const cyto_config* config, const char* out_dir, cyto_taxonomy_summary* summary) {
    return guarded([&] {
        need(out_dir, "out_dir");
        const auto s = cytoclip::pipeline::run_parse_taxonomy(cfg(config), out_dir);
        if (summary) *summary = {s.nodes, s.roots, s.max_depth, s.leaves, s.labels.size()};
    });
}

cyto_status cyto_run_synth(const cyto_config* config, const char* out_dir, size_t* sections) {
    return guarded([&] {
        need(out_dir, "out_dir");
        const auto n = cytoclip::pipeline::run_synth(cfg(config), out_dir);
        if (sections) *sections = n;
    });
}

cyto_status cyto_run_prep_regions(const cyto_config* config, const char* sections_dir, const char* out_dir,
                                  size_t* records) {
    return guarded([&] {
        need(sections_dir, "sections_dir");
        need(out_dir, "out_dir");
        const auto n = cytoclip::pipeline::run_prep_regions(cfg(config), sections_dir, out_dir);
        if (records) *records = n;
    });
}

cyto_status cyto_run_prep_tiles(const cyto_config* config, const char* sections_dir, const char* out_dir,
                                size_t* records) {
    return guarded([&] {
        need(sections_dir, "sections_dir");
        need(out_dir, "out_dir");
        const auto n = cytoclip::pipeline::run_prep_tiles(cfg(config), sections_dir, out_dir);
        if (records) *records = n;
    });
}

cyto_status cyto_run_split(const cyto_config* config, const char* manifest, const char* out_dir,
                           cyto_split_summary* summary) {
    return guarded([&] {
        need(manifest, "manifest");
        need(out_dir, "out_dir");
        const auto s = cytoclip::pipeline::run_split(cfg(config), manifest, out_dir);
        if (summary) *summary = {s.train, s.val, s.uncovered_labels.size()};
    });
}

cyto_status cyto_run_train_toy(const cyto_config* config, const char* manifest, const char* out_dir,
                               cyto_train_summary* summary) {
    return guarded([&] {
        need(manifest, "manifest");
        need(out_dir, "out_dir");
        const auto s = cytoclip::pipeline::run_train(cfg(config), manifest, out_dir);
        if (summary) *summary = {s.records, s.epoch_loss.size(), s.epoch_loss.front(), s.epoch_loss.back()};
    });
}

cyto_status cyto_run_embed(const cyto_config* config, const char* checkpoint, const char* manifest,
                           const char* out_dir, size_t* records) {
    return guarded([&] {
        need(checkpoint, "checkpoint");
        need(manifest, "manifest");
        need(out_dir, "out_dir");
        const auto n = cytoclip::pipeline::run_embed(cfg(config), checkpoint, manifest, out_dir);
        if (records) *records = n;
    });
}

cyto_status cyto_run_eval_classify(const cyto_config* config, const char* checkpoint, const char* manifest,
                                   const char* labels_manifest, const char* out_dir, cyto_classify_summary* summary) {
    return guarded([&] {
        need(checkpoint, "checkpoint");
        need(manifest, "manifest");
        need(out_dir, "out_dir");
        std::optional<std::filesystem::path> labels;
        if (labels_manifest) labels = labels_manifest;
        const auto s = cytoclip::pipeline::run_eval_classify(cfg(config), checkpoint, manifest, out_dir, labels);
        if (summary)
            *summary = {s.samples, s.labels, s.precision, s.recall, s.f1, s.accuracy,
                        s.multi_precision, s.multi_recall, s.multi_f1};
    });
}

cyto_status cyto_run_eval_retrieval(const cyto_config* config, const char* checkpoint, const char* manifest,
                                    const char* out_dir, cyto_retrieval_summary* summary) {
    return guarded([&] {
        need(checkpoint, "checkpoint");
        need(manifest, "manifest");
        need(out_dir, "out_dir");
        if (cfg(config).recall_k.size() > CYTO_MAX_K)
            cytoclip::fail(cytoclip::ErrorKind::InvalidArgument, "at most CYTO_MAX_K recall cut-offs");
        const auto s = cytoclip::pipeline::run_eval_retrieval(cfg(config), checkpoint, manifest, out_dir);
        if (summary) {
            *summary = {};
            summary->count = s.k.size();
            for (std::size_t i = 0; i < s.k.size(); ++i) {
                summary->k[i] = s.k[i];
                summary->image_to_text[i] = s.image_to_text[i];
                summary->text_to_image[i] = s.text_to_image[i];
                summary->image_to_image[i] = s.image_to_image[i];
            }
        }
    });
}

cyto_status cyto_run_segment(const cyto_config* config, const char* checkpoint, const char* tile_manifest,
                             const char* section_id, const char* sections_dir, const char* out_dir,
                             cyto_segment_summary* summary) {
    return guarded([&] {
        need(checkpoint, "checkpoint");
        need(tile_manifest, "tile_manifest");
        need(section_id, "section_id");
        need(out_dir, "out_dir");
        std::optional<std::filesystem::path> sections;
        if (sections_dir) sections = sections_dir;
        const auto s = cytoclip::pipeline::run_segment(cfg(config), checkpoint, tile_manifest, section_id, sections, out_dir);
        if (summary)
            *summary = {s.tiles, s.mean_tile_overlap, s.agreement.has_value() ? 1 : 0, s.agreement.value_or(0.0),
                        s.oracle_agreement.value_or(0.0)};
    });
}

} // extern "C"
