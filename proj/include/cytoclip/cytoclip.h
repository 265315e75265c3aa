#ifndef CYTOCLIP_CYTOCLIP_H
#define CYTOCLIP_CYTOCLIP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define CYTO_API __declspec(dllexport)
#else
#define CYTO_API __attribute__((visibility("default")))
#endif

typedef enum cyto_status {
    CYTO_OK = 0,
    CYTO_ERR_INVALID_ARGUMENT = 1,
    CYTO_ERR_PARSE = 2,
    CYTO_ERR_IO = 3,
    CYTO_ERR_DOMAIN = 4,
    CYTO_ERR_SHAPE = 5,
    CYTO_ERR_INTERNAL = 6
} cyto_status;

/* Message of the last failed call on this thread; "" if none. Valid until the
   next call on the same thread. */
CYTO_API const char* cyto_last_error(void);
CYTO_API const char* cyto_status_name(cyto_status status);
CYTO_API const char* cyto_version(void);

/* Strings returned through char** out-parameters are released with this. */
CYTO_API void cyto_string_free(char* s);

/* ---- configuration ---- */

typedef struct cyto_config cyto_config;

CYTO_API cyto_status cyto_config_default(cyto_config** out);
CYTO_API cyto_status cyto_config_load(const char* path, cyto_config** out);
CYTO_API cyto_status cyto_config_parse(const char* json_text, const char* base_dir, cyto_config** out);
CYTO_API void cyto_config_free(cyto_config* config);
CYTO_API cyto_status cyto_config_set_seed(cyto_config* config, uint64_t seed);
CYTO_API cyto_status cyto_config_set_jobs(cyto_config* config, unsigned jobs);
CYTO_API cyto_status cyto_config_to_json(const cyto_config* config, char** out_json);

/* ---- taxonomy ---- */

typedef struct cyto_taxonomy cyto_taxonomy;

CYTO_API cyto_status cyto_taxonomy_load(const char* taxonomy_path, const char* policy_path, cyto_taxonomy** out);
CYTO_API void cyto_taxonomy_free(cyto_taxonomy* taxonomy);
/* *out_label is NULL when the region lies under an excluded root. */
CYTO_API cyto_status cyto_taxonomy_resolve(const cyto_taxonomy* taxonomy, const char* region_id, char** out_label);
CYTO_API cyto_status cyto_taxonomy_label_count(const cyto_taxonomy* taxonomy, size_t* out_count);
CYTO_API cyto_status cyto_taxonomy_max_depth(const cyto_taxonomy* taxonomy, size_t* out_depth);

/* ---- numerics (row-major double buffers) ---- */

/* sim is n x n cosine similarities. */
CYTO_API cyto_status cyto_symmetric_ce_loss(const double* sim, size_t n, double tau, double* out_loss);

/* image/text are n x d raw embeddings; d_image/d_text receive n x d gradients. */
CYTO_API cyto_status cyto_loss_gradients(const double* image, const double* text, size_t n, size_t d,
                                         double logit_scale, double* out_loss, double* d_image, double* d_text,
                                         double* d_logit_scale);

CYTO_API cyto_status cyto_recall_at_k(const double* queries, size_t n_queries, const double* corpus, size_t n_corpus,
                                      size_t d, const char* const* query_labels, const char* const* corpus_labels,
                                      size_t k, int exclude_self, double* out_recall, size_t* out_counted,
                                      size_t* out_without_relevant);

/* ---- pipeline stages ---- */

typedef struct cyto_taxonomy_summary {
    size_t nodes;
    size_t roots;
    size_t max_depth;
    size_t leaves;
    size_t labels;
} cyto_taxonomy_summary;

typedef struct cyto_split_summary {
    size_t train;
    size_t val;
    size_t uncovered_labels;
} cyto_split_summary;

typedef struct cyto_train_summary {
    size_t records;
    size_t epochs;
    double first_loss;
    double last_loss;
} cyto_train_summary;

typedef struct cyto_classify_summary {
    size_t samples;
    size_t labels;
    double precision;
    double recall;
    double f1;
    double accuracy;
    double multi_precision;
    double multi_recall;
    double multi_f1;
} cyto_classify_summary;

#define CYTO_MAX_K 16

typedef struct cyto_retrieval_summary {
    size_t count;
    size_t k[CYTO_MAX_K];
    double image_to_text[CYTO_MAX_K];
    double text_to_image[CYTO_MAX_K];
    double image_to_image[CYTO_MAX_K];
} cyto_retrieval_summary;

typedef struct cyto_segment_summary {
    size_t tiles;
    double mean_tile_overlap;
    int has_agreement;
    double agreement;
    double oracle_agreement;
} cyto_segment_summary;

/* Summary pointers may be NULL. Nullable path arguments are marked. */
CYTO_API cyto_status cyto_run_parse_taxonomy(const cyto_config* config, const char* out_dir,
                                             cyto_taxonomy_summary* summary);
CYTO_API cyto_status cyto_run_synth(const cyto_config* config, const char* out_dir, size_t* sections);
CYTO_API cyto_status cyto_run_prep_regions(const cyto_config* config, const char* sections_dir, const char* out_dir,
                                           size_t* records);
CYTO_API cyto_status cyto_run_prep_tiles(const cyto_config* config, const char* sections_dir, const char* out_dir,
                                         size_t* records);
CYTO_API cyto_status cyto_run_split(const cyto_config* config, const char* manifest, const char* out_dir,
                                    cyto_split_summary* summary);
CYTO_API cyto_status cyto_run_train_toy(const cyto_config* config, const char* manifest, const char* out_dir,
                                        cyto_train_summary* summary);
CYTO_API cyto_status cyto_run_embed(const cyto_config* config, const char* checkpoint, const char* manifest,
                                    const char* out_dir, size_t* records);
/* labels_manifest: nullable. */
CYTO_API cyto_status cyto_run_eval_classify(const cyto_config* config, const char* checkpoint, const char* manifest,
                                            const char* labels_manifest, const char* out_dir,
                                            cyto_classify_summary* summary);
CYTO_API cyto_status cyto_run_eval_retrieval(const cyto_config* config, const char* checkpoint, const char* manifest,
                                             const char* out_dir, cyto_retrieval_summary* summary);
/* sections_dir: nullable. */
CYTO_API cyto_status cyto_run_segment(const cyto_config* config, const char* checkpoint, const char* tile_manifest,
                                      const char* section_id, const char* sections_dir, const char* out_dir,
                                      cyto_segment_summary* summary);

#ifdef __cplusplus
}
#endif

#endif
