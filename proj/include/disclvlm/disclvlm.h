/* Copyright 2026 The disclvlm Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to disclvlm: run pipeline subcommands and query trained models.
 * Every call returns DL_OK or an error status; the message of the last failure
 * on the calling thread is available from dl_last_error(). Strings returned
 * through char** are owned by the caller and released with dl_free_string().
 */

#ifndef DISCLVLM_DISCLVLM_H_
#define DISCLVLM_DISCLVLM_H_

#include <stddef.h>

#if defined(_WIN32)
#define DL_API __declspec(dllexport)
#elif defined(__GNUC__)
#define DL_API __attribute__((visibility("default")))
#else
#define DL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dl_status {
    DL_OK = 0,
    DL_ERR_LENGTH = 1,
    DL_ERR_NUMERIC = 2,
    DL_ERR_TEMPLATE = 3,
    DL_ERR_SHAPE = 4,
    DL_ERR_VOCABULARY = 5,
    DL_ERR_PARAMETER = 6,
    DL_ERR_CONTRACT = 7,
    DL_ERR_DEGENERATE = 8,
    DL_ERR_IO = 9,
    DL_ERR_CONFIG = 10,
    DL_ERR_MISSING_DEPENDENCY = 11,
    DL_ERR_DIVERGENCE = 12,
    DL_ERR_INTERNAL = 13
} dl_status;

/* Base model plus optional adapters. */
typedef struct dl_model dl_model;

typedef void (*dl_progress_fn)(const char* message, void* user);

DL_API const char* dl_version(void);
DL_API const char* dl_status_name(dl_status status);
DL_API const char* dl_last_error(void);
/* {"error": {"status": name, "code": n, "message": text}} for the last failure. */
DL_API dl_status dl_last_error_json(char** out);
DL_API void dl_free_string(char* s);

/* Runs one of gen-data, pretrain, adapt, eval, probe, ablate. config_path may
 * be NULL or empty; overrides_json is an object with any of seed, out_dir, n,
 * steps, lambda_ar, gallery_size, prompts, data, out (NULL for none). The
 * summary of the run is stored in *summary_json when summary_json is not NULL. */
DL_API dl_status dl_run(const char* subcommand, const char* config_path, const char* overrides_json,
                        dl_progress_fn progress, void* user, char** summary_json);

/* Effective configuration after layering, as JSON. */
DL_API dl_status dl_resolve_config(const char* subcommand, const char* config_path,
                                   const char* overrides_json, char** config_json);

/* adapters_manifest may be NULL to query the base with hard prompts. */
DL_API dl_status dl_model_load(const char* base_manifest, const char* adapters_manifest,
                               dl_model** out);
DL_API void dl_model_free(dl_model* model);
DL_API dl_status dl_model_dim(const dl_model* model, size_t* dim);

/* Unit-norm summary-token embeddings written to out[0 .. dim). */
DL_API dl_status dl_embed_image(const dl_model* model, const char* scene_json, float* out,
                                size_t out_len);
DL_API dl_status dl_embed_text(const dl_model* model, const char* caption, float* out,
                               size_t out_len);
DL_API dl_status dl_similarity(const float* a, const float* b, size_t dim, float* out);

#ifdef __cplusplus
}
#endif

#endif /* DISCLVLM_DISCLVLM_H_ */
