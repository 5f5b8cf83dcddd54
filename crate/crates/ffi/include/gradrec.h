#ifndef GRADREC_H
#define GRADREC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GrecStatus {
  GREC_STATUS_OK = 0,
  GREC_STATUS_NULL_POINTER,
  GREC_STATUS_INVALID_UTF8,
  GREC_STATUS_BUFFER_TOO_SMALL,
  GREC_STATUS_PANIC,
  GREC_STATUS_MALFORMED_HEADER,
  GREC_STATUS_MALFORMED_METADATA,
  GREC_STATUS_DIM_MISMATCH,
  GREC_STATUS_NON_FINITE_VECTOR,
  GREC_STATUS_NOT_UNIT_NORM,
  GREC_STATUS_DUPLICATE_ID,
  GREC_STATUS_IO_FAILURE,
  GREC_STATUS_INVALID_SPEC,
  GREC_STATUS_EMPTY_CATALOG,
  GREC_STATUS_DEGENERATE_MEAN,
  GREC_STATUS_UNKNOWN_PROMPT,
  GREC_STATUS_INSUFFICIENT_CATALOG,
  GREC_STATUS_INVALID_ARGUMENT,
  GREC_STATUS_ZERO_SIGNAL,
  GREC_STATUS_DEGENERATE_STEP,
  GREC_STATUS_UNKNOWN_SEED,
  GREC_STATUS_UNKNOWN_PRODUCT,
  GREC_STATUS_INVALID_CONFIG,
} GrecStatus;

typedef struct GrecDirection GrecDirection;

/**
 * A loaded catalog, its index and (optionally) a prompt bank.
 */
typedef struct GrecEngine GrecEngine;

typedef struct GrecPath GrecPath;

/**
 * Traversal knobs. Obtain defaults from [`grec_traversal_config_default`].
 */
typedef struct GrecTraversalConfig {
  double lambda;
  double rho;
  size_t k_reg;
  size_t k_rec;
  size_t max_steps;
  bool renormalize;
  size_t stop_stale_steps;
} GrecTraversalConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Owned by the
 * library; valid until the next call on this thread.
 */
const char *grec_last_error(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void grec_string_free(char *s);

/**
 * Loads a catalog bundle. `prompts_path` may be NULL.
 *
 * # Safety
 * Paths must be valid nul-terminated strings; `out` must be writable.
 */
enum GrecStatus grec_engine_open(const char *catalog_path,
                                 const char *prompts_path,
                                 struct GrecEngine **out);

/**
 * # Safety
 * `engine` must come from [`grec_engine_open`] or be NULL.
 */
void grec_engine_free(struct GrecEngine *engine);

/**
 * # Safety
 * `engine` must be a live handle; outputs must be writable.
 */
enum GrecStatus grec_engine_info(const struct GrecEngine *engine, size_t *out_dim, size_t *out_len);

/**
 * Writes the catalog id at `row` as a new string.
 *
 * # Safety
 * `engine` must be a live handle; `out` must be writable.
 */
enum GrecStatus grec_product_id(const struct GrecEngine *engine, size_t row, char **out);

/**
 * Exact cosine search. Fills `out_rows`/`out_sims` (capacity `k`) and sets
 * `out_count` to min(k, catalog size).
 *
 * # Safety
 * `query` must hold `dim` floats; `out_rows` and `out_sims` must hold `k`
 * entries.
 */
enum GrecStatus grec_knn(const struct GrecEngine *engine,
                         const float *query,
                         size_t dim,
                         size_t k,
                         size_t *out_rows,
                         double *out_sims,
                         size_t *out_count);

/**
 * Zero-shot retrieval as JSON: `[{"product_id", "similarity"}, ...]`.
 *
 * # Safety
 * `prompt` must be a valid string; `out` must be writable.
 */
enum GrecStatus grec_retrieve_json(const struct GrecEngine *engine,
                                   const char *prompt,
                                   size_t n,
                                   char **out);

/**
 * # Safety
 * Prompts must be valid strings; `out` must be writable.
 */
enum GrecStatus grec_direction_build(const struct GrecEngine *engine,
                                     const char *neutral_prompt,
                                     const char *exemplar_prompt,
                                     size_t m,
                                     size_t n,
                                     double epsilon,
                                     struct GrecDirection **out);

/**
 * # Safety
 * `json` must be a valid string; `out` must be writable.
 */
enum GrecStatus grec_direction_from_json(const char *json, struct GrecDirection **out);

/**
 * # Safety
 * `direction` must be a live handle; `out` must be writable.
 */
enum GrecStatus grec_direction_to_json(const struct GrecDirection *direction, char **out);

/**
 * # Safety
 * `direction` must be a live handle; `out` must be writable.
 */
enum GrecStatus grec_direction_invert(const struct GrecDirection *direction,
                                      struct GrecDirection **out);

/**
 * Copies the unit direction into `out` (capacity `out_len`).
 *
 * # Safety
 * `out` must hold `out_len` floats.
 */
enum GrecStatus grec_direction_values(const struct GrecDirection *direction,
                                      float *out,
                                      size_t out_len);

/**
 * # Safety
 * `direction` must come from this library or be NULL.
 */
void grec_direction_free(struct GrecDirection *direction);

struct GrecTraversalConfig grec_traversal_config_default(void);

/**
 * One update from `position` (length `dim`), written to `out_position`.
 * Recommendations are not computed; use [`grec_knn`] on the result.
 *
 * # Safety
 * `position` and `out_position` must hold `dim` floats.
 */
enum GrecStatus grec_step(const struct GrecEngine *engine,
                          const float *position,
                          size_t dim,
                          const struct GrecDirection *direction,
                          const struct GrecTraversalConfig *config,
                          float *out_position);

/**
 * # Safety
 * `seed_id` must be a valid string; `out` must be writable.
 */
enum GrecStatus grec_traverse(const struct GrecEngine *engine,
                              const char *seed_id,
                              const struct GrecDirection *direction,
                              const struct GrecTraversalConfig *config,
                              struct GrecPath **out);

/**
 * Number of steps taken.
 *
 * # Safety
 * `path` must be a live handle; `out` must be writable.
 */
enum GrecStatus grec_path_len(const struct GrecPath *path, size_t *out);

/**
 * # Safety
 * `path` must be a live handle; `out` must be writable.
 */
enum GrecStatus grec_path_to_json(const struct GrecPath *path, bool include_positions, char **out);

/**
 * # Safety
 * `path` must come from [`grec_traverse`] or be NULL.
 */
void grec_path_free(struct GrecPath *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRADREC_H */
