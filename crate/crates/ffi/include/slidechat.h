#ifndef SLIDECHAT_H
#define SLIDECHAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_ARGUMENT = 1,
  SC_STATUS_INVALID_UTF8 = 2,
  SC_STATUS_USAGE = 3,
  SC_STATUS_CONFIG = 4,
  SC_STATUS_FORMAT = 5,
  SC_STATUS_MISSING_INPUT = 6,
  SC_STATUS_NON_FINITE = 7,
  SC_STATUS_CLIENT = 8,
  SC_STATUS_IO = 9,
  SC_STATUS_PANIC = 10,
} ScStatus;

/**
 * A loaded model.
 */
typedef struct ScModel ScModel;

/**
 * A generated answer and its attention trace.
 */
typedef struct ScResponse ScResponse;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *sc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sc_version(void);

/**
 * Loads a checkpoint written by `slidechat train`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out_model` writable.
 */
enum ScStatus sc_model_load(const char *path, struct ScModel **out_model);

/**
 * # Safety
 * `model` must come from [`sc_model_load`] and not be used afterwards.
 */
void sc_model_free(struct ScModel *model);

/**
 * Tiles an interleaved 8-bit raster (`channels` 1 or 3), encodes its
 * tissue patches and greedily answers `prompt`, generating at most
 * `max_len` tokens.
 *
 * # Safety
 * `pixels` must hold `width * height * channels` bytes; `prompt` must be a
 * NUL-terminated string; `out_response` must be writable.
 */
enum ScStatus sc_model_respond(const struct ScModel *model,
                               const uint8_t *pixels,
                               size_t width,
                               size_t height,
                               size_t channels,
                               const char *prompt,
                               size_t max_len,
                               struct ScResponse **out_response);

/**
 * # Safety
 * `response` must come from [`sc_model_respond`] and not be used afterwards.
 */
void sc_response_free(struct ScResponse *response);

/**
 * Answer text, owned by the response.
 *
 * # Safety
 * `response` must be null or a live response.
 */
const char *sc_response_text(const struct ScResponse *response);

/**
 * Writes the trace shape `[tokens, layers, heads, patches]` to `out_dims`.
 *
 * # Safety
 * `out_dims` must point to four writable `size_t` values.
 */
enum ScStatus sc_response_trace_dims(const struct ScResponse *response, size_t *out_dims);

/**
 * Ranks the `k` most attended tissue patches. Writes up to `k` patch
 * indices and scores, most salient first, and their count to `out_len`.
 * Rows are renormalized over the visual span unless `raw_rows` is set.
 *
 * # Safety
 * `out_indices` and `out_scores` must each have room for `k` values.
 */
enum ScStatus sc_response_top_patches(const struct ScResponse *response,
                                      size_t k,
                                      bool raw_rows,
                                      size_t *out_indices,
                                      double *out_scores,
                                      size_t *out_len);

/**
 * BLEU-`n` (1 to 4) of `candidate` against one reference.
 *
 * # Safety
 * Both strings must be NUL-terminated; `out_score` must be writable.
 */
enum ScStatus sc_bleu(const char *candidate, const char *reference, size_t n, double *out_score);

/**
 * ROUGE-L F-measure of `candidate` against `reference`.
 *
 * # Safety
 * Both strings must be NUL-terminated; `out_score` must be writable.
 */
enum ScStatus sc_rouge_l(const char *candidate, const char *reference, double *out_score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLIDECHAT_H */
