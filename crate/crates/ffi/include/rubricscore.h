#ifndef RUBRICSCORE_H
#define RUBRICSCORE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `Ok` is zero.
 */
typedef enum RsStatus {
  RS_STATUS_OK = 0,
  RS_STATUS_NULL_POINTER = 1,
  RS_STATUS_INVALID_UTF8 = 2,
  RS_STATUS_VALIDATION = 3,
  RS_STATUS_CONFIG = 4,
  RS_STATUS_MODE_MISMATCH = 5,
  RS_STATUS_CHECKPOINT = 6,
  RS_STATUS_UNDEFINED_METRIC = 7,
  RS_STATUS_BUFFER_TOO_SMALL = 8,
  RS_STATUS_IO = 9,
  RS_STATUS_PANIC = 10,
} RsStatus;

/**
 * Opaque handle to a loaded checkpoint.
 */
typedef struct RsModel RsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Free with
 * [`rs_string_free`].
 */
char *rs_last_error_message(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void rs_string_free(char *s);

/**
 * Loads a checkpoint directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RsStatus rs_model_load(const char *path, struct RsModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`rs_model_load`], not yet freed.
 */
void rs_model_free(struct RsModel *model);

/**
 * Number of rubric dimensions, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t rs_model_num_dimensions(const struct RsModel *model);

/**
 * Id of dimension `index`. Free the result with [`rs_string_free`].
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum RsStatus rs_model_dimension_id(const struct RsModel *model, size_t index, char **out);

/**
 * 1 when the checkpoint is presence-only, 0 when scored.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
int32_t rs_model_is_presence(const struct RsModel *model);

/**
 * Scores one report. `scores` receives one value per dimension (presence
 * checkpoints write 0/1); `total` receives their sum.
 *
 * # Safety
 * `model` must be a live handle, `text` a NUL-terminated string, `scores`
 * writable for `scores_len` bytes and `total` writable.
 */
enum RsStatus rs_model_assess_text(const struct RsModel *model,
                                   const char *text,
                                   uint8_t *scores,
                                   size_t scores_len,
                                   uint32_t *total);

/**
 * Full assessment (scores, verifier probabilities, selected sentence
 * positions) as a JSON string. Free with [`rs_string_free`].
 *
 * # Safety
 * `model` must be a live handle, `report_id` and `text` NUL-terminated
 * strings, `out` writable.
 */
enum RsStatus rs_model_assess_json(const struct RsModel *model,
                                   const char *report_id,
                                   const char *text,
                                   char **out);

/**
 * Mean squared error of two equal-length arrays.
 *
 * # Safety
 * `preds` and `truths` must be readable for `n` doubles; `out` writable.
 */
enum RsStatus rs_mse(const double *preds, const double *truths, size_t n, double *out);

/**
 * `1 - |g - y| / max_distance` averaged over items.
 *
 * # Safety
 * `preds` and `truths` must be readable for `n` doubles; `out` writable.
 */
enum RsStatus rs_weighted_accuracy(const double *preds,
                                   const double *truths,
                                   size_t n,
                                   double max_distance,
                                   double *out);

/**
 * Interval Krippendorff alpha. `ratings` is row-major `n_raters x n_units`;
 * NaN marks a missing rating.
 *
 * # Safety
 * `ratings` must be readable for `n_raters * n_units` doubles; `out` writable.
 */
enum RsStatus rs_krippendorff_alpha_interval(const double *ratings,
                                             size_t n_raters,
                                             size_t n_units,
                                             double *out);

/**
 * MASI distance between two sets of sentence positions.
 *
 * # Safety
 * `a` and `b` must be readable for `a_len` and `b_len` values; `out` writable.
 */
enum RsStatus rs_masi_distance(const size_t *a,
                               size_t a_len,
                               const size_t *b,
                               size_t b_len,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RUBRICSCORE_H */
