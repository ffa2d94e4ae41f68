#ifndef DDRNN_H
#define DDRNN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Bit flags selecting sweep directions.
 */
#define DDRNN_DIR_SE 1

#define DDRNN_DIR_SW 2

#define DDRNN_DIR_NE 4

#define DDRNN_DIR_NW 8

#define DDRNN_DIR_ALL 15

typedef enum DdrnnPrecision {
  DDRNN_PRECISION_STANDARD = 0,
  DDRNN_PRECISION_EXTENDED = 1,
} DdrnnPrecision;

/**
 * Result of every call. Values 1 to 5 match the command-line exit codes.
 */
typedef enum DdrnnStatus {
  DDRNN_STATUS_OK = 0,
  DDRNN_STATUS_CHECK_FAILED = 1,
  DDRNN_STATUS_INVALID_ARGUMENT = 2,
  DDRNN_STATUS_IO = 3,
  DDRNN_STATUS_NON_FINITE = 4,
  DDRNN_STATUS_SHAPE = 5,
  DDRNN_STATUS_NULL_POINTER = 6,
  DDRNN_STATUS_PANIC = 7,
} DdrnnStatus;

typedef enum DdrnnVariant {
  DDRNN_VARIANT_CHAIN = 0,
  DDRNN_VARIANT_PLAIN_DAG = 1,
  DDRNN_VARIANT_DENSE_SUM = 2,
  DDRNN_VARIANT_DENSE_ATTENTION = 3,
} DdrnnVariant;

/**
 * Opaque model handle.
 */
typedef struct DdrnnModel DdrnnModel;

typedef struct DdrnnModelInfo {
  size_t in_channels;
  size_t hidden;
  size_t classes;
  uint32_t variant;
  uint32_t directions;
  uint32_t precision;
} DdrnnModelInfo;

typedef struct DdrnnMetrics {
  double gpa;
  double aca;
  double mean_iou;
  /**
   * Labelled units counted.
   */
  uint64_t total;
} DdrnnMetrics;

typedef struct DdrnnGradCheck {
  double max_rel_error;
  size_t compared;
  size_t total;
  bool passed;
} DdrnnGradCheck;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ddrnn_last_error_message(void);

/**
 * Creates a freshly initialised model. `directions` is a mask of
 * `DDRNN_DIR_*` flags.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum DdrnnStatus ddrnn_model_new(size_t in_channels,
                                 size_t hidden,
                                 size_t classes,
                                 enum DdrnnVariant variant,
                                 uint32_t directions,
                                 enum DdrnnPrecision precision,
                                 uint64_t seed,
                                 struct DdrnnModel **out);

/**
 * Loads a model directory written by [`ddrnn_model_save`] or `ddrnn train`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum DdrnnStatus ddrnn_model_load(const char *dir, struct DdrnnModel **out);

/**
 * # Safety
 * `model` must be a live handle; `dir` a NUL-terminated string.
 */
enum DdrnnStatus ddrnn_model_save(const struct DdrnnModel *model, const char *dir);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void ddrnn_model_free(struct DdrnnModel *model);

/**
 * # Safety
 * `model` must be a live handle; `info` valid for a write.
 */
enum DdrnnStatus ddrnn_model_info(const struct DdrnnModel *model, struct DdrnnModelInfo *info);

/**
 * Class probabilities for an `rows×cols` grid. `features` holds
 * `rows·cols·in_channels` values unit-major (channels of a unit adjacent,
 * units row-major); `probs` receives `rows·cols·classes` values in the same
 * layout.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum DdrnnStatus ddrnn_model_forward(const struct DdrnnModel *model,
                                     size_t rows,
                                     size_t cols,
                                     const double *features,
                                     size_t features_len,
                                     double *probs,
                                     size_t probs_len);

/**
 * Argmax labels (ties to the lowest class) for an `rows×cols` grid.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum DdrnnStatus ddrnn_model_predict(const struct DdrnnModel *model,
                                     size_t rows,
                                     size_t cols,
                                     const double *features,
                                     size_t features_len,
                                     uint8_t *labels,
                                     size_t labels_len);

/**
 * Metrics of `model` over a dataset directory.
 *
 * # Safety
 * `model` must be a live handle, `data_dir` NUL-terminated, `out` writable.
 */
enum DdrnnStatus ddrnn_model_evaluate(const struct DdrnnModel *model,
                                      const char *data_dir,
                                      struct DdrnnMetrics *out);

/**
 * Metrics of one flat pair of label arrays; label 255 is ignored.
 *
 * # Safety
 * `truth` and `pred` must be valid for `len` reads; `out` writable.
 */
enum DdrnnStatus ddrnn_metrics_from_labels(size_t classes,
                                           const uint8_t *truth,
                                           const uint8_t *pred,
                                           size_t len,
                                           struct DdrnnMetrics *out);

/**
 * Finite-difference gradient check on the standard small instance for one
 * variant and a single direction flag. Returns `CheckFailed` when the
 * tolerance is exceeded; `out` is filled either way.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum DdrnnStatus ddrnn_gradient_check(enum DdrnnVariant variant,
                                      uint32_t direction,
                                      uint64_t seed,
                                      double eps,
                                      double tol,
                                      struct DdrnnGradCheck *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDRNN_H */
