#ifndef INFODEMIC_H
#define INFODEMIC_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum InfdStatus {
  INFD_STATUS_OK = 0,
  INFD_STATUS_NULL_ARGUMENT = 1,
  INFD_STATUS_INVALID_UTF8 = 2,
  INFD_STATUS_IO = 3,
  /**
   * Corrupt model file or vectorizer fingerprint mismatch.
   */
  INFD_STATUS_BAD_MODEL = 4,
  INFD_STATUS_INVALID_ARGUMENT = 5,
  INFD_STATUS_PANIC = 6,
} InfdStatus;

/**
 * Opaque trained model.
 */
typedef struct InfdModel InfdModel;

typedef struct InfdMetrics {
  double accuracy;
  double precision;
  double recall;
  double f1;
  size_t true_positives;
  size_t false_positives;
  size_t false_negatives;
  size_t true_negatives;
} InfdMetrics;

typedef struct InfdTTest {
  size_t n;
  double mean;
  double stddev;
  /**
   * ±infinity when the sample has zero variance and a mean other than mu0.
   */
  double t_statistic;
  double critical_value;
  bool reject_null;
} InfdTTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null. Valid until the next call
 * into this library from the same thread.
 */
const char *infd_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void infd_string_free(char *s);

/**
 * Loads a model file written by `infodemic train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum InfdStatus infd_model_load(const char *path, struct InfdModel **out);

/**
 * # Safety
 * `data` must be valid for `len` bytes; `out` must be valid for writes.
 */
enum InfdStatus infd_model_from_bytes(const uint8_t *data, size_t len, struct InfdModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, not yet freed.
 */
void infd_model_free(struct InfdModel *model);

/**
 * Scores bare text. `label` receives 0 (real) or 1 (fake); `score` the
 * decision value the label was thresholded from.
 *
 * # Safety
 * `model` must be a live handle; `text` NUL-terminated; `label` and
 * `score` valid for writes.
 */
enum InfdStatus infd_model_predict_text(const struct InfdModel *model,
                                        const char *text,
                                        uint8_t *label,
                                        double *score);

/**
 * JSON header of the model (kind, hyperparameters, seed, fingerprint).
 *
 * # Safety
 * `model` must be a live handle; `out` valid for writes.
 */
enum InfdStatus infd_model_header_json(const struct InfdModel *model, char **out);

/**
 * Text cleaning as applied before vectorization.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` valid for writes.
 */
enum InfdStatus infd_clean_text(const char *text, char **out);

/**
 * Binary metrics with fake (1) as the positive class. `macro_average`
 * averages precision, recall and F1 over both classes instead.
 *
 * # Safety
 * `predicted` and `actual` must be valid for `n` bytes; `out` for writes.
 */
enum InfdStatus infd_metrics(const uint8_t *predicted,
                             const uint8_t *actual,
                             size_t n,
                             bool macro_average,
                             struct InfdMetrics *out);

/**
 * Two-sided one-sample t-test against `mu0`; `alpha` is 0.05 or 0.01.
 *
 * # Safety
 * `values` must be valid for `n` doubles; `out` for writes.
 */
enum InfdStatus infd_ttest(const double *values,
                           size_t n,
                           double mu0,
                           double alpha,
                           struct InfdTTest *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INFODEMIC_H */
