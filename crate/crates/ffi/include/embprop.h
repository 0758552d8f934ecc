#ifndef EMBPROP_H
#define EMBPROP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EpClassifier {
  EP_CLASSIFIER_LABEL_PROP = 0,
  EP_CLASSIFIER_PROTOTYPICAL = 1,
} EpClassifier;

typedef enum EpFormat {
  EP_FORMAT_AUTO = 0,
  EP_FORMAT_CSV = 1,
  EP_FORMAT_BINARY = 2,
} EpFormat;

typedef enum EpMode {
  EP_MODE_FULL = 0,
  EP_MODE_OFF_DIAGONAL = 1,
  EP_MODE_DIAGONAL = 2,
  EP_MODE_IDENTITY = 3,
} EpMode;

typedef enum EpStatus {
  EP_STATUS_OK = 0,
  EP_STATUS_NULL_POINTER = 1,
  EP_STATUS_INVALID_ARGUMENT = 2,
  EP_STATUS_IO = 3,
  EP_STATUS_PARSE = 4,
  EP_STATUS_INVARIANT_VIOLATION = 5,
  EP_STATUS_DIMENSION_MISMATCH = 6,
  /**
   * Graph or solver failure: non-symmetric, not positive definite,
   * isolated node, non-finite input.
   */
  EP_STATUS_NUMERICAL = 7,
  /**
   * Not enough classes, rows or labels for the request.
   */
  EP_STATUS_INSUFFICIENT_DATA = 8,
  EP_STATUS_PANIC = 9,
} EpStatus;

/**
 * Opaque embedding set.
 */
typedef struct EpEmbeddingSet EpEmbeddingSet;

/**
 * Opaque evaluation report.
 */
typedef struct EpReport EpReport;

/**
 * Evaluation settings. Start from [`ep_eval_config_default`].
 */
typedef struct EpEvalConfig {
  size_t n_way;
  size_t k_shot;
  size_t q_queries;
  size_t u_unlabeled;
  double labeled_fraction;
  size_t episodes;
  double alpha;
  /**
   * NaN reuses `alpha`.
   */
  double lp_alpha;
  enum EpMode mode;
  enum EpClassifier classifier;
  /**
   * Nonzero enables two-pass pseudo-labeling.
   */
  uint8_t ssl;
  uint64_t seed;
  /**
   * 0 uses the default pool.
   */
  size_t threads;
} EpEvalConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *ep_last_error_message(void);

struct EpEvalConfig ep_eval_config_default(void);

/**
 * Loads an embedding file. `path` is a NUL-terminated UTF-8 path.
 *
 * # Safety
 * `path` must be a valid C string and `out` a writable pointer.
 */
enum EpStatus ep_embeddings_load(const char *path,
                                 enum EpFormat format,
                                 struct EpEmbeddingSet **out);

/**
 * Two-moons set with `n_per_moon` points per moon.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum EpStatus ep_embeddings_two_moons(size_t n_per_moon,
                                      double noise_sd,
                                      uint64_t seed,
                                      struct EpEmbeddingSet **out);

/**
 * # Safety
 * `set` must come from this library and not be freed twice.
 */
void ep_embeddings_free(struct EpEmbeddingSet *set);

/**
 * Number of rows, 0 for a null handle.
 *
 * # Safety
 * `set` must be null or a live handle.
 */
size_t ep_embeddings_rows(const struct EpEmbeddingSet *set);

/**
 * Embedding dimension, 0 for a null handle.
 *
 * # Safety
 * `set` must be null or a live handle.
 */
size_t ep_embeddings_dim(const struct EpEmbeddingSet *set);

/**
 * Propagates `rows × cols` row-major embeddings as one batch into `out`
 * (same shape).
 *
 * # Safety
 * `z` and `out` must each hold `rows * cols` doubles.
 */
enum EpStatus ep_propagate(const double *z,
                           size_t rows,
                           size_t cols,
                           double alpha,
                           enum EpMode mode,
                           double *out);

/**
 * Label-propagation scores for a batch. `labels[i]` is the class of row
 * `i`, or negative for unlabeled. Writes `rows × n_classes` scores.
 *
 * # Safety
 * `z` holds `rows * cols` doubles, `labels` holds `rows` entries and `out`
 * has room for `rows * n_classes` doubles.
 */
enum EpStatus ep_label_propagation(const double *z,
                                   size_t rows,
                                   size_t cols,
                                   const int32_t *labels,
                                   size_t n_classes,
                                   double alpha,
                                   double *out);

/**
 * Runs an episodic evaluation.
 *
 * # Safety
 * `set` and `config` must be live, `out` writable.
 */
enum EpStatus ep_evaluate(const struct EpEmbeddingSet *set,
                          const struct EpEvalConfig *config,
                          struct EpReport **out);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
double ep_report_mean(const struct EpReport *report);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
double ep_report_ci95(const struct EpReport *report);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
size_t ep_report_episodes(const struct EpReport *report);

/**
 * Copies up to `capacity` per-episode accuracies into `buf` and returns the
 * total number available.
 *
 * # Safety
 * `report` must be null or live; `buf` must hold `capacity` doubles.
 */
size_t ep_report_accuracies(const struct EpReport *report, double *buf, size_t capacity);

/**
 * Report as a JSON string; free with [`ep_string_free`]. Null on failure.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
char *ep_report_to_json(const struct EpReport *report);

/**
 * # Safety
 * `s` must come from [`ep_report_to_json`] and not be freed twice.
 */
void ep_string_free(char *s);

/**
 * # Safety
 * `report` must come from this library and not be freed twice.
 */
void ep_report_free(struct EpReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMBPROP_H */
