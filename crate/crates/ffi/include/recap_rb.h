#ifndef RECAP_RB_H
#define RECAP_RB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RecapStatus {
  RECAP_STATUS_OK = 0,
  RECAP_STATUS_NULL_POINTER = 1,
  RECAP_STATUS_INVALID_INPUT = 2,
  RECAP_STATUS_NUMERICAL = 3,
  RECAP_STATUS_PANIC = 4,
} RecapStatus;

typedef enum RecapModel {
  RECAP_MODEL_M0 = 0,
  RECAP_MODEL_MH = 1,
  RECAP_MODEL_MB = 2,
  RECAP_MODEL_MT = 3,
} RecapModel;

/**
 * Opaque capture history.
 */
typedef struct RecapHistory RecapHistory;

/**
 * A point estimate. `variance` is NaN when `has_variance` is false; `point` is NaN when
 * `valid` is false.
 */
typedef struct RecapEstimate {
  double point;
  double variance;
  bool has_variance;
  bool valid;
} RecapEstimate;

/**
 * A Rao-Blackwellized estimate.
 */
typedef struct RecapRbEstimate {
  double point;
  double variance;
  bool has_variance;
  bool valid;
  /**
   * The variance fell back to the mean of per-state variances.
   */
  bool fallback_used;
  double valid_fraction;
  /**
   * Fraction of accepted chain steps; NaN for exact averaging.
   */
  double acceptance_rate;
} RecapRbEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a capture-history CSV (`unit,stratum,occ_1,...,occ_K`).
 *
 * # Safety
 * `csv` must be a NUL-terminated string and `out` a writable pointer.
 */
enum RecapStatus recap_history_from_csv(const char *csv, struct RecapHistory **out);

/**
 * Builds a history from a row-major `units x occasions` matrix of 0/1 cells. Units are
 * labelled `1..=units`. `strata` holds one 1-based stratum per unit, or is null.
 *
 * # Safety
 * `cells` must point to `units * occasions` bytes; `strata`, when not null, to `units`
 * values; `out` must be writable.
 */
enum RecapStatus recap_history_from_matrix(const uint8_t *cells,
                                           size_t units,
                                           size_t occasions,
                                           const uint32_t *strata,
                                           struct RecapHistory **out);

/**
 * Releases a history. Null is ignored.
 *
 * # Safety
 * `history` must come from this library and not have been freed.
 */
void recap_history_free(struct RecapHistory *history);

/**
 * Number of observed units, or 0 for null.
 *
 * # Safety
 * `history` must be a live handle or null.
 */
size_t recap_history_units(const struct RecapHistory *history);

/**
 * Number of occasions, or 0 for null.
 *
 * # Safety
 * `history` must be a live handle or null.
 */
size_t recap_history_occasions(const struct RecapHistory *history);

/**
 * Preliminary estimate. `estimator` is one of `lp`, `m0`, `chao`, `mb`, `mt`, `sc`;
 * `seed` drives resampled variances.
 *
 * # Safety
 * `history` must be a live handle, `estimator` a NUL-terminated string and `out` writable.
 */
enum RecapStatus recap_estimate(const struct RecapHistory *history,
                                const char *estimator,
                                uint64_t seed,
                                struct RecapEstimate *out);

/**
 * Rao-Blackwellized estimate from a chain of `chain_length` steps under `model`.
 *
 * # Safety
 * As for [`recap_estimate`].
 */
enum RecapStatus recap_rb_mcmc(const struct RecapHistory *history,
                               const char *estimator,
                               enum RecapModel model,
                               size_t chain_length,
                               uint64_t seed,
                               bool hastings_correction,
                               struct RecapRbEstimate *out);

/**
 * Rao-Blackwellized estimate averaged over every consistent reordering. Fails with
 * `InvalidInput` when the history is too large to enumerate.
 *
 * # Safety
 * As for [`recap_estimate`].
 */
enum RecapStatus recap_rb_exact(const struct RecapHistory *history,
                                const char *estimator,
                                enum RecapModel model,
                                uint64_t seed,
                                struct RecapRbEstimate *out);

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *recap_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *recap_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECAP_RB_H */
