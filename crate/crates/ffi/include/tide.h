#ifndef TIDE_H
#define TIDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TideStatus {
  TIDE_STATUS_OK = 0,
  TIDE_STATUS_NULL_POINTER = 1,
  TIDE_STATUS_INVALID_UTF8 = 2,
  TIDE_STATUS_IO = 3,
  TIDE_STATUS_PARSE = 4,
  TIDE_STATUS_INVALID_ARGUMENT = 5,
  TIDE_STATUS_COMPUTATION = 6,
  TIDE_STATUS_PANIC = 7,
} TideStatus;

/**
 * Parsed run log.
 */
typedef struct TideRunLog TideRunLog;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens and validates a log file. On success `*out` receives a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TideStatus tide_run_log_open(const char *path, struct TideRunLog **out);

/**
 * Parses and validates a log held in memory.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum TideStatus tide_run_log_parse(const uint8_t *data, size_t len, struct TideRunLog **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `log` must come from `tide_run_log_open` or `tide_run_log_parse` and not
 * have been freed already.
 */
void tide_run_log_free(struct TideRunLog *log);

/**
 * # Safety
 * `log` must be a live handle; `out` must be writable.
 */
enum TideStatus tide_run_log_trajectory_count(const struct TideRunLog *log, size_t *out);

/**
 * Horizon declared in the log header.
 *
 * # Safety
 * `log` must be a live handle; `out` must be writable.
 */
enum TideStatus tide_run_log_t_max(const struct TideRunLog *log, size_t *out);

/**
 * AUV and final success rate in `[0, 1]`. `t_max == 0` uses the header value.
 *
 * # Safety
 * `log` must be a live handle; output pointers must be writable.
 */
enum TideStatus tide_auv(const struct TideRunLog *log,
                         size_t t_max,
                         double *out_auv,
                         double *out_sr);

/**
 * Percentile bootstrap interval over per-trajectory AUV scores.
 *
 * # Safety
 * `log` must be a live handle; output pointers must be writable.
 */
enum TideStatus tide_auv_bootstrap(const struct TideRunLog *log,
                                   size_t t_max,
                                   double confidence,
                                   size_t resamples,
                                   uint64_t seed,
                                   double *out_low,
                                   double *out_high);

/**
 * Pooled loop ratio. `cosine_threshold <= 0` selects exact state identity.
 *
 * # Safety
 * `log` must be a live handle; `out` must be writable.
 */
enum TideStatus tide_loop_ratio(const struct TideRunLog *log, double cosine_threshold, double *out);

/**
 * `AUV(with) - AUV(without)`. Nonzero `intersect` restricts both runs to
 * their shared task ids; otherwise task sets must match exactly.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum TideStatus tide_memory_index(const struct TideRunLog *with_memory,
                                  const struct TideRunLog *without_memory,
                                  int32_t intersect,
                                  size_t t_max,
                                  double *out);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *tide_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tide_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TIDE_H */
