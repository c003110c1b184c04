#ifndef NITCG_H
#define NITCG_H

/* Generated by cbindgen from the Rust sources; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call in this interface.
 */
typedef enum NitcgStatus {
  /**
   * The call succeeded.
   */
  NITCG_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  NITCG_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument was structurally invalid (bad path encoding, empty
   * input, sample rate mismatch, malformed checkpoint).
   */
  NITCG_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The checkpoint could not be read.
   */
  NITCG_STATUS_IO_ERROR = 3,
  /**
   * Enhancement produced a non-finite value.
   */
  NITCG_STATUS_NUMERIC_ERROR = 4,
  /**
   * An internal invariant failed; the handle is still safe to close.
   */
  NITCG_STATUS_PANIC = 5,
} NitcgStatus;

/**
 * A loaded enhancement model. Create with [`nitcg_enhancer_open`],
 * destroy with [`nitcg_enhancer_close`]. Not thread-safe; share one
 * handle per thread or guard it externally.
 */
typedef struct NitcgEnhancer NitcgEnhancer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on the calling thread, empty if
 * none. The pointer stays valid until the next failing call on the same
 * thread.
 */
const char *nitcg_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nitcg_version(void);

/**
 * Load a trained checkpoint from `path` and write a fresh handle to
 * `out`. On any failure `out` is left untouched.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer.
 */
enum NitcgStatus nitcg_enhancer_open(const char *path, struct NitcgEnhancer **out);

/**
 * Sample rate the loaded model was trained at, or 0 for a null handle.
 *
 * # Safety
 * `handle` must be null or a pointer from [`nitcg_enhancer_open`].
 */
uint32_t nitcg_enhancer_sample_rate(const struct NitcgEnhancer *handle);

/**
 * Enhance `len` samples at `sample_rate` and hand back a freshly
 * allocated buffer of the same length through `out_samples`/`out_len`.
 * The caller owns the buffer and must release it with
 * [`nitcg_buffer_free`]. On failure the output pointers are untouched.
 *
 * # Safety
 * `handle` must come from [`nitcg_enhancer_open`]; `samples` must point
 * to `len` readable doubles; `out_samples` and `out_len` must be
 * writable.
 */
enum NitcgStatus nitcg_enhancer_enhance(const struct NitcgEnhancer *handle,
                                        const double *samples,
                                        size_t len,
                                        uint32_t sample_rate,
                                        double **out_samples,
                                        size_t *out_len);

/**
 * Release a buffer returned by [`nitcg_enhancer_enhance`]. `len` must be
 * the value reported alongside the pointer. Null is a no-op.
 *
 * # Safety
 * `samples` must be null or an unreleased pointer from
 * [`nitcg_enhancer_enhance`] paired with its reported length.
 */
void nitcg_buffer_free(double *samples, size_t len);

/**
 * Destroy a handle. Null is a no-op; the handle must not be used after.
 *
 * # Safety
 * `handle` must be null or an unreleased pointer from
 * [`nitcg_enhancer_open`].
 */
void nitcg_enhancer_close(struct NitcgEnhancer *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NITCG_H */
