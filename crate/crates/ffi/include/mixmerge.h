#ifndef MIXMERGE_H
#define MIXMERGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes.
 */
typedef enum MxStatus {
  MX_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  MX_STATUS_NULL_POINTER = 1,
  /**
   * An argument violated a documented bound.
   */
  MX_STATUS_INVALID_PARAMETER = 2,
  /**
   * Lengths or shape tags do not line up.
   */
  MX_STATUS_SHAPE_MISMATCH = 3,
  /**
   * A numeric routine failed (non-positive-definite matrix, divergence).
   */
  MX_STATUS_NUMERIC = 4,
  /**
   * Rank correlation of a constant vector.
   */
  MX_STATUS_UNDEFINED_CORRELATION = 5,
  /**
   * The caller's output buffer is too small; the required size was written.
   */
  MX_STATUS_BUFFER_TOO_SMALL = 6,
  MX_STATUS_IO = 7,
  /**
   * A file exists but is not a parameter vector.
   */
  MX_STATUS_FORMAT = 8,
  /**
   * A Rust panic was caught at the boundary.
   */
  MX_STATUS_INTERNAL = 9,
} MxStatus;

/**
 * Opaque handle to a flat parameter vector with a shape tag.
 */
typedef struct MxParamVector MxParamVector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *mx_last_error(void);

/**
 * Creates a parameter vector by copying `len` values. `shape_tag` may be
 * null, meaning the empty tag.
 *
 * # Safety
 * `values` must point to `len` readable doubles; `shape_tag`, when not null,
 * to a NUL-terminated string; `out` must be writable.
 */
enum MxStatus mx_param_vector_new(const double *values,
                                  size_t len,
                                  const char *shape_tag,
                                  struct MxParamVector **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `v` must come from this library and not have been freed.
 */
void mx_param_vector_free(struct MxParamVector *v);

/**
 * Number of values, or 0 for a null handle.
 *
 * # Safety
 * `v` must be null or a live handle.
 */
size_t mx_param_vector_len(const struct MxParamVector *v);

/**
 * Copies the values into `out`. With `capacity` below the length nothing is
 * copied, `*written` receives the length, and `BufferTooSmall` is returned.
 *
 * # Safety
 * `v` must be a live handle; `out` must hold `capacity` doubles; `written`
 * must be writable.
 */
enum MxStatus mx_param_vector_copy_values(const struct MxParamVector *v,
                                          double *out,
                                          size_t capacity,
                                          size_t *written);

/**
 * Reads a parameter vector file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum MxStatus mx_param_vector_read(const char *path, struct MxParamVector **out);

/**
 * Writes a parameter vector file (no provenance sidecar).
 *
 * # Safety
 * `v` must be a live handle and `path` a NUL-terminated string.
 */
enum MxStatus mx_param_vector_write(const struct MxParamVector *v, const char *path);

/**
 * Merges `k` experts with mixture weights `weights[0..k]` into a new handle.
 *
 * # Safety
 * `experts` must point to `k` live handles, `weights` to `k` doubles, and
 * `out` must be writable.
 */
enum MxStatus mx_merge_linear(const struct MxParamVector *const *experts,
                              size_t k,
                              const double *weights,
                              struct MxParamVector **out);

/**
 * Minimizer of the mixture of `k` quadratics in dimension `d`.
 * `optima` is `k x d` row-major, `hessians` is `k` consecutive `d x d`
 * row-major symmetric positive-definite matrices, `out` receives `d` values.
 *
 * # Safety
 * The buffers must have the sizes above.
 */
enum MxStatus mx_merge_hessian_weighted(size_t k,
                                        size_t d,
                                        const double *optima,
                                        const double *hessians,
                                        const double *weights,
                                        double *out);

/**
 * Simplex lattice with step `1/m` in `k` dimensions, written as `*rows x k`
 * row-major doubles. Pass `out = NULL` to query the row count.
 *
 * # Safety
 * `out`, when not null, must hold `capacity_rows * k` doubles; `rows` must
 * be writable.
 */
enum MxStatus mx_enumerate_grid(size_t k,
                                size_t m,
                                bool include_boundary,
                                double *out,
                                size_t capacity_rows,
                                size_t *rows);

/**
 * `count` draws from a symmetric Dirichlet, written as `count x k` row-major.
 *
 * # Safety
 * `out` must hold `count * k` doubles.
 */
enum MxStatus mx_sample_dirichlet(size_t k,
                                  size_t count,
                                  double concentration,
                                  uint64_t seed,
                                  double *out);

/**
 * Spearman rank correlation of two length-`n` samples, average ranks on ties.
 *
 * # Safety
 * `x` and `y` must hold `n` doubles; `out` must be writable.
 */
enum MxStatus mx_spearman(const double *x, const double *y, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIXMERGE_H */
