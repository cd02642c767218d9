#ifndef RENYI_H
#define RENYI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RenyiMethod {
  RENYI_METHOD_EXACT = 0,
  RENYI_METHOD_TRACE = 1,
  RENYI_METHOD_TAYLOR = 2,
  RENYI_METHOD_CHEBYSHEV = 3,
  RENYI_METHOD_LANCZOS = 4,
} RenyiMethod;

typedef enum RenyiStatus {
  RENYI_STATUS_OK = 0,
  RENYI_STATUS_NULL_POINTER = 1,
  RENYI_STATUS_INVALID_ARGUMENT = 2,
  RENYI_STATUS_NUMERIC_FAILURE = 3,
  RENYI_STATUS_PANIC = 4,
} RenyiStatus;

/**
 * Opaque trace-normalized Gram matrix.
 */
typedef struct RenyiGram RenyiGram;

/**
 * Opaque sample matrix, one sample per row.
 */
typedef struct RenyiSamples RenyiSamples;

/**
 * Estimator settings. `degree` is the polynomial degree or Lanczos step
 * count and is ignored by the exact and trace methods.
 */
typedef struct RenyiOptions {
  enum RenyiMethod method;
  double alpha;
  size_t sketches;
  size_t degree;
  uint64_t seed;
} RenyiOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Chebyshev, alpha 2, 100 sketches, degree 30, seed 0.
 */
struct RenyiOptions renyi_default_options(void);

/**
 * Copies `rows * cols` row-major values into a new sample handle.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles; `out` must be writable.
 */
enum RenyiStatus renyi_samples_new(const double *data,
                                   size_t rows,
                                   size_t cols,
                                   struct RenyiSamples **out);

/**
 * # Safety
 * `samples` must be null or a handle from [`renyi_samples_new`] not yet freed.
 */
void renyi_samples_free(struct RenyiSamples *samples);

/**
 * Gram matrix of `exp(-|x - y|^2 / (2 sigma^2))`.
 *
 * # Safety
 * `samples` must be a live handle; `out` must be writable.
 */
enum RenyiStatus renyi_gram_gaussian(const struct RenyiSamples *samples,
                                     double sigma,
                                     struct RenyiGram **out);

/**
 * Gram matrix of `(x.y + offset)^degree`.
 *
 * # Safety
 * `samples` must be a live handle; `out` must be writable.
 */
enum RenyiStatus renyi_gram_polynomial(const struct RenyiSamples *samples,
                                       double offset,
                                       uint32_t degree,
                                       struct RenyiGram **out);

/**
 * Trace-normalized Hadamard product of `count` Gram matrices.
 *
 * # Safety
 * `grams` must point to `count` live handles; `out` must be writable.
 */
enum RenyiStatus renyi_gram_joint(const struct RenyiGram *const *grams,
                                  size_t count,
                                  struct RenyiGram **out);

/**
 * Matrix order, or 0 for a null handle.
 *
 * # Safety
 * `gram` must be null or a live handle.
 */
size_t renyi_gram_order(const struct RenyiGram *gram);

/**
 * Copies the `n * n` row-major entries into `out`, which holds `len` doubles.
 *
 * # Safety
 * `gram` must be a live handle; `out` must have room for `len` doubles.
 */
enum RenyiStatus renyi_gram_entries(const struct RenyiGram *gram, double *out, size_t len);

/**
 * # Safety
 * `gram` must be null or a live handle not yet freed.
 */
void renyi_gram_free(struct RenyiGram *gram);

/**
 * Entropy in bits with the method in `options` (null means defaults).
 *
 * # Safety
 * `gram` must be a live handle; `options` null or readable; `out` writable.
 */
enum RenyiStatus renyi_entropy(const struct RenyiGram *gram,
                               const struct RenyiOptions *options,
                               double *out);

/**
 * `S(X_1..X_count) + S(Y) - S(X_1..X_count, Y)`; all three terms share
 * the seed in `options`.
 *
 * # Safety
 * `xs` must point to `count` live handles, `y` must be live, `options`
 * null or readable and `out` writable.
 */
enum RenyiStatus renyi_mutual_information(const struct RenyiGram *const *xs,
                                          size_t count,
                                          const struct RenyiGram *y,
                                          const struct RenyiOptions *options,
                                          double *out);

/**
 * `sum_i S(X_i) - S(X_1..X_count)` for `count >= 2`.
 *
 * # Safety
 * `grams` must point to `count` live handles, `options` null or readable
 * and `out` writable.
 */
enum RenyiStatus renyi_total_correlation(const struct RenyiGram *const *grams,
                                         size_t count,
                                         const struct RenyiOptions *options,
                                         double *out);

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`) and returns the full message length
 * plus one. An empty message means the last call succeeded.
 *
 * # Safety
 * `buf` must be null or have room for `len` bytes.
 */
size_t renyi_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *renyi_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RENYI_H */
