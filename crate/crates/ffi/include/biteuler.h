#ifndef BITEULER_H
#define BITEULER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define BIT_SCHEME_EULER_MARUYAMA 0

#define BIT_SCHEME_DRIFT_TAMED 1

#define BIT_SCHEME_STOPPED 2

typedef enum BitStatus {
  BIT_STATUS_OK = 0,
  BIT_STATUS_NULL_POINTER = 1,
  BIT_STATUS_INVALID_ARGUMENT = 2,
  BIT_STATUS_DIMENSION = 3,
  BIT_STATUS_NOT_DIVISIBLE = 4,
  BIT_STATUS_UNKNOWN_MODEL = 5,
  BIT_STATUS_NO_EXACT_SOLUTION = 6,
  BIT_STATUS_NO_LYAPUNOV = 7,
  BIT_STATUS_INADMISSIBLE = 8,
  BIT_STATUS_INSUFFICIENT_DATA = 9,
  BIT_STATUS_OUT_OF_RANGE = 10,
  BIT_STATUS_IO = 11,
  BIT_STATUS_PANIC = 12,
} BitStatus;

/**
 * Opaque strong error table.
 */
typedef struct BitErrorTable BitErrorTable;

/**
 * Opaque catalog model.
 */
typedef struct BitModel BitModel;

typedef struct BitErrorRow {
  size_t n;
  size_t paths;
  uint64_t seed;
  double sup_error;
  double std_error;
  double overflow_fraction;
} BitErrorRow;

typedef struct BitRateFit {
  double slope;
  double intercept;
  double residual;
} BitRateFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread; empty if none. Valid until the next failure.
 */
const char *bit_last_error(void);

/**
 * Builds catalog model `id` with `n_params` name/value overrides.
 *
 * # Safety
 * `id` and each `param_names[i]` must be NUL-terminated strings; the arrays
 * must hold `n_params` entries; `out` must be writable.
 */
enum BitStatus bit_model_new(const char *id,
                             const char *const *param_names,
                             const double *param_values,
                             size_t n_params,
                             double horizon,
                             struct BitModel **out);

/**
 * # Safety
 * `model` must come from [`bit_model_new`] and not be used afterwards; null is ignored.
 */
void bit_model_free(struct BitModel *model);

/**
 * State and noise dimensions of a model.
 *
 * # Safety
 * `model` must be a live handle; `d` and `m` writable.
 */
enum BitStatus bit_model_dims(const struct BitModel *model, size_t *d, size_t *m);

/**
 * Default initial state of a model, written to `out` (length `d`).
 *
 * # Safety
 * `model` must be a live handle; `out` must hold `d` doubles.
 */
enum BitStatus bit_model_default_x0(const struct BitModel *model, double *out);

/**
 * Coordinatewise `x exp(-x^4/h)`.
 *
 * # Safety
 * `x` and `out` must each hold `m` doubles.
 */
enum BitStatus bit_tame(double h, const double *x, size_t m, double *out);

/**
 * Diagonal of the Jacobian of the taming map.
 *
 * # Safety
 * `x` and `out` must each hold `m` doubles.
 */
enum BitStatus bit_tame_jacobian_diag(double h, const double *x, size_t m, double *out);

/**
 * Coordinatewise Laplacian of the taming map.
 *
 * # Safety
 * `x` and `out` must each hold `m` doubles.
 */
enum BitStatus bit_tame_laplacian(double h, const double *x, size_t m, double *out);

/**
 * Stopping radius `exp(sqrt|ln(N/T)|)`.
 */
double bit_stopping_threshold(size_t n, double horizon);

/**
 * Runs one path of `scheme` on `n` steps driven by Brownian path `(seed, path_index)`.
 *
 * `states` receives `(n + 1) d` doubles, row `k` being the state at `t_k`.
 *
 * # Safety
 * `model` must be a live handle; `x0` must hold `d` doubles, `states`
 * `(n + 1) d`; `tau_index` may be null.
 */
enum BitStatus bit_run_path(const struct BitModel *model,
                            uint32_t scheme_code,
                            double horizon,
                            size_t n,
                            const double *x0,
                            uint64_t seed,
                            uint64_t path_index,
                            double *states,
                            size_t *tau_index);

/**
 * Strong error table of `scheme_code` against the exact solution
 * (`reference_code < 0`) or against scheme `reference_code` on `n_ref` steps.
 *
 * # Safety
 * `model` must be a live handle; `ns` must hold `n_len` entries; `x0` is
 * null (catalog default) or holds `d` doubles; `out` must be writable.
 */
enum BitStatus bit_strong_error(const struct BitModel *model,
                                uint32_t scheme_code,
                                int32_t reference_code,
                                double r,
                                double horizon,
                                const size_t *ns,
                                size_t n_len,
                                size_t n_ref,
                                size_t paths,
                                uint64_t seed,
                                const double *x0,
                                struct BitErrorTable **out);

/**
 * # Safety
 * `table` must come from [`bit_strong_error`] and not be used afterwards; null is ignored.
 */
void bit_error_table_free(struct BitErrorTable *table);

/**
 * Number of rows; 0 for a null handle.
 *
 * # Safety
 * `table` must be null or a live handle.
 */
size_t bit_error_table_len(const struct BitErrorTable *table);

/**
 * # Safety
 * `table` must be a live handle; `row` writable.
 */
enum BitStatus bit_error_table_row(const struct BitErrorTable *table,
                                   size_t index,
                                   struct BitErrorRow *row);

/**
 * Least-squares slope of `ln error` against `ln(T/N)`.
 *
 * # Safety
 * `table` must be a live handle; `fit` writable.
 */
enum BitStatus bit_error_table_fit(const struct BitErrorTable *table, struct BitRateFit *fit);

/**
 * `eps^N` for the given constants; `+inf` when it overflows.
 *
 * # Safety
 * `out` must be writable.
 */
enum BitStatus bit_epsilon_n(double c, uint32_t p, double horizon, size_t m, size_t n, double *out);

/**
 * Bound on `E[U(Y_t)]` given `E[U(Y_0)] = eu0`.
 *
 * # Safety
 * `out` must be writable.
 */
enum BitStatus bit_moment_bound(double c,
                                uint32_t p,
                                double horizon,
                                size_t m,
                                double rho,
                                size_t n,
                                double t,
                                double eu0,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BITEULER_H */
