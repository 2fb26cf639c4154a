/* SPDX-License-Identifier: Apache-2.0 */

#ifndef EQUILIBRIA_H
#define EQUILIBRIA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. Codes 2 to 10 match the command-line exit codes.
typedef enum EqStatus {
  EQ_STATUS_OK = 0,
  EQ_STATUS_NULL_POINTER = 1,
  EQ_STATUS_INVALID_PARAMETER = 2,
  EQ_STATUS_DIMENSION_MISMATCH = 3,
  EQ_STATUS_NUMERIC_FAILURE = 4,
  EQ_STATUS_NON_CONVERGENCE = 5,
  EQ_STATUS_USAGE = 6,
  EQ_STATUS_UNKNOWN = 7,
  EQ_STATUS_FORMAT = 8,
  EQ_STATUS_EMPTY = 9,
  EQ_STATUS_IO = 10,
  EQ_STATUS_INVALID_UTF8 = 11,
  EQ_STATUS_PANIC = 12,
} EqStatus;

// Opaque model handle.
typedef struct EqModel EqModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *eq_version(void);

// Message of the last failed call on this thread, or null. Valid until the next
// call into the library from the same thread.
const char *eq_last_error_message(void);

// Random implicit model with `n` states, `p` inputs and `q` outputs and the
// default solver settings. Without feedback `A` is strictly upper triangular.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum EqStatus eq_model_new_implicit(size_t n,
                                    size_t p,
                                    size_t q,
                                    bool feedback,
                                    uint64_t seed,
                                    struct EqModel **out);

// Loads a checkpoint written by the command-line tool or [`eq_model_save`].
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum EqStatus eq_model_load(const char *path, struct EqModel **out);

// # Safety
// `model` must be a live handle and `path` a NUL-terminated string.
enum EqStatus eq_model_save(const struct EqModel *model, const char *path);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void eq_model_free(struct EqModel *model);

// Flattened input length and scored output length of one sample.
//
// # Safety
// `model` must be a live handle; output pointers may be null.
enum EqStatus eq_model_io_len(const struct EqModel *model, size_t *input_len, size_t *output_len);

// State, input and output sizes of the equilibrium core.
//
// # Safety
// `model` must be a live handle; output pointers may be null.
enum EqStatus eq_model_dims(const struct EqModel *model, size_t *n, size_t *p, size_t *q);

// # Safety
// `model` must be a live handle and `count` a valid pointer.
enum EqStatus eq_model_parameter_count(const struct EqModel *model, size_t *count);

// Scored prediction for one flattened input sample. `iterations` (nullable)
// receives the total forward solver iterations.
//
// # Safety
// Buffers must hold at least the stated number of doubles.
enum EqStatus eq_model_predict(const struct EqModel *model,
                               const double *input,
                               size_t input_len,
                               double *output,
                               size_t output_len,
                               size_t *iterations);

// Equilibrium state `x = φ(A x + B u)` of the core from a zero start.
//
// # Safety
// Buffers must hold at least the stated number of doubles.
enum EqStatus eq_model_solve(const struct EqModel *model,
                             const double *u,
                             size_t u_len,
                             double *x,
                             size_t x_len,
                             size_t *iterations);

// Gradients of a loss with output gradient `dl_dy` at input `u` with respect to
// `A` (n×n), `B` (n×p), `C` (q×n) and `D` (q×p). Without feedback the lower
// triangle of `dA` is zero.
//
// # Safety
// Buffers must hold at least the stated number of doubles.
enum EqStatus eq_model_gradients(const struct EqModel *model,
                                 const double *u,
                                 size_t u_len,
                                 const double *dl_dy,
                                 size_t dl_dy_len,
                                 double *da,
                                 size_t da_len,
                                 double *db,
                                 size_t db_len,
                                 double *dc,
                                 size_t dc_len,
                                 double *dd,
                                 size_t dd_len);

// Applies one plain gradient step `θ ← θ − lr · dθ` to the core and re-projects.
//
// # Safety
// Buffers must hold at least the stated number of doubles.
enum EqStatus eq_model_sgd_step(struct EqModel *model,
                                double lr,
                                const double *da,
                                const double *db,
                                const double *dc,
                                const double *dd);

// Re-projects `A` onto the ∞-norm ball (and the strictly upper pattern without feedback).
//
// # Safety
// `model` must be a live handle.
enum EqStatus eq_model_apply_constraints(struct EqModel *model);

// `‖A‖_∞` of the core.
//
// # Safety
// `model` must be a live handle and `norm` a valid pointer.
enum EqStatus eq_model_inf_norm(const struct EqModel *model, double *norm);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EQUILIBRIA_H */
