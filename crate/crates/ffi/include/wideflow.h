#ifndef WIDEFLOW_H
#define WIDEFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Local stability of a stationary atom.
 */
typedef enum WfStability {
  WF_STABILITY_STABLE = 0,
  WF_STABILITY_UNSTABLE = 1,
  WF_STABILITY_NEUTRAL = 2,
} WfStability;

/**
 * Result codes.
 */
typedef enum WfStatus {
  WF_STATUS_OK = 0,
  WF_STATUS_NULL_POINTER = 1,
  WF_STATUS_INVALID_INPUT = 2,
  WF_STATUS_NUMERICAL = 3,
  WF_STATUS_UNSUPPORTED = 4,
  WF_STATUS_BUFFER_TOO_SMALL = 5,
  WF_STATUS_PANIC = 6,
} WfStatus;

/**
 * Target function selector for [`WfTruth`].
 */
typedef enum WfTruthKind {
  /**
   * `x^2`
   */
  WF_TRUTH_KIND_X_SQUARED = 0,
  /**
   * `x^2 / 2`
   */
  WF_TRUTH_KIND_HALF_X_SQUARED = 1,
  /**
   * `amplitude * sin(k pi x)`
   */
  WF_TRUTH_KIND_SINE = 2,
  /**
   * `0`
   */
  WF_TRUTH_KIND_ZERO = 3,
} WfTruthKind;

/**
 * Opaque particle ensemble.
 */
typedef struct WfEnsemble WfEnsemble;

/**
 * A target function. `kind` holds a `WfTruthKind` value; `amplitude` and
 * `k` are read only for `Sine`.
 */
typedef struct WfTruth {
  uint32_t kind;
  double amplitude;
  uint32_t k;
} WfTruth;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t wf_last_error(char *buf, size_t len);

/**
 * Builds an ensemble from `n` particles. With `knot_only` nonzero the
 * coefficients are pinned to 1 and only knots move.
 *
 * # Safety
 * `c` and `h` must point to `n` doubles; `out` must be writable.
 */
enum WfStatus wf_ensemble_new(const double *c,
                              const double *h,
                              size_t n,
                              int32_t knot_only,
                              struct WfEnsemble **out);

/**
 * Releases an ensemble. Null is ignored.
 *
 * # Safety
 * `e` must come from [`wf_ensemble_new`] and not be used afterwards.
 */
void wf_ensemble_free(struct WfEnsemble *e);

/**
 * Number of particles.
 *
 * # Safety
 * `e` must be a live handle; `out` must be writable.
 */
enum WfStatus wf_ensemble_len(const struct WfEnsemble *e, size_t *out);

/**
 * Simulated time.
 *
 * # Safety
 * `e` must be a live handle; `out` must be writable.
 */
enum WfStatus wf_ensemble_time(const struct WfEnsemble *e, double *out);

/**
 * Loss of the ensemble against `f`.
 *
 * # Safety
 * `e` must be a live handle; `f` and `out` must be valid.
 */
enum WfStatus wf_ensemble_loss(const struct WfEnsemble *e, const struct WfTruth *f, double *out);

/**
 * One explicit Euler step of size `dt`. On error the ensemble is unchanged.
 *
 * # Safety
 * `e` must be a live handle; `f` must be valid.
 */
enum WfStatus wf_ensemble_step(struct WfEnsemble *e, const struct WfTruth *f, double dt);

/**
 * Advances the ensemble to `t + t_span` with step `dt`, using the same
 * loss-guarded stepper as the CLI. On error the ensemble is unchanged.
 *
 * # Safety
 * `e` must be a live handle; `f` must be valid.
 */
enum WfStatus wf_ensemble_run(struct WfEnsemble *e,
                              const struct WfTruth *f,
                              double dt,
                              double t_span);

/**
 * Copies the particle coordinates into `c` and `h`, each of capacity `cap`.
 *
 * # Safety
 * `e` must be a live handle; `c` and `h` must hold `cap` doubles.
 */
enum WfStatus wf_ensemble_weights(const struct WfEnsemble *e, double *c, double *h, size_t cap);

/**
 * Positive roots of `cos x + sech x = 0`, indexed from 0 (root `k` lies
 * near `pi/2 + k pi`).
 *
 * # Safety
 * `out` must be writable.
 */
enum WfStatus wf_solve_xi(size_t k, double *out);

/**
 * Eigenvalue `zeta_k` and eigenfunction value `s_k(h)` of the knot kernel,
 * indexed as in [`wf_solve_xi`].
 *
 * # Safety
 * `zeta` and `value` must be writable.
 */
enum WfStatus wf_ktilde_eval(size_t k, double h, double *zeta, double *value);

/**
 * Predicted loss at time `t` for a small-coefficient start, spectral
 * series truncated after `truncation` modes.
 *
 * # Safety
 * `f` must be valid and `out` writable.
 */
enum WfStatus wf_smallc_loss(const struct WfTruth *f, double t, size_t truncation, double *out);

/**
 * Knots and coefficients of the `m`-atom stationary family for `x^2`.
 *
 * # Safety
 * `knots` and `coefficients` must hold `cap` doubles.
 */
enum WfStatus wf_equidistant_family(size_t m, double *knots, double *coefficients, size_t cap);

/**
 * Classifies a stationary atom at `(c, h)`. Fails with `Numerical` when the
 * point is not stationary.
 *
 * # Safety
 * `f` must be valid and `out` writable.
 */
enum WfStatus wf_classify_atom(double c, double h, const struct WfTruth *f, enum WfStability *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WIDEFLOW_H */
