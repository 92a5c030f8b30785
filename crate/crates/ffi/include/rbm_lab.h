#ifndef RBM_LAB_H
#define RBM_LAB_H

/* Generated by cbindgen from rbm-lab-ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum RbmStatus {
  RBM_STATUS_OK = 0,
  RBM_STATUS_INVALID_ARGUMENT = 1,
  RBM_STATUS_NULL_POINTER = 2,
  RBM_STATUS_NOT_ON_BOUNDARY = 3,
  RBM_STATUS_BUDGET_EXCEEDED = 4,
  RBM_STATUS_DEGENERATE = 5,
  RBM_STATUS_INTERNAL = 6,
} RbmStatus;

/**
 * How a simulation run stops.
 */
typedef enum RbmStop {
  /**
   * Stop at time `value`.
   */
  RBM_STOP_FIXED_TIME = 0,
  /**
   * Stop at the first boundary contact with local time `>= value`.
   */
  RBM_STOP_LOCAL_TIME = 1,
  /**
   * Stop at the first boundary contact (`value` is ignored).
   */
  RBM_STOP_HIT_SPHERE = 2,
} RbmStop;

/**
 * Opaque domain: a flat torus with the unit-ball obstacle, or free space.
 */
typedef struct RbmGeometry RbmGeometry;

/**
 * Opaque single-process simulator bound to a domain, step size and seed.
 */
typedef struct RbmSimulator RbmSimulator;

typedef struct RbmClosedForms {
  double i1_exact;
  double i2_exact;
  double lambda_limit;
  double h_hat_f;
} RbmClosedForms;

typedef struct RbmQuadrature {
  double value;
  double error_estimate;
  uint64_t evaluations;
} RbmQuadrature;

typedef struct RbmHfEstimate {
  double mean;
  double stderr;
  uint64_t n_hit;
  uint64_t n_escape;
  double dt;
} RbmHfEstimate;

typedef struct RbmState {
  double position[3];
  double local_time;
  double clock;
} RbmState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *rbm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rbm_version(void);

/**
 * Torus of half side `rho > 1` around the unit ball.
 *
 * # Safety
 * `out` must be null or valid for a pointer write.
 */
enum RbmStatus rbm_geometry_torus(double rho, struct RbmGeometry **out);

/**
 * Free space outside the unit ball.
 *
 * # Safety
 * `out` must be null or valid for a pointer write.
 */
enum RbmStatus rbm_geometry_exterior(struct RbmGeometry **out);

/**
 * # Safety
 * `g` must be null or a handle from `rbm_geometry_*` not yet freed.
 */
void rbm_geometry_free(struct RbmGeometry *g);

/**
 * Reduces `raw` to the canonical cell `[-rho, rho)^3` (identity in free space).
 *
 * # Safety
 * `raw` and `out` must point to three doubles.
 */
enum RbmStatus rbm_canonicalize(const struct RbmGeometry *g, const double *raw, double *out);

/**
 * Minimal-image representative of `x - y`.
 *
 * # Safety
 * `x`, `y` and `out` must point to three doubles.
 */
enum RbmStatus rbm_min_image_diff(const struct RbmGeometry *g,
                                  const double *x,
                                  const double *y,
                                  double *out);

/**
 * Flat distance between `x` and `y` (ignoring the obstacle).
 *
 * # Safety
 * `x` and `y` must point to three doubles, `out` to one.
 */
enum RbmStatus rbm_geodesic_dist(const struct RbmGeometry *g,
                                 const double *x,
                                 const double *y,
                                 double *out);

/**
 * # Safety
 * `out` must be null or valid for a write.
 */
enum RbmStatus rbm_closed_forms(struct RbmClosedForms *out);

/**
 * Adaptive quadrature of the first angular integral to absolute tolerance `tol`.
 *
 * # Safety
 * `out` must be null or valid for a write.
 */
enum RbmStatus rbm_integral_i1(double tol, struct RbmQuadrature *out);

/**
 * Adaptive quadrature of the second angular integral.
 *
 * # Safety
 * `out` must be null or valid for a write.
 */
enum RbmStatus rbm_integral_i2(double tol, struct RbmQuadrature *out);

/**
 * Monte Carlo estimate of the excursion-law integral of the projection
 * observable at boundary point `x` with unit tangent `v`. The step size is
 * `(delta / 30)^2`; `far_radius` applies in free space only.
 *
 * # Safety
 * `x` and `v` must point to three doubles; `out` must be valid for a write.
 */
enum RbmStatus rbm_estimate_hf(const struct RbmGeometry *g,
                               const double *x,
                               const double *v,
                               double delta,
                               double far_radius,
                               uint64_t n,
                               uint64_t seed,
                               uint32_t threads,
                               struct RbmHfEstimate *out);

/**
 * Simulator on a copy of `g` with Euler step `dt` and master seed `seed`.
 *
 * # Safety
 * `g` must be a live geometry handle; `out` must be valid for a pointer write.
 */
enum RbmStatus rbm_simulator_new(const struct RbmGeometry *g,
                                 double dt,
                                 uint64_t seed,
                                 struct RbmSimulator **out);

/**
 * # Safety
 * `s` must be null or a handle from `rbm_simulator_new` not yet freed.
 */
void rbm_simulator_free(struct RbmSimulator *s);

/**
 * Runs one reflected path from `x0` on noise stream `stream` until `stop`.
 * Equal `(seed, stream)` pairs give bit-identical results.
 *
 * # Safety
 * `s` must be a live simulator, `x0` must point to three doubles and `out`
 * must be valid for a write.
 */
enum RbmStatus rbm_simulator_run(const struct RbmSimulator *s,
                                 const double *x0,
                                 uint64_t stream,
                                 enum RbmStop stop,
                                 double value,
                                 struct RbmState *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RBM_LAB_H */
