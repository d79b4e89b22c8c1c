#ifndef VRAMSEY_H
#define VRAMSEY_H

/* Generated by cbindgen; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Status codes; `VR_OK` is zero.
 */
typedef enum VrStatus {
  VR_STATUS_OK = 0,
  VR_STATUS_INVALID_ATOM_NUMBER = 1,
  VR_STATUS_NON_FINITE = 2,
  VR_STATUS_INVALID_ARGUMENT = 3,
  VR_STATUS_NOT_HERMITIAN = 4,
  VR_STATUS_DIMENSION_MISMATCH = 5,
  VR_STATUS_NEGATIVE_EXPOSURE = 6,
  VR_STATUS_MEMORY_CAP = 7,
  VR_STATUS_ASYMPTOTICS_INVALID = 8,
  VR_STATUS_UNUSABLE_PROTOCOL = 9,
  VR_STATUS_OPTIMIZATION_FAILED = 10,
  VR_STATUS_CONFIG = 11,
  VR_STATUS_UNSUPPORTED_FIGURE = 12,
  VR_STATUS_IO = 13,
  VR_STATUS_JSON = 14,
  VR_STATUS_NULL_POINTER = 15,
  VR_STATUS_BUFFER_TOO_SMALL = 16,
  VR_STATUS_PANIC = 17,
} VrStatus;

/**
 * Exact cost of one prior width and dephasing exposure.
 */
typedef struct VrCost VrCost;

/**
 * Collective spin operators for N atoms.
 */
typedef struct VrTable VrTable;

/**
 * Cost summary of one circuit at one prior width.
 */
typedef struct VrCostReport {
  /**
   * Posterior mean squared error `(Δφ)²`.
   */
  double bmse;
  /**
   * `Δφ/δφ`.
   */
  double posterior_over_prior;
  /**
   * Effective measurement variance `(Δφ_M)²`.
   */
  double eff_meas_var;
  /**
   * Optimal slope of the linear estimator.
   */
  double a_opt;
} VrCostReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null. Valid until the next call.
 */
const char *vr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vr_version(void);

/**
 * Builds the operator table for `n` atoms.
 *
 * # Safety
 * `out` must be a valid pointer; the handle must be freed with [`vr_table_free`].
 */
enum VrStatus vr_table_new(size_t n, struct VrTable **out_table);

/**
 * # Safety
 * `table` must come from [`vr_table_new`] or be null.
 */
void vr_table_free(struct VrTable *table);

/**
 * Exact cost at prior width `delta_phi` with dephasing exposure `gamma_t`
 * (0 for none). The table is copied.
 *
 * # Safety
 * `table` and `out_cost` must be valid; free the result with [`vr_cost_free`].
 */
enum VrStatus vr_cost_new(const struct VrTable *table,
                          double delta_phi,
                          double gamma_t,
                          struct VrCost **out_cost);

/**
 * # Safety
 * `cost` must come from [`vr_cost_new`] or be null.
 */
void vr_cost_free(struct VrCost *cost);

/**
 * Evaluates an `(n_en, n_de)` circuit given `3(n_en + n_de)` angles
 * (entangler first), with the optimal estimator slope.
 *
 * # Safety
 * `angles` must hold `len` doubles; `cost` and `report` must be valid.
 */
enum VrStatus vr_cost_evaluate(const struct VrCost *cost,
                               size_t n_en,
                               size_t n_de,
                               const double *angles,
                               size_t len,
                               struct VrCostReport *report);

/**
 * Cost at the optimal slope and its gradient, written to `gradient[0..len]`.
 *
 * # Safety
 * `angles` and `gradient` must hold `len` doubles; other pointers must be valid.
 */
enum VrStatus vr_cost_gradient(const struct VrCost *cost,
                               size_t n_en,
                               size_t n_de,
                               const double *angles,
                               size_t len,
                               double *value,
                               double *gradient);

/**
 * Multi-start optimization of an `(n_en, n_de)` circuit. `n_starts = 0`
 * uses the default budget. Optimal angles go to `angles[0..len]`, where
 * `len` must be at least `3(n_en + n_de)`.
 *
 * # Safety
 * `angles` must hold `len` doubles; other pointers must be valid.
 */
enum VrStatus vr_cost_optimize(const struct VrCost *cost,
                               size_t n_en,
                               size_t n_de,
                               uint64_t seed,
                               size_t n_starts,
                               double *angles,
                               size_t len,
                               struct VrCostReport *report);

/**
 * Dimensionless clock instability of the coherent spin state for noise
 * exponent `alpha` (1, 2 or 3).
 *
 * # Safety
 * `sigma` must be valid.
 */
enum VrStatus vr_css_sigma(size_t n, uint8_t alpha, double bt, double *sigma);

/**
 * Large-N optimum of the phase-slip limited clock: `b T` and `σ`.
 *
 * # Safety
 * `bt_opt` and `sigma_opt` must be valid.
 */
enum VrStatus vr_oqc_optimum(size_t n, uint8_t alpha, double *bt_opt, double *sigma_opt);

/**
 * Largest dead-time fraction under flicker noise for a clock at
 * `(bt_opt, sigma_opt)`.
 *
 * # Safety
 * `r_max` must be valid.
 */
enum VrStatus vr_dick_r_max(double bt_opt, double sigma_opt, double *r_max);

/**
 * Runs an experiment configuration (JSON text) and writes its results and
 * manifest into `out_dir`. Nothing is written on failure.
 *
 * # Safety
 * Both strings must be valid NUL-terminated strings.
 */
enum VrStatus vr_run_config(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VRAMSEY_H */
