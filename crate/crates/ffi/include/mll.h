#ifndef MLL_H
#define MLL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum MllStatus {
  MllStatusOk = 0,
  MllStatusInvalidArgument = 1,
  MllStatusDomainViolation = 2,
  MllStatusNoConvergence = 3,
  MllStatusUnsupported = 4,
  MllStatusSizeMismatch = 5,
  MllStatusTooLarge = 6,
  MllStatusNotContractive = 7,
  MllStatusExecutionFailed = 8,
  MllStatusIo = 9,
  MllStatusPanic = 10,
} MllStatus;

/**
 * Opaque mirror-map handle.
 */
typedef struct MllMap MllMap;

/**
 * Opaque potential handle.
 */
typedef struct MllPotential MllPotential;

/**
 * Mixing-bound constants, mirrored as a plain C struct.
 */
typedef struct MllConstants {
  double m;
  double big_m;
  double alpha;
  double beta;
  double c0;
  double c1;
  double d1;
  double c2;
  double d2;
  double h_max;
  double u;
  double v;
  double c_mla;
  double w0_bound;
} MllConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mll_version(void);

/**
 * Message of the calling thread's most recent error; valid until the next
 * failing call on the same thread.
 */
const char *mll_last_error_message(void);

/**
 * Build a mirror map from its JSON spec, e.g.
 * `{"kind": "orthant_log_barrier", "dim": 2}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MllStatus mll_map_from_json(const char *json, struct MllMap **out);

/**
 * # Safety
 * `map` must come from `mll_map_from_json` and not be freed twice.
 */
void mll_map_free(struct MllMap *map);

/**
 * # Safety
 * `map` must be a valid handle.
 */
uintptr_t mll_map_primal_dim(const struct MllMap *map);

/**
 * # Safety
 * `map` must be a valid handle.
 */
uintptr_t mll_map_noise_dim(const struct MllMap *map);

/**
 * Mirror map `y = grad phi(x)`; `x` and `y_out` have length `primal_dim`.
 *
 * # Safety
 * Buffers must hold `len` doubles; `map` must be a valid handle.
 */
enum MllStatus mll_map_grad(const struct MllMap *map,
                            const double *x,
                            uintptr_t len,
                            double *y_out);

/**
 * Inverse mirror map `x = (grad phi)^{-1}(y)`.
 *
 * # Safety
 * Buffers must hold `len` doubles; `map` must be a valid handle.
 */
enum MllStatus mll_map_dual_grad(const struct MllMap *map,
                                 const double *y,
                                 uintptr_t len,
                                 double *x_out);

/**
 * Bregman divergence of the barrier between two interior points.
 *
 * # Safety
 * Buffers must hold `len` doubles; `map` must be a valid handle.
 */
enum MllStatus mll_map_bregman(const struct MllMap *map,
                               const double *x,
                               const double *x2,
                               uintptr_t len,
                               double *out);

/**
 * Build a potential from its JSON spec, e.g.
 * `{"kind": "relative_affine", "lambda": 2.0, "b": [1.0]}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MllStatus mll_potential_from_json(const char *json, struct MllPotential **out);

/**
 * # Safety
 * `pot` must come from `mll_potential_from_json` and not be freed twice.
 */
void mll_potential_free(struct MllPotential *pot);

/**
 * Dual drift `g(y) = grad f(dual_grad(y))`.
 *
 * # Safety
 * Buffers must hold `len` doubles; handles must be valid.
 */
enum MllStatus mll_dual_drift(const struct MllMap *map,
                              const struct MllPotential *pot,
                              const double *y,
                              uintptr_t len,
                              double *out);

/**
 * One dual-space step `y - h g(y) + sqrt(2h) A(y) z`; `z` has length
 * `noise_dim`, `y` and `out` have length `primal_dim`.
 *
 * # Safety
 * Buffers must match the stated lengths; handles must be valid.
 */
enum MllStatus mll_step_dual(const struct MllMap *map,
                             const struct MllPotential *pot,
                             const double *y,
                             uintptr_t y_len,
                             double h,
                             const double *z,
                             uintptr_t z_len,
                             double *out);

/**
 * One primal-space step through the mirror map.
 *
 * # Safety
 * Buffers must match the stated lengths; handles must be valid.
 */
enum MllStatus mll_step_primal(const struct MllMap *map,
                               const struct MllPotential *pot,
                               const double *x,
                               uintptr_t x_len,
                               double h,
                               const double *z,
                               uintptr_t z_len,
                               double *out);

/**
 * Run independent chains from a Gaussian law around the dual minimizer
 * (`init_std` standard deviation) and write the final iterates into
 * `samples_out` (row-major `chains x primal_dim`). `policy`: 0 fail,
 * 1 reject/resample, 2 clamp.
 *
 * # Safety
 * `samples_out` must hold `chains * primal_dim` doubles; handles valid.
 */
enum MllStatus mll_run_chains(const struct MllMap *map,
                              const struct MllPotential *pot,
                              double h,
                              uintptr_t iterations,
                              uintptr_t chains,
                              uint64_t seed,
                              int32_t policy,
                              double init_std,
                              double *samples_out,
                              uint64_t *violations_out);

/**
 * Exact geometric-Brownian-motion solution
 * `y0 exp(-(1 + alpha) t + sqrt(2 alpha) w_t)`.
 */
double mll_gbm_exact(double y0, double alpha, double t, double w_t);

/**
 * Exact empirical 1-d Wasserstein-2 distance between equal-size samples.
 *
 * # Safety
 * `a` and `b` must hold `n` doubles each.
 */
enum MllStatus mll_w2_1d(const double *a, const double *b, uintptr_t n, double *out);

/**
 * Closed-form mixing constants from instance numbers; fails with
 * `MLL_STATUS_NOT_CONTRACTIVE` when `alpha >= m`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MllStatus mll_mixing_constants(double m,
                                    double big_m,
                                    double alpha,
                                    uintptr_t dim,
                                    double y_star_norm,
                                    double a_star_hs,
                                    double g_star_norm,
                                    double e_y0_sq,
                                    double e_target_sq,
                                    struct MllConstants *out);

/**
 * Run a full experiment from its JSON config, writing the report files
 * into `out_dir`. `passed_out` receives 1 when every check passed.
 *
 * # Safety
 * `config_json` and `out_dir` must be NUL-terminated strings.
 */
enum MllStatus mll_run_experiment_json(const char *config_json,
                                       const char *out_dir,
                                       int32_t *passed_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MLL_H */
