#ifndef DENSDE_H
#define DENSDE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DensdeStatus {
  DENSDE_STATUS_OK = 0,
  DENSDE_STATUS_NULL_POINTER = 1,
  DENSDE_STATUS_INVALID_ARGUMENT = 2,
  DENSDE_STATUS_UNDER_RESOLVED = 3,
  DENSDE_STATUS_LENGTH_MISMATCH = 4,
  DENSDE_STATUS_NUMERICAL_FAILURE = 5,
  DENSDE_STATUS_IO = 6,
  DENSDE_STATUS_PANIC = 7,
} DensdeStatus;

/**
 * Reference solution of the nonlinear Fokker–Planck equation.
 */
typedef struct DensdeDensityPath DensdeDensityPath;

/**
 * Particle positions on the torus.
 */
typedef struct DensdeEnsemble DensdeEnsemble;

/**
 * Mollifier, unscaled or scaled for a particle count.
 */
typedef struct DensdeKernel DensdeKernel;

typedef struct DensdeRateFit {
  double slope;
  double intercept;
  double r_squared;
  size_t n_points;
  double theoretical_slope;
} DensdeRateFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *densde_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *densde_version(void);

/**
 * Writes `count` increments of the isotropic `alpha`-stable process over
 * time `dt` into `out` (`count * dim` values), drawn from stream
 * `(seed, stream)`.
 *
 * # Safety
 * `out` must point to `out_len` writable doubles.
 */
enum DensdeStatus densde_sample_stable(double alpha,
                                       size_t dim,
                                       double dt,
                                       uint64_t seed,
                                       uint64_t stream,
                                       size_t count,
                                       double *out,
                                       size_t out_len);

/**
 * Transition density at time `t` on the periodic grid with `n` points per
 * axis, centred at the origin node. `out_len` must be `n^dim`.
 *
 * # Safety
 * `out` must point to `out_len` writable doubles.
 */
enum DensdeStatus densde_heat_kernel(double alpha,
                                     size_t dim,
                                     double t,
                                     double domain_length,
                                     size_t n,
                                     double *out,
                                     size_t out_len);

/**
 * Unit-mass bump of support radius `radius` in dimension `dim`.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum DensdeStatus densde_kernel_new(double radius, size_t dim, struct DensdeKernel **out);

/**
 * `phi_N(x) = N^{theta d} phi(N^theta x)` from an unscaled kernel.
 *
 * # Safety
 * `base` must be a live kernel handle and `out` a valid handle slot.
 */
enum DensdeStatus densde_kernel_scaled(const struct DensdeKernel *base,
                                       size_t n_particles,
                                       double theta,
                                       struct DensdeKernel **out);

/**
 * # Safety
 * `kernel` must be a live handle, `y` must point to `dim` doubles.
 */
enum DensdeStatus densde_kernel_eval(const struct DensdeKernel *kernel,
                                     const double *y,
                                     size_t dim,
                                     double *out);

/**
 * # Safety
 * `kernel` must be a live handle.
 */
enum DensdeStatus densde_kernel_support_radius(const struct DensdeKernel *kernel, double *out);

/**
 * # Safety
 * `kernel` must be null or a handle not yet freed.
 */
void densde_kernel_free(struct DensdeKernel *kernel);

/**
 * Ensemble from `n * dim` row-major positions in `[0, L)^dim`.
 *
 * # Safety
 * `positions` must point to `n * dim` doubles, `out` a valid handle slot.
 */
enum DensdeStatus densde_ensemble_new(const double *positions,
                                      size_t n,
                                      size_t dim,
                                      double domain_length,
                                      double time,
                                      struct DensdeEnsemble **out);

/**
 * # Safety
 * `ensemble` must be a live handle.
 */
enum DensdeStatus densde_ensemble_len(const struct DensdeEnsemble *ensemble,
                                      size_t *n,
                                      size_t *dim);

/**
 * Copies the positions out; `out_len` must be `N * dim`.
 *
 * # Safety
 * `ensemble` must be a live handle, `out` must point to `out_len` doubles.
 */
enum DensdeStatus densde_ensemble_positions(const struct DensdeEnsemble *ensemble,
                                            double *out,
                                            size_t out_len);

/**
 * # Safety
 * `ensemble` must be null or a handle not yet freed.
 */
void densde_ensemble_free(struct DensdeEnsemble *ensemble);

/**
 * Mollified empirical density at `n_queries` points (row-major, `dim` each).
 *
 * # Safety
 * Handles must be live; `queries` and `out` must hold `n_queries * dim`
 * and `n_queries` doubles.
 */
enum DensdeStatus densde_kde(const struct DensdeEnsemble *ensemble,
                             const struct DensdeKernel *kernel,
                             const double *queries,
                             size_t n_queries,
                             double *out);

/**
 * Solves the limit equation of a registered scenario on `[0, L)` with
 * `grid_n` points up to `t_end`.
 *
 * # Safety
 * `scenario` must be a NUL-terminated string, `out` a valid handle slot.
 */
enum DensdeStatus densde_solve_fpe(const char *scenario,
                                   double alpha,
                                   double domain_length,
                                   size_t grid_n,
                                   double dt_pde,
                                   double t_end,
                                   struct DensdeDensityPath **out);

/**
 * Number of stored times and values per field.
 *
 * # Safety
 * `path` must be a live handle.
 */
enum DensdeStatus densde_density_path_shape(const struct DensdeDensityPath *path,
                                            size_t *steps,
                                            size_t *field_len);

/**
 * Copies the field stored at index `step` and returns its time.
 *
 * # Safety
 * `path` must be a live handle, `out` must point to `out_len` doubles.
 */
enum DensdeStatus densde_density_path_field(const struct DensdeDensityPath *path,
                                            size_t step,
                                            double *time,
                                            double *out,
                                            size_t out_len);

/**
 * `rho_t(x)`, interpolated in time and space.
 *
 * # Safety
 * `path` must be a live handle, `x` must point to `dim` doubles.
 */
enum DensdeStatus densde_density_path_eval(const struct DensdeDensityPath *path,
                                           double t,
                                           const double *x,
                                           size_t dim,
                                           double *out);

/**
 * # Safety
 * `path` must be null or a handle not yet freed.
 */
void densde_density_path_free(struct DensdeDensityPath *path);

/**
 * Runs one replication of the particle system of a registered scenario
 * and returns the ensemble at `t_end`.
 *
 * # Safety
 * `scenario` must be a NUL-terminated string, `out` a valid handle slot.
 */
enum DensdeStatus densde_simulate(const char *scenario,
                                  double alpha,
                                  double theta,
                                  size_t n_particles,
                                  double dt,
                                  double t_end,
                                  double domain_length,
                                  uint64_t seed,
                                  uint64_t replication,
                                  struct DensdeEnsemble **out);

/**
 * `(mean v^m)^{1/m}` with a bootstrap standard error drawn from `seed`.
 *
 * # Safety
 * `values` must point to `len` doubles.
 */
enum DensdeStatus densde_lm_norm(const double *values,
                                 size_t len,
                                 uint32_t m,
                                 uint64_t seed,
                                 double *value,
                                 double *bootstrap_se);

/**
 * Least-squares slope of `log(error)` against `log(N)`.
 *
 * # Safety
 * `ns` and `errors` must point to `len` values each.
 */
enum DensdeStatus densde_fit_rate(const size_t *ns,
                                  const double *errors,
                                  size_t len,
                                  double theoretical_slope,
                                  struct DensdeRateFit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DENSDE_H */
