#ifndef BERNFIELD_H
#define BERNFIELD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BfStatus {
  BF_STATUS_OK = 0,
  BF_STATUS_NULL_POINTER = 1,
  BF_STATUS_INVALID_ARGUMENT = 2,
  BF_STATUS_CONDITION_FAILED = 3,
  BF_STATUS_UNAVAILABLE = 4,
  BF_STATUS_RUNTIME = 5,
  BF_STATUS_PANIC = 6,
} BfStatus;

/**
 * Autocovariance table of a field.
 */
typedef struct BfCovariance BfCovariance;

/**
 * Random field model.
 */
typedef struct BfField BfField;

/**
 * Shell sums and increment norms of a field.
 */
typedef struct BfProfile BfProfile;

/**
 * Finitely supported weight family.
 */
typedef struct BfWeights BfWeights;

typedef struct BfBoundParams {
  double p;
  double gamma;
  double alpha;
  double beta;
} BfBoundParams;

typedef struct BfBoundReport {
  double sigma;
  double eps_n;
  double c2;
  double cp;
  double n0_lhs;
  /**
   * 1 when the variance condition holds, else 0.
   */
  int32_t n0_condition;
  double term_i;
  double term_i_window_form;
  double term_ii;
  double term_iii;
  double total;
} BfBoundReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last non-`Ok` status on this thread; valid until the next call.
 */
const char *bf_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *bf_version(void);

/**
 * `14.5 p / ln p`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum BfStatus bf_jsz_constant(double p, double *out);

/**
 * Builds a field from its JSON model description.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum BfStatus bf_field_from_json(const char *json, struct BfField **out);

/**
 * # Safety
 * `field` must come from `bf_field_from_json` and not be used afterwards.
 */
void bf_field_free(struct BfField *field);

/**
 * Indicator weights of `{1..n}^dim`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum BfStatus bf_weights_cube(size_t n, size_t dim, struct BfWeights **out);

/**
 * Weights from `len` points: `coords` holds `len * dim` integers row by row.
 *
 * # Safety
 * `coords` and `values` must point to arrays of the stated lengths.
 */
enum BfStatus bf_weights_from_arrays(size_t dim,
                                     const int64_t *coords,
                                     const double *values,
                                     size_t len,
                                     struct BfWeights **out);

/**
 * `|w|_q`.
 *
 * # Safety
 * `weights` must be a live handle; `out` must be valid for writes.
 */
enum BfStatus bf_weights_norm(const struct BfWeights *weights, double q, double *out);

/**
 * # Safety
 * `weights` must come from a `bf_weights_*` constructor and not be used afterwards.
 */
void bf_weights_free(struct BfWeights *weights);

/**
 * Dependence profile at order `p` with default options and the given seed.
 *
 * # Safety
 * `field` must be a live handle; `out` must be valid for writes.
 */
enum BfStatus bf_profile_build(const struct BfField *field,
                               double p,
                               uint64_t seed,
                               struct BfProfile **out);

/**
 * `C_2(exponent)` when `kind == 0`, `C_p(exponent)` when `kind == 1`.
 *
 * # Safety
 * `profile` must be a live handle; `out` must be valid for writes.
 */
enum BfStatus bf_series_constant(const struct BfProfile *profile,
                                 int32_t kind,
                                 double exponent,
                                 double *out);

/**
 * # Safety
 * `profile` must come from `bf_profile_build` and not be used afterwards.
 */
void bf_profile_free(struct BfProfile *profile);

/**
 * Autocovariance table; `reps` and `seed` are used only for fields without a closed form.
 *
 * # Safety
 * `field` must be a live handle; `out` must be valid for writes.
 */
enum BfStatus bf_covariance_build(const struct BfField *field,
                                  uint64_t reps,
                                  uint64_t seed,
                                  struct BfCovariance **out);

/**
 * `sigma^2 = sum_j Cov(X_0, X_j)`.
 *
 * # Safety
 * `cov` must be a live handle; `out` must be valid for writes.
 */
enum BfStatus bf_covariance_sigma_sq(const struct BfCovariance *cov, double *out);

/**
 * # Safety
 * `cov` must come from `bf_covariance_build` and not be used afterwards.
 */
void bf_covariance_free(struct BfCovariance *cov);

/**
 * `Var(sum w_i X_i) / |w|_2^2 - sigma^2`.
 *
 * # Safety
 * Handles must be live; `out` must be valid for writes.
 */
enum BfStatus bf_epsilon_n(const struct BfWeights *weights,
                           const struct BfCovariance *cov,
                           double *out);

/**
 * Upper bound for `|sum w_i X_i|_q`, `q` equal to 2 or to the profile order.
 *
 * # Safety
 * Handles must be live; `out` must be valid for writes.
 */
enum BfStatus bf_moment_bound(const struct BfProfile *profile,
                              const struct BfWeights *weights,
                              double q,
                              double *out);

/**
 * Berry-Esseen terms for `sum w_i X_i`. With `certified != 0` the status is
 * `ConditionFailed` when the variance condition fails; `out` is filled either way.
 *
 * # Safety
 * Handles and `params` must be live; `out` must be valid for writes.
 */
enum BfStatus bf_berry_esseen(const struct BfProfile *profile,
                              const struct BfCovariance *cov,
                              const struct BfWeights *weights,
                              const struct BfBoundParams *params,
                              double x0_norm,
                              int32_t certified,
                              struct BfBoundReport *out);

/**
 * Simulated Kolmogorov distance of `S/|w|_2` to `N(0, sigma^2)` and its DKW half-width.
 *
 * # Safety
 * Handles must be live; `estimate` and `half_width` must be valid for writes.
 */
enum BfStatus bf_empirical_delta_n(const struct BfField *field,
                                   const struct BfWeights *weights,
                                   double sigma,
                                   uint64_t reps,
                                   uint64_t seed,
                                   double *estimate,
                                   double *half_width);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BERNFIELD_H */
