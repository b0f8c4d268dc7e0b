#ifndef VOLATIX_H
#define VOLATIX_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Number of entries in a volatility vector.
#define VOLATIX_N_INDICES 10

typedef enum VolatixStatus {
  VOLATIX_STATUS_OK = 0,
  VOLATIX_STATUS_NULL_POINTER = 1,
  VOLATIX_STATUS_INVALID_UTF8 = 2,
  // Schema, validation or parameter error.
  VOLATIX_STATUS_INVALID_INPUT = 3,
  // Join or consistency error, including use of an unconverged fit.
  VOLATIX_STATUS_CONSISTENCY = 4,
  // Output buffer too small; the required length was written.
  VOLATIX_STATUS_BUFFER_TOO_SMALL = 5,
  VOLATIX_STATUS_INTERNAL = 6,
} VolatixStatus;

// Raw event attributes (joined features and covariates).
typedef struct VolatixDataset VolatixDataset;

// Estimation result.
typedef struct VolatixFit VolatixFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into the library on the same thread.
const char *volatix_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *volatix_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void volatix_string_free(char *s);

// Volatility indices of one trace. Outcome codes: 0 baseline,
// 1 near-crash, 2 crash. Marker indices below zero mean "absent". Missing
// components are written as NaN.
//
// Output order: CV of longitudinal acceleration and deceleration, lateral
// acceleration and deceleration, then positive and negative longitudinal
// jerk, positive and negative lateral jerk, mean speed, CV of speed.
//
// # Safety
// The three series must each hold `n` values; `out` must hold 10.
enum VolatixStatus volatix_volatility_indices(const double *speed_kph,
                                              const double *accel_long,
                                              const double *accel_lat,
                                              size_t n,
                                              double sample_period,
                                              int32_t event_type,
                                              int64_t reaction_index,
                                              int64_t impact_index,
                                              double *out);

// σ = exp(−τ²/2 + θ·z + τ·ε0) for `m` scale covariates.
//
// # Safety
// `theta` and `z` must hold `m` values; `out` must be writable.
enum VolatixStatus volatix_scale_factor(const double *theta,
                                        const double *z,
                                        size_t m,
                                        double tau,
                                        double eps0,
                                        double *out);

// Logit probabilities for utilities (baseline, near-crash, crash).
//
// # Safety
// `utilities` and `out` must each hold 3 values.
enum VolatixStatus volatix_choice_probabilities(const double *utilities, double *out);

// AIC and McFadden pseudo-R².
//
// # Safety
// `aic` and `pseudo_r2` must be writable.
enum VolatixStatus volatix_information_criteria(double loglik,
                                                double loglik_null,
                                                size_t k,
                                                double *aic,
                                                double *pseudo_r2);

// Loads event attributes from CSV text, optionally joined with a feature
// CSV from `volatix featurize`.
//
// # Safety
// String arguments must be NUL-terminated; `features_csv` may be null.
enum VolatixStatus volatix_dataset_from_csv(const char *attributes_csv,
                                            const char *features_csv,
                                            struct VolatixDataset **out);

// Number of events, or 0 for null.
//
// # Safety
// `dataset` must be null or a live handle.
size_t volatix_dataset_len(const struct VolatixDataset *dataset);

// # Safety
// `dataset` must be null or a live handle; it is invalid afterwards.
void volatix_dataset_free(struct VolatixDataset *dataset);

// Fits the model described by `spec_json`. Non-convergence is not an
// error; check [`volatix_fit_converged`].
//
// # Safety
// `spec_json` must be NUL-terminated; `dataset` a live handle.
enum VolatixStatus volatix_fit(const char *spec_json,
                               const struct VolatixDataset *dataset,
                               struct VolatixFit **out);

// Restores a fit from its JSON form.
//
// # Safety
// `json` must be NUL-terminated.
enum VolatixStatus volatix_fit_from_json(const char *json, struct VolatixFit **out);

// # Safety
// `fit` must be a live handle; `out` writable.
enum VolatixStatus volatix_fit_to_json(const struct VolatixFit *fit, char **out);

// Table-style text summary.
//
// # Safety
// `fit` must be a live handle; `out` writable.
enum VolatixStatus volatix_fit_summary(const struct VolatixFit *fit, char **out);

// Log-likelihood, AIC and convergence flag; any output may be null.
//
// # Safety
// `fit` must be a live handle.
enum VolatixStatus volatix_fit_statistics(const struct VolatixFit *fit,
                                          double *loglik,
                                          double *aic,
                                          bool *converged);

// Copies the natural-scale estimates (in parameter-name order) into
// `out`. With a short buffer, writes the required length to `needed` and
// returns `BufferTooSmall`.
//
// # Safety
// `out` must hold `len` values; `needed` may be null.
enum VolatixStatus volatix_fit_estimates(const struct VolatixFit *fit,
                                         double *out,
                                         size_t len,
                                         size_t *needed);

// # Safety
// `fit` must be null or a live handle; it is invalid afterwards.
void volatix_fit_free(struct VolatixFit *fit);

// Average marginal effects as JSON.
//
// # Safety
// Handles must be live; `out` writable.
enum VolatixStatus volatix_marginal_effects_json(const struct VolatixFit *fit,
                                                 const struct VolatixDataset *dataset,
                                                 bool force,
                                                 char **out);

// Scenario report as CSV: a baseline row, then either the seven-step
// scheme (`mode` < 0) or a single perturbation (`mode` 0 = percent,
// 1 = SD) of `amount`. `denominator` 0 means the dataset size.
//
// # Safety
// Handles must be live; `covariate` NUL-terminated; `out` writable.
enum VolatixStatus volatix_scenarios_csv(const struct VolatixFit *fit,
                                         const struct VolatixDataset *dataset,
                                         const char *covariate,
                                         int32_t target,
                                         int32_t mode,
                                         double amount,
                                         size_t denominator,
                                         bool force,
                                         char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLATIX_H */
