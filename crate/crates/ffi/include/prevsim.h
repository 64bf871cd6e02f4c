#ifndef PREVSIM_H
#define PREVSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PrevsimStatus {
  PREVSIM_STATUS_OK = 0,
  PREVSIM_STATUS_NULL_POINTER = 1,
  PREVSIM_STATUS_INVALID_ARGUMENT = 2,
  PREVSIM_STATUS_DOMAIN = 3,
  PREVSIM_STATUS_PARSE = 4,
  PREVSIM_STATUS_BACKEND = 5,
  PREVSIM_STATUS_INTERNAL = 6,
} PrevsimStatus;

/**
 * Opaque list of epidemic conditions.
 */
typedef struct PrevsimGrid PrevsimGrid;

/**
 * Opaque simulator over the deterministic mock backend.
 */
typedef struct PrevsimSimulator PrevsimSimulator;

typedef struct PrevsimKsResult {
  double statistic;
  double p_value;
  size_t n1;
  size_t n2;
} PrevsimKsResult;

typedef struct PrevsimImpact {
  double per_capita_volume_l;
  double per_capita_dbp_mg;
  double total_volume_l;
  double total_tons;
  double total_dbp_kg;
  /**
   * Nonzero when intensity fell and the figures are avoided discharge.
   */
  uint8_t avoided;
} PrevsimImpact;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *prevsim_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next library call on the same thread.
 */
const char *prevsim_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void prevsim_string_free(char *s);

/**
 * Map probability `p` onto a 5- or 6-point Likert scale.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PrevsimStatus prevsim_discretize(double p, uint8_t points, uint8_t *out);

/**
 * Two-sample KS test. `exact` nonzero uses the permutation p-value for small samples.
 *
 * # Safety
 * `a` and `b` must point to `na` and `nb` doubles; `out` must be valid.
 */
enum PrevsimStatus prevsim_ks_two_sample(const double *a,
                                         size_t na,
                                         const double *b,
                                         size_t nb,
                                         uint8_t exact,
                                         struct PrevsimKsResult *out);

/**
 * Percentage of nonzero flags, rounded to one decimal.
 *
 * # Safety
 * `flags` must point to `n` bytes; `out` must be valid.
 */
enum PrevsimStatus prevsim_pass_rate(const uint8_t *flags, size_t n, double *out);

/**
 * Disinfectant discharge for a change in mean intensity, default coefficients.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PrevsimStatus prevsim_environmental_impact(double intensity_from,
                                                double intensity_to,
                                                double population,
                                                struct PrevsimImpact *out);

/**
 * The default scenario grid.
 *
 * # Safety
 * `out` must be a valid pointer; free the handle with `prevsim_grid_free`.
 */
enum PrevsimStatus prevsim_grid_new_default(struct PrevsimGrid **out);

/**
 * A grid from a JSON spec; omitted fields take their defaults.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PrevsimStatus prevsim_grid_from_json(const char *spec_json, struct PrevsimGrid **out);

/**
 * # Safety
 * `grid` must be a live grid handle and `out` a valid pointer.
 */
enum PrevsimStatus prevsim_grid_len(const struct PrevsimGrid *grid, size_t *out);

/**
 * Label of condition `index`, owned by the grid.
 *
 * # Safety
 * `grid` must be a live grid handle and `out` a valid pointer. The string
 * lives as long as the grid.
 */
enum PrevsimStatus prevsim_grid_label(const struct PrevsimGrid *grid,
                                      size_t index,
                                      const char **out);

/**
 * Condition `index` as JSON; free with `prevsim_string_free`.
 *
 * # Safety
 * `grid` must be a live grid handle and `out` a valid pointer.
 */
enum PrevsimStatus prevsim_grid_condition_json(const struct PrevsimGrid *grid,
                                               size_t index,
                                               char **out);

/**
 * # Safety
 * `grid` must be null or a handle from this library, freed once.
 */
void prevsim_grid_free(struct PrevsimGrid *grid);

/**
 * The policy-relaxation condition as JSON; free with `prevsim_string_free`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PrevsimStatus prevsim_policy_relaxation_json(char **out);

/**
 * Simulator over the mock backend with default templates.
 *
 * # Safety
 * `out` must be a valid pointer; free the handle with `prevsim_simulator_free`.
 */
enum PrevsimStatus prevsim_simulator_new_mock(uint64_t seed,
                                              uint32_t repetitions,
                                              struct PrevsimSimulator **out);

/**
 * Static behaviour profile for a persona under a condition, as JSON.
 *
 * `persona_json` and `condition_json` use the library's serde layout;
 * `risk_level` (1..=6) replaces the persona's own risk perception.
 *
 * # Safety
 * `sim` must be a live simulator handle, the JSON arguments NUL-terminated
 * strings and `out` a valid pointer. Free the result with `prevsim_string_free`.
 */
enum PrevsimStatus prevsim_simulator_static_json(const struct PrevsimSimulator *sim,
                                                 const char *persona_json,
                                                 const char *condition_json,
                                                 uint8_t risk_level,
                                                 char **out);

/**
 * # Safety
 * `sim` must be null or a handle from this library, freed once.
 */
void prevsim_simulator_free(struct PrevsimSimulator *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREVSIM_H */
