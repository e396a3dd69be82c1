#ifndef FREQMERGE_H
#define FREQMERGE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Scoring method codes, in the order of `ScoringMethod::ALL`. Functions
 * take the code as `uint32_t` and reject unknown values with `FM_CONFIG`.
 */
typedef enum FmScoringMethod {
  FM_GLOBAL_MEAN_DEVIATION = 0,
  FM_L1_NORM = 1,
  FM_L2_NORM = 2,
  FM_CHANNEL_VARIANCE = 3,
  FM_LAPLACIAN_L1 = 4,
  FM_LAPLACIAN_L2 = 5,
  FM_DFT_SPECTRAL_CENTROID = 6,
  FM_DFT_TOTAL_AMPLITUDE = 7,
  FM_COSINE_TO_NEIGHBORS = 8,
  FM_COSINE_TO_GLOBAL_MEAN = 9,
} FmScoringMethod;

typedef enum FmStatus {
  FM_OK = 0,
  FM_NULL_POINTER = 1,
  FM_DIMENSION = 2,
  FM_NON_FINITE = 3,
  FM_ZERO_NORM = 4,
  FM_CONFIG = 5,
  FM_DOMAIN = 6,
  FM_RANGE = 7,
  FM_STALE_CACHE = 8,
  FM_AUDIT = 9,
  FM_IO = 10,
  FM_PANIC = 11,
} FmStatus;

/**
 * Opaque `h × w × c` token grid.
 */
typedef struct FmGrid FmGrid;

/**
 * Opaque merge plan.
 */
typedef struct FmPlan FmPlan;

typedef struct FmImprovementReport {
  double r;
  double r_prime;
  bool exact_condition_holds;
  bool first_order_condition_holds;
  double cantelli_before;
  double cantelli_after;
} FmImprovementReport;

typedef struct FmFlopReport {
  uint64_t qk_flops;
  uint64_t av_flops;
  uint64_t softmax_flops;
  uint64_t projection_flops;
  uint64_t total;
} FmFlopReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static nul-terminated string.
 */
const char *fm_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next `fm_*` call on the same thread.
 */
const char *fm_last_error(void);

/**
 * Copies `h·w·c` row-major values into a new grid.
 *
 * # Safety
 * `data` must point to `h·w·c` doubles; `out` must be writable.
 */
enum FmStatus fm_grid_new(size_t height,
                          size_t width,
                          size_t channels,
                          const double *data,
                          struct FmGrid **out_grid);

/**
 * Releases a grid. Null is ignored.
 *
 * # Safety
 * `grid` must come from this library and not be freed twice.
 */
void fm_grid_free(struct FmGrid *grid);

/**
 * # Safety
 * All pointers must be valid.
 */
enum FmStatus fm_grid_shape(const struct FmGrid *grid,
                            size_t *height,
                            size_t *width,
                            size_t *channels);

/**
 * Copies the grid's values into `buffer`, which must hold exactly `h·w·c`.
 *
 * # Safety
 * `buffer` must point to `len` writable doubles.
 */
enum FmStatus fm_grid_read(const struct FmGrid *grid, double *buffer, size_t len);

/**
 * Per-token scores, row-major `h·w`.
 *
 * # Safety
 * `scores` must point to `len` writable doubles.
 */
enum FmStatus fm_score_tokens(const struct FmGrid *grid,
                              uint32_t method_code,
                              double *scores,
                              size_t len);

/**
 * Interpolate-extrapolate KV downsampling by `factor` with blend `alpha`.
 *
 * # Safety
 * `out_grid` must be writable.
 */
enum FmStatus fm_ie_kvd(const struct FmGrid *grid,
                        size_t factor,
                        double alpha,
                        struct FmGrid **out_grid);

/**
 * Laplacian-gated merge plan: one destination per `stride × stride` cell,
 * `⌊ratio·N⌋` sources merged.
 *
 * # Safety
 * `out_plan` must be writable.
 */
enum FmStatus fm_lgtm_plan(const struct FmGrid *grid,
                           uint32_t method_code,
                           size_t stride,
                           double ratio,
                           struct FmPlan **out_plan);

/**
 * Releases a plan. Null is ignored.
 *
 * # Safety
 * `plan` must come from this library and not be freed twice.
 */
void fm_plan_free(struct FmPlan *plan);

/**
 * # Safety
 * All pointers must be valid.
 */
enum FmStatus fm_plan_counts(const struct FmPlan *plan, size_t *original, size_t *reduced);

/**
 * Merges the grid's tokens into `reduced`, row-major `N′ × c`.
 *
 * # Safety
 * `reduced` must point to `len` writable doubles.
 */
enum FmStatus fm_plan_merge(const struct FmPlan *plan,
                            const struct FmGrid *grid,
                            double *reduced,
                            size_t len);

/**
 * Broadcasts `N′ × channels` reduced tokens back to an `height × width` grid.
 *
 * # Safety
 * `reduced` must point to `len` doubles; `out_grid` must be writable.
 */
enum FmStatus fm_plan_unmerge(const struct FmPlan *plan,
                              const double *reduced,
                              size_t len,
                              size_t channels,
                              size_t height,
                              size_t width,
                              struct FmGrid **out_grid);

/**
 * Cantelli bound `σ² / (σ² + s·μ²)` on the misranking probability.
 *
 * # Safety
 * `bound` must be writable.
 */
enum FmStatus fm_cantelli_bound(double mu, double sigma2, size_t trials, double *bound);

/**
 * Improvement conditions for `μ′ = μ − Δμ`, `σ′² = σ² − Δσ²`.
 *
 * # Safety
 * `report` must be writable.
 */
enum FmStatus fm_theorem1_check(double mu,
                                double sigma2,
                                double delta_mu,
                                double delta_sigma2,
                                size_t trials,
                                struct FmImprovementReport *report);

/**
 * FLOPs of one attention block with `n_q` queries over `n_k` keys.
 *
 * # Safety
 * `report` must be writable.
 */
enum FmStatus fm_flop_model(size_t n_q,
                            size_t n_k,
                            size_t model_dim,
                            size_t key_dim,
                            size_t heads,
                            struct FmFlopReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FREQMERGE_H */
