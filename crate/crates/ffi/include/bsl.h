#ifndef BSL_H
#define BSL_H

#include <stddef.h>
#include <stdint.h>

#define BSL_OK 0

#define BSL_ERR_INVALID_DOMAIN 1

#define BSL_ERR_INVALID_PARAMETER 2

#define BSL_ERR_DOMAIN_TOO_SMALL 3

#define BSL_ERR_UNNORMALIZED 4

#define BSL_ERR_UNSUPPORTED_REPRESENTATION 5

#define BSL_ERR_DOMAIN_MISMATCH 6

#define BSL_ERR_NON_FINITE 7

#define BSL_ERR_UNBOUNDED_CONSTANT 8

#define BSL_ERR_ZERO_EVIDENCE 9

#define BSL_ERR_DEGENERATE_VARIANCE 10

#define BSL_ERR_ALL_WEIGHTS_ZERO 11

#define BSL_ERR_MISSING_CONSTANT 12

#define BSL_ERR_VACUOUS_BOUND 13

#define BSL_ERR_MISSING_DIAMETER 14

#define BSL_ERR_IO 15

#define BSL_ERR_CONFIG 16

// A required pointer argument was null.
#define BSL_ERR_NULL_POINTER 100

// The library panicked; this is a bug.
#define BSL_ERR_PANIC 101

#define BSL_METRIC_TV 0

#define BSL_METRIC_HELLINGER 1

#define BSL_METRIC_W1 2

// Evidences of the exact sequence.
#define BSL_LEDGER_SET1 1

// Evidences of the approximate sequence.
#define BSL_LEDGER_SET2 2

// A learning-error ledger.
typedef struct BslLedger BslLedger;

// A one-dimensional inverse or state-estimation system on a grid.
typedef struct BslSystem BslSystem;

// Step-`k` model constants. Entries that do not apply to the system or
// metric are NaN.
typedef struct BslConstants {
  double c_h;
  double h_lip;
  double c_th;
  double c_th_star;
  double diameter;
} BslConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread; empty if none. The pointer
// stays valid until the next failing call on the same thread.
const char *bsl_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *bsl_version(void);

// Inverse problem `y = a x + N(0, noise_var)` on `[lower, upper]`.
//
// # Safety
// `data` must be valid for `n_data` reads and `out` for one write.
int32_t bsl_system_new_inverse(double a,
                               double noise_var,
                               double lower,
                               double upper,
                               size_t grid_points,
                               const double *data,
                               size_t n_data,
                               struct BslSystem **out);

// State estimation with transition `N(trans_a x', trans_var)` and
// observation `y = a x + N(0, noise_var)`.
//
// # Safety
// `data` must be valid for `n_data` reads and `out` for one write.
int32_t bsl_system_new_state_estimation(double trans_a,
                                        double trans_var,
                                        double a,
                                        double noise_var,
                                        double lower,
                                        double upper,
                                        size_t grid_points,
                                        const double *data,
                                        size_t n_data,
                                        struct BslSystem **out);

// # Safety
// `sys` must be null or a handle from a `bsl_system_new_*` function that
// has not been freed.
void bsl_system_free(struct BslSystem *sys);

// Number of grid nodes of the system's domain.
//
// # Safety
// `sys` must be a live handle and `out` valid for one write.
int32_t bsl_system_grid_points(const struct BslSystem *sys, size_t *out);

// # Safety
// `sys` must be a live handle and `out` valid for one write.
int32_t bsl_system_constants(const struct BslSystem *sys,
                             size_t k,
                             uint32_t metric_id,
                             struct BslConstants *out);

// Step constant `K(mu; y_k)` for a prior with evidence `evidence`.
//
// # Safety
// `sys` must be a live handle and `out` valid for one write.
int32_t bsl_step_constant(const struct BslSystem *sys,
                          size_t k,
                          uint32_t metric_id,
                          double evidence,
                          double *out);

// Exact grid update of a normalized prior density given on the system's
// nodes. `prior` and `posterior` hold `grid_points` values each.
//
// # Safety
// `sys` must be a live handle, `prior` valid for `n` reads, `posterior`
// for `n` writes and `evidence` for one write.
int32_t bsl_grid_update(const struct BslSystem *sys,
                        size_t k,
                        const double *prior,
                        size_t n,
                        double *posterior,
                        double *evidence);

// Closed-form TV or Hellinger distance between two Gaussians; W1 is
// computed on `[lower, upper]` with `grid_points` nodes (ignored otherwise).
//
// # Safety
// `out` must be valid for one write.
int32_t bsl_gaussian_distance(uint32_t metric_id,
                              double mean_a,
                              double var_a,
                              double mean_b,
                              double var_b,
                              double lower,
                              double upper,
                              size_t grid_points,
                              double *out);

// Distance between two normalized densities on the same grid.
//
// # Safety
// `a` and `b` must be valid for `grid_points` reads and `out` for one
// write.
int32_t bsl_grid_distance(uint32_t metric_id,
                          double lower,
                          double upper,
                          size_t grid_points,
                          const double *a,
                          const double *b,
                          double *out);

// Ledger `B_k = K_k B_{k-1} + eps_k` from per-step constants and
// incremental errors, summing from step `window_start` (1 for the full
// history) and starting from `initial`.
//
// # Safety
// `step_constants` and `eps` must be valid for `n` reads and `out` for one
// write.
int32_t bsl_ledger_new(uint32_t metric_id,
                       uint32_t variant,
                       const double *step_constants,
                       const double *eps,
                       size_t n,
                       size_t window_start,
                       double initial,
                       struct BslLedger **out);

// # Safety
// `ledger` must be null or a live handle from `bsl_ledger_new`.
void bsl_ledger_free(struct BslLedger *ledger);

// # Safety
// `ledger` must be a live handle and `out` valid for one write.
int32_t bsl_ledger_len(const struct BslLedger *ledger, size_t *out);

// Cumulative bound after step `k` (1-based).
//
// # Safety
// `ledger` must be a live handle and `out` valid for one write.
int32_t bsl_ledger_bound(const struct BslLedger *ledger, size_t k, double *out);

// # Safety
// `ledger` must be a live handle and `out` valid for one write.
int32_t bsl_ledger_final_bound(const struct BslLedger *ledger, double *out);

// Online-VI learning-error bound with the true parameter known. Pass NaN
// for `diameter` unless `metric_id` is W1.
//
// # Safety
// `elbo_floors` and `evidences` must be valid for `n` reads and `out` for
// one write.
int32_t bsl_vi_bound(uint32_t metric_id,
                     uint32_t r,
                     double det_gamma,
                     const double *elbo_floors,
                     const double *evidences,
                     size_t n,
                     double diameter,
                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BSL_H */
