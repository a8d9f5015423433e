#ifndef GRIDSE_H
#define GRIDSE_H

/* Generated from crates/ffi/src/lib.rs; keep in sync (tests/header.rs checks it). */

#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum GridseStatus {
  GRIDSE_STATUS_OK = 0,
  GRIDSE_STATUS_NULL_ARGUMENT = 1,
  GRIDSE_STATUS_INVALID_ARGUMENT = 2,
  GRIDSE_STATUS_PARSE = 3,
  GRIDSE_STATUS_VALIDATION = 4,
  GRIDSE_STATUS_SCHEMA = 5,
  GRIDSE_STATUS_IO = 6,
  GRIDSE_STATUS_NUMERICAL = 7,
  GRIDSE_STATUS_BUFFER_TOO_SMALL = 8,
  GRIDSE_STATUS_PANIC = 9,
} GridseStatus;

// Opaque grid case.
typedef struct GridseCase GridseCase;

// Opaque estimator result.
typedef struct GridseEstimate GridseEstimate;

// Opaque Monte Carlo summary.
typedef struct GridseMcSummary GridseMcSummary;

// Opaque measurement set.
typedef struct GridseSeCase GridseSeCase;

// Measurement synthesis parameters; see [`gridse_noise_spec_default`].
typedef struct GridseNoiseSpec {
  double frac_pmu_perfect;
  double frac_pmu_noisy;
  double pmu_sigma_rel;
  double rtu_sigma_vm_rel;
  double rtu_sigma_pq_rel;
  double g_pmu;
  double rtu_gamma;
  double degraded_frac;
  double degraded_sigma_mult;
  double degraded_weight_div;
} GridseNoiseSpec;

// Monte Carlo settings. The `sigma_*` fields are ignored unless
// `use_net_uncertainty` is non-zero.
typedef struct GridseMcConfig {
  uintptr_t samples;
  uint64_t seed;
  uintptr_t threads;
  uintptr_t histogram_bins;
  uintptr_t pilot_samples;
  int32_t use_net_uncertainty;
  double sigma_line_r;
  double sigma_line_x;
  double sigma_xfmr_r;
  double sigma_xfmr_x;
} GridseMcConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *gridse_version(void);

// Message of the last failed call on this thread ("" after a success).
// Valid until the next gridse call on the same thread.
const char *gridse_last_error(void);

struct GridseNoiseSpec gridse_noise_spec_default(void);

struct GridseMcConfig gridse_mc_config_default(void);

// Parses MATPOWER text.
enum GridseStatus gridse_case_parse(const char *text, struct GridseCase **out);

// Reads a MATPOWER file.
enum GridseStatus gridse_case_read(const char *path, struct GridseCase **out);

uintptr_t gridse_case_n_buses(const struct GridseCase *case_);

void gridse_case_free(struct GridseCase *case_);

// Solves the power flow (flat start) and writes the rectangular voltages
// into `vr`/`vi`, each of capacity `len`.
enum GridseStatus gridse_power_flow(const struct GridseCase *case_,
                                    double tol,
                                    uintptr_t max_iter,
                                    double *vr,
                                    double *vi,
                                    uintptr_t len,
                                    uintptr_t *iterations);

// Solves the power flow of `case` and synthesizes a measurement set around it.
enum GridseStatus gridse_secase_generate(const struct GridseCase *case_,
                                         const struct GridseNoiseSpec *spec,
                                         uint64_t seed,
                                         struct GridseSeCase **out);

enum GridseStatus gridse_secase_load(const char *path, struct GridseSeCase **out);

enum GridseStatus gridse_secase_save(const struct GridseSeCase *se, const char *path);

uintptr_t gridse_secase_n_buses(const struct GridseSeCase *se);

// Copies the embedded truth; fails with `GRIDSE_STATUS_VALIDATION` if absent.
enum GridseStatus gridse_secase_truth(const struct GridseSeCase *se,
                                      double *vr,
                                      double *vi,
                                      uintptr_t len);

void gridse_secase_free(struct GridseSeCase *se);

enum GridseStatus gridse_estimate_linear(const struct GridseSeCase *se, struct GridseEstimate **out);

enum GridseStatus gridse_estimate_nonlinear(const struct GridseSeCase *se,
                                            double tol,
                                            uintptr_t max_iter,
                                            struct GridseEstimate **out);

enum GridseStatus gridse_estimate_voltages(const struct GridseEstimate *est,
                                           double *vr,
                                           double *vi,
                                           uintptr_t len);

// Objective value, NaN for a null handle.
double gridse_estimate_objective(const struct GridseEstimate *est);

uintptr_t gridse_estimate_iterations(const struct GridseEstimate *est);

int32_t gridse_estimate_converged(const struct GridseEstimate *est);

void gridse_estimate_free(struct GridseEstimate *est);

enum GridseStatus gridse_mc_run(const struct GridseSeCase *se,
                                const struct GridseMcConfig *cfg,
                                struct GridseMcSummary **out);

uintptr_t gridse_mc_samples_completed(const struct GridseMcSummary *s);

// Per-bus mean and standard deviation of the voltage magnitude.
enum GridseStatus gridse_mc_vm_stats(const struct GridseMcSummary *s,
                                     double *mean,
                                     double *std,
                                     uintptr_t len);

// Per-bus mean and standard deviation of the voltage angle (radians).
enum GridseStatus gridse_mc_va_stats(const struct GridseMcSummary *s,
                                     double *mean,
                                     double *std,
                                     uintptr_t len);

void gridse_mc_free(struct GridseMcSummary *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDSE_H */
