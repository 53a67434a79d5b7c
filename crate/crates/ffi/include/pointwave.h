#ifndef POINTWAVE_H
#define POINTWAVE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Slope selector for `pw_report_slope`.
 */
typedef enum PwNorm {
  PW_NORM_FREE = 0,
  PW_NORM_EFFECTIVE = 1,
  PW_NORM_FREE_EXCLUSION = 2,
  PW_NORM_EFFECTIVE_EXCLUSION = 3,
} PwNorm;

typedef enum PwStatus {
  PW_STATUS_OK = 0,
  PW_STATUS_NULL_POINTER = 1,
  /**
   * Invalid parameter, config or plan (CLI exit class 2).
   */
  PW_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Numerical quality failure: no convergence, instability, route
   * disagreement (CLI exit class 3).
   */
  PW_STATUS_NUMERICAL = 3,
  PW_STATUS_IO = 4,
  PW_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * The requested quantity does not exist, such as slopes of a report
   * with fewer than three rows.
   */
  PW_STATUS_UNAVAILABLE = 6,
  PW_STATUS_PANIC = 7,
} PwStatus;

typedef struct PwConfig PwConfig;

typedef struct PwReport PwReport;

typedef struct PwSignal PwSignal;

typedef struct PwSpectrum PwSpectrum;

/**
 * One ε row of a report.
 */
typedef struct PwErrorRow {
  double eps;
  double e_free;
  double e_eff;
  double e_free_excl;
  double e_eff_excl;
  double horizon;
  double tau;
  double h;
  double dt;
  size_t modes;
  double captured_mass;
  double runtime_seconds;
} PwErrorRow;

/**
 * Log-log slope with its 95% confidence interval.
 */
typedef struct PwSlope {
  double slope;
  double intercept;
  double ci_low;
  double ci_high;
  size_t points;
} PwSlope;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *pw_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next `pw_*` call on the same thread.
 */
const char *pw_last_error(void);

/**
 * Parses a TOML config. Environment overrides are not applied.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PwStatus pw_config_from_toml(const char *toml, struct PwConfig **out);

/**
 * Reads a TOML config file and applies `POINTWAVE_*` environment overrides.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PwStatus pw_config_load(const char *path, struct PwConfig **out);

/**
 * Replaces the ε list; the config is left unchanged if the result does
 * not validate.
 *
 * # Safety
 * `cfg` must come from a `pw_config_*` constructor and `eps` must point
 * to `len` doubles.
 */
enum PwStatus pw_config_set_eps(struct PwConfig *cfg, const double *eps, size_t len);

/**
 * Number of ε values in the config, 0 for a null handle.
 *
 * # Safety
 * `cfg` must be null or a live config handle.
 */
size_t pw_config_eps_len(const struct PwConfig *cfg);

/**
 * Horizon T used at `eps`.
 *
 * # Safety
 * `cfg` must be a live config handle and `out` a valid pointer.
 */
enum PwStatus pw_config_horizon(const struct PwConfig *cfg, double eps, double *out);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void pw_config_free(struct PwConfig *cfg);

/**
 * Newton spectrum of the configured inclusion at the reference resolution.
 *
 * # Safety
 * `cfg` must be a live config handle and `out` a valid pointer.
 */
enum PwStatus pw_spectrum_compute(const struct PwConfig *cfg, struct PwSpectrum **out);

/**
 * Number of modes, 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live spectrum handle.
 */
size_t pw_spectrum_len(const struct PwSpectrum *s);

/**
 * Eigenvalues in descending order.
 *
 * # Safety
 * `s` must be a live spectrum handle and `out` must hold `capacity` doubles.
 */
enum PwStatus pw_spectrum_eigenvalues(const struct PwSpectrum *s, double *out, size_t capacity);

/**
 * Couplings `c_k`, aligned with the eigenvalues.
 *
 * # Safety
 * `s` must be a live spectrum handle and `out` must hold `capacity` doubles.
 */
enum PwStatus pw_spectrum_couplings(const struct PwSpectrum *s, double *out, size_t capacity);

/**
 * Captured mass `Σ c_k` and the volume of the discretized domain.
 *
 * # Safety
 * `s` must be a live spectrum handle; the outputs must be valid pointers.
 */
enum PwStatus pw_spectrum_mass(const struct PwSpectrum *s, double *captured, double *volume);

/**
 * # Safety
 * `s` must be null or a handle not yet freed.
 */
void pw_spectrum_free(struct PwSpectrum *s);

/**
 * Modulation signal q(t) on `[0, horizon]` for the config's data and
 * signal settings.
 *
 * # Safety
 * Handles must be live and `out` a valid pointer.
 */
enum PwStatus pw_modulation_compute(const struct PwConfig *cfg,
                                    const struct PwSpectrum *spectrum,
                                    double horizon,
                                    struct PwSignal **out);

/**
 * Number of samples of q, 0 for a null handle.
 *
 * # Safety
 * `q` must be null or a live signal handle.
 */
size_t pw_signal_len(const struct PwSignal *q);

/**
 * Sample spacing of q.
 *
 * # Safety
 * `q` must be a live signal handle and `out` a valid pointer.
 */
enum PwStatus pw_signal_dt(const struct PwSignal *q, double *out);

/**
 * Samples `q(i·dt)`.
 *
 * # Safety
 * `q` must be a live signal handle and `out` must hold `capacity` doubles.
 */
enum PwStatus pw_signal_values(const struct PwSignal *q, double *out, size_t capacity);

/**
 * Interpolated `q(t)`; zero for `t <= 0`, `PW_STATUS_INVALID_ARGUMENT`
 * past the horizon.
 *
 * # Safety
 * `q` must be a live signal handle and `out` a valid pointer.
 */
enum PwStatus pw_signal_at(const struct PwSignal *q, double t, double *out);

/**
 * # Safety
 * `q` must be null or a handle not yet freed.
 */
void pw_signal_free(struct PwSignal *q);

/**
 * Effective field `u_eff(t, x)` at `count` points stored as consecutive
 * `x, y, z` triples. Points inside the config's exclusion ball are
 * written as NaN.
 *
 * # Safety
 * Handles must be live, `points` must hold `3·count` doubles and `out`
 * `count` doubles.
 */
enum PwStatus pw_effective_sample(const struct PwConfig *cfg,
                                  const struct PwSignal *q,
                                  double eps,
                                  double t,
                                  const double *points,
                                  size_t count,
                                  double *out);

/**
 * FDTD comparison at a single ε, as a one-row report.
 *
 * # Safety
 * `cfg` must be a live config handle and `out` a valid pointer.
 */
enum PwStatus pw_compare(const struct PwConfig *cfg, double eps, struct PwReport **out);

/**
 * Full sweep over the config's ε list.
 *
 * # Safety
 * `cfg` must be a live config handle and `out` a valid pointer.
 */
enum PwStatus pw_sweep(const struct PwConfig *cfg, struct PwReport **out);

/**
 * Reads a report previously written as JSON.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PwStatus pw_report_read(const char *path, struct PwReport **out);

/**
 * Number of rows, 0 for a null handle.
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
size_t pw_report_len(const struct PwReport *r);

/**
 * Row `index`, rows sorted by ε descending.
 *
 * # Safety
 * `r` must be a live report handle and `out` a valid pointer.
 */
enum PwStatus pw_report_row(const struct PwReport *r, size_t index, struct PwErrorRow *out);

/**
 * Log-log slope of one error norm; `PW_STATUS_UNAVAILABLE` when the
 * report carries no fits.
 *
 * # Safety
 * `r` must be a live report handle and `out` a valid pointer.
 */
enum PwStatus pw_report_slope(const struct PwReport *r, enum PwNorm norm, struct PwSlope *out);

/**
 * Writes `report.csv`, `report.json` and `plot_errors.gp` into `dir`,
 * creating it if needed.
 *
 * # Safety
 * `r` must be a live report handle and `dir` a NUL-terminated string.
 */
enum PwStatus pw_report_write(const struct PwReport *r, const char *dir);

/**
 * # Safety
 * `r` must be null or a handle not yet freed.
 */
void pw_report_free(struct PwReport *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POINTWAVE_H */
