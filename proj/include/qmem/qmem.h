/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the qmem simulation and analysis library.
 *
 * Every fallible call returns a qmem_status. On failure a message is kept in
 * thread-local storage until the next failing call on the same thread; read
 * it with qmem_last_error(). Handles are opaque and owned by the caller, who
 * releases them with the matching *_free function (NULL is accepted).
 *
 * Strings are returned through (buf, cap, needed): `needed` receives the
 * length excluding the terminator; if cap is too small the call returns
 * QMEM_E_BUFFER_TOO_SMALL and writes nothing. buf may be NULL when cap is 0.
 */
#ifndef QMEM_QMEM_H
#define QMEM_QMEM_H

#include <stddef.h>
#include <stdint.h>

#if defined(QMEM_BUILDING_LIBRARY)
#define QMEM_API __attribute__((visibility("default")))
#else
#define QMEM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qmem_status {
  QMEM_OK = 0,
  QMEM_E_INVALID_ARGUMENT = 1,
  QMEM_E_DOMAIN = 2,
  QMEM_E_INSUFFICIENT_COUNTS = 3,
  QMEM_E_PARSE = 4,
  QMEM_E_CONFIG = 5,
  QMEM_E_CONVERGENCE = 6,
  QMEM_E_IO = 7,
  QMEM_E_BUFFER_TOO_SMALL = 8,
  QMEM_E_INTERNAL = 9
} qmem_status;

QMEM_API const char* qmem_version(void);
QMEM_API const char* qmem_last_error(void);
QMEM_API const char* qmem_status_name(qmem_status status);
/* QMEM_WORKERS if set and valid, else the hardware concurrency. */
QMEM_API unsigned qmem_default_workers(void);

typedef struct qmem_estimate {
  double value;
  double sigma;
  double sigma_syst;
} qmem_estimate;

/* Physics ----------------------------------------------------------------- */

QMEM_API qmem_status qmem_finesse(double coupler_transmission, double loss_per_round_trip, double* out);
QMEM_API qmem_status qmem_free_spectral_range(double round_trip_length_m, double* out_hz);
QMEM_API qmem_status qmem_escape_efficiency(double coupler_transmission, double loss_per_round_trip, double* out);
QMEM_API qmem_status qmem_intensity_buildup(double finesse, double escape_efficiency, double* out);
QMEM_API qmem_status qmem_emission_enhancement(double finesse, double* out);
QMEM_API qmem_status qmem_purcell_retrieval(double cooperativity, double* out);
QMEM_API qmem_status qmem_transit_lifetime(double waist_m, double temperature_K, double mass_kg, double* out_s);
QMEM_API qmem_status qmem_free_fall_time(double distance_m, double* out_s);
QMEM_API qmem_status qmem_readout_pulse_width(double read_power_W, double coefficient_s_W, double floor_s,
                                              double* out_s);
QMEM_API qmem_status qmem_repeater_overhead(double retrieval, double exponent, double base_time_s, double* out_s);
QMEM_API qmem_status qmem_light_time(double distance_m, double* out_s);

/* Configuration ------------------------------------------------------------ */

typedef struct qmem_config qmem_config;

QMEM_API qmem_status qmem_config_default(qmem_config** out);
QMEM_API qmem_status qmem_config_load(const char* path, qmem_config** out);
QMEM_API qmem_status qmem_config_parse(const char* json_text, qmem_config** out);
/* Sets one key by dotted path; value_json is a JSON literal ("0.5", "[1e-5]", "\"feedback\""). */
QMEM_API qmem_status qmem_config_set(qmem_config* config, const char* key_path, const char* value_json);
QMEM_API qmem_status qmem_config_to_json(const qmem_config* config, char* buf, size_t cap, size_t* needed);
QMEM_API void qmem_config_free(qmem_config* config);

/* Simulation --------------------------------------------------------------- */

typedef struct qmem_counts_row {
  double storage_time;
  uint64_t n_trials;
  uint64_t n_cycles;
  uint64_t n_write;
  uint64_t n_read;
  uint64_t n_coincidence;
  uint64_t n_d1;
  uint64_t n_d2;
  uint64_t n_d12;
  int read_available;
} qmem_counts_row;

typedef struct qmem_counts qmem_counts;

/* Runs the configured mode. trials = pulses (correlation) or cycles (feedback). */
QMEM_API qmem_status qmem_simulate(const qmem_config* config, uint64_t trials, uint64_t seed, unsigned workers,
                                   qmem_counts** out);
QMEM_API size_t qmem_counts_size(const qmem_counts* counts);
QMEM_API qmem_status qmem_counts_row_at(const qmem_counts* counts, size_t index, qmem_counts_row* out);
QMEM_API void qmem_counts_free(qmem_counts* counts);

typedef struct qmem_expectations {
  double p_w, p_r, p_wr;
  double g2, R;
  double p1, p2, p12;
  double alpha;
  double herald_probability;
} qmem_expectations;

QMEM_API qmem_status qmem_analytic_expectations(const qmem_config* config, double storage_time_s,
                                                qmem_expectations* out);

/* Estimators --------------------------------------------------------------- */

QMEM_API qmem_status qmem_cross_correlation(const qmem_counts_row* counts, qmem_estimate* out);
QMEM_API qmem_status qmem_retrieval_conditional(const qmem_counts_row* counts, qmem_estimate* out);
QMEM_API qmem_status qmem_anticorrelation(const qmem_counts_row* counts, qmem_estimate* out);
QMEM_API qmem_status qmem_calibrated_retrieval(const qmem_estimate* retrieval, const qmem_estimate* eta_tot,
                                               const qmem_estimate* p_bg, const qmem_estimate* p_w,
                                               qmem_estimate* out);
QMEM_API qmem_status qmem_eta_tot(const qmem_estimate* escape, const qmem_estimate* transmission,
                                  const qmem_estimate* detector, qmem_estimate* out);
QMEM_API qmem_status qmem_intrinsic_efficiency(const qmem_estimate* calibrated, const qmem_estimate* g2,
                                               qmem_estimate* out);
QMEM_API qmem_status qmem_visibility_and_s(double g2, double* visibility, double* s, int* violates);

/* Fitting ------------------------------------------------------------------ */

typedef enum qmem_fit_model {
  QMEM_FIT_EXPONENTIAL = 0,  /* R0 exp(-x / tau): params (R0, tau) */
  QMEM_FIT_RECIPROCAL = 1,   /* a / x + tau0: params (a, tau0) */
  QMEM_FIT_LINEAR = 2,       /* slope x + intercept */
  QMEM_FIT_PROPORTIONAL = 3  /* slope x */
} qmem_fit_model;

typedef struct qmem_fit_result {
  int n_params;
  double params[2];
  double errors[2];
  double covariance[4]; /* row-major n_params x n_params */
  double chi_square;
  int dof;
  int converged;
  int iterations;
} qmem_fit_result;

QMEM_API qmem_status qmem_fit(qmem_fit_model model, const double* x, const double* y, const double* sigma, size_t n,
                              qmem_fit_result* out);

/* Event streams ------------------------------------------------------------ */

typedef enum qmem_channel { QMEM_CH_W = 0, QMEM_CH_D1 = 1, QMEM_CH_D2 = 2, QMEM_CH_SYNC = 3 } qmem_channel;
typedef enum qmem_event_format { QMEM_FORMAT_CSV = 0, QMEM_FORMAT_BINARY = 1 } qmem_event_format;

typedef struct qmem_event {
  qmem_channel channel;
  uint64_t timestamp_ns;
} qmem_event;

typedef struct qmem_events qmem_events;

QMEM_API qmem_status qmem_events_read(const char* path, qmem_events** out);
QMEM_API qmem_status qmem_events_parse(const char* data, size_t len, qmem_events** out);
QMEM_API size_t qmem_events_size(const qmem_events* events);
QMEM_API qmem_status qmem_events_at(const qmem_events* events, size_t index, qmem_event* out);
QMEM_API qmem_status qmem_events_write(const qmem_events* events, const char* path, qmem_event_format format);
QMEM_API void qmem_events_free(qmem_events* events);

/* Correlation-mode trials rendered as events; `direct` (nullable) receives the directly tallied counts. */
QMEM_API qmem_status qmem_simulate_events(const qmem_config* config, uint64_t n_trials, uint64_t seed,
                                          double storage_time_s, uint64_t slot_ns, qmem_events** out,
                                          qmem_counts_row* direct);
QMEM_API qmem_status qmem_coincidences(const qmem_events* events, uint64_t window_ns, uint64_t delay_ns,
                                       qmem_counts_row* out, uint64_t* piled_up);

/* Pipelines ---------------------------------------------------------------- */

/* A bundle is an ordered list of named text artifacts (CSV tables, JSON summary). */
typedef struct qmem_bundle qmem_bundle;

QMEM_API qmem_status qmem_run_simulate(const qmem_config* config, uint64_t trials, uint64_t seed, unsigned workers,
                                       qmem_bundle** out);
/* figure: "fig2", "fig3" or "fig4"; trials 0 selects the configured default. */
QMEM_API qmem_status qmem_run_reproduce(const qmem_config* config, const char* figure, uint64_t trials,
                                        uint64_t seed, unsigned workers, qmem_bundle** out);
/* Detection parameters come from config (NULL for defaults); trials 0 uses the Sync count. */
QMEM_API qmem_status qmem_run_analyze(const qmem_events* events, const qmem_config* config, uint64_t window_ns,
                                      uint64_t delay_ns, uint64_t trials, qmem_bundle** out);
QMEM_API size_t qmem_bundle_size(const qmem_bundle* bundle);
QMEM_API const char* qmem_bundle_name(const qmem_bundle* bundle, size_t index);
QMEM_API const char* qmem_bundle_content(const qmem_bundle* bundle, size_t index, size_t* length);
QMEM_API void qmem_bundle_free(qmem_bundle* bundle);

#ifdef __cplusplus
}
#endif

#endif /* QMEM_QMEM_H */
