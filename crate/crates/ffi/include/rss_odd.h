#ifndef RSS_ODD_H
#define RSS_ODD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RssStatus {
  RSS_STATUS_OK = 0,
  RSS_STATUS_NULL_POINTER = 1,
  RSS_STATUS_INVALID_ARGUMENT = 2,
  RSS_STATUS_NOT_APPLICABLE = 3,
  RSS_STATUS_NO_SAFE_DISTANCE = 4,
  RSS_STATUS_INVALID_CONFIGURATION = 5,
  RSS_STATUS_INVALID_UTF8 = 6,
  RSS_STATUS_OUT_OF_RANGE = 7,
  RSS_STATUS_PANIC = 8,
} RssStatus;

// Micro-ODD state machine with its configuration.
typedef struct RssMachine RssMachine;

// Simulated trace.
typedef struct RssTrace RssTrace;

// Scenario inputs in SI units. When `a_max_brake_unbounded` is set the
// front vehicle stops instantly and `a_max_brake` is ignored.
typedef struct RssScenario {
  double v_r;
  double v_f;
  double rho;
  double a_max_accel;
  double a_min_brake;
  double a_max_brake;
  bool a_max_brake_unbounded;
} RssScenario;

typedef struct RssDmin {
  double d_min;
  double d_prime;
  double d_double_prime;
  double d_triple_prime;
  double t_equal;
  bool special_case_applied;
  bool special_case_prevails;
} RssDmin;

typedef struct RssStoppingTimes {
  double front;
  double rear;
} RssStoppingTimes;

// Road seen by one vehicle. A `curve_radius` of zero or infinity means a
// straight road.
typedef struct RssRoad {
  double mu;
  double slope;
  double curve_radius;
  double speed_for_curve;
} RssRoad;

typedef struct RssBrakingBudget {
  double decel;
  bool cannot_hold;
} RssBrakingBudget;

typedef struct RssSample {
  double t;
  double x_f;
  double v_f;
  double x_r;
  double v_r;
  double gap;
} RssSample;

typedef struct RssTraceSummary {
  double dt;
  size_t len;
  double min_gap;
  double min_gap_time;
  bool collided;
} RssTraceSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into this library on the same thread.
const char *rss_last_error(void);

// Static description of a status code.
const char *rss_status_str(enum RssStatus status);

// Minimum safe following distance with its breakdown.
//
// # Safety
// `scenario` must be valid for reads and `result` for writes.
enum RssStatus rss_dmin(const struct RssScenario *scenario, struct RssDmin *result);

// Rest-position distance, clamped at zero.
//
// # Safety
// `scenario` must be valid for reads and `d_prime` for writes.
enum RssStatus rss_d_prime_min(const struct RssScenario *scenario, double *d_prime);

// # Safety
// `scenario` must be valid for reads and `times` for writes.
enum RssStatus rss_stopping_times(const struct RssScenario *scenario,
                                  struct RssStoppingTimes *times);

// Braking available on a road after slope and cornering demand.
//
// # Safety
// `road` must be valid for reads and `budget` for writes.
enum RssStatus rss_effective_braking_decel(const struct RssRoad *road,
                                           struct RssBrakingBudget *budget);

// Smallest collision-free initial gap found by simulation, within `tol`.
//
// # Safety
// `scenario` must be valid for reads and `gap` for writes.
enum RssStatus rss_min_safe_gap(const struct RssScenario *scenario, double tol, double *gap);

// Simulate both vehicles from `initial_gap` with step `dt`.
//
// # Safety
// `scenario` must be valid for reads and `trace` for writes. The handle
// stored in `*trace` must be released with [`rss_trace_free`].
enum RssStatus rss_simulate(const struct RssScenario *scenario,
                            double initial_gap,
                            double dt,
                            struct RssTrace **trace);

// Number of samples, or 0 for a null handle.
//
// # Safety
// `trace` must be null or a live handle from [`rss_simulate`].
size_t rss_trace_len(const struct RssTrace *trace);

// # Safety
// `trace` must be a live handle and `sample` valid for writes.
enum RssStatus rss_trace_sample(const struct RssTrace *trace,
                                size_t index,
                                struct RssSample *sample);

// # Safety
// `trace` must be a live handle and `summary` valid for writes.
enum RssStatus rss_trace_summary(const struct RssTrace *trace, struct RssTraceSummary *summary);

// # Safety
// `trace` must be null or a handle from [`rss_simulate`] not yet freed.
void rss_trace_free(struct RssTrace *trace);

// Build a state machine from micro-ODD configuration text (TOML).
//
// # Safety
// `config_toml` must be a NUL-terminated string and `machine` valid for
// writes. Release the handle with [`rss_machine_free`].
enum RssStatus rss_machine_new(const char *config_toml, struct RssMachine **machine);

// Apply the evidence observed at time `t`, given as a JSON object of
// key/value pairs (`{"ball_detected": "true"}`).
//
// # Safety
// `machine` must be a live handle and `evidence_json` a NUL-terminated
// string.
enum RssStatus rss_machine_step(struct RssMachine *machine, double t, const char *evidence_json);

// Id of the active micro-ODD, owned by the handle and valid until the next
// step or free. NULL for a null handle.
//
// # Safety
// `machine` must be null or a live handle.
const char *rss_machine_current(const struct RssMachine *machine);

// Worst-case following distance of the active micro-ODD; NaN when it is
// defensive.
//
// # Safety
// `machine` must be a live handle and `d_min` valid for writes.
enum RssStatus rss_machine_current_d_min(const struct RssMachine *machine, double *d_min);

// # Safety
// `machine` must be null or a handle from [`rss_machine_new`] not yet freed.
void rss_machine_free(struct RssMachine *machine);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSS_ODD_H */
