#ifndef SDQN_H
#define SDQN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum SdqnStatus {
  SDQN_STATUS_OK = 0,
  SDQN_STATUS_NULL_POINTER = 1,
  SDQN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The configuration or a parameter value was rejected.
   */
  SDQN_STATUS_CONFIG = 3,
  /**
   * A computation produced or received a non-finite number.
   */
  SDQN_STATUS_NUMERIC = 4,
  /**
   * The simulation has no steps left.
   */
  SDQN_STATUS_FINISHED = 5,
  SDQN_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * The handle was poisoned by an earlier panic.
   */
  SDQN_STATUS_POISONED = 7,
  SDQN_STATUS_PANIC = 8,
  SDQN_STATUS_INTERNAL = 9,
} SdqnStatus;

/**
 * Opaque simulation handle.
 */
typedef struct SdqnSimulation SdqnSimulation;

/**
 * Summary of a finished run.
 */
typedef struct SdqnSummary {
  /**
   * Mean cooperation over the evaluation phase.
   */
  double coop_mean;
  double q_mean;
  double q_gap;
  /**
   * NaN when the sampled activations were all identical.
   */
  double silhouette;
  double exploration_strength;
  /**
   * Seconds spent in the steps run by `sdqn_simulation_finish`.
   */
  double wall_time;
} SdqnSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sdqn_version(void);

/**
 * Message of the last failed call on this thread, or null.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *sdqn_last_error(void);

/**
 * Payoff to a player choosing `own` against `other`.
 *
 * # Safety
 * `out` must point to writable memory for one `double`.
 */
enum SdqnStatus sdqn_payoff(double d_r, double d_g, uint8_t own, uint8_t other, double *out);

/**
 * Mean temperature over the first half of a linear annealing schedule.
 *
 * # Safety
 * `out` must point to writable memory for one `double`.
 */
enum SdqnStatus sdqn_exploration_strength(double tau_init,
                                          double tau_final,
                                          uint64_t t_anneal,
                                          double *out);

/**
 * Mean Euclidean silhouette of `n` row-major points of dimension `dim`.
 *
 * # Safety
 * `points` must hold `n * dim` doubles, `labels` must hold `n` entries and
 * `out` must point to writable memory for one `double`.
 */
enum SdqnStatus sdqn_silhouette(const double *points,
                                size_t n,
                                size_t dim,
                                const size_t *labels,
                                double *out);

/**
 * Creates a simulation from a TOML table of run fields.
 *
 * A null `config_toml` uses the default configuration. Omitted fields take
 * their defaults; unknown fields are rejected.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must point
 * to writable memory for one pointer. Free the handle with
 * [`sdqn_simulation_free`].
 */
enum SdqnStatus sdqn_simulation_new(const char *config_toml, struct SdqnSimulation **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sim` must be null or a handle from [`sdqn_simulation_new`] that has not
 * been freed.
 */
void sdqn_simulation_free(struct SdqnSimulation *sim);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum SdqnStatus sdqn_simulation_n_agents(struct SdqnSimulation *sim, size_t *out);

/**
 * Steps completed so far.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum SdqnStatus sdqn_simulation_t(struct SdqnSimulation *sim, uint64_t *out);

/**
 * Advances one step and writes that step's cooperation rate.
 *
 * Returns `SDQN_STATUS_FINISHED` once every step has run.
 *
 * # Safety
 * `sim` must be a live handle; `coop` must be null or writable.
 */
enum SdqnStatus sdqn_simulation_step(struct SdqnSimulation *sim, double *coop);

/**
 * Copies the latest action profile (`0` cooperate, `1` defect).
 *
 * # Safety
 * `sim` must be a live handle and `buf` must hold `len` bytes.
 */
enum SdqnStatus sdqn_simulation_actions(struct SdqnSimulation *sim, uint8_t *buf, size_t len);

/**
 * Runs the remaining steps and writes the run summary.
 *
 * Calling it again returns the same summary.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be null or writable.
 */
enum SdqnStatus sdqn_simulation_finish(struct SdqnSimulation *sim, struct SdqnSummary *out);

/**
 * Copies the per-step cooperation rates recorded so far.
 *
 * With a null `buf` only `written` is set, to the number of entries
 * available.
 *
 * # Safety
 * `sim` must be a live handle, `buf` null or holding `len` doubles, and
 * `written` writable.
 */
enum SdqnStatus sdqn_simulation_trace(struct SdqnSimulation *sim,
                                      double *buf,
                                      size_t len,
                                      size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDQN_H */
