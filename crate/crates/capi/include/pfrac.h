#ifndef PFRAC_H
#define PFRAC_H

/* Generated by cbindgen from pfrac-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Segment kinds in [`PfracRow::kind`].
 */
#define PFRAC_SEGMENT_TIME 0

#define PFRAC_SEGMENT_U 1

#define PFRAC_SEGMENT_Z 2

/**
 * Status codes of every fallible entry point.
 */
typedef enum PfracStatus {
  PFRAC_STATUS_OK = 0,
  PFRAC_STATUS_NULL_ARGUMENT = 1,
  PFRAC_STATUS_INVALID_UTF8 = 2,
  PFRAC_STATUS_CONFIG = 3,
  PFRAC_STATUS_SOLVER = 4,
  PFRAC_STATUS_IO = 5,
  PFRAC_STATUS_OUT_OF_RANGE = 6,
} PfracStatus;

/**
 * Opaque parsed configuration.
 */
typedef struct PfracConfig PfracConfig;

/**
 * Opaque in-memory simulation result.
 */
typedef struct PfracResult PfracResult;

/**
 * One trajectory row (a segment end of the arc-length parametrization).
 */
typedef struct PfracRow {
  /**
   * Arc coordinate at the segment end.
   */
  double s;
  /**
   * Time at the segment end.
   */
  double t;
  /**
   * Total energy, elastic part, dissipation part.
   */
  double total_energy;
  double elastic_energy;
  double dissipation;
  /**
   * Metric slopes at the segment end.
   */
  double slope_u;
  double slope_z;
  /**
   * Arc-length increment of the segment.
   */
  double arc_inc;
  /**
   * Power of the moving datum at the segment end.
   */
  double power;
  /**
   * Ledger residual (actual minus predicted energy).
   */
  double ledger_residual;
  /**
   * Owning time node (1-based).
   */
  uintptr_t node;
  /**
   * Inner iteration index; -1 on time segments.
   */
  int64_t inner;
  /**
   * 0 time, 1 displacement, 2 phase field.
   */
  int kind;
} PfracRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread. Valid until the next
 * failing call on the same thread.
 */
const char *pfrac_last_error(void);

/**
 * NUL-terminated library version.
 */
const char *pfrac_version(void);

/**
 * Parses and validates a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 * On success `*out` owns a configuration that must be released with
 * [`pfrac_config_free`].
 */
enum PfracStatus pfrac_config_parse(const char *path, struct PfracConfig **out);

/**
 * Parses and validates a TOML configuration held in a string.
 *
 * # Safety
 * Same contract as [`pfrac_config_parse`].
 */
enum PfracStatus pfrac_config_parse_string(const char *text, struct PfracConfig **out);

/**
 * Releases a configuration handle. NULL is a no-op.
 *
 * # Safety
 * `cfg` must come from a `pfrac_config_parse*` call and not be freed twice.
 */
void pfrac_config_free(struct PfracConfig *cfg);

/**
 * Runs a configuration end to end with file outputs (CSV, VTK, report).
 * `exit_code` receives the run status: 0 success, 2 solver failure,
 * 3 invariant violation.
 *
 * # Safety
 * `cfg` must be a live configuration handle; `exit_code` must be valid.
 */
enum PfracStatus pfrac_run(const struct PfracConfig *cfg, int *exit_code);

/**
 * Runs a configuration in memory: initial equilibrium, staggered
 * evolution, parametrization in the configured mode, ledger. No files are
 * written. On success `*out` must be released with [`pfrac_result_free`].
 *
 * # Safety
 * `cfg` must be a live configuration handle; `out` must be valid.
 */
enum PfracStatus pfrac_simulate(const struct PfracConfig *cfg, struct PfracResult **out);

/**
 * Releases a result handle. NULL is a no-op.
 *
 * # Safety
 * `res` must come from [`pfrac_simulate`] and not be freed twice.
 */
void pfrac_result_free(struct PfracResult *res);

/**
 * Total arc length S_k of the parametrized trajectory.
 *
 * # Safety
 * `res` must be a live result handle.
 */
double pfrac_result_total_length(const struct PfracResult *res);

/**
 * Run status of the simulation: 0 success, 2 solver failure.
 *
 * # Safety
 * `res` must be a live result handle.
 */
int pfrac_result_exit_code(const struct PfracResult *res);

/**
 * Number of trajectory rows.
 *
 * # Safety
 * `res` must be a live result handle.
 */
uintptr_t pfrac_result_row_count(const struct PfracResult *res);

/**
 * Copies row `index` into `*row`.
 *
 * # Safety
 * `res` must be a live result handle and `row` a valid pointer.
 */
enum PfracStatus pfrac_result_row(const struct PfracResult *res,
                                  uintptr_t index,
                                  struct PfracRow *row);

/**
 * Number of mesh nodes (length of the phase-field arrays; displacement
 * arrays have twice as many entries, interleaved x/y in row-major node
 * order).
 *
 * # Safety
 * `res` must be a live result handle.
 */
uintptr_t pfrac_result_node_count(const struct PfracResult *res);

/**
 * Copies the final phase field into `buf` (length `len >= node count`).
 *
 * # Safety
 * `res` must be a live result handle; `buf` must point to `len` writable f64.
 */
enum PfracStatus pfrac_result_final_phase(const struct PfracResult *res,
                                          double *buf,
                                          uintptr_t len);

/**
 * Copies the final displacement (2 entries per node, interleaved) into
 * `buf` (length `len >= 2 * node count`).
 *
 * # Safety
 * `res` must be a live result handle; `buf` must point to `len` writable f64.
 */
enum PfracStatus pfrac_result_final_displacement(const struct PfracResult *res,
                                                 double *buf,
                                                 uintptr_t len);

/**
 * Runs a named verification suite (`gradcheck`, `oracle`, `flows`,
 * `ledger`, `norms`); `failed` receives the number of failed checks.
 *
 * # Safety
 * `suite` must be NUL-terminated; `failed` must be a valid pointer.
 */
enum PfracStatus pfrac_verify(const char *suite, uint64_t seed, uintptr_t *failed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PFRAC_H */
