#ifndef TSCM_H
#define TSCM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TscmStatus {
  TSCM_STATUS_OK = 0,
  TSCM_STATUS_NULL_POINTER = 1,
  TSCM_STATUS_INVALID_ARGUMENT = 2,
  TSCM_STATUS_UNKNOWN_PRESET = 3,
  TSCM_STATUS_PARSE = 4,
  TSCM_STATUS_IO = 5,
  TSCM_STATUS_SOLVER = 6,
  TSCM_STATUS_INDEX_OUT_OF_RANGE = 7,
  TSCM_STATUS_PANIC = 8,
} TscmStatus;

typedef enum TscmMethod {
  // Topology-to-shape continuation.
  TSCM_METHOD_CONTINUATION = 0,
  // Plain level-set descent from the preset's initial guess.
  TSCM_METHOD_LEVEL_SET = 1,
} TscmMethod;

// Why an inner loop stopped; mirrors the run log.
typedef enum TscmStop {
  TSCM_STOP_CONVERGED = 0,
  TSCM_STOP_STEP_BELOW_TAU2 = 1,
  TSCM_STOP_HALVING_CAP = 2,
  TSCM_STOP_ITERATION_CAP = 3,
} TscmStop;

// A preset plus the meshes and forward model built from it.
typedef struct TscmExperiment TscmExperiment;

typedef struct TscmMeasurements TscmMeasurements;

typedef struct TscmRun TscmRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *tscm_last_error(void);

// Library version as a static NUL-terminated string.
const char *tscm_version(void);

// Creates an experiment from a named preset.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum TscmStatus tscm_experiment_from_preset(const char *name, struct TscmExperiment **out);

// Creates an experiment from the text of a preset file.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum TscmStatus tscm_experiment_from_toml(const char *text, struct TscmExperiment **out);

// Applies a `section.key=value` override. Invalidates nothing the caller
// holds: measurements and runs made earlier stay valid.
//
// # Safety
// `exp` must come from this library; `assignment` must be NUL-terminated.
enum TscmStatus tscm_experiment_set(struct TscmExperiment *exp, const char *assignment);

// Number of nodes of the inversion mesh (builds the mesh if needed).
//
// # Safety
// `exp` must come from this library and `out` be a valid pointer.
enum TscmStatus tscm_experiment_n_nodes(struct TscmExperiment *exp, uintptr_t *out);

// Frees an experiment. Null is ignored.
//
// # Safety
// `exp` must be null or come from this library and not be used again.
void tscm_experiment_free(struct TscmExperiment *exp);

// Synthesizes noisy measurements of the experiment's phantom.
//
// # Safety
// `exp` must come from this library and `out` be a valid pointer.
enum TscmStatus tscm_synthesize(struct TscmExperiment *exp,
                                double rho,
                                uint64_t seed,
                                struct TscmMeasurements **out);

// Frees measurements. Null is ignored.
//
// # Safety
// `m` must be null or come from this library and not be used again.
void tscm_measurements_free(struct TscmMeasurements *m);

// Runs an inversion of `data` with the experiment's settings.
//
// # Safety
// `exp` and `data` must come from this library and `out` be valid.
enum TscmStatus tscm_run(struct TscmExperiment *exp,
                         const struct TscmMeasurements *data,
                         enum TscmMethod method,
                         struct TscmRun **out);

// Relative L2 conductivity error of the final iterate.
//
// # Safety
// `run` must come from this library and `out` be a valid pointer.
enum TscmStatus tscm_run_error(const struct TscmRun *run, double *out);

// Total number of accepted steps over all stages.
//
// # Safety
// `run` must come from this library and `out` be a valid pointer.
enum TscmStatus tscm_run_iterations(const struct TscmRun *run, uintptr_t *out);

// Number of continuation stages.
//
// # Safety
// `run` must come from this library and `out` be a valid pointer.
enum TscmStatus tscm_run_n_stages(const struct TscmRun *run, uintptr_t *out);

// Stage `index`: its `lambda`, accepted steps and stop reason.
//
// # Safety
// `run` must come from this library; the out pointers must be valid.
enum TscmStatus tscm_run_stage(const struct TscmRun *run,
                               uintptr_t index,
                               double *lambda,
                               uintptr_t *iters,
                               enum TscmStop *stop);

// Copies the final nodal conductivity into `buf`, which must hold exactly
// `len` = number of mesh nodes values.
//
// # Safety
// `run` must come from this library and `buf` point to `len` doubles.
enum TscmStatus tscm_run_sigma(const struct TscmRun *run, double *buf, uintptr_t len);

// Frees a run. Null is ignored.
//
// # Safety
// `run` must be null or come from this library and not be used again.
void tscm_run_free(struct TscmRun *run);

// Runs the numerical self-checks; `passed` receives 1 if all pass.
//
// # Safety
// `passed` must be a valid pointer.
enum TscmStatus tscm_verify(int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSCM_H */
