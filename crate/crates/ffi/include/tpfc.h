#ifndef TPFC_H
#define TPFC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TpfcStatus {
  TPFC_STATUS_OK = 0,
  TPFC_STATUS_NULL_POINTER = 1,
  TPFC_STATUS_INVALID_UTF8 = 2,
  TPFC_STATUS_INVALID_ARGUMENT = 3,
  TPFC_STATUS_DIMENSION = 4,
  TPFC_STATUS_SCENARIO = 5,
  TPFC_STATUS_SOLVER = 6,
  TPFC_STATUS_NOT_POSITIVE_DEFINITE = 7,
  TPFC_STATUS_IO = 8,
  TPFC_STATUS_INTERNAL = 9,
} TpfcStatus;

typedef enum TpfcController {
  TPFC_CONTROLLER_TPFC = 0,
  TPFC_CONTROLLER_NMPC = 1,
  TPFC_CONTROLLER_TLQR = 2,
  TPFC_CONTROLLER_ILQG = 3,
} TpfcController;

// An offline plan: nominal trajectory plus all gain schedules.
typedef struct TpfcPlan TpfcPlan;

// A validated scenario and the problem built from it.
typedef struct TpfcScenario TpfcScenario;

// Outcome of one closed-loop run.
typedef struct TpfcRolloutSummary {
  double cost;
  size_t replans;
  size_t solver_nonconverged;
} TpfcRolloutSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *tpfc_last_error(void);

// Loads a preset by name or a scenario JSON file by path.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum TpfcStatus tpfc_scenario_load(const char *name, struct TpfcScenario **out);

// Parses a scenario from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum TpfcStatus tpfc_scenario_from_json(const char *json, struct TpfcScenario **out);

// Loads a scenario file, never a preset.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum TpfcStatus tpfc_scenario_from_file(const char *path, struct TpfcScenario **out);

// # Safety
// `scenario` must be null or a handle from this library not yet freed.
void tpfc_scenario_free(struct TpfcScenario *scenario);

// State dimension, control dimension and horizon of a scenario. Any of
// the output pointers may be null.
//
// # Safety
// `scenario` must be a live handle.
enum TpfcStatus tpfc_scenario_dims(const struct TpfcScenario *scenario,
                                   size_t *n_x,
                                   size_t *n_u,
                                   size_t *horizon);

// Copies the scenario name into `buf` as a NUL-terminated string,
// truncating to `len - 1` bytes, and returns the full name length.
//
// # Safety
// `scenario` must be a live handle.
size_t tpfc_scenario_name(const struct TpfcScenario *scenario, char *buf, size_t len);

// Solves the nominal and synthesizes every gain schedule.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum TpfcStatus tpfc_plan_compute(const struct TpfcScenario *scenario, struct TpfcPlan **out);

// # Safety
// `plan` must be null or a handle from this library not yet freed.
void tpfc_plan_free(struct TpfcPlan *plan);

// # Safety
// `plan` must be a live handle and `cost` a valid pointer.
enum TpfcStatus tpfc_plan_nominal_cost(const struct TpfcPlan *plan, double *cost);

// Copies nominal state `t` (0..=N) into `x`, which holds `n_x` values.
//
// # Safety
// `plan` must be a live handle and `x` must point to `n_x` doubles.
enum TpfcStatus tpfc_plan_nominal_state(const struct TpfcPlan *plan,
                                        size_t t,
                                        double *x,
                                        size_t n_x);

// Copies nominal control `t` (0..N) into `u`, which holds `n_u` values.
//
// # Safety
// `plan` must be a live handle and `u` must point to `n_u` doubles.
enum TpfcStatus tpfc_plan_nominal_control(const struct TpfcPlan *plan,
                                          size_t t,
                                          double *u,
                                          size_t n_u);

// Evaluates `ū_t + K_t (x - x̄_t)`, clamped to the control bounds, with
// the gains of a feedback controller. NMPC has no gains and is rejected.
//
// # Safety
// `plan` must be a live handle, `x` must point to `n_x` doubles and `u`
// to `n_u` doubles.
enum TpfcStatus tpfc_policy_eval(const struct TpfcPlan *plan,
                                 enum TpfcController controller,
                                 size_t t,
                                 const double *x,
                                 size_t n_x,
                                 double *u,
                                 size_t n_u);

// One closed-loop run under process noise of scale `eps`.
//
// # Safety
// `plan` must be a live handle and `out` a valid pointer.
enum TpfcStatus tpfc_rollout(const struct TpfcPlan *plan,
                             enum TpfcController controller,
                             double eps,
                             uint64_t seed,
                             struct TpfcRolloutSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TPFC_H */
