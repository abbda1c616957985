/* C interface to the hmdp solver library. Generated; do not edit. */

#ifndef HMDP_H
#define HMDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * How the hidden mode is weighted per window during backups.
 */
typedef enum HmdpMixing {
  /**
   * Equal weight on every mode.
   */
  HmdpMixing_Uniform = 0,
  /**
   * Stationary distribution of the (constant) chain.
   */
  HmdpMixing_Stationary = 1,
  /**
   * Open-loop belief composed along each window from the model's
   * initial mode distribution.
   */
  HmdpMixing_Composed = 2,
} HmdpMixing;

/**
 * Result of every fallible call.
 */
typedef enum HmdpStatus {
  /**
   * Success; out-parameters are written.
   */
  HmdpStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  HmdpStatus_NullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  HmdpStatus_InvalidUtf8 = 2,
  /**
   * The model text, file, or a derived quantity was rejected.
   */
  HmdpStatus_Config = 3,
  /**
   * The solver hit its sweep budget before reaching the tolerance.
   */
  HmdpStatus_NonConverged = 4,
  /**
   * An argument was out of range or inconsistent with the handle.
   */
  HmdpStatus_InvalidArgument = 5,
  /**
   * A panic was caught at the boundary; state may be incomplete.
   */
  HmdpStatus_Internal = 6,
} HmdpStatus;

/**
 * Opaque: a validated decision-process model.
 */
typedef struct HmdpModel HmdpModel;

/**
 * Opaque: a converged window-table solution and its greedy policy.
 */
typedef struct HmdpSolution HmdpSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the underlying library as a static NUL-terminated string.
 */
const char *hmdp_version(void);

/**
 * Message for the most recent failure on this thread, or null if none.
 * The pointer is invalidated by the next failing call on the thread.
 */
const char *hmdp_last_error_message(void);

/**
 * Parses, builds, and validates a model from TOML text.
 *
 * # Safety
 * `text` must be NUL-terminated and `out` a valid pointer; on `Ok` the
 * caller owns the handle and frees it with [`hmdp_model_free`].
 */
enum HmdpStatus hmdp_model_from_toml(const char *text, struct HmdpModel **out);

/**
 * Reads a TOML file and builds a model from it.
 *
 * # Safety
 * Same contract as [`hmdp_model_from_toml`], with `path` naming a
 * readable file.
 */
enum HmdpStatus hmdp_model_from_file(const char *path, struct HmdpModel **out);

/**
 * Releases a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be a handle from a model constructor, freed at most once.
 */
void hmdp_model_free(struct HmdpModel *model);

/**
 * Grid size of the model; 0 when the handle is null.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
uintptr_t hmdp_model_num_points(const struct HmdpModel *model);

/**
 * Number of hidden modes; 0 when the handle is null.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
uintptr_t hmdp_model_num_modes(const struct HmdpModel *model);

/**
 * Number of actions; 0 when the handle is null.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
uintptr_t hmdp_model_num_actions(const struct HmdpModel *model);

/**
 * Discount factor; NaN when the handle is null.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
double hmdp_model_gamma(const struct HmdpModel *model);

/**
 * Writes the model's SHA-256 content hash as 64 hex characters plus NUL.
 * `len` must be at least 65.
 *
 * # Safety
 * `model` must be a live handle; `buffer` must point to `len` writable
 * bytes.
 */
enum HmdpStatus hmdp_model_content_hash(const struct HmdpModel *model, char *buffer, uintptr_t len);

/**
 * Index of a window given its points, newest first; the window length
 * must be `memory + 1` and every entry below the grid size.
 *
 * # Safety
 * `model` must be a live handle; `window` must point to `window_len`
 * readable entries; `out` must be a valid pointer.
 */
enum HmdpStatus hmdp_window_index(const struct HmdpModel *model,
                                  uintptr_t memory,
                                  const uintptr_t *window,
                                  uintptr_t window_len,
                                  uintptr_t *out);

/**
 * Solves the window Q fixed point and keeps the greedy policy.
 * Fails with `NonConverged` when `max_sweeps` is insufficient; no handle
 * is produced in that case.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer; on `Ok` the
 * caller owns the handle and frees it with [`hmdp_solution_free`].
 */
enum HmdpStatus hmdp_solve(const struct HmdpModel *model,
                           uintptr_t memory,
                           enum HmdpMixing mixing,
                           double tol,
                           uintptr_t max_sweeps,
                           struct HmdpSolution **out);

/**
 * Releases a solution handle. Null is a no-op.
 *
 * # Safety
 * `solution` must be a handle from [`hmdp_solve`], freed at most once.
 */
void hmdp_solution_free(struct HmdpSolution *solution);

/**
 * Number of windows in the solution table; 0 when the handle is null.
 *
 * # Safety
 * `solution` must be a live handle or null.
 */
uintptr_t hmdp_solution_num_windows(const struct HmdpSolution *solution);

/**
 * Number of actions in the solution table; 0 when the handle is null.
 *
 * # Safety
 * `solution` must be a live handle or null.
 */
uintptr_t hmdp_solution_num_actions(const struct HmdpSolution *solution);

/**
 * Sweeps the solver ran; 0 when the handle is null.
 *
 * # Safety
 * `solution` must be a live handle or null.
 */
uintptr_t hmdp_solution_iterations(const struct HmdpSolution *solution);

/**
 * Final fixed-point residual; NaN when the handle is null.
 *
 * # Safety
 * `solution` must be a live handle or null.
 */
double hmdp_solution_final_residual(const struct HmdpSolution *solution);

/**
 * One action value of the solution.
 *
 * # Safety
 * `solution` must be a live handle and `out` a valid pointer.
 */
enum HmdpStatus hmdp_solution_q_value(const struct HmdpSolution *solution,
                                      uintptr_t window,
                                      uintptr_t action,
                                      double *out);

/**
 * Best (minimal) value at a window.
 *
 * # Safety
 * `solution` must be a live handle and `out` a valid pointer.
 */
enum HmdpStatus hmdp_solution_value(const struct HmdpSolution *solution,
                                    uintptr_t window,
                                    double *out);

/**
 * Greedy action at a window (ties go to the lowest action index).
 *
 * # Safety
 * `solution` must be a live handle and `out` a valid pointer.
 */
enum HmdpStatus hmdp_solution_greedy_action(const struct HmdpSolution *solution,
                                            uintptr_t window,
                                            uintptr_t *out);

/**
 * Copies the full action-value table, action index fastest. `len` must be
 * exactly windows x actions.
 *
 * # Safety
 * `solution` must be a live handle; `buffer` must point to `len` writable
 * doubles.
 */
enum HmdpStatus hmdp_solution_copy_q(const struct HmdpSolution *solution,
                                     double *buffer,
                                     uintptr_t len);

/**
 * Exact window-mixing Lipschitz constant for the given memory. Subject to
 * the enumeration feasibility gates; oversized requests fail with
 * `InvalidArgument`.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum HmdpStatus hmdp_lipschitz_exact(const struct HmdpModel *model, uintptr_t memory, double *out);

/**
 * Sampled lower estimate of the window-mixing Lipschitz constant over
 * `windows` sampled windows.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum HmdpStatus hmdp_lipschitz_sampled(const struct HmdpModel *model,
                                       uintptr_t memory,
                                       uintptr_t windows,
                                       uint64_t seed,
                                       double *out);

/**
 * Worst-case value gap of a window policy after `sweeps` fixed-belief
 * sweeps; negative `sweeps` gives the infinite-sweep limit.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HmdpStatus hmdp_suboptimality_bound(double reward_bound,
                                         double gamma,
                                         uintptr_t num_modes,
                                         double lipschitz,
                                         int64_t sweeps,
                                         double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* HMDP_H */
