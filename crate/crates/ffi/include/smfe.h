#ifndef SMFE_H
#define SMFE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SmfeStatus {
  SMFE_STATUS_OK = 0,
  SMFE_STATUS_NULL_POINTER = 1,
  /**
   * Bad argument, unreadable config or unknown name.
   */
  SMFE_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The game failed validation.
   */
  SMFE_STATUS_INVALID_GAME = 3,
  SMFE_STATUS_NO_EQUILIBRIUM = 4,
  SMFE_STATUS_NON_CONVERGENCE = 5,
  SMFE_STATUS_IO = 6,
  /**
   * The output buffer is too short; `needed` holds the required length.
   */
  SMFE_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * A panic was caught at the boundary.
   */
  SMFE_STATUS_INTERNAL = 8,
} SmfeStatus;

/**
 * A game specification.
 */
typedef struct SmfeGame SmfeGame;

/**
 * A solved game: equilibrium generator and value tables.
 */
typedef struct SmfeSolution SmfeSolution;

/**
 * A forward pass over a solution.
 */
typedef struct SmfeTrajectory SmfeTrajectory;

/**
 * Sizes of a game's spaces.
 */
typedef struct SmfeDims {
  size_t follower_states;
  size_t leader_states;
  size_t follower_actions;
  size_t leader_actions;
} SmfeDims;

/**
 * Solver settings. Zero `z_resolution` picks the default for the game.
 */
typedef struct SmfeSolveOptions {
  size_t z_resolution;
  size_t belief_resolution;
  double value_tol;
  double fixed_point_tol;
  size_t max_iter;
  bool damped_fallback;
} SmfeSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length without
 * the terminator, 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t smfe_last_error(char *buf, size_t len);

/**
 * Parses a TOML game config.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SmfeStatus smfe_game_from_toml(const char *text, struct SmfeGame **out);

/**
 * Built-in game by name: `infection`, `infection-l021` or `tech`.
 * `horizon` 0 means infinite.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SmfeStatus smfe_game_builtin(const char *name, size_t horizon, struct SmfeGame **out);

/**
 * # Safety
 * `game` must be null or a handle from this library, not yet freed.
 */
void smfe_game_free(struct SmfeGame *game);

/**
 * Runs validation; `InvalidGame` with the report as the error message on failure.
 *
 * # Safety
 * `game` must be a live handle.
 */
enum SmfeStatus smfe_game_validate(const struct SmfeGame *game);

/**
 * # Safety
 * `game` must be a live handle and `out` a valid pointer.
 */
enum SmfeStatus smfe_game_dims(const struct SmfeGame *game, struct SmfeDims *out);

/**
 * Writes the hex spec hash (64 chars plus NUL) into `buf`.
 *
 * # Safety
 * `game` must be a live handle, `buf` must point to `len` writable bytes.
 */
enum SmfeStatus smfe_game_spec_hash(const struct SmfeGame *game, char *buf, size_t len);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum SmfeStatus smfe_solve_options_default(struct SmfeSolveOptions *out);

/**
 * Solves a game: backward pass for finite horizons, value iteration otherwise.
 * `options` may be null for defaults.
 *
 * # Safety
 * `game` must be a live handle, `options` null or valid, `out` valid.
 */
enum SmfeStatus smfe_solve(const struct SmfeGame *game,
                           const struct SmfeSolveOptions *options,
                           struct SmfeSolution **out);

/**
 * # Safety
 * `solution` must be null or a live handle.
 */
void smfe_solution_free(struct SmfeSolution *solution);

/**
 * Number of stage policies (1 for a stationary solution), 0 for null.
 *
 * # Safety
 * `solution` must be null or a live handle.
 */
size_t smfe_solution_stages(const struct SmfeSolution *solution);

/**
 * Number of joint grid points, 0 for null.
 *
 * # Safety
 * `solution` must be null or a live handle.
 */
size_t smfe_solution_grid_points(const struct SmfeSolution *solution);

/**
 * First-stage (or stationary) value table, point-major:
 * `leader = false` gives `[point][follower state]`, `true` `[point][leader type]`.
 *
 * # Safety
 * `solution` must be a live handle; `out` must hold `len` doubles; `needed` null or valid.
 */
enum SmfeStatus smfe_solution_values(const struct SmfeSolution *solution,
                                     bool leader,
                                     double *out,
                                     size_t len,
                                     size_t *needed);

/**
 * Prescriptions at stage `t` (1-based; ignored when stationary) for the
 * public state nearest to `(belief, mean_field)`. `leader_out` receives
 * `[type][action]`, `follower_out` `[state][action]`.
 *
 * # Safety
 * All pointers must be valid for the given lengths.
 */
enum SmfeStatus smfe_solution_prescription(const struct SmfeSolution *solution,
                                           size_t t,
                                           const double *belief,
                                           size_t belief_len,
                                           const double *mean_field,
                                           size_t mean_field_len,
                                           double *leader_out,
                                           size_t leader_len,
                                           double *follower_out,
                                           size_t follower_len);

/**
 * Forward pass from the game's initial state. `sampled` draws one path
 * with `seed`; otherwise leader actions are branched over. `steps` 0
 * means the horizon (required for stationary solutions).
 *
 * # Safety
 * `solution` must be a live handle and `out` valid.
 */
enum SmfeStatus smfe_forward(const struct SmfeSolution *solution,
                             bool sampled,
                             uint64_t seed,
                             size_t steps,
                             struct SmfeTrajectory **out);

/**
 * # Safety
 * `trajectory` must be null or a live handle.
 */
void smfe_trajectory_free(struct SmfeTrajectory *trajectory);

/**
 * Number of steps, 0 for null.
 *
 * # Safety
 * `trajectory` must be null or a live handle.
 */
size_t smfe_trajectory_len(const struct SmfeTrajectory *trajectory);

/**
 * Mean field at step `t` (0-based) of the highest-weight path.
 *
 * # Safety
 * `trajectory` must be a live handle; `out` must hold `len` doubles.
 */
enum SmfeStatus smfe_trajectory_mean_field(const struct SmfeTrajectory *trajectory,
                                           size_t t,
                                           double *out,
                                           size_t len,
                                           size_t *needed);

/**
 * Writes the artifact set of `solution` (and `trajectory`, may be null) into `dir`.
 *
 * # Safety
 * `solution` must be a live handle, `trajectory` null or live, `dir` a NUL-terminated path.
 */
enum SmfeStatus smfe_write_artifacts(const struct SmfeSolution *solution,
                                     const struct SmfeTrajectory *trajectory,
                                     const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMFE_H */
