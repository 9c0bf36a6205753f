#ifndef PURSUIT_FFI_H
#define PURSUIT_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define PURSUIT_OBS_DIM 13

#define PURSUIT_ACTION_COUNT 15

typedef enum PursuitStatus {
  PURSUIT_STATUS_OK = 0,
  PURSUIT_STATUS_NULL_POINTER = 1,
  PURSUIT_STATUS_INVALID_ARGUMENT = 2,
  PURSUIT_STATUS_SHAPE_MISMATCH = 3,
  PURSUIT_STATUS_DEGENERATE_GEOMETRY = 4,
  PURSUIT_STATUS_CONFIG = 5,
  PURSUIT_STATUS_CHECKPOINT = 6,
  PURSUIT_STATUS_IO = 7,
  PURSUIT_STATUS_INTERNAL = 8,
} PursuitStatus;

/**
 * Episode state reported by [`pursuit_world_step`].
 */
typedef enum PursuitOutcome {
  PURSUIT_OUTCOME_RUNNING = 0,
  PURSUIT_OUTCOME_WIN = 1,
  PURSUIT_OUTCOME_STANDOFF = 2,
  PURSUIT_OUTCOME_LOSE = 3,
} PursuitOutcome;

/**
 * Opaque simulation context: physics, maneuver catalog, thresholds and
 * rewards.
 */
typedef struct PursuitContext PursuitContext;

/**
 * Opaque Q-network.
 */
typedef struct PursuitQNetwork PursuitQNetwork;

/**
 * Opaque engagement with its simulation context.
 */
typedef struct PursuitWorld PursuitWorld;

typedef struct PursuitUavState {
  double x;
  double y;
  double z;
  double v;
  double gamma;
  double psi;
} PursuitUavState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message, NUL-terminated and
 * truncated to `cap` bytes. Returns the full message length without the
 * terminator.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t pursuit_last_error(char *buf, size_t cap);

/**
 * Builds a context from TOML configuration text; null selects defaults.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must be
 * writable.
 */
enum PursuitStatus pursuit_context_new(const char *config_toml, struct PursuitContext **out);

/**
 * # Safety
 * `ctx` must be null or come from [`pursuit_context_new`], freed once.
 */
void pursuit_context_free(struct PursuitContext *ctx);

/**
 * Advances `state` by one decision interval under catalog action `action`.
 *
 * # Safety
 * Pointers must be valid; `out` may alias nothing else.
 */
enum PursuitStatus pursuit_apply_action(const struct PursuitContext *ctx,
                                        const struct PursuitUavState *state,
                                        uint32_t action,
                                        struct PursuitUavState *out);

/**
 * Writes the normalized observation of `own` against `target` into
 * `out[0..len]`; `len` must equal [`PURSUIT_OBS_DIM`].
 *
 * # Safety
 * Pointers must be valid and `out` must hold `len` doubles.
 */
enum PursuitStatus pursuit_observe(const struct PursuitContext *ctx,
                                   const struct PursuitUavState *own,
                                   const struct PursuitUavState *target,
                                   double *out,
                                   size_t len);

/**
 * Whether `own` holds the interception geometry on `target`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PursuitStatus pursuit_is_intercepted(const struct PursuitContext *ctx,
                                          const struct PursuitUavState *own,
                                          const struct PursuitUavState *target,
                                          bool *out);

/**
 * Maximin row over `count` payoff matrices of `rows x cols`, stored
 * back to back in row-major order.
 *
 * # Safety
 * `data` must hold `count * rows * cols` doubles.
 */
enum PursuitStatus pursuit_maximin_action(const double *data,
                                          size_t count,
                                          size_t rows,
                                          size_t cols,
                                          uint32_t *out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum PursuitStatus pursuit_qnet_load(const char *path, struct PursuitQNetwork **out);

/**
 * Deserializes a checkpoint held in memory.
 *
 * # Safety
 * `bytes` must hold `len` bytes and `out` must be writable.
 */
enum PursuitStatus pursuit_qnet_from_bytes(const uint8_t *bytes,
                                           size_t len,
                                           struct PursuitQNetwork **out);

/**
 * # Safety
 * `net` must be null or come from this library, freed once.
 */
void pursuit_qnet_free(struct PursuitQNetwork *net);

/**
 * Input and output widths.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PursuitStatus pursuit_qnet_dims(const struct PursuitQNetwork *net,
                                     size_t *input,
                                     size_t *output);

/**
 * Q-values for one input.
 *
 * # Safety
 * `obs` must hold `obs_len` doubles and `out` `out_len` doubles.
 */
enum PursuitStatus pursuit_qnet_forward(const struct PursuitQNetwork *net,
                                        const double *obs,
                                        size_t obs_len,
                                        double *out,
                                        size_t out_len);

/**
 * Greedy action, lowest index on ties.
 *
 * # Safety
 * `obs` must hold `obs_len` doubles.
 */
enum PursuitStatus pursuit_qnet_greedy(const struct PursuitQNetwork *net,
                                       const double *obs,
                                       size_t obs_len,
                                       uint32_t *out);

/**
 * Starts an engagement from TOML configuration text (null selects
 * defaults) and a seed.
 *
 * # Safety
 * `config_toml` must be null or NUL-terminated; `out` must be writable.
 */
enum PursuitStatus pursuit_world_new(const char *config_toml,
                                     uint64_t seed,
                                     struct PursuitWorld **out);

/**
 * # Safety
 * `world` must be null or come from [`pursuit_world_new`], freed once.
 */
void pursuit_world_free(struct PursuitWorld *world);

/**
 * Number of live red UAVs, the count expected by
 * [`pursuit_world_step`] and produced by [`pursuit_world_observations`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum PursuitStatus pursuit_world_live_reds(const struct PursuitWorld *world, size_t *out);

/**
 * Observations of the live reds, each [`PURSUIT_OBS_DIM`] wide, in red
 * index order.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum PursuitStatus pursuit_world_observations(const struct PursuitWorld *world,
                                              double *out,
                                              size_t len);

/**
 * Steps the engagement with one action per live red and reports the
 * episode state.
 *
 * # Safety
 * `actions` must hold `len` values and `outcome` must be writable.
 */
enum PursuitStatus pursuit_world_step(struct PursuitWorld *world,
                                      const uint32_t *actions,
                                      size_t len,
                                      enum PursuitOutcome *outcome);

/**
 * Copies the state of red UAV `index`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PursuitStatus pursuit_world_red_state(const struct PursuitWorld *world,
                                           size_t index,
                                           struct PursuitUavState *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PURSUIT_FFI_H */
