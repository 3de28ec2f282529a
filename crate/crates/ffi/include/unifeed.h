#ifndef UNIFEED_H
#define UNIFEED_H

#pragma once

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum UnifeedStatus {
  UNIFEED_STATUS_OK = 0,
  UNIFEED_STATUS_NULL_POINTER = 1,
  UNIFEED_STATUS_INVALID_UTF8 = 2,
  UNIFEED_STATUS_INVALID_CHANNEL = 3,
  UNIFEED_STATUS_INVALID_CONFIG = 4,
  UNIFEED_STATUS_IO = 5,
  UNIFEED_STATUS_RUNTIME = 6,
  UNIFEED_STATUS_PANIC = 7,
} UnifeedStatus;

typedef enum UnifeedVariant {
  UNIFEED_VARIANT_ONE_STAGE = 0,
  UNIFEED_VARIANT_TWO_STAGE_FULL = 1,
  UNIFEED_VARIANT_TWO_STAGE_ALTERNATIVE = 2,
} UnifeedVariant;

typedef struct UnifeedBounds UnifeedBounds;

typedef struct UnifeedCapacity UnifeedCapacity;

typedef struct UnifeedChannel UnifeedChannel;

typedef struct UnifeedSimulation UnifeedSimulation;

// Outcome of one simulated transmission.
typedef struct UnifeedEpisode {
  // Stopping time (channel uses).
  uint64_t t;
  uint64_t message;
  uint64_t decoded;
  bool error;
  bool truncated;
} UnifeedEpisode;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *unifeed_last_error(void);

// Library version as a static NUL-terminated string.
const char *unifeed_version(void);

// Builds one of the named families (`trapdoor`, `chemical`, `symmetric`,
// `asymmetric`) from `n_params` parameters.
//
// # Safety
// `family` must be a NUL-terminated string, `params` must point to
// `n_params` doubles (or be NULL when `n_params` is 0), and `out` must be
// writable.
enum UnifeedStatus unifeed_channel_builtin(const char *family,
                                           const double *params,
                                           size_t n_params,
                                           struct UnifeedChannel **out);

// Parses a channel JSON document (explicit kernel or family form).
//
// # Safety
// `json` must be a NUL-terminated string and `out` must be writable.
enum UnifeedStatus unifeed_channel_from_json(const char *json, struct UnifeedChannel **out);

// # Safety
// `channel` must be NULL or a handle from this library, not yet freed.
void unifeed_channel_free(struct UnifeedChannel *channel);

// Alphabet sizes of a channel.
//
// # Safety
// `channel` must be a live handle; the out pointers must be writable.
enum UnifeedStatus unifeed_channel_dims(const struct UnifeedChannel *channel,
                                        size_t *nx,
                                        size_t *ny,
                                        size_t *ns);

// Whether every kernel entry is positive.
//
// # Safety
// `channel` must be a live handle and `out` writable.
enum UnifeedStatus unifeed_channel_strictly_positive(const struct UnifeedChannel *channel,
                                                     bool *out);

// Solves the capacity problem. Non-positive `grid_res`, `action_res` or
// `tol` select the defaults (1/200, 1/100, 1e-6).
//
// # Safety
// `channel` must be a live handle and `out` writable.
enum UnifeedStatus unifeed_capacity_solve(const struct UnifeedChannel *channel,
                                          double grid_res,
                                          double action_res,
                                          double tol,
                                          struct UnifeedCapacity **out);

// Capacity estimate in bits per channel use.
//
// # Safety
// `capacity` must be a live handle and `out` writable.
enum UnifeedStatus unifeed_capacity_value(const struct UnifeedCapacity *capacity, double *out);

// # Safety
// `capacity` must be NULL or a handle from this library, not yet freed.
void unifeed_capacity_free(struct UnifeedCapacity *capacity);

// Solves for the stage-two exponent constants with default settings.
//
// # Safety
// `channel` must be a live handle and `out` writable.
enum UnifeedStatus unifeed_bounds_solve(const struct UnifeedChannel *channel,
                                        struct UnifeedBounds **out);

// `C~1` in bits; `INFINITY` when unbounded.
//
// # Safety
// `bounds` must be a live handle and `out` writable.
enum UnifeedStatus unifeed_bounds_ctilde1(const struct UnifeedBounds *bounds, double *out);

// `C~1*` in bits (reverse divergence under the same policies).
//
// # Safety
// `bounds` must be a live handle and `out` writable.
enum UnifeedStatus unifeed_bounds_ctilde1_star(const struct UnifeedBounds *bounds, double *out);

// # Safety
// `bounds` must be NULL or a handle from this library, not yet freed.
void unifeed_bounds_free(struct UnifeedBounds *bounds);

// Sets up a simulator. The handles are copied; they may be freed afterwards.
// `precision_bits` of 0 selects 256.
//
// # Safety
// All handles must be live and `out` writable.
enum UnifeedStatus unifeed_simulation_new(const struct UnifeedChannel *channel,
                                          const struct UnifeedCapacity *capacity,
                                          const struct UnifeedBounds *bounds,
                                          uint32_t k,
                                          double pe_target,
                                          double p0,
                                          enum UnifeedVariant variant,
                                          uint32_t precision_bits,
                                          struct UnifeedSimulation **out);

// Runs one episode; the same seed always gives the same episode.
//
// # Safety
// `sim` must be a live handle and `out` writable.
enum UnifeedStatus unifeed_simulation_run(const struct UnifeedSimulation *sim,
                                          uint64_t seed,
                                          struct UnifeedEpisode *out);

// # Safety
// `sim` must be NULL or a handle from this library, not yet freed.
void unifeed_simulation_free(struct UnifeedSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNIFEED_H */
