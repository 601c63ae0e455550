#ifndef FLOWDYN_H
#define FLOWDYN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum FlowdynStatus {
  FLOWDYN_STATUS_OK = 0,
  FLOWDYN_STATUS_INVALID_ARGUMENT = 1,
  FLOWDYN_STATUS_NUMERICAL_DEGENERACY = 2,
  FLOWDYN_STATUS_FIT_FAILURE = 3,
  FLOWDYN_STATUS_UNDEFINED_METRIC = 4,
  FLOWDYN_STATUS_PARSE = 5,
  FLOWDYN_STATUS_CONFIG = 6,
  FLOWDYN_STATUS_IO = 7,
  FLOWDYN_STATUS_SERIALIZATION = 8,
  FLOWDYN_STATUS_NULL_POINTER = 9,
  /**
   * The queried position has no fitted model.
   */
  FLOWDYN_STATUS_NOT_COVERED = 10,
  FLOWDYN_STATUS_PANIC = 11,
} FlowdynStatus;

/**
 * Read-only map restored from a snapshot.
 */
typedef struct FlowdynMap FlowdynMap;

/**
 * Online system: graph, dynamics map and stabilization gate.
 */
typedef struct FlowdynSystem FlowdynSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *flowdyn_last_error_message(void);

/**
 * Creates a system with default settings at `resolution` meters, reservoir
 * capacity `capacity` and `bins` direction bins. When `with_grid` is true a
 * navigation grid covers the given rectangle; otherwise the graph starts
 * empty and nodes arrive through pose events.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum FlowdynStatus flowdyn_system_new(double resolution,
                                      size_t capacity,
                                      size_t bins,
                                      uint64_t seed,
                                      bool with_grid,
                                      double min_x,
                                      double min_y,
                                      double max_x,
                                      double max_y,
                                      struct FlowdynSystem **out);

/**
 * # Safety
 * `sys` must be NULL or a handle from [`flowdyn_system_new`] not yet freed.
 */
void flowdyn_system_free(struct FlowdynSystem *sys);

/**
 * Selects order selection for subsequent fits: 0 for the BIC sweep,
 * 1 for mean-shift.
 *
 * # Safety
 * `sys` must be a live handle.
 */
enum FlowdynStatus flowdyn_system_set_method(struct FlowdynSystem *sys, uint32_t method);

/**
 * Feeds one observation at time `t`.
 *
 * # Safety
 * `sys` must be a live handle.
 */
enum FlowdynStatus flowdyn_system_observe(struct FlowdynSystem *sys,
                                          double t,
                                          double x,
                                          double y,
                                          double z,
                                          double theta,
                                          double rho);

/**
 * # Safety
 * `sys` must be a live handle.
 */
enum FlowdynStatus flowdyn_system_add_node(struct FlowdynSystem *sys,
                                           double t,
                                           uint64_t id,
                                           double x,
                                           double y,
                                           double z);

/**
 * # Safety
 * `sys` must be a live handle.
 */
enum FlowdynStatus flowdyn_system_move_node(struct FlowdynSystem *sys,
                                            double t,
                                            uint64_t id,
                                            double x,
                                            double y,
                                            double z);

/**
 * # Safety
 * `sys` must be a live handle.
 */
enum FlowdynStatus flowdyn_system_remove_node(struct FlowdynSystem *sys, double t, uint64_t id);

/**
 * Binding attempt plus a scheduled model update at `now`. The number of
 * refitted cells is written to `refits` when it is not NULL.
 *
 * # Safety
 * `sys` must be a live handle; `refits` NULL or writable.
 */
enum FlowdynStatus flowdyn_system_tick(struct FlowdynSystem *sys, double now, size_t *refits);

/**
 * Binds if stable and refits every changed cell regardless of schedule.
 *
 * # Safety
 * `sys` must be a live handle; `refits` NULL or writable.
 */
enum FlowdynStatus flowdyn_system_flush(struct FlowdynSystem *sys, double now, size_t *refits);

/**
 * Observation count over all cells.
 *
 * # Safety
 * `sys` must be a live handle; `out` writable.
 */
enum FlowdynStatus flowdyn_system_total_seen(const struct FlowdynSystem *sys, uint64_t *out);

/**
 * Hash-owned and node-bound cell counts. Either pointer may be NULL.
 *
 * # Safety
 * `sys` must be a live handle; non-NULL outputs writable.
 */
enum FlowdynStatus flowdyn_system_cell_counts(const struct FlowdynSystem *sys,
                                              size_t *hash_owned,
                                              size_t *node_bound);

/**
 * Writes a JSON snapshot of the system to `path`.
 *
 * # Safety
 * `sys` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
enum FlowdynStatus flowdyn_system_save_snapshot(const struct FlowdynSystem *sys, const char *path);

/**
 * Read-only copy of the system's current map.
 *
 * # Safety
 * `sys` must be a live handle; `out` writable.
 */
enum FlowdynStatus flowdyn_system_map(const struct FlowdynSystem *sys, struct FlowdynMap **out);

/**
 * Loads a map from a snapshot file.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` writable.
 */
enum FlowdynStatus flowdyn_map_load(const char *path, struct FlowdynMap **out);

/**
 * # Safety
 * `map` must be NULL or a handle not yet freed.
 */
void flowdyn_map_free(struct FlowdynMap *map);

/**
 * Mixture component count of the cell at a position.
 *
 * # Safety
 * `map` must be a live handle; `out` writable.
 */
enum FlowdynStatus flowdyn_map_component_count(const struct FlowdynMap *map,
                                               double x,
                                               double y,
                                               double z,
                                               size_t *out);

/**
 * Marginal direction density at `theta`, per radian.
 *
 * # Safety
 * `map` must be a live handle; `out` writable.
 */
enum FlowdynStatus flowdyn_map_direction_density(const struct FlowdynMap *map,
                                                 double x,
                                                 double y,
                                                 double z,
                                                 double theta,
                                                 double *out);

/**
 * Probability of each of `bins` equal direction bins, bin 0 starting at -pi.
 * Writes exactly `bins` values to `out`.
 *
 * # Safety
 * `map` must be a live handle; `out` must have room for `bins` doubles.
 */
enum FlowdynStatus flowdyn_map_bin_masses(const struct FlowdynMap *map,
                                          double x,
                                          double y,
                                          double z,
                                          size_t bins,
                                          double *out);

/**
 * Static name of a status code.
 */
const char *flowdyn_status_name(enum FlowdynStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWDYN_H */
