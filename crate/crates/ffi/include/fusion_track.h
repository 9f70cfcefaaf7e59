#ifndef FUSION_TRACK_H
#define FUSION_TRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FtStatus {
  FT_STATUS_OK = 0,
  FT_STATUS_NULL_POINTER = 1,
  FT_STATUS_INVALID_ARGUMENT = 2,
  FT_STATUS_CONFIG = 3,
  FT_STATUS_DATA = 4,
  FT_STATUS_IO = 5,
  FT_STATUS_NUMERIC = 6,
  FT_STATUS_OUT_OF_RANGE = 7,
  FT_STATUS_PANIC = 8,
} FtStatus;

/**
 * Opaque tracker handle.
 */
typedef struct FtTracker FtTracker;

/**
 * One detected object in the sensor (ego) frame.
 */
typedef struct FtDetection {
  double x;
  double y;
  /**
   * NaN when not measured.
   */
  double yaw;
  /**
   * NaN when not measured.
   */
  double v;
} FtDetection;

/**
 * Ego pose and motion in the global frame.
 */
typedef struct FtEgoState {
  double t;
  double x;
  double y;
  double yaw;
  double v;
  double yaw_rate;
} FtEgoState;

/**
 * One confirmed track of the last cycle output.
 */
typedef struct FtTrack {
  uint64_t uid;
  double x;
  double y;
  double yaw;
  double v;
  double yaw_rate;
  double accel;
} FtTrack;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a tracker. `config_json` is a run config document and
 * `map_csv_path` a boundary CSV; either may be null for the defaults.
 *
 * # Safety
 * Strings must be null or NUL-terminated; `out` must be writable.
 */
enum FtStatus ft_tracker_new(const char *config_json,
                             const char *map_csv_path,
                             struct FtTracker **out);

/**
 * Releases a tracker. Null is ignored.
 *
 * # Safety
 * `tracker` must come from [`ft_tracker_new`] and not be used afterwards.
 */
void ft_tracker_free(struct FtTracker *tracker);

/**
 * Queues one detection frame for the next cycle.
 *
 * # Safety
 * `sensor` must be NUL-terminated; `dets` must point to `n` detections
 * (or may be null when `n` is 0).
 */
enum FtStatus ft_tracker_push_frame(struct FtTracker *tracker,
                                    const char *sensor,
                                    double t,
                                    double t_rx,
                                    uint64_t seq,
                                    const struct FtDetection *dets,
                                    size_t n);

/**
 * Queues one frame given as a JSON detection-log line.
 *
 * # Safety
 * `json` must be NUL-terminated.
 */
enum FtStatus ft_tracker_push_frame_json(struct FtTracker *tracker, const char *json);

/**
 * Runs one cycle at `ego.t` with every queued frame. The confirmed tracks
 * are then available through [`ft_tracker_output_len`] and
 * [`ft_tracker_output_get`].
 *
 * # Safety
 * `tracker` and `ego` must be valid.
 */
enum FtStatus ft_tracker_run_cycle(struct FtTracker *tracker, const struct FtEgoState *ego);

/**
 * Number of confirmed tracks in the last output, 0 for a null handle.
 *
 * # Safety
 * `tracker` must be null or valid.
 */
size_t ft_tracker_output_len(const struct FtTracker *tracker);

/**
 * Output time of the last cycle, NaN before the first cycle.
 *
 * # Safety
 * `tracker` must be null or valid.
 */
double ft_tracker_output_time(const struct FtTracker *tracker);

/**
 * Copies track `index` of the last output into `out`.
 *
 * # Safety
 * `tracker` must be valid and `out` writable.
 */
enum FtStatus ft_tracker_output_get(const struct FtTracker *tracker,
                                    size_t index,
                                    struct FtTrack *out);

/**
 * Gated minimum-cost assignment of a row-major `rows × cols` cost matrix.
 * `row_to_col` receives the matched column per row, or -1. `total_cost`
 * may be null.
 *
 * # Safety
 * `costs` must hold `rows * cols` values and `row_to_col` `rows` slots.
 */
enum FtStatus ft_hungarian_solve(const double *costs,
                                 size_t rows,
                                 size_t cols,
                                 double d_mtc,
                                 int64_t *row_to_col,
                                 double *total_cost);

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *ft_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *ft_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUSION_TRACK_H */
