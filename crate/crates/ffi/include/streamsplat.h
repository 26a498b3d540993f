#ifndef STREAMSPLAT_H
#define STREAMSPLAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_INVALID_ARGUMENT = 1,
  SS_STATUS_DEGENERATE = 2,
  SS_STATUS_DEGENERATE_POSE = 3,
  SS_STATUS_UNDEFINED_LOSS = 4,
  SS_STATUS_DIVERGED = 5,
  SS_STATUS_FORMAT = 6,
  SS_STATUS_PARSE = 7,
  SS_STATUS_IO = 8,
  SS_STATUS_NULL_POINTER = 9,
  SS_STATUS_PANIC = 10,
} SsStatus;

/**
 * Opaque Gaussian scene.
 */
typedef struct SsScene SsScene;

/**
 * Opaque streaming reconstruction.
 */
typedef struct SsStream SsStream;

/**
 * Pinhole intrinsics; pixels are sampled at integer coordinates.
 */
typedef struct SsIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
  size_t width;
  size_t height;
} SsIntrinsics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ss_version(void);

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on this thread.
 */
const char *ss_last_error(void);

/**
 * Reads an OGS scene file.
 */
enum SsStatus ss_scene_read(const char *path, struct SsScene **out);

enum SsStatus ss_scene_write(const struct SsScene *scene, const char *path);

/**
 * Number of primitives; 0 for NULL.
 */
size_t ss_scene_len(const struct SsScene *scene);

/**
 * Language feature width; 0 for NULL.
 */
size_t ss_scene_k(const struct SsScene *scene);

void ss_scene_free(struct SsScene *scene);

/**
 * Renders `scene` from `pose` (NULL for identity). `rgb` receives
 * `width·height·3` values; `features`, if not NULL, receives
 * `width·height·k` values.
 */
enum SsStatus ss_render(const struct SsScene *scene,
                        const double *pose,
                        const struct SsIntrinsics *intrinsics,
                        double *rgb,
                        double *features);

/**
 * Starts a stream. With a NULL `weights_path` the default network is built
 * from seeded random weights.
 */
enum SsStatus ss_stream_new(const char *weights_path,
                            uint64_t seed,
                            double voxel_size,
                            struct SsStream **out);

/**
 * Feeds one frame. `pose_out`, if not NULL, receives the frame's global
 * pose (seven doubles).
 */
enum SsStatus ss_stream_push_frame(struct SsStream *stream,
                                   const double *rgb,
                                   size_t width,
                                   size_t height,
                                   double *pose_out);

/**
 * Frames consumed so far; 0 for NULL.
 */
size_t ss_stream_frames(const struct SsStream *stream);

/**
 * Copies the accumulated scene into a new handle owned by the caller.
 */
enum SsStatus ss_stream_scene(const struct SsStream *stream, struct SsScene **out);

void ss_stream_free(struct SsStream *stream);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STREAMSPLAT_H */
