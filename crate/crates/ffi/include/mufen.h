#ifndef MUFEN_H
#define MUFEN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call. `MUFEN_STATUS_OK` is zero.
typedef enum MufenStatus {
  MUFEN_STATUS_OK = 0,
  MUFEN_STATUS_NULL_POINTER = 1,
  MUFEN_STATUS_INVALID_UTF8 = 2,
  MUFEN_STATUS_INVALID_ARGUMENT = 3,
  MUFEN_STATUS_SHAPE = 4,
  MUFEN_STATUS_NUMERIC = 5,
  MUFEN_STATUS_PARSE = 6,
  MUFEN_STATUS_VALIDATION = 7,
  MUFEN_STATUS_UNSUPPORTED_PROJECTION = 8,
  MUFEN_STATUS_EMPTY_SILHOUETTE = 9,
  MUFEN_STATUS_MISSING_MODALITY = 10,
  MUFEN_STATUS_DEGENERATE_VARIANCE = 11,
  MUFEN_STATUS_NOT_PSD = 12,
  MUFEN_STATUS_TOO_SMALL = 13,
  MUFEN_STATUS_DIVERGED = 14,
  MUFEN_STATUS_FORMAT = 15,
  MUFEN_STATUS_JSON = 16,
  MUFEN_STATUS_IO = 17,
  MUFEN_STATUS_PANIC = 99,
} MufenStatus;

typedef enum MufenPair {
  MUFEN_PAIR_FRONT_REAR = 0,
  MUFEN_PAIR_LEFT_RIGHT = 1,
  MUFEN_PAIR_TOP_BOTTOM = 2,
} MufenPair;

typedef enum MufenHandedness {
  MUFEN_HANDEDNESS_RIGHT = 0,
  MUFEN_HANDEDNESS_LEFT = 1,
} MufenHandedness;

// Canonical views, in the order used by `MufenSelection.areas`.
typedef enum MufenView {
  MUFEN_VIEW_FRONT = 0,
  MUFEN_VIEW_REAR = 1,
  MUFEN_VIEW_LEFT = 2,
  MUFEN_VIEW_RIGHT = 3,
  MUFEN_VIEW_TOP = 4,
  MUFEN_VIEW_BOTTOM = 5,
} MufenView;

// Camera pose handle.
typedef struct MufenCamera MufenCamera;

// Rendered RGB image handle.
typedef struct MufenImage MufenImage;

// Triangle mesh handle.
typedef struct MufenMesh MufenMesh;

// Outcome of complementary view selection.
typedef struct MufenSelection {
  enum MufenPair pair;
  // Pair scores in `MufenPair` order.
  double scores[3];
  // Covered fraction of each view in `MufenView` order.
  double areas[6];
  // Front-view box `x0, y0, x1, y1`, normalized to `[0, 1]`.
  double bbox[4];
} MufenSelection;

typedef struct MufenTTest {
  double t;
  double p;
  size_t dof;
  size_t better_count;
} MufenTTest;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a
// success. Valid until the next call into this library on the same thread.
const char *mufen_last_error_message(void);

// Library version as a static nul-terminated string.
const char *mufen_version(void);

// Parses Wavefront OBJ text. `hand` is a `MufenHandedness` value.
//
// # Safety
// `src` must be a nul-terminated string and `out` a writable pointer.
enum MufenStatus mufen_mesh_parse_obj(const char *src, uint32_t hand, struct MufenMesh **out);

// Loads an OBJ file. `hand` is a `MufenHandedness` value.
//
// # Safety
// `path` must be a nul-terminated string and `out` a writable pointer.
enum MufenStatus mufen_mesh_load_obj(const char *path, uint32_t hand, struct MufenMesh **out);

// Builds a synthetic right hand; `curls` points at five finger curls in
// `[0, 1]`, thumb first.
//
// # Safety
// `curls` must point at five doubles and `out` be a writable pointer.
enum MufenStatus mufen_mesh_synth(uint64_t seed, const double *curls, struct MufenMesh **out);

// Vertex count, or 0 for a null handle.
//
// # Safety
// `mesh` must be null or a live handle.
size_t mufen_mesh_vertex_count(const struct MufenMesh *mesh);

// Face count, or 0 for a null handle.
//
// # Safety
// `mesh` must be null or a live handle.
size_t mufen_mesh_face_count(const struct MufenMesh *mesh);

// # Safety
// `mesh` must be null or a handle not yet freed.
void mufen_mesh_free(struct MufenMesh *mesh);

// Weak-perspective camera at `(tx, ty, tz)` looking down -Z.
//
// # Safety
// `out` must be a writable pointer.
enum MufenStatus mufen_camera_weak_perspective(double tx,
                                               double ty,
                                               double tz,
                                               double scale,
                                               struct MufenCamera **out);

// # Safety
// `camera` must be null or a handle not yet freed.
void mufen_camera_free(struct MufenCamera *camera);

// Shaded render of one canonical view; `view_id` is a `MufenView` value.
//
// # Safety
// `mesh` and `camera` must be live handles and `out` a writable pointer.
enum MufenStatus mufen_render_view(const struct MufenMesh *mesh,
                                   const struct MufenCamera *camera,
                                   uint32_t view_id,
                                   size_t width,
                                   size_t height,
                                   struct MufenImage **out);

// # Safety
// `image` must be null or a live handle.
size_t mufen_image_width(const struct MufenImage *image);

// # Safety
// `image` must be null or a live handle.
size_t mufen_image_height(const struct MufenImage *image);

// Interleaved 8-bit RGB rows, top row first; `width * height * 3` bytes
// owned by the image. Null for a null handle.
//
// # Safety
// `image` must be null or a live handle.
const uint8_t *mufen_image_rgb(const struct MufenImage *image);

// # Safety
// `image` must be null or a handle not yet freed.
void mufen_image_free(struct MufenImage *image);

// Scores the three complementary pairs at a square resolution and picks
// the one with the largest combined silhouette area.
//
// # Safety
// `mesh` and `camera` must be live handles and `out` a writable pointer.
enum MufenStatus mufen_select_views(const struct MufenMesh *mesh,
                                    const struct MufenCamera *camera,
                                    size_t resolution,
                                    struct MufenSelection *out);

// Fréchet distance between Gaussians fitted to two row-major feature
// matrices of width `d`.
//
// # Safety
// `a` and `b` must point at `na * d` and `nb * d` doubles; `out` must be
// writable.
enum MufenStatus mufen_frechet_distance(const double *a,
                                        size_t na,
                                        const double *b,
                                        size_t nb,
                                        size_t d,
                                        double *out);

// Kernel inception distance: mean and standard deviation of the unbiased
// MMD² over `subsets` seeded subsets of `subset_size` rows.
//
// # Safety
// `a` and `b` must point at `na * d` and `nb * d` doubles; `mean` and `std`
// must be writable.
enum MufenStatus mufen_kid(const double *a,
                           size_t na,
                           const double *b,
                           size_t nb,
                           size_t d,
                           size_t subsets,
                           size_t subset_size,
                           uint64_t seed,
                           double *mean,
                           double *std);

// Two-sided paired t-test on `a - b`; lower scores count as better.
//
// # Safety
// `a` and `b` must point at `n` doubles each; `out` must be writable.
enum MufenStatus mufen_paired_ttest(const double *a,
                                    const double *b,
                                    size_t n,
                                    struct MufenTTest *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MUFEN_H */
