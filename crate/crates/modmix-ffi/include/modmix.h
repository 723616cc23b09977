#ifndef MODMIX_H
#define MODMIX_H

/* Generated by cbindgen from the modmix-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible function.
 */
typedef enum {
  MM_STATUS_OK = 0,
  MM_STATUS_NULL_POINTER = 1,
  MM_STATUS_INVALID_ARGUMENT = 2,
  MM_STATUS_IO_ERROR = 3,
  MM_STATUS_UTF8_ERROR = 4,
  MM_STATUS_EVAL_ERROR = 5,
  MM_STATUS_BUFFER_TOO_SMALL = 6,
} MmStatus;

/**
 * Organized point cloud handle.
 */
typedef struct MmCloud MmCloud;

/**
 * Mixture mask handle.
 */
typedef struct MmMask MmMask;

/**
 * Encoded DHS pseudo-image handle.
 */
typedef struct MmPseudoImage MmPseudoImage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *mm_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *mm_version(void);

/**
 * Reads a cloud file: `.opc`/`.opc1` containers or `.png` depth maps with
 * a `<name>.intr.txt` intrinsics sidecar.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 * The returned handle must be released with [`mm_cloud_free`].
 */
MmStatus mm_cloud_read(const char *path, MmCloud **out);

/**
 * # Safety
 * `cloud` must be a live handle from this library or null (a no-op).
 */
void mm_cloud_free(MmCloud *cloud);

/**
 * # Safety
 * `cloud` must be a live handle.
 */
uint32_t mm_cloud_width(const MmCloud *cloud);

/**
 * # Safety
 * `cloud` must be a live handle.
 */
uint32_t mm_cloud_height(const MmCloud *cloud);

/**
 * Encodes a cloud into a DHS pseudo-image. `depth_mode` 0 measures
 * Euclidean range, 1 the coordinate along the sensor viewing axis.
 *
 * # Safety
 * `cloud` must be a live handle and `out` a valid pointer; release the
 * result with [`mm_pseudo_image_free`].
 */
MmStatus mm_encode_dhs(const MmCloud *cloud, int depth_mode, MmPseudoImage **out);

/**
 * # Safety
 * `image` must be a live handle from this library or null (a no-op).
 */
void mm_pseudo_image_free(MmPseudoImage *image);

/**
 * # Safety
 * `image` must be a live handle.
 */
uint32_t mm_pseudo_image_width(const MmPseudoImage *image);

/**
 * # Safety
 * `image` must be a live handle.
 */
uint32_t mm_pseudo_image_height(const MmPseudoImage *image);

/**
 * Copies the normalized channels out row-major. Each of `d`, `h`, `s`
 * needs room for `width * height` doubles and `valid` for as many bytes;
 * any of them may be null to skip that channel.
 *
 * # Safety
 * `image` must be a live handle and the non-null output buffers must hold
 * at least `len` elements, with `len >= width * height`.
 */
MmStatus mm_pseudo_image_channels(const MmPseudoImage *image,
                                  double *d,
                                  double *h,
                                  double *s,
                                  uint8_t *valid,
                                  uintptr_t len);

/**
 * Writes the pseudo-image as an 8-bit RGB PNG (channel order D, H, S).
 *
 * # Safety
 * `image` must be a live handle and `path` a NUL-terminated string.
 */
MmStatus mm_pseudo_image_write_png(const MmPseudoImage *image, const char *path);

/**
 * Chessboard per-patch mask. `origin_label` 0 puts label A at the origin
 * patch, 1 puts label B there.
 *
 * # Safety
 * `out` must be a valid pointer; release the result with [`mm_mask_free`].
 */
MmStatus mm_cppm_mask(uint32_t width,
                      uint32_t height,
                      uint32_t patch_size,
                      int origin_label,
                      MmMask **out);

/**
 * Stochastic flood-fill mask; deterministic for equal parameter tuples.
 * Probabilities must lie in (0, 1]; `neighborhood` is 4 or 8.
 *
 * # Safety
 * `out` must be a valid pointer; release the result with [`mm_mask_free`].
 */
MmStatus mm_sffm_mask(uint32_t width,
                      uint32_t height,
                      double p_a,
                      double p_b,
                      int neighborhood,
                      uint64_t seed,
                      MmMask **out);

/**
 * # Safety
 * `mask` must be a live handle from this library or null (a no-op).
 */
void mm_mask_free(MmMask *mask);

/**
 * # Safety
 * `mask` must be a live handle.
 */
uint32_t mm_mask_width(const MmMask *mask);

/**
 * # Safety
 * `mask` must be a live handle.
 */
uint32_t mm_mask_height(const MmMask *mask);

/**
 * Fraction of pixels carrying label A; negative on a null handle.
 *
 * # Safety
 * `mask` must be a live handle.
 */
double mm_mask_a_fraction(const MmMask *mask);

/**
 * Copies the per-pixel labels out row-major: 0 for A, 1 for B.
 *
 * # Safety
 * `mask` must be a live handle and `out` must hold at least `len` bytes,
 * with `len >= width * height`.
 */
MmStatus mm_mask_labels(const MmMask *mask, uint8_t *out, uintptr_t len);

/**
 * Writes the mask as a 1-bit PNG (A = 0, B = 1).
 *
 * # Safety
 * `mask` must be a live handle and `path` a NUL-terminated string.
 */
MmStatus mm_mask_write_png(const MmMask *mask, const char *path);

/**
 * Composes two interleaved RGB8 buffers (`width * height * 3` bytes each)
 * through the mask: each output pixel is copied, never blended.
 *
 * # Safety
 * `img_a`, `img_b` and `out` must each point to `width * height * 3`
 * readable (respectively writable) bytes, and `mask` must be a live
 * handle of the same dimensions.
 */
MmStatus mm_apply_mask_rgb8(const uint8_t *img_a,
                            const uint8_t *img_b,
                            uint32_t width,
                            uint32_t height,
                            const MmMask *mask,
                            uint8_t *out);

/**
 * Intersection-over-union of two (x, y, w, h) boxes; negative when either
 * box is invalid.
 */
double mm_box_iou(double ax,
                  double ay,
                  double aw,
                  double ah,
                  double bx,
                  double by,
                  double bw,
                  double bh);

/**
 * Evaluates a COCO results file against a COCO annotation document and
 * returns the report as a JSON string (free it with [`mm_string_free`]).
 *
 * `subgroup` is `all`, `sunrgbd10`, `sunrgbd16`, or a name defined in the
 * optional JSON `categories_config` (may be null). `thresholds` is `0.5`,
 * `0.75` or `coco`. `max_dets` caps detections per image; 0 means no cap.
 *
 * # Safety
 * String arguments must be NUL-terminated (or null where documented) and
 * `out_json` must be a valid pointer.
 */
MmStatus mm_evaluate_files(const char *gt_path,
                           const char *det_path,
                           const char *subgroup,
                           const char *thresholds,
                           const char *categories_config,
                           bool zero_fill_missing,
                           uint32_t max_dets,
                           char **out_json);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must have been returned by a function of this library and not freed
 * before; null is a no-op.
 */
void mm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MODMIX_H */
