#ifndef PAVER_H
#define PAVER_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible entry point.
 */
typedef enum PaverStatus {
  PAVER_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  PAVER_STATUS_NULL_POINTER = 1,
  /**
   * Invalid grid, shape, size or hyperparameter.
   */
  PAVER_STATUS_CONFIG = 2,
  /**
   * Non-finite values or an undefined metric.
   */
  PAVER_STATUS_NUMERIC = 3,
  /**
   * File system failure.
   */
  PAVER_STATUS_IO = 4,
  /**
   * Malformed file contents.
   */
  PAVER_STATUS_FORMAT = 5,
  /**
   * The library panicked; the handle arguments should be discarded.
   */
  PAVER_STATUS_PANIC = 6,
} PaverStatus;

/**
 * Embedding, encoder and fusion weights with their head counts.
 */
typedef struct PaverModel PaverModel;

/**
 * Precomputed tangent-patch sampling positions for one raster layout.
 */
typedef struct PaverOffsets PaverOffsets;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *paver_version(void);

/**
 * Message of the last failure on this thread; empty if none. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *paver_last_error(void);

/**
 * Computes the offset table for a `width × height` raster with `patch`-pixel
 * patches. `format` is 0 for equirectangular, 1 for cube map, 2 for the
 * 4×2 tangent layout.
 *
 * # Safety
 * `out` must be a valid pointer to writable handle storage.
 */
enum PaverStatus paver_offsets_compute(size_t width,
                                       size_t height,
                                       size_t patch,
                                       uint8_t format,
                                       struct PaverOffsets **out);

/**
 * Reads an offset table file.
 *
 * # Safety
 * `file` must be a NUL-terminated string; `out` must be writable.
 */
enum PaverStatus paver_offsets_read(const char *file, struct PaverOffsets **out);

/**
 * Writes an offset table file.
 *
 * # Safety
 * `offsets` must be a live handle; `file` a NUL-terminated string.
 */
enum PaverStatus paver_offsets_write(const struct PaverOffsets *offsets, const char *file);

/**
 * Number of patches, or 0 for a null handle.
 *
 * # Safety
 * `offsets` must be null or a live handle.
 */
size_t paver_offsets_num_patches(const struct PaverOffsets *offsets);

/**
 * Copies every sampling position as interleaved `(u, v)` pixel coordinates,
 * ordered by patch, tap row, tap column. `len` must equal `2·N·S²`.
 *
 * # Safety
 * `offsets` must be a live handle; `uv` must hold `len` doubles.
 */
enum PaverStatus paver_offsets_taps(const struct PaverOffsets *offsets, double *uv, size_t len);

/**
 * Releases an offset table. Null is ignored.
 *
 * # Safety
 * `offsets` must be null or a handle not yet freed.
 */
void paver_offsets_free(struct PaverOffsets *offsets);

/**
 * Creates a randomly initialized model.
 *
 * # Safety
 * `out` must be writable.
 */
enum PaverStatus paver_model_init(size_t patch,
                                  size_t channels,
                                  size_t depth,
                                  size_t encoder_heads,
                                  size_t fusion_heads,
                                  uint64_t seed,
                                  struct PaverModel **out);

/**
 * Loads a weight container. Head counts are not stored in the file. A
 * positional table, if present, is re-gridded for `offsets`, which may be
 * null when the file has none.
 *
 * # Safety
 * `file` must be a NUL-terminated string; `offsets` null or live; `out`
 * writable.
 */
enum PaverStatus paver_model_load(const char *file,
                                  size_t encoder_heads,
                                  size_t fusion_heads,
                                  const struct PaverOffsets *offsets,
                                  struct PaverModel **out);

/**
 * Writes the model's weights as a container file.
 *
 * # Safety
 * `model` must be live; `file` a NUL-terminated string.
 */
enum PaverStatus paver_model_save(const struct PaverModel *model, const char *file);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void paver_model_free(struct PaverModel *model);

/**
 * Dense saliency for `frames` RGB frames stored as `frames × 3 × H × W`
 * doubles in planar order. Writes `frames × H × W` normalized values.
 * `window` frames are fused together; `sigma ≤ 0` selects the default
 * smoothing width.
 *
 * # Safety
 * Handles must be live; `pixels` must hold `pixels_len` doubles and `maps`
 * `maps_len` doubles.
 */
enum PaverStatus paver_saliency(const struct PaverModel *model,
                                const struct PaverOffsets *offsets,
                                const double *pixels,
                                size_t pixels_len,
                                size_t frames,
                                size_t window,
                                double sigma,
                                double *maps,
                                size_t maps_len);

/**
 * Pearson correlation of two maps of `len` values.
 *
 * # Safety
 * `pred` and `gt` must hold `len` doubles; `out` must be writable.
 */
enum PaverStatus paver_cc(const double *pred, const double *gt, size_t len, double *out);

/**
 * AUC-Judd of a `width × height` map against fixations given as row-major
 * pixel indices.
 *
 * # Safety
 * `pred` must hold `width·height` doubles, `fixations` `num_fixations`
 * indices; `out` must be writable.
 */
enum PaverStatus paver_auc_judd(const double *pred,
                                size_t width,
                                size_t height,
                                const size_t *fixations,
                                size_t num_fixations,
                                double *out);

/**
 * Luma PSNR between two clips of `frames × 3 × H × W` planar doubles.
 * `weights` is null for plain PSNR, or one `H × W` map shared by all
 * frames. Identical inputs report the 99 dB cap.
 *
 * # Safety
 * `reference` and `distorted` must hold `frames·3·width·height` doubles,
 * `weights` null or `width·height` doubles; `out_db` must be writable.
 */
enum PaverStatus paver_psnr(const double *reference,
                            const double *distorted,
                            size_t width,
                            size_t height,
                            size_t frames,
                            const double *weights,
                            double max_value,
                            double *out_db);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PAVER_H */
