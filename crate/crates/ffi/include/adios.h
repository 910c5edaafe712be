#ifndef ADIOS_H
#define ADIOS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum AdiosStatus {
  ADIOS_STATUS_OK = 0,
  ADIOS_STATUS_NULL_POINTER = 1,
  ADIOS_STATUS_INVALID_ARGUMENT = 2,
  ADIOS_STATUS_CONFIG = 3,
  ADIOS_STATUS_SHAPE = 4,
  ADIOS_STATUS_DATA = 5,
  ADIOS_STATUS_NON_FINITE = 6,
  ADIOS_STATUS_CHECKPOINT = 7,
  ADIOS_STATUS_IO = 8,
  ADIOS_STATUS_BUFFER_TOO_SMALL = 9,
  ADIOS_STATUS_PANIC = 10,
} AdiosStatus;

/**
 * A validated training configuration.
 */
typedef struct AdiosConfig AdiosConfig;

/**
 * A loaded checkpoint.
 */
typedef struct AdiosModel AdiosModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *adios_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *adios_version(void);

/**
 * Sparsity penalty `1/sin(π·c)` with the coverage clamp.
 */
double adios_sparsity_penalty(double coverage);

/**
 * Loads a checkpoint directory.
 */
enum AdiosStatus adios_model_load(const char *path, struct AdiosModel **out);

void adios_model_free(struct AdiosModel *model);

/**
 * Side length of the images the model expects.
 */
enum AdiosStatus adios_model_image_size(const struct AdiosModel *model, uintptr_t *out);

/**
 * Width of the backbone features.
 */
enum AdiosStatus adios_model_feature_dim(const struct AdiosModel *model, uintptr_t *out);

/**
 * Number of mask slots; 0 when the checkpoint has no occluder.
 */
enum AdiosStatus adios_model_n_masks(const struct AdiosModel *model, uintptr_t *out);

/**
 * Backbone features of `batch` images laid out `B×3×S×S` (row-major, values
 * in `[0,1]`, `S` = [`adios_model_image_size`]). Writes `B×d` floats.
 */
enum AdiosStatus adios_extract_features(const struct AdiosModel *model,
                                        const float *images,
                                        uintptr_t batch,
                                        float *out,
                                        uintptr_t out_len);

/**
 * Soft occlusion masks, `B×N×S×S`, of `batch` images laid out as for
 * [`adios_extract_features`].
 */
enum AdiosStatus adios_generate_masks(const struct AdiosModel *model,
                                      const float *images,
                                      uintptr_t batch,
                                      float *out,
                                      uintptr_t out_len);

/**
 * Parses and validates a JSON configuration; "{}" gives the defaults.
 */
enum AdiosStatus adios_config_from_json(const char *json, struct AdiosConfig **out);

void adios_config_free(struct AdiosConfig *config);

/**
 * Trains with `config`, writing metrics and checkpoints under `out_dir`.
 */
enum AdiosStatus adios_train(const struct AdiosConfig *config, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADIOS_H */
