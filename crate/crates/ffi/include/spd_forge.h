#ifndef SPD_FORGE_H
#define SPD_FORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum SpdfStatus {
  SPDF_STATUS_OK = 0,
  SPDF_STATUS_NULL_POINTER = 1,
  SPDF_STATUS_INVALID_ARGUMENT = 2,
  SPDF_STATUS_DIMENSION_MISMATCH = 3,
  SPDF_STATUS_GRID_MISMATCH = 4,
  // Degenerate spectrum, prediction or correlation.
  SPDF_STATUS_NUMERIC = 5,
  SPDF_STATUS_IO = 6,
  SPDF_STATUS_PARSE = 7,
  SPDF_STATUS_BUFFER_TOO_SMALL = 8,
  SPDF_STATUS_PANIC = 9,
} SpdfStatus;

// A linear RGB image.
typedef struct SpdfImage SpdfImage;

// A trained regressor and the grid its outputs live on.
typedef struct SpdfModel SpdfModel;

// A scene with its precomputed render plan.
typedef struct SpdfScene SpdfScene;

// A spectrum on a uniform grid.
typedef struct SpdfSpd SpdfSpd;

// Set-level or pairwise spectral error metrics.
typedef struct SpdfMetrics {
  double mae;
  double rmse;
  // NaN when the correlation is undefined for the pair.
  double pearson;
} SpdfMetrics;

// Grating parameters passed by value.
typedef struct SpdfGrating {
  double period_a_nm;
  double depth_h0_nm;
  double reflectivity;
  uint32_t max_order;
} SpdfGrating;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *spdf_version(void);

// Message for the last failed call on this thread, or NULL if none. The
// pointer stays valid until the next failing call on the same thread.
const char *spdf_last_error(void);

// Copies `n_bins` power samples into a new spectrum.
//
// # Safety
// `power` must point to `n_bins` doubles; `out` must be writable.
enum SpdfStatus spdf_spd_new(double lambda_min,
                             double lambda_max,
                             size_t n_bins,
                             const double *power,
                             struct SpdfSpd **out);

// Draws one synthetic spectrum on the default grid. `config_json` may be
// NULL for the default generator settings.
//
// # Safety
// `config_json` is NULL or a NUL-terminated string; `out` must be writable.
enum SpdfStatus spdf_spd_generate(const char *config_json, uint64_t seed, struct SpdfSpd **out);

// # Safety
// `path` is a NUL-terminated string; `out` must be writable.
enum SpdfStatus spdf_spd_read_csv(const char *path, struct SpdfSpd **out);

// # Safety
// `spd` is a live handle; `path` is a NUL-terminated string.
enum SpdfStatus spdf_spd_write_csv(const struct SpdfSpd *spd, const char *path);

// Number of samples, or 0 for a NULL handle.
//
// # Safety
// `spd` is NULL or a live handle.
size_t spdf_spd_len(const struct SpdfSpd *spd);

// # Safety
// `spd` is a live handle; `out` points to `len` writable doubles.
enum SpdfStatus spdf_spd_copy_power(const struct SpdfSpd *spd, double *out, size_t len);

// Writes the grid's first and last wavelength.
//
// # Safety
// `spd` is a live handle; both outputs must be writable.
enum SpdfStatus spdf_spd_range(const struct SpdfSpd *spd, double *lambda_min, double *lambda_max);

// # Safety
// `spd` is NULL or a handle not yet freed.
void spdf_spd_free(struct SpdfSpd *spd);

// The default scene.
//
// # Safety
// `out` must be writable.
enum SpdfStatus spdf_scene_default(struct SpdfScene **out);

// Parses a scene from its JSON text.
//
// # Safety
// `json` is a NUL-terminated string; `out` must be writable.
enum SpdfStatus spdf_scene_from_json(const char *json, struct SpdfScene **out);

// # Safety
// `path` is a NUL-terminated string; `out` must be writable.
enum SpdfStatus spdf_scene_read(const char *path, struct SpdfScene **out);

// Length of the feature vector the scene produces, or 0 for NULL.
//
// # Safety
// `scene` is NULL or a live handle.
size_t spdf_scene_feature_len(const struct SpdfScene *scene);

// # Safety
// `scene` is NULL or a handle not yet freed.
void spdf_scene_free(struct SpdfScene *scene);

// Renders the masked disc image of `spd`. The render plan is cached on
// the scene per spectral grid, so a scene handle must not be used from two
// threads at once.
//
// # Safety
// `scene` and `spd` are live handles; `out` must be writable.
enum SpdfStatus spdf_render(struct SpdfScene *scene,
                            const struct SpdfSpd *spd,
                            struct SpdfImage **out);

// Radial colour features of `image` under `scene`'s binning.
//
// # Safety
// `scene` and `image` are live handles; `out` points to `len` doubles.
enum SpdfStatus spdf_features(const struct SpdfScene *scene,
                              const struct SpdfImage *image,
                              double *out,
                              size_t len);

// # Safety
// `image` is NULL or a live handle.
size_t spdf_image_width(const struct SpdfImage *image);

// # Safety
// `image` is NULL or a live handle.
size_t spdf_image_height(const struct SpdfImage *image);

// Copies interleaved RGB, row 0 at the top; needs `3 * width * height`.
//
// # Safety
// `image` is a live handle; `out` points to `len` doubles.
enum SpdfStatus spdf_image_copy_pixels(const struct SpdfImage *image, double *out, size_t len);

// # Safety
// `path` is a NUL-terminated string; `out` must be writable.
enum SpdfStatus spdf_image_read_pfm(const char *path, struct SpdfImage **out);

// # Safety
// `image` is a live handle; `path` is a NUL-terminated string.
enum SpdfStatus spdf_image_write_pfm(const struct SpdfImage *image, const char *path);

// # Safety
// `image` is NULL or a handle not yet freed.
void spdf_image_free(struct SpdfImage *image);

// Loads a JSON checkpoint file.
//
// # Safety
// `path` is a NUL-terminated string; `out` must be writable.
enum SpdfStatus spdf_model_read(const char *path, struct SpdfModel **out);

// Parses a checkpoint from its JSON text.
//
// # Safety
// `json` is a NUL-terminated string; `out` must be writable.
enum SpdfStatus spdf_model_from_json(const char *json, struct SpdfModel **out);

// # Safety
// `model` is NULL or a live handle.
size_t spdf_model_input_dim(const struct SpdfModel *model);

// # Safety
// `model` is NULL or a live handle.
size_t spdf_model_output_dim(const struct SpdfModel *model);

// Predicts a clamped, peak-normalized spectrum from `n` features.
//
// # Safety
// `model` is a live handle; `features` points to `n` doubles; `out` must
// be writable.
enum SpdfStatus spdf_model_predict(const struct SpdfModel *model,
                                   const double *features,
                                   size_t n,
                                   struct SpdfSpd **out);

// # Safety
// `model` is NULL or a handle not yet freed.
void spdf_model_free(struct SpdfModel *model);

// MAE, RMSE and Pearson between two spectra on the same grid. A constant
// spectrum yields a NaN `pearson` with status OK.
//
// # Safety
// `pred` and `truth` are live handles; `out` must be writable.
enum SpdfStatus spdf_metrics(const struct SpdfSpd *pred,
                             const struct SpdfSpd *truth,
                             struct SpdfMetrics *out);

// PSNR in dB; `+inf` for identical images.
//
// # Safety
// `a` and `b` are live handles; `out` must be writable.
enum SpdfStatus spdf_psnr(const struct SpdfImage *a,
                          const struct SpdfImage *b,
                          double peak,
                          double *out);

struct SpdfGrating spdf_grating_default(void);

// Efficiency of order `m` at `lambda_nm`.
//
// # Safety
// `out` must be writable.
enum SpdfStatus spdf_order_efficiency(int32_t m,
                                      double lambda_nm,
                                      struct SpdfGrating grating,
                                      double *out);

// Outgoing sine of order `m`. `*propagating` is set to 0 for an evanescent
// order, in which case `*sin_out` is left untouched.
//
// # Safety
// Both outputs must be writable.
enum SpdfStatus spdf_diffracted_sine(double sin_spec,
                                     int32_t m,
                                     double lambda_nm,
                                     struct SpdfGrating grating,
                                     double *sin_out,
                                     int32_t *propagating);

// Wavelength that order `m` sends from `sin_spec` to `sin_out`.
//
// # Safety
// `out` must be writable.
enum SpdfStatus spdf_wavelength_for_geometry(double sin_spec,
                                             double sin_out,
                                             int32_t m,
                                             struct SpdfGrating grating,
                                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPD_FORGE_H */
