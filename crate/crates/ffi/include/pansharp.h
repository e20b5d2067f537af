/* C interface for the pansharp fusion library. */

#ifndef PANSHARP_H
#define PANSHARP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of rows [`ps_ablate`] writes: four methods, with and without the
// down-sampling enhancement.
#define PS_ABLATION_ROWS 8

// Fusion algorithm selector.
typedef enum PsMethod {
  PsMethod_Pcs = 0,
  PsMethod_Pmra = 1,
  PsMethod_Gsa = 2,
  PsMethod_MtfGlpCbd = 3,
} PsMethod;

// Call outcome. Mirrors the CLI exit classes, plus pointer hygiene codes.
typedef enum PsStatus {
  PsStatus_Ok = 0,
  PsStatus_Usage = 1,
  PsStatus_Data = 2,
  PsStatus_Numeric = 3,
  PsStatus_NullPointer = 4,
  PsStatus_Panic = 5,
} PsStatus;

// Up-sampler selector.
typedef enum PsUpsampler {
  PsUpsampler_Replicate = 0,
  PsUpsampler_Bilinear = 1,
} PsUpsampler;

// Opaque multiband raster handle.
typedef struct PsCube PsCube;

// The five residuals of one fusion run. `rmse` is meaningful only when
// `has_rmse` is true (a ground truth was supplied).
typedef struct PsMetricReport {
  double consistent_rmse;
  double spatial_rmse;
  double spectral_rmse;
  double inverse_ability;
  double rmse;
  bool has_rmse;
} PsMetricReport;

// One row of the method-by-enhancement ablation grid.
typedef struct PsAblationRow {
  enum PsMethod method;
  bool dse;
  struct PsMetricReport metrics;
} PsAblationRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *ps_last_error(void);

// Builds a cube from planar samples (band-contiguous, row-major pixels).
// `data` must hold `height * width * bands` doubles.
//
// # Safety
// `data` must point to at least `height * width * bands` readable doubles
// and `out` must be a valid destination for one pointer.
enum PsStatus ps_cube_new(size_t height,
                          size_t width,
                          size_t bands,
                          const double *data,
                          struct PsCube **out);

// Releases a cube handle. NULL is a no-op.
//
// # Safety
// `cube` must be a handle from this library that has not been freed.
void ps_cube_free(struct PsCube *cube);

// Reads a sidecar raster from disk.
//
// # Safety
// `path` must be a NUL-terminated string, `out` a valid destination.
enum PsStatus ps_cube_read(const char *path, struct PsCube **out);

// Writes a cube to disk. `dtype` is one of `f32`, `f64`, `u8`, `u16`;
// `clamp` saturates integer overflow instead of failing.
//
// # Safety
// `cube` must be a live handle, `path`/`dtype` NUL-terminated strings.
enum PsStatus ps_cube_write(const struct PsCube *cube,
                            const char *path,
                            const char *dtype,
                            bool clamp);

// # Safety
// `cube` must be a live handle.
size_t ps_cube_height(const struct PsCube *cube);

// # Safety
// `cube` must be a live handle.
size_t ps_cube_width(const struct PsCube *cube);

// # Safety
// `cube` must be a live handle.
size_t ps_cube_bands(const struct PsCube *cube);

// Copies the planar samples into `out`, which must hold `len` doubles with
// `len = height * width * bands`.
//
// # Safety
// `cube` must be a live handle and `out` writable for `len` doubles.
enum PsStatus ps_cube_copy_data(const struct PsCube *cube, double *out, size_t len);

// Degrades a reference cube into an equal-weight pan and a block-mean ms
// at the given scale.
//
// # Safety
// `truth` must be a live handle; `out_pan`/`out_ms` valid destinations.
enum PsStatus ps_synth_pair(const struct PsCube *truth,
                            size_t scale,
                            struct PsCube **out_pan,
                            struct PsCube **out_ms);

// Fuses a (pan, ms) pair. `report` may be NULL when only the cube is
// wanted; `out_fused` may be NULL when only the metrics are wanted.
//
// # Safety
// `pan`/`ms` must be live handles; non-NULL out pointers must be valid.
enum PsStatus ps_fuse(const struct PsCube *pan,
                      const struct PsCube *ms,
                      enum PsMethod method,
                      bool dse,
                      enum PsUpsampler upsampler,
                      double box_lower,
                      double box_upper,
                      struct PsCube **out_fused,
                      struct PsMetricReport *report);

// Estimates the spectral response; writes one gain per ms band into `out`,
// which must hold exactly `bands(ms)` doubles.
//
// # Safety
// `pan`/`ms` must be live handles and `out` writable for `len` doubles.
enum PsStatus ps_estimate_response(const struct PsCube *pan,
                                   const struct PsCube *ms,
                                   bool dse,
                                   double *out,
                                   size_t len);

// Runs the full method-by-enhancement grid; writes [`PS_ABLATION_ROWS`]
// rows into `rows`. `truth` may be NULL (rmse columns flagged absent).
//
// # Safety
// `pan`/`ms` (and `truth` when non-NULL) must be live handles; `rows` must
// be writable for `rows_len` entries.
enum PsStatus ps_ablate(const struct PsCube *pan,
                        const struct PsCube *ms,
                        const struct PsCube *truth,
                        enum PsUpsampler upsampler,
                        double box_lower,
                        double box_upper,
                        struct PsAblationRow *rows,
                        size_t rows_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PANSHARP_H */
