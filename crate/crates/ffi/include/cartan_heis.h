#ifndef CARTAN_HEIS_H
#define CARTAN_HEIS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Verticality class of a sampled submanifold.
 */
typedef enum ChClass {
  CH_CLASS_VERTICAL = 0,
  CH_CLASS_COMPLETELY_NON_VERTICAL = 1,
  CH_CLASS_MIXED = 2,
} ChClass;

/**
 * Derivative backend.
 */
typedef enum ChMode {
  CH_MODE_AD = 0,
  CH_MODE_FD = 1,
} ChMode;

/**
 * Result codes. Zero is success.
 */
typedef enum ChStatus {
  CH_STATUS_OK = 0,
  CH_STATUS_NULL_POINTER = 1,
  CH_STATUS_INVALID_UTF8 = 2,
  CH_STATUS_BUFFER_TOO_SMALL = 3,
  CH_STATUS_PANIC = 4,
  CH_STATUS_SYNTAX = 10,
  CH_STATUS_UNDECLARED_PARAMETER = 11,
  CH_STATUS_DIMENSION_MISMATCH = 12,
  CH_STATUS_UNKNOWN_BUILTIN = 13,
  CH_STATUS_BAD_PARAMETERS = 14,
  CH_STATUS_INVALID_ARGUMENT = 15,
  CH_STATUS_IO = 16,
  CH_STATUS_DOMAIN = 20,
  CH_STATUS_OUT_OF_CHART = 21,
  CH_STATUS_SHAPE = 22,
  CH_STATUS_NON_HORIZONTAL = 23,
  CH_STATUS_BASE_MISMATCH = 24,
  CH_STATUS_INVALID_FRAME = 25,
  CH_STATUS_LINEAR_SOLVE_FAILURE = 26,
  CH_STATUS_NOT_IMMERSED = 30,
  CH_STATUS_SINGULAR_POINT = 31,
  CH_STATUS_NOT_CR_INVARIANT = 32,
  CH_STATUS_ILL_CONDITIONED_COFRAME = 33,
  CH_STATUS_DEGENERATE_POINT = 34,
  CH_STATUS_WRONG_CLASS = 40,
  CH_STATUS_NOT_FLAT = 41,
  CH_STATUS_NOT_TORSION_FREE = 42,
  CH_STATUS_INTEGRABILITY_FAILURE = 43,
  CH_STATUS_PROJECTION_DRIFT = 44,
} ChStatus;

/**
 * Invariants and Darboux frames sampled on a grid.
 */
typedef struct ChField ChField;

/**
 * A parsed or builtin submanifold.
 */
typedef struct ChSurface ChSurface;

/**
 * Largest residuals over the grid. Checks that do not apply are NaN.
 */
typedef struct ChSummary {
  double min_nu;
  double max_nu;
  double max_h;
  double max_torsion;
  double scalar_min;
  double scalar_max;
  double tanaka_webster;
  double restriction[5];
  double gauss;
  double curvature_torsion;
  double nu_recovery;
  double torsion_link;
} ChSummary;

typedef struct ChSphereFit {
  double radius;
  double center_residual;
  double radius_residual;
} ChSphereFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ch_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL, or 0
 * when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ch_last_error_message(char *buf, size_t len);

/**
 * Source location of the last parse error (1-based), or 0 for both when the
 * error has none.
 *
 * # Safety
 * `line` and `col` must be null or valid for writes.
 */
void ch_last_error_location(size_t *line, size_t *col);

/**
 * Parses surface source text.
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out` valid for writes.
 */
enum ChStatus ch_surface_parse(const char *source, struct ChSurface **out);

/**
 * A builtin surface from a spec such as `sphere(2, 1)`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` valid for writes.
 */
enum ChStatus ch_surface_builtin(const char *spec, struct ChSurface **out);

/**
 * # Safety
 * `s` must be null or a handle from this library not yet freed.
 */
void ch_surface_free(struct ChSurface *s);

/**
 * Heisenberg dimension `n`, CR dimension `m` and chart dimension `2m + 1`.
 *
 * # Safety
 * `s` must be a live handle; outputs must be valid for writes.
 */
enum ChStatus ch_surface_dims(const struct ChSurface *s, size_t *n, size_t *m, size_t *dim);

/**
 * Evaluates the immersion at chart point `u` (length `2m + 1`) into `x`
 * (length `2n + 1`).
 *
 * # Safety
 * `u` and `x` must point to arrays of the stated lengths.
 */
enum ChStatus ch_surface_eval(const struct ChSurface *s, const double *u, double *x);

/**
 * Samples invariants on a grid over the chart with `counts[i]` points per axis.
 * `ncounts` is 1 (same count on every axis) or the chart dimension.
 *
 * # Safety
 * `counts` must point to `ncounts` values and `out` be valid for writes.
 */
enum ChStatus ch_extract(const struct ChSurface *s,
                         const size_t *counts,
                         size_t ncounts,
                         enum ChMode mode,
                         struct ChField **out);

/**
 * # Safety
 * `f` must be null or a handle from this library not yet freed.
 */
void ch_field_free(struct ChField *f);

/**
 * Number of grid points.
 *
 * # Safety
 * `f` must be a live handle.
 */
size_t ch_field_len(const struct ChField *f);

/**
 * Writes `|ν|` at every grid point (flat grid order, last axis fastest).
 *
 * # Safety
 * `out` must point to `len` writable values.
 */
enum ChStatus ch_field_nu(const struct ChField *f, double *out, size_t len);

/**
 * Writes the Webster scalar curvature at every grid point.
 *
 * # Safety
 * `out` must point to `len` writable values.
 */
enum ChStatus ch_field_scalar_curvature(const struct ChField *f, double *out, size_t len);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum ChStatus ch_field_summary(const struct ChField *f, struct ChSummary *out);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum ChStatus ch_field_classify(const struct ChField *f, double tol, enum ChClass *out);

/**
 * Fits a Heisenberg sphere to a torsion-free completely non-vertical
 * hypersurface. The center `(x, y, t)` is written to `center` (`2n + 1` values).
 *
 * # Safety
 * `center` must point to `center_len` writable values and `out` be valid for writes.
 */
enum ChStatus ch_field_sphere_fit(const struct ChField *f,
                                  double tol,
                                  double *center,
                                  size_t center_len,
                                  struct ChSphereFit *out);

/**
 * Splits a row-major `(2n+2)×(2n+2)` PSH(n) matrix into its translation
 * (`2n + 1` values) and rotation (row-major `2n × 2n`).
 *
 * # Safety
 * Pointers must reference arrays of the stated sizes.
 */
enum ChStatus ch_psh_decompose(size_t n,
                               const double *matrix,
                               double tol,
                               double *translation,
                               double *rotation);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARTAN_HEIS_H */
