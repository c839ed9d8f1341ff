#ifndef IFOP_H
#define IFOP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Call outcome. Zero is success; anything else leaves a message for
// `ifop_last_error`.
typedef enum IfopStatus {
  IFOP_STATUS_OK = 0,
  IFOP_STATUS_NULL_ARGUMENT = 1,
  IFOP_STATUS_INVALID_ARGUMENT = 2,
  IFOP_STATUS_INVALID_GEOMETRY = 3,
  IFOP_STATUS_UNSUPPORTED = 4,
  IFOP_STATUS_NUMERIC_FAILURE = 5,
  IFOP_STATUS_FORMAT_ERROR = 6,
  IFOP_STATUS_IO_ERROR = 7,
  IFOP_STATUS_PANIC = 8,
} IfopStatus;

typedef struct IfopCurve IfopCurve;

// Multi-channel grid samples, row-major per channel, x fastest.
typedef struct IfopField IfopField;

typedef struct IfopGeometry IfopGeometry;

typedef struct IfopModel IfopModel;

typedef struct IfopProblem IfopProblem;

// Per-cell exponential expansion, evaluable at arbitrary points.
typedef struct IfopTfpm IfopTfpm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the message of the most recent failure on this thread into
// `buf` (NUL-terminated, truncated to `cap` bytes) and returns the full
// message length in bytes. A null or empty buffer only measures.
uintptr_t ifop_last_error(char *buf, uintptr_t cap);

// Library version as a static NUL-terminated string.
const char *ifop_version(void);

enum IfopStatus ifop_curve_circle(double cx, double cy, double radius, struct IfopCurve **out);

enum IfopStatus ifop_curve_ellipse(double cx,
                                   double cy,
                                   double semi_x,
                                   double semi_y,
                                   struct IfopCurve **out);

enum IfopStatus ifop_curve_square(double cx, double cy, double side, struct IfopCurve **out);

// Star-shaped curve from `n_radii` polar radius samples at evenly
// spaced angles.
enum IfopStatus ifop_curve_star(double cx,
                                double cy,
                                const double *radii,
                                uintptr_t n_radii,
                                struct IfopCurve **out);

void ifop_curve_free(struct IfopCurve *curve);

// Signed distance to the curve, negative inside.
enum IfopStatus ifop_curve_sdf(const struct IfopCurve *curve,
                               double x,
                               double y,
                               double *out_value);

// Closest point on the curve.
enum IfopStatus ifop_curve_project(const struct IfopCurve *curve,
                                   double x,
                                   double y,
                                   double *out_x,
                                   double *out_y);

// Canvas-bounded geometry over `[s,t]^d` holding `n_curves` disjoint
// interfaces (cloned; the handles stay owned by the caller). The
// geometry is validated before it is returned.
enum IfopStatus ifop_geometry_new(double s,
                                  double t,
                                  uint32_t d,
                                  const struct IfopCurve *const *curves,
                                  uintptr_t n_curves,
                                  struct IfopGeometry **out);

void ifop_geometry_free(struct IfopGeometry *geometry);

// Region label at a point: 0 outside the domain, 1 between the outer
// boundary and all interfaces, `i + 2` inside interface `i`.
enum IfopStatus ifop_geometry_label(const struct IfopGeometry *geometry,
                                    double x,
                                    double y,
                                    double z,
                                    uint32_t *out_label);

// Signed distance to the outer domain boundary, negative inside.
enum IfopStatus ifop_geometry_outer_sdf(const struct IfopGeometry *geometry,
                                        double x,
                                        double y,
                                        double z,
                                        double *out_value);

// Constant-coefficient interface problem: `-div(a grad u) + b u = f`
// with boundary value `g` and one `(alpha, beta)` jump pair per
// interface. The geometry is cloned.
enum IfopStatus ifop_problem_new(const struct IfopGeometry *geometry,
                                 double a,
                                 double b,
                                 double f,
                                 double g,
                                 const double *alpha,
                                 const double *beta,
                                 uintptr_t n_jumps,
                                 struct IfopProblem **out);

void ifop_problem_free(struct IfopProblem *problem);

// Finite-difference reference solve on an `n`-point-per-axis grid over
// the problem's canvas; the solution is zero outside the domain.
enum IfopStatus ifop_solve_reference(const struct IfopProblem *problem,
                                     uintptr_t n,
                                     struct IfopField **out);

// Exponential-basis solve; the result evaluates anywhere on the canvas.
enum IfopStatus ifop_solve_tfpm(const struct IfopProblem *problem,
                                uintptr_t n,
                                struct IfopTfpm **out);

void ifop_tfpm_free(struct IfopTfpm *field);

// Evaluates the expansion at one point.
enum IfopStatus ifop_tfpm_eval(const struct IfopTfpm *field,
                               double x,
                               double y,
                               double z,
                               double *out_value);

// Samples the expansion on an `n`-point-per-axis grid over its canvas
// into `out_values` (`n^d` values, x fastest).
enum IfopStatus ifop_tfpm_sample(const struct IfopTfpm *field,
                                 uintptr_t n,
                                 double *out_values,
                                 uintptr_t len);

// Builds a field from raw channel data: `channels * n^d` values,
// channel-major, x fastest within a channel.
enum IfopStatus ifop_field_new(double s,
                               double t,
                               uintptr_t n,
                               uint32_t d,
                               uintptr_t channels,
                               const double *values,
                               uintptr_t len,
                               struct IfopField **out);

void ifop_field_free(struct IfopField *field);

enum IfopStatus ifop_field_channels(const struct IfopField *field, uintptr_t *out_channels);

// Grid of the field: canvas bounds, points per axis, dimension.
enum IfopStatus ifop_field_grid(const struct IfopField *field,
                                double *out_s,
                                double *out_t,
                                uintptr_t *out_n,
                                uint32_t *out_d);

// Copies one channel (`n^d` values, x fastest) into `out_values`.
enum IfopStatus ifop_field_copy(const struct IfopField *field,
                                uintptr_t channel,
                                double *out_values,
                                uintptr_t len);

// Integer region labels sampled on an `n`-point grid, as one channel.
enum IfopStatus ifop_encode_labels(const struct IfopGeometry *geometry,
                                   uintptr_t n,
                                   struct IfopField **out);

// Signed distances sampled on an `n`-point grid: channel 0 is the
// outer boundary, then one channel per interface.
enum IfopStatus ifop_encode_sdf(const struct IfopGeometry *geometry,
                                uintptr_t n,
                                struct IfopField **out);

// Loads a model checkpoint from a NUL-terminated UTF-8 path.
enum IfopStatus ifop_model_load(const char *path, struct IfopModel **out);

void ifop_model_free(struct IfopModel *model);

// Input channel count the model expects.
enum IfopStatus ifop_model_in_channels(const struct IfopModel *model, uintptr_t *out_channels);

// Runs the model on an input field and returns the prediction as a new
// field on the same grid.
enum IfopStatus ifop_model_forward(const struct IfopModel *model,
                                   const struct IfopField *input,
                                   struct IfopField **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IFOP_H */
