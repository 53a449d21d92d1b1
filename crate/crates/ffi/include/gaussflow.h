#ifndef GAUSSFLOW_H
#define GAUSSFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Positive error values match the `gaussflow` process exit codes.
typedef enum GfStatus {
  GF_STATUS_OK = 0,
  GF_STATUS_FAILED = 1,
  GF_STATUS_INVALID_ARGUMENT = 2,
  GF_STATUS_CONVEXITY_LOST = 3,
  GF_STATUS_OUT_OF_DOMAIN = 4,
  GF_STATUS_STALLED = 5,
  GF_STATUS_NULL_POINTER = 6,
  GF_STATUS_BUFFER_TOO_SMALL = 7,
  GF_STATUS_PANIC = 8,
} GfStatus;

// Support function sampled on the direction grid.
typedef struct GfField GfField;

// Unnormalized flow state together with its configuration.
typedef struct GfFlow GfFlow;

// Volume-normalized flow state together with its configuration.
typedef struct GfNormalized GfNormalized;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gf_version(void);

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `cap`). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or valid for `cap` bytes.
size_t gf_last_error_message(char *buf, size_t cap);

// Field from `len` samples with profile center `(cx, cy)`; `n` is 1 or 2.
//
// # Safety
// `values` must point to `len` doubles; `out` must be writable.
enum GfStatus gf_field_new(size_t n,
                           size_t len,
                           const double *values,
                           double cx,
                           double cy,
                           struct GfField **out);

// Ball of `radius` about the origin.
//
// # Safety
// `out` must be writable.
enum GfStatus gf_field_ball(size_t n, size_t len, double radius, struct GfField **out);

// Ellipse (n = 1) or spheroid (n = 2) with semi-axes `a` (first axis) and `b`.
//
// # Safety
// `out` must be writable.
enum GfStatus gf_field_ellipse(size_t n, size_t len, double a, double b, struct GfField **out);

// # Safety
// `field` must be null or a pointer obtained from this library, not yet freed.
void gf_field_free(struct GfField *field);

// Number of grid samples, or 0 for a null handle.
//
// # Safety
// `field` must be null or a live handle.
size_t gf_field_len(const struct GfField *field);

// Copies the samples into `out`, which must hold at least `cap` doubles.
//
// # Safety
// `field` must be a live handle and `out` valid for `cap` doubles.
enum GfStatus gf_field_values(const struct GfField *field, double *out, size_t cap);

// Enclosed volume (area for n = 1).
//
// # Safety
// `field` must be a live handle and `out` writable.
enum GfStatus gf_field_volume(const struct GfField *field, double *out);

// Entropy point `z` (two coordinates) and entropy value for exponent `alpha`.
//
// # Safety
// `field` must be a live handle; `z_out` must hold two doubles; `value_out`
// must be writable.
enum GfStatus gf_entropy_point(const struct GfField *field,
                               double alpha,
                               double *z_out,
                               double *value_out);

// Extinction time of a geodesic sphere of radius `rho0` (`kappa` in {-1, 0, 1}).
//
// # Safety
// `out` must be writable.
enum GfStatus gf_sphere_extinction_time(int kappa,
                                        size_t n,
                                        double alpha,
                                        double rho0,
                                        double *out);

// Flows `field` until extinction; writes the extinction time and the limit
// point (`n + 1` ambient coordinates into `point_out`, which must hold 3).
//
// # Safety
// `field` must be a live handle; `t_star_out` writable; `point_out` null or
// valid for three doubles.
enum GfStatus gf_run_to_extinction(const struct GfField *field,
                                   double alpha,
                                   int kappa,
                                   double *t_star_out,
                                   double *point_out);

// Starts an unnormalized flow from a copy of `field`. A `cfl_safety` of 0
// selects the default.
//
// # Safety
// `field` must be a live handle and `out` writable.
enum GfStatus gf_flow_new(const struct GfField *field,
                          double alpha,
                          int kappa,
                          double cfl_safety,
                          struct GfFlow **out);

// # Safety
// `flow` must be null or a live handle.
void gf_flow_free(struct GfFlow *flow);

// One explicit step at the stable step size. The state is left unchanged on error.
//
// # Safety
// `flow` must be a live handle.
enum GfStatus gf_flow_step(struct GfFlow *flow);

// Advances until time `tau` is reached exactly.
//
// # Safety
// `flow` must be a live handle.
enum GfStatus gf_flow_advance_to(struct GfFlow *flow, double tau);

// Current time, inradius and circumradius; any output may be null.
//
// # Safety
// `flow` must be a live handle; non-null outputs must be writable.
enum GfStatus gf_flow_status(const struct GfFlow *flow,
                             double *tau_out,
                             double *r_minus_out,
                             double *r_plus_out);

// Copy of the current support function.
//
// # Safety
// `flow` must be a live handle and `out` writable.
enum GfStatus gf_flow_field(const struct GfFlow *flow, struct GfField **out);

// Normalized flow started from `field` rescaled to unit-ball volume.
//
// # Safety
// `field` must be a live handle and `out` writable.
enum GfStatus gf_normalized_new(const struct GfField *field,
                                double alpha,
                                int kappa,
                                struct GfNormalized **out);

// # Safety
// `flow` must be null or a live handle.
void gf_normalized_free(struct GfNormalized *flow);

// One step of the normalized flow.
//
// # Safety
// `flow` must be a live handle.
enum GfStatus gf_normalized_step(struct GfNormalized *flow);

// Normalized time, roundness and soliton residual; any output may be null.
//
// # Safety
// `flow` must be a live handle; non-null outputs must be writable.
enum GfStatus gf_normalized_status(const struct GfNormalized *flow,
                                   double *t_out,
                                   double *roundness_out,
                                   double *residual_out);

// Runs a `gaussflow` command line (without the program name) and returns its
// process exit code.
//
// # Safety
// `argv` must point to `argc` NUL-terminated strings.
int gf_run_command(size_t argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAUSSFLOW_H */
