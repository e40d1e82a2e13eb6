#ifndef CVP_H
#define CVP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CvpStatus {
  CVP_STATUS_OK = 0,
  CVP_STATUS_NULL_POINTER = 1,
  CVP_STATUS_INVALID_ARGUMENT = 2,
  CVP_STATUS_PARSE = 3,
  CVP_STATUS_NUMERICAL = 4,
  CVP_STATUS_PANIC = 5,
} CvpStatus;

/**
 * Opaque instance handle.
 */
typedef struct CvpInstance CvpInstance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 */
const char *cvp_last_error_message(void);

/**
 * Parses and validates an instance from a JSON string.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CvpStatus cvp_instance_from_json(const char *json, struct CvpInstance **out);

/**
 * Reads an instance file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CvpStatus cvp_instance_load(const char *path, struct CvpInstance **out);

/**
 * Regular lattice with unit weights and the isotropic bump kernel.
 *
 * # Safety
 * `extent` must point to `dim` entries, `periodic_axes` to `n_periodic`
 * entries (it may be null when `n_periodic` is 0), `out` must be valid.
 */
enum CvpStatus cvp_instance_generate_lattice(size_t dim,
                                             const size_t *extent,
                                             double spacing,
                                             double range,
                                             double amplitude,
                                             const size_t *periodic_axes,
                                             size_t n_periodic,
                                             double s_param,
                                             struct CvpInstance **out);

/**
 * Serializes an instance; release the string with [`cvp_string_free`].
 *
 * # Safety
 * `inst` must be a live handle and `out` a valid pointer.
 */
enum CvpStatus cvp_instance_to_json(const struct CvpInstance *inst, char **out);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void cvp_string_free(char *s);

/**
 * # Safety
 * `inst` must come from this library or be null; it must not be used afterwards.
 */
void cvp_instance_free(struct CvpInstance *inst);

/**
 * Number of points and of coefficients per jet (`1 + dim`).
 *
 * # Safety
 * `inst` must be a live handle; output pointers may be null.
 */
enum CvpStatus cvp_instance_shape(const struct CvpInstance *inst, size_t *n_points, size_t *block);

/**
 * New instance with critical weights.
 *
 * # Safety
 * `inst` must be a live handle and `out` a valid pointer.
 */
enum CvpStatus cvp_critical_weights(const struct CvpInstance *inst, struct CvpInstance **out);

/**
 * # Safety
 * `inst` must be a live handle and `out` a valid pointer.
 */
enum CvpStatus cvp_eval_action(const struct CvpInstance *inst, double *out);

/**
 * Writes `ℓ` (`n_points` values) and, if `grad` is not null, `Dℓ` row by row
 * (`n_points * dim` values).
 *
 * # Safety
 * The buffers must have the stated lengths.
 */
enum CvpStatus cvp_eval_ell(const struct CvpInstance *inst, double *ell, double *grad);

/**
 * `out = Δv` for a flat jet `v` of `len = n_points * block` coefficients.
 *
 * # Safety
 * `v` and `out` must hold `len` values.
 */
enum CvpStatus cvp_apply_delta(const struct CvpInstance *inst,
                               const double *v,
                               size_t len,
                               double *out);

/**
 * Restricted Euler-Lagrange check with scalars and all translations at every point.
 *
 * # Safety
 * `inst` must be a live handle; `passed` and `worst` valid pointers.
 */
enum CvpStatus cvp_check_el(const struct CvpInstance *inst,
                            double tol,
                            bool *passed,
                            double *worst);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CVP_H */
