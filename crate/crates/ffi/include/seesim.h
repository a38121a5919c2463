#ifndef SEESIM_H
#define SEESIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum SeeStatus {
  SEE_STATUS_OK = 0,
  SEE_STATUS_NULL_POINTER = 1,
  SEE_STATUS_INVALID_ARGUMENT = 2,
  SEE_STATUS_CONFIG = 3,
  SEE_STATUS_SOLVER = 4,
  SEE_STATUS_LOCKED_DIRECTION = 5,
  SEE_STATUS_PANIC = 6,
} SeeStatus;

// Opaque simulator instance.
typedef struct SeeHandle SeeHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Valid until the next call.
const char *see_last_error(void);

// Creates a simulator from a TOML configuration (`NULL` for defaults).
//
// # Safety
// `config_toml` must be null or a valid NUL-terminated string; `out` must be writable.
enum SeeStatus see_new(const char *config_toml, struct SeeHandle **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `h` must come from [`see_new`] and not be used afterwards.
void see_free(struct SeeHandle *h);

// Returns the simulator to the pre-filled (zero injected volume) state.
//
// # Safety
// `h` must be a live handle.
enum SeeStatus see_reset(struct SeeHandle *h);

// Number of actuators.
//
// # Safety
// `h` must be a live handle or null (returns 0).
size_t see_actuator_count(const struct SeeHandle *h);

// Moves quasi-statically from the current state to absolute injected volumes [m³].
//
// # Safety
// `h` must be a live handle; `volumes` must point to `n` doubles.
enum SeeStatus see_set_volumes(struct SeeHandle *h, const double *volumes, size_t n);

// Advances one control period under an open-loop tip velocity command.
//
// `vz` [m/s] along the probe axis, `wx`, `wy` [rad/s]. Writes the actuator
// saturation flags (1 saturated) to `saturated` when it is not null.
//
// # Safety
// `h` must be a live handle; `saturated` null or writable for `n` bytes.
enum SeeStatus see_step(struct SeeHandle *h,
                        double vz,
                        double wx,
                        double wy,
                        uint8_t *saturated,
                        size_t n);

// Tip position [m] and rotation vector [rad] relative to the pre-filled state.
//
// # Safety
// `h` must be a live handle; both outputs must hold 3 doubles.
enum SeeStatus see_tip_pose(const struct SeeHandle *h, double *position, double *rotation);

// Injected volumes [m³].
//
// # Safety
// `h` must be a live handle; `out` must hold `n` doubles.
enum SeeStatus see_volumes(const struct SeeHandle *h, double *out, size_t n);

// Tip stiffness [N/m] along a direction with the actuator volumes held.
//
// Returns `LockedDirection` when the volume constraints forbid motion along it.
//
// # Safety
// `h` must be a live handle; `direction` holds 3 doubles; `out` is writable.
enum SeeStatus see_tip_stiffness(const struct SeeHandle *h, const double *direction, double *out);

// Deflections `F/K` [m] for the axial and transversal design loads.
//
// # Safety
// Outputs must be writable.
enum SeeStatus see_force_deflection(double k_axial,
                                    double k_transversal,
                                    double normal_force,
                                    double tangential_force,
                                    double *axial,
                                    double *transversal);

// Series combination `k1·k2/(k1+k2)` [N/m].
//
// # Safety
// `out` must be writable.
enum SeeStatus see_serial_stiffness(double k1, double k2, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEESIM_H */
