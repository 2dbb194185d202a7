#ifndef HYBRID_RAD_H
#define HYBRID_RAD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum HrStatus {
  HR_STATUS_OK = 0,
  HR_STATUS_NULL_POINTER = 1,
  HR_STATUS_INVALID_ARGUMENT = 2,
  HR_STATUS_IO = 3,
  HR_STATUS_PARSE = 4,
  HR_STATUS_CONFIG = 5,
  HR_STATUS_GEOMETRY = 6,
  HR_STATUS_NUMERICAL = 7,
  HR_STATUS_PANIC = 8,
} HrStatus;

// Opaque solver handle.
typedef struct HrSolver HrSolver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t hr_last_error_message(char *buf, uintptr_t len);

// Largest stable time step `h / (c sqrt 3)`.
double hr_cfl_timestep(double h, double c);

// Signal-to-noise ratio in dB of `pred` against `truth`, both of length `n`.
//
// # Safety
// `pred` and `truth` must point to `n` readable doubles; `out` to one
// writable double.
enum HrStatus hr_snr(const double *pred, const double *truth, uintptr_t n, double *out);

// Create a solver from a JSON scene file. Listeners of the scene are
// registered in order.
//
// # Safety
// `scene_path` must be a NUL-terminated string; `out` must point to a
// writable handle slot.
enum HrStatus hr_solver_from_scene(const char *scene_path, struct HrSolver **out);

// Advance `steps` steps.
//
// # Safety
// `solver` must be a live handle.
enum HrStatus hr_solver_step(struct HrSolver *solver, uintptr_t steps);

// Time step in seconds, or NaN for a null handle.
//
// # Safety
// `solver` must be null or a live handle.
double hr_solver_tau(const struct HrSolver *solver);

// Number of boundary elements after refinement (0 for a null handle).
//
// # Safety
// `solver` must be null or a live handle.
uintptr_t hr_solver_num_elements(const struct HrSolver *solver);

// Steps completed so far (0 for a null handle).
//
// # Safety
// `solver` must be null or a live handle.
uintptr_t hr_solver_steps(const struct HrSolver *solver);

// Pressure at `(x, y, z)` for the last completed step.
//
// # Safety
// `solver` must be a live handle; `out` must point to a writable double.
enum HrStatus hr_solver_listener_pressure(struct HrSolver *solver,
                                          double x,
                                          double y,
                                          double z,
                                          double *out);

// Copy the recorded series of listener `index` into `buf` (up to `len`
// samples). `written` receives the number of samples copied.
//
// # Safety
// `solver` must be a live handle; `buf` must hold `len` doubles; `written`
// must point to a writable `size_t`.
enum HrStatus hr_solver_listener_samples(const struct HrSolver *solver,
                                         uintptr_t index,
                                         double *buf,
                                         uintptr_t len,
                                         uintptr_t *written);

// Copy the current Dirichlet values (one per element) into `buf`, which
// must hold exactly `hr_solver_num_elements` doubles.
//
// # Safety
// `solver` must be a live handle; `buf` must hold `len` doubles.
enum HrStatus hr_solver_dirichlet(const struct HrSolver *solver, double *buf, uintptr_t len);

// Release a solver. Null is ignored.
//
// # Safety
// `solver` must be null or a handle from `hr_solver_from_scene` that has
// not been freed.
void hr_solver_free(struct HrSolver *solver);

// Monopole accuracy test on an icosphere with `subdivisions` levels.
// Writes the aggregate SNR in dB to `out_snr`.
//
// # Safety
// `out_snr` must point to a writable double.
enum HrStatus hr_monopole_test(uintptr_t subdivisions,
                               uintptr_t resolution,
                               double frequency,
                               double *out_snr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYBRID_RAD_H */
