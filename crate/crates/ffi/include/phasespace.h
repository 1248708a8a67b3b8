#ifndef PHASESPACE_H
#define PHASESPACE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_POINTER = 1,
  PS_STATUS_INVALID_ARGUMENT = 2,
  PS_STATUS_NOT_NORMALIZED = 3,
  PS_STATUS_NOT_CONVERGED = 4,
  PS_STATUS_IO = 5,
  PS_STATUS_BUFFER_TOO_SMALL = 6,
  PS_STATUS_PANIC = 7,
} PsStatus;

typedef struct PsGrid PsGrid;

typedef struct PsHamiltonian PsHamiltonian;

typedef struct PsWavefunction PsWavefunction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated)
// and returns the full message length in bytes, excluding the terminator.
// Passing a null `buf` only queries the length.
size_t ps_last_error_message(char *buf, size_t len);

// Static description of a status code.
const char *ps_status_string(enum PsStatus status);

// Creates an `n`-dimensional grid with `points` samples per axis on a box of side `length`.
enum PsStatus ps_grid_new(size_t dim, size_t points, double length, struct PsGrid **out);

void ps_grid_free(struct PsGrid *grid);

// Total number of grid points, or 0 for a null handle.
size_t ps_grid_len(const struct PsGrid *grid);

size_t ps_grid_dim(const struct PsGrid *grid);

// Writes the sample coordinates of one axis (`points` values) into `out`.
// `space` is 0 for position, 1 for Fourier.
enum PsStatus ps_grid_axis(const struct PsGrid *grid, uint32_t space, double *out, size_t len);

// Normalized Gaussian packet of width `width` centred at `center` with mean momentum `momentum`
// (both of length `dim`; `momentum` may be null for zero).
enum PsStatus ps_wavefunction_gaussian(const struct PsGrid *grid,
                                       const double *center,
                                       const double *momentum,
                                       double width,
                                       struct PsWavefunction **out);

// State from position samples (`re`, `im` of length `ps_grid_len`; `im` may be null).
// With `normalize` nonzero the samples are rescaled to unit norm.
enum PsStatus ps_wavefunction_from_samples(const struct PsGrid *grid,
                                           const double *re,
                                           const double *im,
                                           size_t len,
                                           int32_t normalize,
                                           struct PsWavefunction **out);

void ps_wavefunction_free(struct PsWavefunction *wf);

enum PsStatus ps_wavefunction_norm(const struct PsWavefunction *wf, double *out);

// Writes |φ(x)|² into `fx` and |φ̂(k)|² into `gk`, each of length `ps_grid_len`.
enum PsStatus ps_wavefunction_marginals(const struct PsWavefunction *wf,
                                        double *fx,
                                        double *gk,
                                        size_t len);

// 𝓗 = ħ²|k|²/(2m) + m ω² |x|²/2.
enum PsStatus ps_hamiltonian_oscillator(const struct PsGrid *grid,
                                        double hbar,
                                        double mass,
                                        double omega,
                                        struct PsHamiltonian **out);

// Separable hamiltonian from tabulated kinetic `t` (Fourier grid) and potential `v` (position grid).
enum PsStatus ps_hamiltonian_separable(const struct PsGrid *grid,
                                       const double *t,
                                       const double *v,
                                       size_t len,
                                       double hbar,
                                       double mass,
                                       struct PsHamiltonian **out);

// Builds grid and hamiltonian from a run configuration given as TOML text.
enum PsStatus ps_hamiltonian_from_config(const char *toml,
                                         struct PsGrid **out_grid,
                                         struct PsHamiltonian **out);

void ps_hamiltonian_free(struct PsHamiltonian *ham);

// ∫𝓗 dμ_φ for a normalized state on the hamiltonian's grid.
enum PsStatus ps_energy(const struct PsWavefunction *wf,
                        const struct PsHamiltonian *ham,
                        double *out);

// Minimizes the energy. On non-convergence the last iterate is still returned
// together with [`PsStatus::NotConverged`]. `residual_tol <= 0` and
// `max_iterations == 0` select the defaults.
enum PsStatus ps_solve_ground_state(const struct PsHamiltonian *ham,
                                    size_t max_iterations,
                                    double residual_tol,
                                    struct PsWavefunction **out_state,
                                    double *out_energy);

// Concentrations μ_φ(A × ℝⁿ) and μ_φ(ℝⁿ × B) for boxes A = [a_lo, a_hi] in
// position and B = [b_lo, b_hi] in frequency; J = pa·pb.
enum PsStatus ps_concentration_boxes(const struct PsWavefunction *wf,
                                     const double *a_lo,
                                     const double *a_hi,
                                     const double *b_lo,
                                     const double *b_hi,
                                     double *out_pa,
                                     double *out_pb);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHASESPACE_H */
