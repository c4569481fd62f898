# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled trajectory kernel: Philox4x64-10 counter RNG plus the
Euler-Maruyama step with nodal guard, matching python_impl semantics."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, floor, fmod, log, sqrt

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    static inline void pw_mulhilo64(uint64_t a, uint64_t b,
                                    uint64_t *hi, uint64_t *lo) {
        __uint128_t p = (__uint128_t)a * (__uint128_t)b;
        *hi = (uint64_t)(p >> 64);
        *lo = (uint64_t)p;
    }
    """
    void pw_mulhilo64(unsigned long long a, unsigned long long b,
                      unsigned long long *hi, unsigned long long *lo) nogil

ctypedef unsigned long long u64

cdef u64 M0 = 0xD2E7470EE14C6C93ULL
cdef u64 M1 = 0xCA5A826395121157ULL
cdef u64 W0 = 0x9E3779B97F4A7C15ULL
cdef u64 W1 = 0xBB67AE8584CAA73BULL

cdef double INV53 = 1.0 / 9007199254740992.0  # 2^-53
cdef double TWO_PI = 6.283185307179586476925286766559

BACKEND_NAME = "cython"

MAX_RETRIES = 8

cdef int _MAX_RETRIES = 8


cdef inline void _philox_block(u64 c0, u64 c1, u64 c2, u64 c3,
                               u64 k0, u64 k1, u64 *out) nogil:
    cdef int r
    cdef u64 hi0, lo0, hi1, lo1, t0, t1, t2, t3
    t0 = c0; t1 = c1; t2 = c2; t3 = c3
    for r in range(10):
        if r > 0:
            k0 += W0
            k1 += W1
        pw_mulhilo64(t0, M0, &hi0, &lo0)
        pw_mulhilo64(t2, M1, &hi1, &lo1)
        t0 = hi1 ^ t1 ^ k0
        t1 = lo1
        t2 = hi0 ^ t3 ^ k1
        t3 = lo0
    out[0] = t0; out[1] = t1; out[2] = t2; out[3] = t3


cdef inline double _gaussian(u64 k0, u64 k1, u64 counter, u64 tag) nogil:
    cdef u64 w[4]
    cdef double u1, u2
    _philox_block(counter, tag, 0, 0, k0, k1, w)
    u1 = (<double>(w[0] >> 11) + 1.0) * INV53
    u2 = <double>(w[1] >> 11) * INV53
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


cdef inline double _interp_line(const double *grid, double x, double x_min,
                                double dx, Py_ssize_t n) nogil:
    cdef double pos = (x - x_min) / dx
    cdef Py_ssize_t idx
    if pos < 0.0:
        pos = 0.0
    if pos > n - 1.0:
        pos = n - 1.0
    idx = <Py_ssize_t>pos
    if idx > n - 2:
        idx = n - 2
    return grid[idx] * (1.0 - (pos - idx)) + grid[idx + 1] * (pos - idx)


cdef inline double _interp_ring(const double *grid, double x, double x_min,
                                double dx, double length, Py_ssize_t n) nogil:
    cdef double pos = fmod(x - x_min, length)
    if pos < 0.0:
        pos += length
    pos /= dx
    cdef Py_ssize_t idx = (<Py_ssize_t>floor(pos)) % n
    cdef double frac = pos - floor(pos)
    return grid[idx] * (1.0 - frac) + grid[(idx + 1) % n] * frac


def em_step_block(double[::1] x,
                  long long[::1] winding,
                  u64[::1] counters,
                  int[::1] recovered,
                  int[::1] frozen,
                  long long[::1] reflections,
                  u64[::1] key0,
                  u64[::1] key1,
                  double[::1] b_grid,
                  double[::1] rho_grid,
                  double x_min,
                  double dx,
                  double length,
                  Py_ssize_t n_points,
                  bint is_ring,
                  double x_max,
                  double dt,
                  double noise_std,
                  double eps_abs):
    """See python_impl.em_step_block; identical contract, per-particle loop."""
    cdef Py_ssize_t i, n = x.shape[0]
    cdef int attempt, nrefl
    cdef double b_here, scale, step, prop, rho_prop, z
    cdef long long wraps
    cdef bint accepted
    with nogil:
        for i in range(n):
            if is_ring:
                b_here = _interp_ring(&b_grid[0], x[i], x_min, dx, length, n_points)
            else:
                b_here = _interp_line(&b_grid[0], x[i], x_min, dx, n_points)
            accepted = False
            scale = 1.0
            for attempt in range(_MAX_RETRIES + 1):
                step = b_here * dt * scale
                if noise_std > 0.0:
                    z = _gaussian(key0[i], key1[i], counters[i], 0)
                    counters[i] += 1
                    step += noise_std * sqrt(scale) * z
                prop = x[i] + step
                wraps = 0
                nrefl = 0
                if is_ring:
                    wraps = <long long>floor((prop - x_min) / length)
                    prop -= wraps * length
                else:
                    while prop < x_min or prop > x_max:
                        if prop < x_min:
                            prop = 2.0 * x_min - prop
                        else:
                            prop = 2.0 * x_max - prop
                        nrefl += 1
                if is_ring:
                    rho_prop = _interp_ring(&rho_grid[0], prop, x_min, dx,
                                            length, n_points)
                else:
                    rho_prop = _interp_line(&rho_grid[0], prop, x_min, dx,
                                            n_points)
                if rho_prop >= eps_abs:
                    x[i] = prop
                    winding[i] += wraps
                    reflections[i] += nrefl
                    if attempt > 0:
                        recovered[i] += 1
                    accepted = True
                    break
                scale *= 0.5
            if not accepted:
                frozen[i] += 1


def philox_raw(u64 c0, u64 c1, u64 c2, u64 c3, u64 k0, u64 k1):
    """Single Philox4x64-10 block (test hook for backend agreement)."""
    cdef u64 w[4]
    _philox_block(c0, c1, c2, c3, k0, k1, w)
    return int(w[0]), int(w[1]), int(w[2]), int(w[3])


def gaussian_at(u64 k0, u64 k1, u64 counter, u64 tag):
    """Single counter-indexed gaussian (test hook)."""
    return _gaussian(k0, k1, counter, tag)
