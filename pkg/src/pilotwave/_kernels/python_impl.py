"""NumPy implementation of the hot trajectory kernel.

Semantics are shared bit-for-bit in structure with the compiled kernel: every
proposal consumes exactly one counter-indexed gaussian per trajectory (when
the dynamics is stochastic), so results do not depend on chunking or thread
count.  Floating-point results may differ from the compiled kernel in the
last bits only (different libm implementations of log/cos).
"""

from __future__ import annotations

import numpy as np

from ..rng import GAUSS_TAG, gaussian_from_keys

BACKEND_NAME = "python"

MAX_RETRIES = 8  # dt-halving attempts after the initial proposal


def _interp(values, pos_idx, frac):
    return values[pos_idx[0]] * (1.0 - frac) + values[pos_idx[1]] * frac


def _locate(x, x_min, dx, length, n_points, is_ring):
    """Uniform-grid cell index pair and fraction for linear interpolation."""
    if is_ring:
        pos = np.mod(x - x_min, length) / dx
        idx = np.floor(pos).astype(np.intp) % n_points
        frac = pos - np.floor(pos)
        nxt = (idx + 1) % n_points
    else:
        pos = np.clip((x - x_min) / dx, 0.0, n_points - 1.0)
        idx = np.minimum(pos.astype(np.intp), n_points - 2)
        frac = pos - idx
        nxt = idx + 1
    return (idx, nxt), frac


def _apply_boundary(prop, x_min, x_max, length, is_ring):
    """Wrap (ring) or reflect (line); returns adjusted prop, wraps, reflections."""
    if is_ring:
        wraps = np.floor((prop - x_min) / length).astype(np.int64)
        return prop - wraps * length, wraps, np.zeros_like(wraps)
    refl = np.zeros(prop.shape, dtype=np.int64)
    out = prop.copy()
    for _ in range(64):
        low = out < x_min
        high = out > x_max
        if not (low.any() or high.any()):
            break
        out[low] = 2.0 * x_min - out[low]
        out[high] = 2.0 * x_max - out[high]
        refl += low
        refl += high
    return out, np.zeros_like(refl), refl


def em_step_block(
    x,
    winding,
    counters,
    recovered,
    frozen,
    reflections,
    key0,
    key1,
    b_grid,
    rho_grid,
    x_min,
    dx,
    length,
    n_points,
    is_ring,
    x_max,
    dt,
    noise_std,
    eps_abs,
):
    """Advance all trajectories in x by one step of the Ito guidance law.

    x' = x + b(x) dt + noise, with the drift interpolated at the step start.
    Proposals landing where the interpolated density falls below eps_abs are
    retried with halved dt (fresh noise) up to MAX_RETRIES times, then the
    trajectory is frozen for this step.  All state arrays are updated in
    place.
    """
    idx, frac = _locate(x, x_min, dx, length, n_points, is_ring)
    b_here = _interp(b_grid, idx, frac)

    active = np.arange(x.shape[0])
    for attempt in range(MAX_RETRIES + 1):
        scale = 0.5**attempt
        step = b_here[active] * (dt * scale) if attempt else b_here * dt
        if noise_std > 0.0:
            z = gaussian_from_keys(
                key0[active], key1[active], counters[active], tag=GAUSS_TAG
            )
            counters[active] += np.uint64(1)
            step = step + (noise_std * np.sqrt(scale)) * z
        prop = x[active] + step
        prop, wraps, refl = _apply_boundary(prop, x_min, x_max, length, is_ring)
        p_idx, p_frac = _locate(prop, x_min, dx, length, n_points, is_ring)
        ok = _interp(rho_grid, p_idx, p_frac) >= eps_abs
        good = active[ok]
        x[good] = prop[ok]
        winding[good] += wraps[ok]
        reflections[good] += refl[ok]
        if attempt > 0:
            recovered[good] += 1
        active = active[~ok]
        if active.size == 0:
            return
    frozen[active] += 1
