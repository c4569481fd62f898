"""Velocity fields of the particle dynamics and the regularity diagnostics.

The drift of the stochastic guidance law splits into a current velocity
v = (hbar/m) grad S plus an optional density-weighted divergence-free extra
field, and an osmotic velocity u = nu*(grad rho)/rho plus its own extra field.
Forward and backward drifts are b = v + u and b* = v - u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ScenarioError
from .grid import EPS_NODE, Domain1D, RealField
from .wavefunction import (
    PhysParams,
    Wavefunction,
    density,
    grad_log_density,
    grad_phase,
    unwrapped_phase,
)


@dataclass(frozen=True)
class DGSpec:
    """Extra divergence-free currents, split into current-like and osmotic-like
    flux constants.

    In one dimension a density-weighted divergence-free field is a constant
    flux c, giving the velocity c/rho.  On a line, normalizable states force
    c = 0 (the regularity integral of c^2/rho diverges on Gaussian tails), so
    nonzero constants are only admitted on rings.
    """

    c_v: float = 0.0
    c_u: float = 0.0

    @property
    def is_trivial(self) -> bool:
        return self.c_v == 0.0 and self.c_u == 0.0

    def validate(self, domain: Domain1D) -> None:
        if not domain.is_ring and not self.is_trivial:
            raise ConfigurationError(
                "nonzero extra-current flux constants (c_v, c_u) require a ring "
                "domain; on a line the finiteness condition forces both to zero"
            )


@dataclass
class DriftFields:
    """All velocity fields at one instant, on one grid."""

    v: RealField
    u: RealField
    b: RealField
    b_star: RealField
    nu: float


def current_velocity(psi: Wavefunction, params: PhysParams) -> RealField:
    """v = (hbar/m) grad S (no extra currents)."""
    gs = grad_phase(psi)
    return RealField(
        psi.domain, (params.hbar / params.mass) * gs.values, psi.time, gs.flagged.copy()
    )


def osmotic_velocity(psi: Wavefunction, params: PhysParams) -> RealField:
    """u = nu * (grad rho)/rho (no extra currents)."""
    gl = grad_log_density(psi)
    return RealField(psi.domain, params.nu * gl.values, psi.time, gl.flagged.copy())


def dg_velocities(spec: DGSpec, psi: Wavefunction) -> tuple[RealField, RealField]:
    """Extra velocity fields c_v/rho and c_u/rho."""
    spec.validate(psi.domain)
    rho = density(psi).values
    if spec.is_trivial:
        zero = np.zeros(psi.domain.n_points)
        return (
            RealField(psi.domain, zero.copy(), psi.time),
            RealField(psi.domain, zero.copy(), psi.time),
        )
    mask = rho < EPS_NODE * rho.max()
    if mask.any():
        raise ScenarioError(
            "extra currents are ill-defined on states with density nodes"
        )
    return (
        RealField(psi.domain, spec.c_v / rho, psi.time),
        RealField(psi.domain, spec.c_u / rho, psi.time),
    )


def drift_fields(
    psi: Wavefunction, params: PhysParams, spec: DGSpec | None = None
) -> DriftFields:
    """Assemble v, u, b = v + u, b* = v - u including any extra currents."""
    spec = spec or DGSpec()
    v = current_velocity(psi, params)
    u = osmotic_velocity(psi, params)
    v_dg, u_dg = dg_velocities(spec, psi)
    flag = v.flagged | u.flagged
    v_vals = v.values + v_dg.values
    u_vals = u.values + u_dg.values
    return DriftFields(
        v=RealField(psi.domain, v_vals, psi.time, flag.copy()),
        u=RealField(psi.domain, u_vals, psi.time, flag.copy()),
        b=RealField(psi.domain, v_vals + u_vals, psi.time, flag.copy()),
        b_star=RealField(psi.domain, v_vals - u_vals, psi.time, flag.copy()),
        nu=params.nu,
    )


def weighted_divergence(field: RealField, rho: RealField) -> np.ndarray:
    """Discrete div(field * rho) with the grid's central-difference stencil."""
    return field.domain.gradient(field.values * rho.values)


def equilibrium_balance_residual(
    psi: Wavefunction, params: PhysParams, spec: DGSpec | None = None
) -> np.ndarray:
    """Residual of div(u rho) - nu div(grad rho) - div(u_extra rho) at rho=|psi|^2.

    With the osmotic velocity written as nu*(grad rho)/rho and all divergences
    taken with the same discrete stencil, the osmotic and diffusion currents
    cancel identically, so the residual is pure rounding.  Interior points
    only on a line (the one-sided end stencils do not pair up).
    """
    spec = spec or DGSpec()
    domain = psi.domain
    rho = density(psi).values
    grad_rho = domain.gradient(rho)
    osmotic_current = params.nu * grad_rho  # u rho with u = nu*(grad rho)/rho
    diffusion_term = params.nu * domain.gradient(grad_rho)
    extra_current = np.full(domain.n_points, spec.c_u)  # u_extra rho = c_u
    residual = (
        domain.gradient(osmotic_current)
        - diffusion_term
        - domain.gradient(extra_current)
    )
    if not domain.is_ring:
        residual = residual[2:-2]
    return residual


# ---------------------------------------------------------------------------
# regularity diagnostics


def _squared_speed_integral(psi: Wavefunction, params: PhysParams, spec: DGSpec):
    """Spatial quadratures of (|u|^2 + |v|^2) rho and of the extra-field part."""
    fields = drift_fields(psi, params, spec)
    rho = density(psi).values
    dx = psi.domain.dx
    ok = ~fields.v.flagged
    base = float(
        np.sum((fields.u.values[ok] ** 2 + fields.v.values[ok] ** 2) * rho[ok]) * dx
    )
    if spec.is_trivial:
        extra = 0.0
    else:
        v_dg, u_dg = dg_velocities(spec, psi)
        extra = float(
            np.sum((v_dg.values**2 + u_dg.values**2) * rho) * dx
        )
    return base, extra


def check_finiteness(
    psi_trajectory: Sequence[Wavefunction],
    spec: DGSpec,
    params: PhysParams,
    dt: float,
) -> tuple[float, float]:
    """Time-integrated regularity functionals over a state timeline.

    Returns the quadratures of int (|u|^2+|v|^2) rho dx dt and of
    int (|v_extra|^2+|u_extra|^2) rho dx dt, using the trapezoid rule in both
    x and t.  Both must stay finite for the dynamics to be globally solvable.
    """
    if len(psi_trajectory) < 2:
        raise ConfigurationError("need at least two snapshots to integrate in time")
    weights = np.full(len(psi_trajectory), dt)
    weights[0] = weights[-1] = 0.5 * dt
    total = 0.0
    total_extra = 0.0
    for w, psi in zip(weights, psi_trajectory):
        base, extra = _squared_speed_integral(psi, params, spec)
        total += w * base
        total_extra += w * extra
    return total, total_extra


def check_weak_continuity(
    psi: Wavefunction,
    psi_next: Wavefunction,
    params: PhysParams,
    spec: DGSpec,
    test_functions: Sequence[RealField],
) -> float:
    """Residual of d/dt int(f rho) = int(grad f . v rho) over test functions.

    The time derivative is a forward difference between the two snapshots,
    compared against the flux integral averaged over both (i.e. a centered
    evaluation at the half step).  Returns the worst residual.
    """
    dt = psi_next.time - psi.time
    if dt <= 0:
        raise ConfigurationError("psi_next must be a later snapshot")
    dx = psi.domain.dx
    rho0 = density(psi).values
    rho1 = density(psi_next).values
    v0 = drift_fields(psi, params, spec).v.values
    v1 = drift_fields(psi_next, params, spec).v.values
    worst = 0.0
    for f in test_functions:
        fv = f.values
        dfv = f.domain.gradient(fv)
        lhs = (np.sum(fv * rho1) - np.sum(fv * rho0)) * dx / dt
        rhs = 0.5 * (np.sum(dfv * v0 * rho0) + np.sum(dfv * v1 * rho1)) * dx
        worst = max(worst, abs(lhs - rhs))
    return worst


def check_cross_terms(
    psi: Wavefunction, params: PhysParams, spec: DGSpec
) -> tuple[float, float]:
    """Quadratures of the mixed terms int nu (grad rho/rho) u_extra rho dx and
    int (hbar/m)(grad S) v_extra rho dx.

    Both integrands reduce to flux constants times total derivatives, so the
    quadratures telescope exactly (log-density differences, resp. unwrapped
    phase differences).  On a ring the osmotic cross term always vanishes; the
    current cross term equals (hbar/m) c_v times the total phase winding and
    vanishes only for zero-winding states.
    """
    if spec.is_trivial:
        return 0.0, 0.0
    spec.validate(psi.domain)
    rho = np.abs(psi.amplitudes) ** 2
    if (rho < EPS_NODE * rho.max()).any():
        raise ScenarioError("cross-term check requires a node-free state")
    # int (grad rho / rho) dx = total increment of log rho: zero on a ring
    log_rho = np.log(rho)
    phase = unwrapped_phase(psi)
    if psi.domain.is_ring:
        d_log = 0.0
        # total phase increment around the loop: unwrapped run plus the seam step
        seam = np.angle(psi.amplitudes[0] * np.conj(psi.amplitudes[-1]))
        d_phase = (phase[-1] - phase[0]) + seam
    else:
        d_log = log_rho[-1] - log_rho[0]
        d_phase = phase[-1] - phase[0]
    cross_u = params.nu * spec.c_u * d_log
    cross_v = (params.hbar / params.mass) * spec.c_v * d_phase
    return float(cross_u), float(cross_v)
