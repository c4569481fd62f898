"""Drift-diffusion grid solver: conservation, positivity, equilibria, and
time-reversal behavior."""

import math

import numpy as np
import pytest

from pilotwave import (
    DGSpec,
    FokkerPlanckSolver,
    GridDensity,
    RealField,
    SchemeFailureError,
    fpe_backward_step,
    fpe_step,
    harmonic_params,
    line_domain,
    make_harmonic_eigenstate,
    ring_domain,
)
from pilotwave.fpe import FaceDrift
from pilotwave.sde import prepare_step_fields
from pilotwave.wavefunction import PhysParams, density


def _solve_dense_check(domain, nu, drift_vals, p_vals, dt):
    """Dense-matrix oracle for one implicit step (validates band assembly)."""
    solver = FokkerPlanckSolver(domain, nu, theta=1.0, startup_steps=0)
    faces = FaceDrift.from_field(RealField(domain, drift_vals), nu)
    lo, di, up, clo, cup = solver._bands(faces)
    n = domain.n_points
    a = np.diag(di) + np.diag(lo, -1) + np.diag(up, 1)
    if domain.is_ring:
        a[0, -1] = clo
        a[-1, 0] = cup
    m = np.eye(n) - dt * a
    raw = np.linalg.solve(m, p_vals)
    return raw / (raw.sum() * domain.dx)


@pytest.mark.parametrize("kind", ["line", "ring"])
def test_implicit_step_matches_dense_solve(kind):
    if kind == "ring":
        dom = ring_domain(0.0, 2.0 * math.pi, 64)
    else:
        dom = line_domain(-3.0, 3.0, 64)
    rng = np.random.default_rng(0)
    drift = np.sin(dom.x) + 0.3 * rng.standard_normal(dom.n_points)
    p0 = np.abs(np.cos(dom.x)) + 0.1
    p0 = p0 / (p0.sum() * dom.dx)
    dense = _solve_dense_check(dom, 0.4, drift, p0, 5e-3)
    solver = FokkerPlanckSolver(dom, 0.4, theta=1.0, startup_steps=0)
    stepped = solver.step(GridDensity(dom, p0), RealField(dom, drift), 5e-3)
    assert np.allclose(stepped.values, dense, rtol=1e-10, atol=1e-12)


def test_mass_conservation_and_positivity():
    dom = line_domain(-6.0, 6.0, 256)
    solver = FokkerPlanckSolver(dom, 0.5)
    p = GridDensity(dom, np.where(np.abs(dom.x) < 2.0, 0.25, 0.0)).normalized()
    drift = RealField(dom, -dom.x)
    for _ in range(400):
        p = solver.step(p, drift, 2e-3)
    assert solver.max_mass_drift < 1e-10
    assert p.values.min() >= 0.0
    assert abs(p.mass - 1.0) < 1e-12


def test_ou_converges_to_exact_gaussian():
    # drift -x with nu = 1/2: stationary density is the unit-variance/2 Gaussian
    dom = line_domain(-8.0, 8.0, 512)
    solver = FokkerPlanckSolver(dom, 0.5)
    p = GridDensity(dom, np.where(np.abs(dom.x) < 2.0, 0.25, 0.0)).normalized()
    drift = RealField(dom, -dom.x)
    dt = 1e-3
    for _ in range(12000):
        p = solver.step(p, drift, dt)
    target = np.exp(-dom.x**2)
    target /= target.sum() * dom.dx
    assert np.abs(p.values - target).max() < 1e-3
    var = dom.integrate(p.values * dom.x**2)
    assert abs(var - 0.5) < 1e-3


def test_stationary_quantum_density_under_oracle_drift(ho_setup):
    # P = |psi|^2 with the split-face drift is a fixed point to rounding
    dom, params = ho_setup
    for alpha in (0.5, 1.0, 2.0):
        pars = harmonic_params(1.0, dom, alpha=alpha)
        psi = make_harmonic_eigenstate(0, 1.0, pars, dom)
        fields = prepare_step_fields(psi, pars, None, 1e-3)
        faces = FaceDrift.from_split(fields.w, fields.rho, dom, pars.nu)
        solver = FokkerPlanckSolver(dom, pars.nu)
        p = GridDensity(dom, density(psi).values).normalized()
        p0 = p.values.copy()
        for _ in range(1000):
            p = solver.step(p, faces, 1e-3)
        assert np.abs(p.values - p0).max() < 1e-6


def test_stationary_with_generic_drift_field(ho_setup):
    # the plain midpoint-of-b representation keeps the equilibrium only to
    # O(dx^2); document the scale rather than demand rounding-level fixity
    dom, params = ho_setup
    psi = make_harmonic_eigenstate(0, 1.0, params, dom)
    fields = prepare_step_fields(psi, params, None, 1e-3)
    solver = FokkerPlanckSolver(dom, params.nu)
    p = GridDensity(dom, density(psi).values).normalized()
    p0 = p.values.copy()
    for _ in range(1000):
        p = solver.step(p, RealField(dom, fields.b), 1e-3)
    assert np.abs(p.values - p0).max() < 1e-4


def test_pure_advection_transports_peak():
    dom = ring_domain(0.0, 2.0 * math.pi, 256)
    solver = FokkerPlanckSolver(dom, 0.0)
    p = GridDensity(dom, np.exp(np.cos(dom.x - 1.0) * 8.0)).normalized()
    drift = RealField(dom, np.full(dom.n_points, 0.7))
    dt = 5e-3
    n_steps = 400
    for _ in range(n_steps):
        p = solver.step(p, drift, dt)
    peak = dom.x[np.argmax(p.values)]
    expected = dom.wrap(1.0 + 0.7 * dt * n_steps)
    assert abs(peak - expected) <= dom.dx + 1e-12


def test_backward_step_reverses_current_only(ho_setup):
    dom, params = ho_setup
    psi = make_harmonic_eigenstate(0, 1.0, params, dom)
    from pilotwave import drift_fields

    f = drift_fields(psi, params)
    # stationary state: v = 0, so b* = -u = -b and the backward drift -b* = b
    assert np.allclose(f.b_star.values, -f.b.values, atol=1e-12)
    p = GridDensity(dom, density(psi).values).normalized()
    stepped = fpe_backward_step(p, f.b_star, params.nu, 1e-3)
    assert stepped.time == pytest.approx(-1e-3)
    assert np.abs(stepped.values - p.values).max() < 1e-4


def test_forward_then_backward_returns_on_equilibrium(ho_setup):
    dom, params = ho_setup
    psi = make_harmonic_eigenstate(0, 1.0, params, dom)
    fields = prepare_step_fields(psi, params, None, 1e-3)
    faces_fwd = FaceDrift.from_split(fields.w, fields.rho, dom, params.nu)
    # backward equation stepped toward the past: drift -b* = u - v
    faces_bwd = FaceDrift.from_split(-fields.w, fields.rho, dom, params.nu)
    p = GridDensity(dom, density(psi).values).normalized()
    p0 = p.values.copy()
    fwd = FokkerPlanckSolver(dom, params.nu)
    bwd = FokkerPlanckSolver(dom, params.nu)
    for _ in range(1000):
        p = fwd.step(p, faces_fwd, 1e-3)
    for _ in range(1000):
        p = bwd.step(p, faces_bwd, 1e-3, direction=-1)
    assert np.abs(p.values - p0).max() < 1e-5
    assert p.time == pytest.approx(0.0, abs=1e-12)


def test_alpha_zero_backward_equals_forward_drift(ho_setup):
    dom, _ = ho_setup
    params = harmonic_params(1.0, dom, alpha=0.0)
    psi = make_harmonic_eigenstate(0, 1.0, params, dom)
    from pilotwave import drift_fields

    f = drift_fields(psi, params)
    assert np.array_equal(f.b.values, f.b_star.values)  # u = 0 at alpha = 0


def test_scheme_failure_on_adversarial_step():
    dom = line_domain(-1.0, 1.0, 128)
    spike = np.zeros(dom.n_points)
    spike[64] = 1.0
    p = GridDensity(dom, spike).normalized()
    solver = FokkerPlanckSolver(dom, 1.0, theta=0.5, startup_steps=0)
    drift = RealField(dom, np.zeros(dom.n_points))
    with pytest.raises(SchemeFailureError):
        with pytest.warns(UserWarning):
            solver.step(p, drift, 1.0)


def test_fpe_step_convenience_wrapper(ho_setup):
    dom, params = ho_setup
    psi = make_harmonic_eigenstate(0, 1.0, params, dom)
    p = GridDensity(dom, density(psi).values).normalized()
    out = fpe_step(p, RealField(dom, -dom.x), 0.5, 1e-3)
    assert abs(out.mass - 1.0) < 1e-12
    assert out.time == pytest.approx(1e-3)
