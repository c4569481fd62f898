"""Trajectory integration: Wiener statistics, step semantics, nodal guard,
determinism, and convergence behavior."""

import math

import numpy as np
import pytest

from conftest import ground_state_timeline, plane_wave_timeline
from pilotwave import (
    DGSpec,
    PhysParams,
    RngStream,
    current_velocity,
    harmonic_params,
    line_domain,
    make_free_gaussian,
    make_plane_wave_ring,
    propagate_trajectory,
    ring_domain,
    wiener_increment,
)
from pilotwave._kernels import get_backend
from pilotwave.grid import interpolate_linear
from pilotwave.sde import (
    TrajectoryBlock,
    prepare_step_fields,
    step_block,
    total_displacement,
    wiener_increments,
)


def test_wiener_increment_moments():
    params = PhysParams(hbar=1.0, mass=1.0)
    rng = RngStream(42, 0)
    dt = 0.01
    draws = wiener_increments(rng, dt, params, 10**6)
    target_var = params.hbar * dt / params.mass
    assert abs(draws.mean()) < 4.0 * math.sqrt(target_var / 10**6)
    assert abs(draws.var() - target_var) / target_var < 0.01


def test_wiener_increment_scales_with_mass():
    params = PhysParams(hbar=2.0, mass=0.5)
    draws = wiener_increments(RngStream(1, 0), 0.01, params, 200000)
    assert abs(draws.var() - 2.0 * 0.01 / 0.5) / (0.04) < 0.02


def test_wiener_determinism():
    params = PhysParams()
    a = wiener_increment(RngStream(7, 3), 0.1, params)
    b = wiener_increment(RngStream(7, 3), 0.1, params)
    assert a == b
    c = wiener_increment(RngStream(7, 4), 0.1, params)
    assert a != c


def test_em_step_deterministic_limit_is_euler(unit_ring):
    # alpha = 0: x' = x + b(x) dt exactly, with b linearly interpolated
    psi = make_plane_wave_ring(1, unit_ring)
    params = PhysParams(alpha=0.0)
    fields = prepare_step_fields(psi, params, DGSpec(0.1, 0.0), dt=0.05)
    x0 = 1.234
    block = TrajectoryBlock.from_positions(np.array([x0]), master_seed=5)
    step_block(block, fields, 0.05)
    b_at = interpolate_linear(unit_ring, fields.b, np.array([x0]))[0]
    assert block.x[0] == pytest.approx(x0 + b_at * 0.05, abs=1e-15)
    assert block.counters[0] == 0  # no noise consumed in the deterministic limit


def test_pure_wiener_displacement_variance(unit_ring):
    # b = 0 (k=0 plane wave), alpha = 1: displacement variance = (hbar/m) T
    tl = plane_wave_timeline(0, unit_ring, 0.01)
    params = PhysParams(alpha=1.0)
    n, n_steps, dt = 20000, 100, 0.01
    rng = RngStream(11, 2**61)
    x0 = unit_ring.wrap(2.0 * math.pi * rng.uniforms(n))
    block = TrajectoryBlock.from_positions(x0, master_seed=11)
    for k in range(n_steps):
        fields = prepare_step_fields(tl.state(k), params, None, dt)
        step_block(block, fields, dt)
    disp = total_displacement(block, x0, unit_ring)
    t_total = n_steps * dt
    assert abs(disp.mean()) < 4.0 * math.sqrt(t_total / n)
    assert abs(disp.var() - t_total) / t_total < 0.05


def test_ou_stationary_variance(ho_setup):
    # ground state, alpha=1: OU with drift -x, nu=1/2 -> stationary var 1/2
    dom, params = ho_setup
    dt, n_steps, n = 0.01, 5000, 4000
    tl = ground_state_timeline(dom, params, dt)
    from pilotwave.ensemble import sample_density
    from pilotwave.wavefunction import density

    rng = RngStream(99, 2**61)
    x0 = sample_density(density(tl.state(0)), n, rng)
    block = TrajectoryBlock.from_positions(x0, master_seed=99)
    fields = prepare_step_fields(tl.state(0), params, None, dt)
    pooled = []
    for k in range(n_steps):
        step_block(block, fields, dt)
        if k >= 3000 and (k % 500) == 0:
            pooled.append(block.x.copy())
    pooled.append(block.x.copy())
    samples = np.concatenate(pooled)
    assert abs(samples.var() - 0.5) / 0.5 < 0.03
    assert block.frozen.sum() == 0


def test_ring_winding_with_constant_drift(unit_ring):
    # alpha=0, plane wave k=1 plus flux 0.1: constant drift, Euler exact
    dt, n_steps = 1e-3, 5000
    tl = plane_wave_timeline(1, unit_ring, dt)
    params = PhysParams(alpha=0.0)
    spec = DGSpec(0.1, 0.0)
    x0 = np.array([0.5, 2.0, 4.0])
    block = TrajectoryBlock.from_positions(x0, master_seed=3)
    fields = prepare_step_fields(tl.state(0), params, spec, dt)
    for _ in range(n_steps):
        step_block(block, fields, dt)
    velocity = total_displacement(block, x0, unit_ring) / (n_steps * dt)
    expected = 1.0 + 0.1 * 2.0 * math.pi  # hbar k / m + c_v L
    assert np.allclose(velocity, expected, rtol=2e-4)
    assert block.winding.min() >= 1


def test_alpha_zero_matches_rk2_reference():
    # deterministic transport in a spreading packet vs an independent Heun integrator
    params = PhysParams(alpha=0.0)
    dom = line_domain(-12.0, 12.0, 2048)

    def v_interp(x, t):
        psi = make_free_gaussian(0.0, 0.5, 1.0, t, params, dom)
        v = current_velocity(psi, params)
        return interpolate_linear(dom, v.values, np.array([x]))[0]

    def rk2(x0, dt, n_steps):
        x = x0
        for k in range(n_steps):
            t = k * dt
            k1 = v_interp(x, t)
            k2 = v_interp(x + dt * k1, t + dt)
            x = x + 0.5 * dt * (k1 + k2)
        return x

    diffs = []
    for dt in (0.02, 0.01):
        n_steps = int(round(2.0 / dt))
        from pilotwave import AnalyticTimeline

        tl = AnalyticTimeline(
            lambda t: make_free_gaussian(0.0, 0.5, 1.0, t, params, dom), 0.0, dt
        )
        traj = propagate_trajectory(1.0, tl, params, None, RngStream(0, 0), dt, n_steps)
        diffs.append(abs(traj.positions[-1] - rk2(1.0, dt, n_steps)))
    assert diffs[1] < diffs[0]  # first-order gap shrinks with dt
    assert diffs[0] < 5e-3


def test_weak_error_halves_with_dt(ho_setup):
    # OU mean from a displaced start: exact e^{-T}, Euler bias is O(dt);
    # dt large enough that the bias dominates the 3e-3 Monte Carlo noise
    dom, params = ho_setup
    t_final, n = 1.0, 50000
    errs = []
    for dt in (0.2, 0.1):
        tl = ground_state_timeline(dom, params, dt)
        block = TrajectoryBlock.from_positions(np.full(n, 2.0), master_seed=17)
        fields = prepare_step_fields(tl.state(0), params, None, dt)
        for _ in range(int(round(t_final / dt))):
            step_block(block, fields, dt)
        errs.append(abs(block.x.mean() - 2.0 * math.exp(-t_final)))
    assert 1.6 < errs[0] / errs[1] < 2.7


def test_stationary_deterministic_trajectory(ho_setup):
    dom, params0 = ho_setup
    params = harmonic_params(1.0, dom, alpha=0.0)
    tl = ground_state_timeline(dom, params, 0.01)
    traj = propagate_trajectory(0.7, tl, params, None, RngStream(1, 0), 0.01, 200)
    assert np.all(traj.positions == 0.7)
    assert traj.nodal_incidents == 0 and not traj.left_domain


def test_nodal_guard_retry_and_freeze():
    dom = line_domain(0.0, 1.0, 101)
    rho = np.where(dom.x < 0.5, 1.0, 0.0)
    b = np.ones(dom.n_points)
    from pilotwave.sde import StepFields

    ringdom = ring_domain(0.0, 1.0, 100)
    ring_rho = np.where((ringdom.x >= 0.40) & (ringdom.x <= 0.49), 1.0, 0.0)
    ring_b = np.ones(ringdom.n_points)
    for backend in ("python", "cython"):
        try:
            kern = get_backend(backend)
        except ImportError:
            pytest.skip("compiled kernel unavailable")
        fields = StepFields(dom, b, rho, eps_abs=1e-12, noise_std=0.0)
        # recoverable: halving eventually lands below the cliff
        block = TrajectoryBlock.from_positions(np.array([0.40]), master_seed=1)
        step_block(block, fields, dt=0.2, kernel=kern)
        assert block.recovered[0] == 1 and block.frozen[0] == 0
        assert block.x[0] < 0.5 and block.x[0] > 0.40
        # hopeless: every halved proposal wraps into the dead zone -> frozen
        ring_fields = StepFields(ringdom, ring_b, ring_rho, eps_abs=1e-12, noise_std=0.0)
        block = TrajectoryBlock.from_positions(np.array([0.47]), master_seed=1)
        step_block(block, ring_fields, dt=51.2, kernel=kern)
        assert block.frozen[0] == 1 and block.recovered[0] == 0
        assert block.x[0] == 0.47
        assert block.winding[0] == 0  # tentative wraps of rejected proposals discarded


def test_line_reflection_counts():
    dom = line_domain(0.0, 1.0, 101)
    rho = np.ones(dom.n_points)
    b = np.ones(dom.n_points) * 3.0
    from pilotwave.sde import StepFields

    fields = StepFields(dom, b, rho, eps_abs=0.0, noise_std=0.0)
    block = TrajectoryBlock.from_positions(np.array([0.9]), master_seed=1)
    step_block(block, fields, dt=0.1)
    assert block.reflections[0] == 1
    assert block.x[0] == pytest.approx(2.0 * 1.0 - (0.9 + 0.3))


def test_thread_count_and_chunking_do_not_change_results(unit_ring):
    tl = plane_wave_timeline(1, unit_ring, 0.01)
    params = PhysParams(alpha=1.0)
    n = 10000  # crosses the fixed chunk boundary
    rng = RngStream(5, 2**61)
    x0 = unit_ring.wrap(2.0 * math.pi * rng.uniforms(n))
    results = []
    for threads in (1, 4):
        block = TrajectoryBlock.from_positions(x0, master_seed=5)
        for k in range(50):
            fields = prepare_step_fields(tl.state(k), params, None, 0.01)
            step_block(block, fields, 0.01, threads=threads)
        results.append(block.x.copy())
    assert np.array_equal(results[0], results[1])


def test_backends_agree_closely(unit_ring):
    try:
        cy = get_backend("cython")
    except ImportError:
        pytest.skip("compiled kernel unavailable")
    py = get_backend("python")
    tl = plane_wave_timeline(1, unit_ring, 0.01)
    params = PhysParams(alpha=1.0)
    rng = RngStream(23, 2**61)
    x0 = unit_ring.wrap(2.0 * math.pi * rng.uniforms(500))
    finals = []
    for kern in (cy, py):
        block = TrajectoryBlock.from_positions(x0, master_seed=23)
        for k in range(200):
            fields = prepare_step_fields(tl.state(k), params, DGSpec(0.1, 0.05), 0.01)
            step_block(block, fields, 0.01, kernel=kern)
        finals.append(total_displacement(block, x0, unit_ring))
    assert np.allclose(finals[0], finals[1], rtol=1e-9, atol=1e-9)


def test_propagate_trajectory_rejects_nodal_start(ho_setup):
    dom, params = ho_setup
    from pilotwave import ConfigurationError, make_harmonic_eigenstate
    from pilotwave import AnalyticTimeline

    tl = AnalyticTimeline(
        lambda t: make_harmonic_eigenstate(1, 1.0, params, dom, t=t), 0.0, 0.01
    )
    with pytest.raises(ConfigurationError):
        propagate_trajectory(0.0, tl, params, None, RngStream(1, 0), 0.01, 10)
