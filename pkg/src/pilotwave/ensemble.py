"""Ensembles: initial-distribution sampling, trajectory fan-out, histogram
densities, and distance series against the instantaneous quantum density."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .dynamics import DGSpec
from .errors import ConfigurationError, ScenarioError
from .fpe import FaceDrift, FokkerPlanckSolver, GridDensity
from .grid import Domain1D, RealField
from .rng import RngStream
from .sde import TrajectoryBlock, prepare_step_fields, step_block, total_displacement
from .wavefunction import PhysParams, density


# ---------------------------------------------------------------------------
# piecewise-linear density CDF (shared by sampling and bin integration)


def _density_nodes(domain: Domain1D, values: np.ndarray):
    """Grid nodes and density values, padding the ring seam point."""
    if domain.is_ring:
        x = np.concatenate([domain.x, [domain.x_min + domain.length]])
        v = np.concatenate([values, [values[0]]])
    else:
        x = domain.x
        v = values
    return x, np.maximum(v, 0.0)


def _cdf_nodes(x: np.ndarray, v: np.ndarray):
    """Cumulative trapezoid mass at the nodes and its total."""
    raw = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(x))])
    return raw / raw[-1], float(raw[-1])


def grid_cdf_at(domain: Domain1D, values: np.ndarray, xq: np.ndarray) -> np.ndarray:
    """Exact CDF of the piecewise-linear density at query points."""
    x, v = _density_nodes(domain, values)
    cdf, total = _cdf_nodes(x, v)
    xq = np.clip(np.asarray(xq, dtype=float), x[0], x[-1])
    j = np.clip(np.searchsorted(x, xq, side="right") - 1, 0, len(x) - 2)
    s = xq - x[j]
    slope = (v[j + 1] - v[j]) / (x[j + 1] - x[j])
    raw = cdf[j] + (v[j] * s + 0.5 * slope * s**2) / total
    return np.clip(raw, 0.0, 1.0)


def sample_density(rho: RealField, n: int, rng: RngStream) -> np.ndarray:
    """n i.i.d. positions from the piecewise-linear interpolant of rho
    (inverse-CDF with the exact per-cell quadratic solve)."""
    if n < 1:
        raise ConfigurationError("need at least one sample")
    x, v = _density_nodes(rho.domain, rho.values)
    cdf, total = _cdf_nodes(x, v)
    u = rng.uniforms(n)
    j = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(x) - 2)
    q = (u - cdf[j]) * total
    a = 0.5 * (v[j + 1] - v[j]) / (x[j + 1] - x[j])
    b = v[j]
    denom = b + np.sqrt(np.maximum(b**2 + 4.0 * a * q, 0.0))
    s = np.where(denom > 1e-300, 2.0 * q / denom, 0.0)
    return x[j] + s


# ---------------------------------------------------------------------------
# histogram densities and L1 distances


@dataclass
class EmpiricalDensity:
    """Uniform-bin histogram probabilities over the grid domain."""

    bin_edges: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.min() < 0:
            raise ConfigurationError("bin probabilities must be nonnegative")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ConfigurationError("bin probabilities must sum to one")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def l1_distance(self, other: Union["EmpiricalDensity", np.ndarray]) -> float:
        probs = other.probs if isinstance(other, EmpiricalDensity) else other
        return float(np.abs(self.probs - probs).sum())


def domain_bin_edges(domain: Domain1D, bins: int = 50) -> np.ndarray:
    return np.linspace(domain.x_min, domain.x_min + domain.length, bins + 1)


def histogram_density(
    positions: np.ndarray, edges: np.ndarray, domain: Domain1D
) -> EmpiricalDensity:
    """Counting histogram as bin probabilities; out-of-range samples (line
    round-off only) are folded into the end bins."""
    pos = domain.wrap(positions) if domain.is_ring else positions
    pos = np.clip(pos, edges[0], edges[-1])
    counts, _ = np.histogram(pos, bins=edges)
    return EmpiricalDensity(edges, counts / counts.sum())


def grid_bin_probs(domain: Domain1D, values: np.ndarray, edges: np.ndarray):
    """Reference probability per bin, integrating the piecewise-linear density."""
    cdf = grid_cdf_at(domain, values, edges)
    probs = np.diff(cdf)
    probs = np.maximum(probs, 0.0)
    return probs / probs.sum()


@dataclass
class DistanceSeries:
    """L1 distances between an empirical and a reference density over time."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if ((self.values < 0) | (self.values > 2.0 + 1e-12)).any():
            raise ConfigurationError("L1 distances must lie in [0, 2]")

    def max(self) -> float:
        return float(self.values.max())


# ---------------------------------------------------------------------------
# ensemble evolution


@dataclass
class EnsembleResult:
    report_times: np.ndarray
    densities: list  # EmpiricalDensity per report time
    reference_probs: list  # bin probabilities of |psi(t)|^2
    l1_psi: DistanceSeries
    incidents: dict
    mean_winding_velocity: Optional[float] = None
    fpe_probs: list = field(default_factory=list)
    l1_fpe: Optional[DistanceSeries] = None
    final_positions: Optional[np.ndarray] = None


def _report_steps(report_times, t0, dt):
    steps = []
    for t in np.atleast_1d(report_times):
        k = int(round((t - t0) / dt))
        if k < 0 or abs(t0 + k * dt - t) > 1e-9 + 1e-6 * dt:
            raise ConfigurationError(
                f"report time {t} is not aligned to the step grid"
            )
        steps.append(k)
    return steps


def evolve_ensemble(
    positions: np.ndarray,
    timeline,
    params: PhysParams,
    spec: Optional[DGSpec],
    master_seed: int,
    dt: float,
    report_times: Sequence[float],
    bins: int = 50,
    threads: int = 1,
    fpe_oracle: bool = False,
    max_recovered: Optional[int] = None,
    max_frozen: Optional[int] = 0,
) -> EnsembleResult:
    """Propagate an ensemble along a state timeline, reporting binned densities
    and L1 distances to the instantaneous quantum density at the report times.

    With fpe_oracle=True a grid solution of the drift-diffusion equation is
    advanced alongside (same drift fields, same dt) and compared per report
    time.  Incident counters aggregate over all trajectories; the run fails if
    they exceed the configured caps.
    """
    spec = spec or DGSpec()
    domain = timeline.domain
    spec.validate(domain)
    edges = domain_bin_edges(domain, bins)
    steps = _report_steps(report_times, timeline.t0, dt)
    n_steps = max(steps)
    block = TrajectoryBlock.from_positions(np.asarray(positions, float), master_seed)
    x_start = block.x.copy()

    solver = None
    fpe_density = None
    psi_k = timeline.state(0)
    fields_k = prepare_step_fields(psi_k, params, spec, dt)
    if fpe_oracle:
        solver = FokkerPlanckSolver(domain, params.nu)
        fpe_density = _initial_grid_density(positions, domain, psi_k, params)

    densities, ref_probs, l1_vals, fpe_probs, fpe_l1 = [], [], [], [], []
    report_set = set(steps)

    def report(k):
        psi = timeline.state(k)
        emp = histogram_density(block.x, edges, domain)
        ref = grid_bin_probs(domain, density(psi).values, edges)
        densities.append(emp)
        ref_probs.append(ref)
        l1_vals.append(emp.l1_distance(ref))
        if solver is not None:
            fp = grid_bin_probs(domain, fpe_density.values, edges)
            fpe_probs.append(fp)
            fpe_l1.append(emp.l1_distance(fp))

    if 0 in report_set:
        report(0)
    for k in range(n_steps):
        fields_next = prepare_step_fields(timeline.state(k + 1), params, spec, dt)
        step_block(block, fields_k, dt, threads=threads)
        if solver is not None:
            fpe_density = solver.step(
                fpe_density, _oracle_drift(fields_k, params), dt,
                drift_new=_oracle_drift(fields_next, params),
            )
        fields_k = fields_next
        if (k + 1) in report_set:
            report(k + 1)

    incidents = block.incident_totals()
    if max_frozen is not None and incidents["nodal_frozen"] > max_frozen:
        raise ScenarioError(f"frozen-trajectory cap exceeded: {incidents}")
    if max_recovered is not None and incidents["nodal_recovered"] > max_recovered:
        raise ScenarioError(f"nodal-incident cap exceeded: {incidents}")

    t_rep = timeline.t0 + dt * np.asarray(steps, dtype=float)
    mean_wind = None
    if domain.is_ring and n_steps > 0:
        disp = total_displacement(block, x_start, domain)
        mean_wind = float(disp.mean() / (n_steps * dt))
    return EnsembleResult(
        report_times=t_rep,
        densities=densities,
        reference_probs=ref_probs,
        l1_psi=DistanceSeries(t_rep, np.array(l1_vals)),
        incidents=incidents,
        mean_winding_velocity=mean_wind,
        fpe_probs=fpe_probs,
        l1_fpe=DistanceSeries(t_rep, np.array(fpe_l1)) if solver is not None else None,
        final_positions=block.x.copy(),
    )


def _oracle_drift(fields, params):
    """Face drift for the grid oracle: telescoped osmotic part when nu > 0."""
    if params.nu > 0:
        return FaceDrift.from_split(fields.w, fields.rho, fields.domain, params.nu)
    return RealField(fields.domain, fields.b)


def _initial_grid_density(positions, domain, psi0, params) -> GridDensity:
    """Grid density matching the ensemble's initial distribution.

    Uses the quantum density when the ensemble was sampled from it, else a
    smoothed histogram of the actual start positions.
    """
    rho = density(psi0).values
    emp = histogram_density(np.asarray(positions), domain_bin_edges(domain, 50), domain)
    ref = grid_bin_probs(domain, rho, domain_bin_edges(domain, 50))
    if emp.l1_distance(ref) < 0.05:
        return GridDensity(domain, rho.copy(), psi0.time).normalized()
    # piecewise-constant histogram density projected onto the grid
    edges = emp.bin_edges
    idx = np.clip(np.searchsorted(edges, domain.x, side="right") - 1, 0, len(edges) - 2)
    vals = emp.probs[idx] / np.diff(edges)[idx]
    return GridDensity(domain, vals, psi0.time).normalized()


def uniform_positions(a: float, b: float, n: int, rng: RngStream) -> np.ndarray:
    """n i.i.d. uniforms on [a, b] (convenience initial condition)."""
    return a + (b - a) * rng.uniforms(n)


InitialSpec = Union[np.ndarray, EmpiricalDensity, Callable[[int, RngStream], np.ndarray]]


def convergence_experiment(
    initial: InitialSpec,
    timeline,
    params: PhysParams,
    master_seed: int,
    dt: float,
    report_times: Sequence[float],
    n: Optional[int] = None,
    spec: Optional[DGSpec] = None,
    bins: int = 50,
    threads: int = 1,
    fpe_oracle: bool = False,
) -> EnsembleResult:
    """Relaxation run from a non-equilibrium initial distribution.

    Requires genuinely stochastic dynamics (alpha > 0); the deterministic
    limit transports density mismatches instead of damping them.
    """
    if params.alpha <= 0:
        raise ConfigurationError("convergence experiments require alpha > 0")
    rng = RngStream(master_seed, stream_index=2**62)
    if isinstance(initial, EmpiricalDensity):
        if n is None:
            raise ConfigurationError("need a sample count for a density initial")
        u = rng.uniforms(n)
        j = np.searchsorted(np.cumsum(initial.probs), u, side="right")
        j = np.clip(j, 0, len(initial.probs) - 1)
        widths = np.diff(initial.bin_edges)
        offsets = rng.uniforms(n)
        positions = initial.bin_edges[j] + offsets * widths[j]
    elif callable(initial):
        if n is None:
            raise ConfigurationError("need a sample count for a sampler initial")
        positions = initial(n, rng)
    else:
        positions = np.asarray(initial, dtype=float)
    return evolve_ensemble(
        positions,
        timeline,
        params,
        spec,
        master_seed,
        dt,
        report_times,
        bins=bins,
        threads=threads,
        fpe_oracle=fpe_oracle,
    )
