"""Ito integration of the stochastic guidance law for trajectories and
trajectory blocks, with deterministic per-trajectory RNG streams and the
nodal guard."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .dynamics import DGSpec, drift_fields
from .errors import ConfigurationError
from .grid import EPS_NODE, Domain1D
from .rng import GAUSS_TAG, RngStream, stream_keys
from .wavefunction import PhysParams, Wavefunction, density, grad_log_density

CHUNK = 8192  # fixed kernel block size; never depends on the thread count


@dataclass
class Trajectory:
    """Positions of one particle at uniform times, with incident counters."""

    times: np.ndarray
    positions: np.ndarray
    nodal_incidents: int = 0
    nodal_frozen: int = 0
    left_domain: bool = False
    winding: int = 0


@dataclass
class TrajectoryBlock:
    """Mutable state of many concurrently evolving trajectories."""

    master_seed: int
    x: np.ndarray
    winding: np.ndarray
    counters: np.ndarray
    recovered: np.ndarray
    frozen: np.ndarray
    reflections: np.ndarray
    key0: np.ndarray
    key1: np.ndarray

    @classmethod
    def from_positions(
        cls, positions: np.ndarray, master_seed: int, first_stream: int = 0
    ) -> "TrajectoryBlock":
        n = positions.shape[0]
        idx = np.arange(first_stream, first_stream + n, dtype=np.uint64)
        k0, k1 = stream_keys(master_seed, idx)
        return cls(
            master_seed=master_seed,
            x=np.array(positions, dtype=float),
            winding=np.zeros(n, dtype=np.int64),
            counters=np.zeros(n, dtype=np.uint64),
            recovered=np.zeros(n, dtype=np.int32),
            frozen=np.zeros(n, dtype=np.int32),
            reflections=np.zeros(n, dtype=np.int64),
            key0=k0,
            key1=k1,
        )

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def incident_totals(self) -> dict:
        return {
            "nodal_recovered": int(self.recovered.sum()),
            "nodal_frozen": int(self.frozen.sum()),
            "boundary_reflections": int(self.reflections.sum()),
        }


def wiener_increment(rng: RngStream, dt: float, params: PhysParams) -> float:
    """One Wiener increment: gaussian with mean 0 and variance (hbar/m) dt."""
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    return math.sqrt(params.hbar * dt / params.mass) * float(rng.gaussians(1)[0])


def wiener_increments(rng: RngStream, dt: float, params: PhysParams, n: int):
    """Vector of n independent Wiener increments from one stream."""
    return math.sqrt(params.hbar * dt / params.mass) * rng.gaussians(n)


@dataclass
class StepFields:
    """Grid data consumed by one integrator step (drift, density, guard level).

    `w` collects the flux-like drift components (current velocity plus any
    extra currents) without the osmotic log-derivative part, which the grid
    oracle prefers to handle in telescoped form.
    """

    domain: Domain1D
    b: np.ndarray
    w: np.ndarray
    rho: np.ndarray
    eps_abs: float
    noise_std: float


def prepare_step_fields(
    psi: Wavefunction, params: PhysParams, spec: Optional[DGSpec], dt: float
) -> StepFields:
    spec = spec or DGSpec()
    fields = drift_fields(psi, params, spec)
    rho = density(psi).values
    osmotic_log_part = params.nu * grad_log_density(psi).values
    return StepFields(
        domain=psi.domain,
        b=fields.b.values,
        w=fields.b.values - osmotic_log_part,
        rho=rho,
        eps_abs=EPS_NODE * float(rho.max()),
        noise_std=math.sqrt(params.alpha * params.hbar * dt / params.mass),
    )


def _kernel_args(domain: Domain1D):
    if domain.is_ring:
        x_max = domain.x_min + domain.length
    else:
        x_max = domain.x_max
    return (
        domain.x_min,
        domain.dx,
        domain.length,
        domain.n_points,
        domain.is_ring,
        x_max,
    )


def step_block(
    block: TrajectoryBlock,
    fields: StepFields,
    dt: float,
    threads: int = 1,
    kernel=None,
) -> None:
    """Advance every trajectory of the block by dt (in place).

    Work is partitioned into fixed-size chunks; the thread count only decides
    how chunks are scheduled, never what each chunk computes.
    """
    kern = kernel if kernel is not None else _kernels.em_step_block
    if hasattr(kern, "em_step_block"):
        kern = kern.em_step_block
    args = _kernel_args(fields.domain)
    spans = [(s, min(s + CHUNK, block.n)) for s in range(0, block.n, CHUNK)]

    def run(span):
        s, e = span
        kern(
            block.x[s:e],
            block.winding[s:e],
            block.counters[s:e],
            block.recovered[s:e],
            block.frozen[s:e],
            block.reflections[s:e],
            block.key0[s:e],
            block.key1[s:e],
            fields.b,
            fields.rho,
            *args,
            dt,
            fields.noise_std,
            fields.eps_abs,
        )

    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, spans))
    else:
        for span in spans:
            run(span)


def em_step(
    x: float,
    fields: StepFields,
    params: PhysParams,
    rng: RngStream,
    dt: float,
) -> float:
    """Single trajectory step of the Ito guidance law (kernel-backed).

    The drift is linearly interpolated at the step start; proposals into the
    flagged nodal region are retried with halved dt and fresh noise, then the
    position is left unchanged for this step.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    block = TrajectoryBlock.from_positions(
        np.array([x]), rng.master_seed, first_stream=rng.stream_index
    )
    block.counters[0] = rng._counters.get(GAUSS_TAG, 0)
    step_block(block, fields, dt)
    rng._counters[GAUSS_TAG] = int(block.counters[0])
    return float(block.x[0])


def propagate_trajectory(
    x0: float,
    timeline,
    params: PhysParams,
    spec: Optional[DGSpec],
    rng: RngStream,
    dt: float,
    n_steps: int,
) -> Trajectory:
    """Integrate one trajectory against a time-synchronized state timeline."""
    spec = spec or DGSpec()
    psi0 = timeline.state(0)
    rho0 = density(psi0)
    if rho0.interpolate(x0) <= EPS_NODE * rho0.values.max():
        raise ConfigurationError("initial position sits in the nodal region")
    block = TrajectoryBlock.from_positions(
        np.array([x0]), rng.master_seed, first_stream=rng.stream_index
    )
    block.counters[0] = rng._counters.get(GAUSS_TAG, 0)
    times = timeline.t0 + dt * np.arange(n_steps + 1)
    positions = np.empty(n_steps + 1)
    positions[0] = x0
    for k in range(n_steps):
        fields = prepare_step_fields(timeline.state(k), params, spec, dt)
        step_block(block, fields, dt)
        positions[k + 1] = block.x[0]
    rng._counters[GAUSS_TAG] = int(block.counters[0])
    return Trajectory(
        times=times,
        positions=positions,
        nodal_incidents=int(block.recovered[0]),
        nodal_frozen=int(block.frozen[0]),
        left_domain=bool(block.reflections[0] > 0),
        winding=int(block.winding[0]),
    )


def total_displacement(
    block: TrajectoryBlock, x_start: np.ndarray, domain: Domain1D
) -> np.ndarray:
    """Displacement since x_start, unwrapping ring windings."""
    if domain.is_ring:
        return (block.x - x_start) + block.winding * domain.length
    return block.x - x_start
