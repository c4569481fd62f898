"""1D spatial grids (hard-walled line or periodic ring) and real fields on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

LINE = "line"
RING = "ring"

#: Relative density threshold below which derived fields are flagged.
#: Trajectories provably avoid nodes; this guard only protects the numerics.
EPS_NODE = 1e-12


@dataclass(frozen=True)
class Domain1D:
    """Uniform 1D grid, either a line with hard walls or a periodic ring.

    On a ring, x_max is identified with x_min: grid points are
    x_min + i*dx for i < n_points and dx = (x_max - x_min)/n_points.
    On a line both endpoints are grid points and dx = (x_max - x_min)/(n_points - 1).
    """

    kind: str
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.kind not in (LINE, RING):
            raise ConfigurationError(f"unknown domain kind {self.kind!r}")
        if self.n_points < 16:
            raise ConfigurationError("n_points must be at least 16")
        if not self.x_max > self.x_min:
            raise ConfigurationError("x_max must exceed x_min")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        if self.kind == RING:
            return self.length / self.n_points
        return self.length / (self.n_points - 1)

    @property
    def is_ring(self) -> bool:
        return self.kind == RING

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    def wrap(self, x):
        """Map positions into [x_min, x_max) (ring only)."""
        if not self.is_ring:
            return x
        return self.x_min + np.mod(x - self.x_min, self.length)

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Central-difference derivative; periodic on a ring, one-sided at line ends."""
        values = np.asarray(values)
        if self.is_ring:
            return (np.roll(values, -1) - np.roll(values, 1)) / (2.0 * self.dx)
        out = np.empty_like(values, dtype=np.result_type(values, float))
        out[1:-1] = (values[2:] - values[:-2]) / (2.0 * self.dx)
        out[0] = (values[1] - values[0]) / self.dx
        out[-1] = (values[-1] - values[-2]) / self.dx
        return out

    def integrate(self, values: np.ndarray) -> float:
        """Riemann sum consistent with the normalization convention sum(v)*dx."""
        return float(np.sum(values) * self.dx)


def line_domain(x_min: float, x_max: float, n_points: int) -> Domain1D:
    return Domain1D(LINE, x_min, x_max, n_points)


def ring_domain(x_min: float, x_max: float, n_points: int) -> Domain1D:
    return Domain1D(RING, x_min, x_max, n_points)


@dataclass
class RealField:
    """Real-valued samples on a grid, with a mask for near-nodal points.

    Flagged entries hold 0.0 as a neutral sentinel; ``flagged`` records where a
    consumer must apply its own guard (the SDE stepper rejects proposals whose
    interpolated density falls below the nodal threshold).
    """

    domain: Domain1D
    values: np.ndarray
    time: float = 0.0
    flagged: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.domain.n_points,):
            raise ConfigurationError("field shape does not match domain")
        if self.flagged is None:
            self.flagged = np.zeros(self.domain.n_points, dtype=bool)
        else:
            self.flagged = np.asarray(self.flagged, dtype=bool)

    def interpolate(self, x):
        """Linear interpolation at positions x (periodic across the ring seam)."""
        return interpolate_linear(self.domain, self.values, x)


def interpolate_linear(domain: Domain1D, values: np.ndarray, x):
    """Linear interpolation of grid samples at arbitrary positions."""
    x = np.asarray(x, dtype=float)
    dx = domain.dx
    if domain.is_ring:
        pos = np.mod(x - domain.x_min, domain.length) / dx
        idx = np.floor(pos).astype(np.intp) % domain.n_points
        frac = pos - np.floor(pos)
        nxt = (idx + 1) % domain.n_points
    else:
        pos = np.clip((x - domain.x_min) / dx, 0.0, domain.n_points - 1.0)
        idx = np.minimum(np.floor(pos).astype(np.intp), domain.n_points - 2)
        frac = pos - idx
        nxt = idx + 1
    return values[idx] * (1.0 - frac) + values[nxt] * frac
