"""Wavefunction timelines: the time-synchronized psi(t) snapshots that drive
trajectory ensembles and grid oracles.

A timeline hands out the state at step k (time t0 + k*dt).  The numeric
variant advances a cached Crank-Nicolson propagator and therefore only allows
non-decreasing step access; analytic variants evaluate a closed form at any
step.
"""

from __future__ import annotations

from typing import Callable

from .errors import ConfigurationError
from .wavefunction import CrankNicolson, PhysParams, Wavefunction


class CrankNicolsonTimeline:
    """Sequential timeline backed by repeated Crank-Nicolson steps."""

    def __init__(self, psi0: Wavefunction, params: PhysParams, dt: float):
        self.params = params
        self.dt = dt
        self.t0 = psi0.time
        self._psi0 = psi0
        self._prop = CrankNicolson(psi0.domain, params, dt)
        self._step = 0
        self._current = psi0

    @property
    def domain(self):
        return self._psi0.domain

    def reset(self):
        self._step = 0
        self._current = self._psi0

    def state(self, k: int) -> Wavefunction:
        if k < self._step:
            if k == 0:
                self.reset()
            else:
                raise ConfigurationError(
                    "Crank-Nicolson timeline only supports forward access"
                )
        while self._step < k:
            self._current = self._prop.step(self._current)
            self._step += 1
        return self._current


class AnalyticTimeline:
    """Timeline wrapping a closed-form state builder t -> Wavefunction."""

    def __init__(self, builder: Callable[[float], Wavefunction], t0: float, dt: float):
        self.builder = builder
        self.t0 = t0
        self.dt = dt
        self._domain = builder(t0).domain

    @property
    def domain(self):
        return self._domain

    def reset(self):
        pass

    def state(self, k: int) -> Wavefunction:
        return self.builder(self.t0 + k * self.dt)
