"""Wavefunctions on 1D grids: analytic states, Crank-Nicolson propagation,
and the derived real fields (density, phase gradient, log-density gradient)
that every particle dynamics consumes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.integrate
import scipy.sparse
import scipy.sparse.linalg
from scipy.special import erfc, eval_hermite

from .errors import ConfigurationError, DomainTruncationError
from .grid import EPS_NODE, Domain1D, RealField

TRUNCATION_TOL = 1e-10


@dataclass(frozen=True)
class PhysParams:
    """Physical constants of a continuum scenario.

    The diffusion coefficient nu = alpha*hbar/(2*mass) is always derived from
    these, never stored separately; alpha=1 is the standard stochastic theory,
    alpha=0 the deterministic guidance limit.
    """

    hbar: float = 1.0
    mass: float = 1.0
    alpha: float = 1.0
    potential: Optional[np.ndarray] = None  # tabulated V(x) per grid point

    def __post_init__(self):
        if self.hbar <= 0 or self.mass <= 0:
            raise ConfigurationError("hbar and mass must be positive")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be nonnegative")
        if self.potential is not None:
            object.__setattr__(
                self, "potential", np.asarray(self.potential, dtype=float)
            )

    @property
    def nu(self) -> float:
        """Diffusion coefficient alpha*hbar/(2m)."""
        return self.alpha * self.hbar / (2.0 * self.mass)

    def potential_on(self, domain: Domain1D) -> np.ndarray:
        if self.potential is None:
            return np.zeros(domain.n_points)
        if self.potential.shape != (domain.n_points,):
            raise ConfigurationError("tabulated potential does not match domain")
        return self.potential


def harmonic_params(
    omega: float, domain: Domain1D, hbar: float = 1.0, mass: float = 1.0, alpha: float = 1.0
) -> PhysParams:
    """PhysParams with V(x) = m*omega^2*x^2/2 tabulated on the grid."""
    v = 0.5 * mass * omega**2 * domain.x**2
    return PhysParams(hbar=hbar, mass=mass, alpha=alpha, potential=v)


@dataclass
class Wavefunction:
    """Complex amplitudes on a grid at a fixed time; immutable snapshot by convention."""

    domain: Domain1D
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.domain.n_points,):
            raise ConfigurationError("amplitude array does not match domain")

    @property
    def norm_squared(self) -> float:
        return self.domain.integrate(np.abs(self.amplitudes) ** 2)

    def normalized(self) -> "Wavefunction":
        n2 = self.norm_squared
        if n2 < 1e-12:
            raise ConfigurationError("state has (near-)zero norm; cancellation?")
        return Wavefunction(self.domain, self.amplitudes / math.sqrt(n2), self.time)


# ---------------------------------------------------------------------------
# analytic states


def _hermite_gaussian(n: int, y: np.ndarray) -> np.ndarray:
    # dimensionless oscillator eigenfunction: pi^(-1/4)/sqrt(2^n n!) H_n(y) e^{-y^2/2}
    norm = math.pi ** (-0.25) / math.sqrt(2.0**n * math.factorial(n))
    return norm * eval_hermite(n, y) * np.exp(-0.5 * y**2)


def make_harmonic_eigenstate(
    n: int, omega: float, params: PhysParams, domain: Domain1D, t: float = 0.0
) -> Wavefunction:
    """Analytic oscillator eigenstate sampled on the grid, phase e^{-i E_n t/hbar}."""
    if n < 0:
        raise ConfigurationError("level index must be nonnegative")
    beta = math.sqrt(params.mass * omega / params.hbar)  # inverse length scale

    def prob(x):
        return beta * _hermite_gaussian(n, beta * x) ** 2

    tail = (
        scipy.integrate.quad(prob, domain.x_max, np.inf)[0]
        + scipy.integrate.quad(prob, -np.inf, domain.x_min)[0]
    )
    if tail > TRUNCATION_TOL:
        raise DomainTruncationError(
            f"eigenstate n={n} has mass {tail:.2e} outside the domain"
        )
    energy = params.hbar * omega * (n + 0.5)
    amps = math.sqrt(beta) * _hermite_gaussian(n, beta * domain.x) * np.exp(
        -1j * energy * t / params.hbar
    )
    return Wavefunction(domain, amps, t).normalized()


def make_superposition(
    states: Sequence[Wavefunction], coeffs: Sequence[complex]
) -> Wavefunction:
    """Normalized linear combination of states sharing a domain and time."""
    if len(states) == 0 or len(states) != len(coeffs):
        raise ConfigurationError("need one coefficient per state")
    if not any(abs(c) > 0 for c in coeffs):
        raise ConfigurationError("at least one coefficient must be nonzero")
    ref = states[0]
    for s in states[1:]:
        if s.domain != ref.domain:
            raise ConfigurationError("states live on different domains")
        if abs(s.time - ref.time) > 1e-12:
            raise ConfigurationError("states carry different time stamps")
    amps = sum(c * s.amplitudes for c, s in zip(coeffs, states))
    return Wavefunction(ref.domain, amps, ref.time).normalized()


def make_plane_wave_ring(k_index: int, domain: Domain1D, t: float = 0.0) -> Wavefunction:
    """e^{ikx}/sqrt(L) with k = 2*pi*k_index/L; uniform density 1/L."""
    if not domain.is_ring:
        raise ConfigurationError("plane waves require a ring domain")
    k = 2.0 * math.pi * k_index / domain.length
    amps = np.exp(1j * k * domain.x) / math.sqrt(domain.length)
    return Wavefunction(domain, amps, t)


def make_free_gaussian(
    x0: float,
    p0: float,
    sigma0: float,
    t: float,
    params: PhysParams,
    domain: Domain1D,
) -> Wavefunction:
    """Freely spreading Gaussian packet at time t (closed form).

    Density std obeys width^2(t) = sigma0^2 + (hbar*t/(2*m*sigma0))^2.
    """
    if sigma0 <= 0:
        raise ConfigurationError("sigma0 must be positive")
    hbar, m = params.hbar, params.mass
    tau = hbar * t / (2.0 * m * sigma0**2)
    sig_t2 = sigma0**2 * (1.0 + tau**2)
    mu = x0 + p0 * t / m
    sig_t = math.sqrt(sig_t2)
    tail = 0.5 * erfc((domain.x_max - mu) / (sig_t * math.sqrt(2.0))) + 0.5 * erfc(
        (mu - domain.x_min) / (sig_t * math.sqrt(2.0))
    )
    if tail > TRUNCATION_TOL:
        raise DomainTruncationError(f"packet has mass {tail:.2e} outside the domain")
    x = domain.x
    envelope = (2.0 * math.pi * sigma0**2) ** -0.25 / np.sqrt(1.0 + 1j * tau)
    amps = envelope * np.exp(
        -((x - mu) ** 2) * (1.0 - 1j * tau) / (4.0 * sig_t2)
        + 1j * (p0 * (x - x0) / hbar - p0**2 * t / (2.0 * m * hbar))
    )
    return Wavefunction(domain, amps, t).normalized()


# ---------------------------------------------------------------------------
# Crank-Nicolson propagation


class CrankNicolson:
    """One-step unitary propagator (I + i*dt*H/2hbar)^-1 (I - i*dt*H/2hbar).

    The implicit factor is LU-factorized once; a step is a tridiagonal
    matrix-vector product plus a cached sparse solve.  Line domains pin the
    end points to zero (hard walls); rings use the periodic stencil.
    """

    def __init__(self, domain: Domain1D, params: PhysParams, dt: float):
        if dt <= 0:
            raise ConfigurationError("dt must be positive")
        if dt > 10.0 * domain.dx**2 * params.mass / params.hbar:
            warnings.warn(
                "dt is large relative to the grid scale dx^2*m/hbar; "
                "Crank-Nicolson stays stable but phase accuracy degrades",
                stacklevel=2,
            )
        self.domain = domain
        self.params = params
        self.dt = dt
        n = domain.n_points
        hop = params.hbar**2 / (2.0 * params.mass * domain.dx**2)
        v = params.potential_on(domain)
        diag = 2.0 * hop + v
        z = 1j * dt / (2.0 * params.hbar)
        if domain.is_ring:
            main = scipy.sparse.diags(
                [-hop * np.ones(n - 1), diag, -hop * np.ones(n - 1)], [-1, 0, 1]
            ).tolil()
            main[0, n - 1] = -hop
            main[n - 1, 0] = -hop
            h = main.tocsc()
            self._interior = slice(None)
        else:
            # hard walls: end amplitudes are held at zero, interior evolves
            h = scipy.sparse.diags(
                [
                    -hop * np.ones(n - 3),
                    diag[1:-1],
                    -hop * np.ones(n - 3),
                ],
                [-1, 0, 1],
            ).tocsc()
            self._interior = slice(1, n - 1)
        eye = scipy.sparse.identity(h.shape[0], dtype=complex, format="csc")
        self._lu = scipy.sparse.linalg.splu((eye + z * h).tocsc())
        self._explicit = (eye - z * h).tocsr()

    def step_values(self, amps: np.ndarray) -> np.ndarray:
        out = np.zeros_like(amps)
        sub = amps[self._interior]
        out[self._interior] = self._lu.solve(self._explicit @ sub)
        return out

    def step(self, psi: Wavefunction) -> Wavefunction:
        if psi.domain != self.domain:
            raise ConfigurationError("propagator built for a different domain")
        return Wavefunction(
            self.domain, self.step_values(psi.amplitudes), psi.time + self.dt
        )


def propagate_cn(psi: Wavefunction, params: PhysParams, dt: float) -> Wavefunction:
    """Single Crank-Nicolson step (builds a one-shot propagator)."""
    return CrankNicolson(psi.domain, params, dt).step(psi)


# ---------------------------------------------------------------------------
# derived real fields


def density(psi: Wavefunction) -> RealField:
    """rho = |psi|^2."""
    return RealField(psi.domain, np.abs(psi.amplitudes) ** 2, psi.time)


def _nodal_mask(rho: np.ndarray) -> np.ndarray:
    return rho < EPS_NODE * rho.max()


def grad_phase(psi: Wavefunction) -> RealField:
    """Phase gradient Im(psi* dpsi)/rho; near-nodal points flagged and zeroed."""
    rho = np.abs(psi.amplitudes) ** 2
    dpsi = psi.domain.gradient(psi.amplitudes)
    mask = _nodal_mask(rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.imag(np.conj(psi.amplitudes) * dpsi) / rho
    vals[mask] = 0.0
    return RealField(psi.domain, vals, psi.time, flagged=mask)


def grad_log_density(psi: Wavefunction) -> RealField:
    """Log-density gradient (grad rho)/rho = 2 Re(psi* dpsi)/rho, with nodal flags."""
    rho = np.abs(psi.amplitudes) ** 2
    dpsi = psi.domain.gradient(psi.amplitudes)
    mask = _nodal_mask(rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = 2.0 * np.real(np.conj(psi.amplitudes) * dpsi) / rho
    vals[mask] = 0.0
    return RealField(psi.domain, vals, psi.time, flagged=mask)


def unwrapped_phase(psi: Wavefunction) -> np.ndarray:
    """Unwrapped complex argument of the amplitudes (diagnostic helper)."""
    return np.unwrap(np.angle(psi.amplitudes))
