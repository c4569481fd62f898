"""Discrete beable dynamics: finite-dimensional quantum evolution, probability
currents (minimal + rotating-frame + extra divergence-free), the rate-gauge
family realizing a current, the master equation, and stochastic jump
trajectories."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError, ScenarioError, SingularProbabilityError
from .rng import JUMP_TAG, UNIFORM_TAG, stream_keys, uniform_from_keys

EPS_P = 1e-12  # occupation probability below which rates are singular
HERMITICITY_TOL = 1e-12


def _check_hermitian(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigurationError(f"{name} must be a square matrix")
    if np.abs(m - m.conj().T).max() > HERMITICITY_TOL:
        raise ConfigurationError(f"{name} must be Hermitian")
    return m


@dataclass
class ProjectorFamily:
    """Complete orthogonal projector family; either the fixed canonical basis
    or a one-parameter rotation U(t) = exp(-i G rate t / hbar) of it."""

    dim: int
    generator: Optional[np.ndarray] = None  # Hermitian G; None = fixed family
    rate: float = 0.0

    def __post_init__(self):
        if self.generator is not None:
            self.generator = _check_hermitian(self.generator, "rotation generator")
            if self.generator.shape[0] != self.dim:
                raise ConfigurationError("generator dimension mismatch")
        self._eig = None

    @property
    def rotating(self) -> bool:
        return self.generator is not None and self.rate != 0.0

    def frame(self, t: float, hbar: float = 1.0) -> np.ndarray:
        """Unitary whose columns are the projector basis vectors at time t."""
        if not self.rotating:
            return np.eye(self.dim, dtype=complex)
        if self._eig is None:
            self._eig = np.linalg.eigh(self.generator)
        g, w = self._eig
        phases = np.exp(-1j * g * self.rate * t / hbar)
        return (w * phases) @ w.conj().T


@dataclass
class BeableSystem:
    """Finite Hermitian Hamiltonian, projector family, and the state vector."""

    hamiltonian: np.ndarray
    projectors: ProjectorFamily
    state: np.ndarray
    time: float = 0.0
    hbar: float = 1.0

    def __post_init__(self):
        self.hamiltonian = _check_hermitian(self.hamiltonian, "Hamiltonian")
        self.state = np.asarray(self.state, dtype=complex)
        n = self.hamiltonian.shape[0]
        if self.projectors.dim != n or self.state.shape != (n,):
            raise ConfigurationError("dimension mismatch between system parts")
        nrm = np.linalg.norm(self.state)
        if abs(nrm - 1.0) > 1e-10:
            raise ConfigurationError("state vector must be normalized")
        self.state = self.state / nrm
        self._initial = (self.state.copy(), self.time)
        self._eig = np.linalg.eigh(self.hamiltonian)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def state_at(self, t: float) -> np.ndarray:
        """Exact state at absolute time t via the eigendecomposition of H."""
        psi0, t0 = self._initial
        e, v = self._eig
        return (v * np.exp(-1j * e * (t - t0) / self.hbar)) @ (v.conj().T @ psi0)


def evolve_state(sys: BeableSystem, dt: float) -> np.ndarray:
    """Advance the system state by dt (exact propagator); returns the new state."""
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    sys.state = sys.state_at(sys.time + dt)
    sys.time = sys.time + dt
    return sys.state


def quantum_probabilities(sys: BeableSystem, t: Optional[float] = None) -> np.ndarray:
    """p_i(t) = |<e_i(t)|psi(t)>|^2 over the projector family."""
    t = sys.time if t is None else t
    psi = sys.state_at(t)
    frame = sys.projectors.frame(t, sys.hbar)
    c = frame.conj().T @ psi
    return np.abs(c) ** 2


def pdot(sys: BeableSystem, t: Optional[float] = None) -> np.ndarray:
    """dp_j/dt = (2/hbar) Im <psi|P_j H|psi> for the fixed projector family."""
    if sys.projectors.rotating:
        raise ConfigurationError(
            "pdot formula applies to the fixed family; rotating families use "
            "the row sums of the total current"
        )
    t = sys.time if t is None else t
    psi = sys.state_at(t)
    return (2.0 / sys.hbar) * np.imag(np.conj(psi) * (sys.hamiltonian @ psi))


@dataclass
class JumpCurrent:
    """Antisymmetric current matrix J_ji (probability per time from i to j).

    `floor` is the rounding-noise scale of the assembly; rate constructions
    treat entries at or below it as exact zeros, so that e.g. the residue of
    sin(pi) does not masquerade as a current into an empty state.
    """

    matrix: np.ndarray
    time: float = 0.0
    floor: float = 0.0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if np.abs(self.matrix + self.matrix.T).max() > 1e-12:
            raise ConfigurationError("jump current must be antisymmetric")

    def significant(self) -> np.ndarray:
        """Current matrix with sub-floor rounding residue zeroed."""
        if self.floor <= 0.0:
            return self.matrix
        return np.where(np.abs(self.matrix) > self.floor, self.matrix, 0.0)

    def row_sums(self) -> np.ndarray:
        """sum_i J_ji, the implied dp_j/dt."""
        return self.matrix.sum(axis=1)


@dataclass
class DGJumpSpec:
    """Extra antisymmetric current with exactly vanishing row sums."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if np.abs(self.matrix + self.matrix.T).max() != 0.0:
            raise ConfigurationError("extra jump current must be exactly antisymmetric")
        if np.abs(self.matrix.sum(axis=1)).max() != 0.0:
            raise ConfigurationError("extra jump current must have zero row sums")


def cyclic_dg_current(dim: int, flux: float) -> DGJumpSpec:
    """The cycle current 1 -> 2 -> ... -> dim -> 1 with constant flux."""
    j = np.zeros((dim, dim))
    for i in range(dim):
        j[(i + 1) % dim, i] = flux
        j[i, (i + 1) % dim] = -flux
    return DGJumpSpec(j)


def total_current(
    sys: BeableSystem, t: Optional[float] = None, dg: Optional[DGJumpSpec] = None
) -> JumpCurrent:
    """J_ji = (2/hbar) Im<psi|P_j H P_i|psi> + <psi|(dP_j P_i - dP_i P_j)|psi>
    + extra current, antisymmetrized against rounding."""
    t = sys.time if t is None else t
    psi = sys.state_at(t)
    frame = sys.projectors.frame(t, sys.hbar)
    c = frame.conj().T @ psi
    h_rot = frame.conj().T @ sys.hamiltonian @ frame
    j = (2.0 / sys.hbar) * np.imag(np.outer(np.conj(c), c) * h_rot)
    scale = (2.0 / sys.hbar) * np.abs(h_rot).max()
    if sys.projectors.rotating:
        g_rot = frame.conj().T @ sys.projectors.generator @ frame
        lam = sys.projectors.rate
        j = j - (2.0 * lam / sys.hbar) * np.imag(np.outer(np.conj(c), c) * g_rot)
        scale += (2.0 * abs(lam) / sys.hbar) * np.abs(g_rot).max()
    if dg is not None:
        j = j + dg.matrix
        scale += np.abs(dg.matrix).max()
    j = 0.5 * (j - j.T)
    np.fill_diagonal(j, 0.0)
    return JumpCurrent(j, t, floor=1e-13 * scale)


# ---------------------------------------------------------------------------
# rates realizing a current


@dataclass
class RateMatrix:
    """Nonnegative off-diagonal jump rates T_ji (from i to j), zero diagonal."""

    matrix: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.min() < 0:
            raise ConfigurationError("rates must be nonnegative")
        if np.abs(np.diag(self.matrix)).max() > 0:
            raise ConfigurationError("rate matrix must have zero diagonal")

    def realized_current(self, p: np.ndarray) -> np.ndarray:
        return self.matrix * p[None, :] - (self.matrix * p[None, :]).T

    def generator(self) -> np.ndarray:
        """Matrix A with dp/dt = A p."""
        a = self.matrix.copy()
        a[np.diag_indices_from(a)] -= a.sum(axis=0)
        return a


def _guard_probabilities(j: np.ndarray, p: np.ndarray) -> None:
    has_entry = (np.abs(j) > 0).any(axis=0)
    if (has_entry & (p <= EPS_P)).any():
        raise SingularProbabilityError(
            "jump current feeds a state of vanishing occupation probability"
        )


def bell_rates(j: JumpCurrent, p: np.ndarray) -> RateMatrix:
    """Minimal nonnegative rates: T_ji = J_ji/p_i where J_ji > 0, else 0."""
    jm = j.significant()
    _guard_probabilities(jm, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(jm > 0.0, jm / p[None, :], 0.0)
    return RateMatrix(t, j.time)


def generalized_rates(
    j: JumpCurrent, p: np.ndarray, extra: np.ndarray
) -> RateMatrix:
    """Rates with a symmetric nonnegative surplus: where J_ji > 0,
    T_ji = (J_ji + extra_ji)/p_i and T_ij = extra_ji/p_j; zero where J_ji = 0.

    The surplus adds equal and opposite flows, so the realized current (and
    hence the master-equation solution) is unchanged.
    """
    jm = j.significant()
    extra = np.asarray(extra, dtype=float)
    if extra.shape != jm.shape:
        raise ConfigurationError("surplus matrix shape mismatch")
    if np.abs(extra - extra.T).max() > 1e-14 or extra.min() < 0:
        raise ConfigurationError("surplus must be symmetric and nonnegative")
    if (extra[jm == 0.0] != 0.0).any():
        raise ConfigurationError("surplus must vanish where the current does")
    _guard_probabilities(jm, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(jm != 0.0, (np.maximum(jm, 0.0) + extra) / p[None, :], 0.0)
    return RateMatrix(t, j.time)


def mask_surplus(extra: np.ndarray, j: JumpCurrent) -> np.ndarray:
    """Zero the surplus wherever the current vanishes (keeps it admissible)."""
    e = np.where(j.significant() != 0.0, np.asarray(extra, dtype=float), 0.0)
    return 0.5 * (e + e.T)


RateProvider = Callable[[float], RateMatrix]


def bell_choice(sys: BeableSystem, dg: Optional[DGJumpSpec] = None) -> RateProvider:
    def rates(t: float) -> RateMatrix:
        return bell_rates(total_current(sys, t, dg), quantum_probabilities(sys, t))

    return rates


def generalized_choice(
    sys: BeableSystem, extra: np.ndarray, dg: Optional[DGJumpSpec] = None
) -> RateProvider:
    def rates(t: float) -> RateMatrix:
        j = total_current(sys, t, dg)
        return generalized_rates(j, quantum_probabilities(sys, t), mask_surplus(extra, j))

    return rates


# ---------------------------------------------------------------------------
# master equation


def master_step(p: np.ndarray, rates: Union[RateMatrix, RateProvider], dt: float,
                t: float = 0.0) -> np.ndarray:
    """One step of dp_j/dt = sum_i (T_ji p_i - T_ij p_j).

    `rates` may be a fixed RateMatrix or a callable t -> RateMatrix; the
    callable form evaluates the rates at the stage times, which time-dependent
    scenarios need for their accuracy.  The step is RK4 while the exit rates
    satisfy the explicit-scheme guard dt*max_j(sum_i T_ij) < 0.1; when a
    minimal-rate construction blows up near a vanishing occupation, the step
    switches to the midpoint exponential exp(dt*A(t+dt/2)), which stays
    positivity- and probability-preserving for arbitrarily stiff rates.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    if isinstance(rates, RateMatrix):
        fixed = rates

        def at(_tt):
            return fixed

    else:
        at = rates

    def deriv(tt, y):
        return at(tt).generator() @ y

    mid = at(t + 0.5 * dt)
    if dt * mid.matrix.sum(axis=0).max() >= 0.1:
        import scipy.linalg

        new = scipy.linalg.expm(dt * mid.generator()) @ p
    else:
        k1 = deriv(t, p)
        k2 = deriv(t + 0.5 * dt, p + 0.5 * dt * k1)
        k3 = deriv(t + 0.5 * dt, p + 0.5 * dt * k2)
        k4 = deriv(t + dt, p + dt * k3)
        new = p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if new.min() < -1e-10:
        raise ScenarioError(f"master equation produced negative probability {new.min():.2e}")
    return np.maximum(new, 0.0)


def _advance_adaptive(p, rates, t, h, tol, depth=0):
    """Step-doubling refinement: subdivide until one step and two half steps
    agree within tol (handles the stiff windows of minimal-rate gauges).

    Depth is capped so that stage evaluations never press into the band where
    an occupation probability sits below the singularity guard; by then the
    occupation itself is far below any tolerance of interest.
    """
    full = master_step(p, rates, h, t=t)
    half = master_step(p, rates, 0.5 * h, t=t)
    half = master_step(half, rates, 0.5 * h, t=t + 0.5 * h)
    if np.abs(full - half).max() < tol or depth >= 9:
        return half
    left = _advance_adaptive(p, rates, t, 0.5 * h, tol, depth + 1)
    return _advance_adaptive(left, rates, t + 0.5 * h, 0.5 * h, tol, depth + 1)


def integrate_master(
    p0: np.ndarray,
    rates: RateProvider,
    t0: float,
    dt: float,
    n_steps: int,
    tol: Optional[float] = None,
) -> np.ndarray:
    """Master-equation integration; probabilities at all n_steps+1 step times.

    With tol set, each grid step is refined by step doubling until converged,
    which keeps the solution accurate through near-singular rate windows.
    """
    out = np.empty((n_steps + 1, len(p0)))
    out[0] = p0
    p = np.asarray(p0, dtype=float)
    for k in range(n_steps):
        t = t0 + k * dt
        if tol is None:
            p = master_step(p, rates, dt, t=t)
        else:
            p = _advance_adaptive(p, rates, t, dt, tol)
        out[k + 1] = p
    return out


# ---------------------------------------------------------------------------
# stochastic jump trajectories


@dataclass
class JumpEnsembleResult:
    sample_times: np.ndarray
    frequencies: np.ndarray  # (n_samples, dim)
    quantum_probs: np.ndarray  # (n_samples, dim)
    transition_counts: np.ndarray  # (dim, dim), [to, from]
    trapped_events: int
    rate_guard_violations: int
    final_occupations: np.ndarray


def simulate_jump_process(
    sys: BeableSystem,
    dg: Optional[DGJumpSpec],
    rate_choice: RateProvider,
    initial: Union[int, str],
    master_seed: int,
    dt: float,
    t_final: float,
    n_trajectories: int,
    sample_times: Optional[Sequence[float]] = None,
) -> JumpEnsembleResult:
    """Fixed-step thinning simulation of the time-inhomogeneous jump process.

    Per step of length dt a trajectory in state i jumps to j with probability
    T_ji(t) dt, evaluated on the exactly evolved quantum state.  dt must keep
    the per-step total jump probability small; violations of the 0.05 guard
    are counted, and per-step probabilities are renormalized if they ever
    exceed one.
    """
    n_steps = int(round(t_final / dt))
    dim = sys.dim
    if sample_times is None:
        sample_times = [t_final]
    sample_steps = []
    for t in sample_times:
        k = int(round((t - sys.time) / dt))
        if k < 0 or k > n_steps or abs(sys.time + k * dt - t) > 1e-9 + 1e-6 * dt:
            raise ConfigurationError(f"sample time {t} not aligned to the step grid")
        sample_steps.append(k)
    sample_steps = sorted(set(sample_steps))
    sample_set = set(sample_steps)

    streams = np.arange(n_trajectories, dtype=np.uint64)
    key0, key1 = stream_keys(master_seed, streams)
    p0 = quantum_probabilities(sys, sys.time)
    if initial == "quantum":
        u0 = uniform_from_keys(key0, key1, np.zeros(n_trajectories, np.uint64),
                               tag=UNIFORM_TAG)
        occ = np.searchsorted(np.cumsum(p0), u0, side="right")
        occ = np.clip(occ, 0, dim - 1).astype(np.intp)
    else:
        i0 = int(initial)
        if p0[i0] <= EPS_P:
            raise ConfigurationError("initial state has vanishing quantum probability")
        occ = np.full(n_trajectories, i0, dtype=np.intp)

    freqs, probs_out = [], []
    transitions = np.zeros((dim, dim), dtype=np.int64)
    trapped = 0
    guard_hits = 0

    def record(k):
        freqs.append(np.bincount(occ, minlength=dim) / n_trajectories)
        probs_out.append(quantum_probabilities(sys, sys.time + k * dt))

    if 0 in sample_set:
        record(0)
    for k in range(n_steps):
        t = sys.time + k * dt
        p_t = quantum_probabilities(sys, t)
        trapped += int((p_t[occ] <= EPS_P).sum())
        rates = rate_choice(t)
        jump_prob = rates.matrix.T * dt  # [from, to]
        np.fill_diagonal(jump_prob, 0.0)
        row_tot = jump_prob.sum(axis=1)
        if (row_tot >= 0.05).any():
            guard_hits += 1
        over = row_tot > 1.0
        if over.any():
            jump_prob[over] /= row_tot[over, None]
        cum = np.cumsum(jump_prob, axis=1)
        u = uniform_from_keys(
            key0, key1, np.full(n_trajectories, k, dtype=np.uint64), tag=JUMP_TAG
        )
        rows = cum[occ]
        does_jump = u < rows[:, -1]
        if does_jump.any():
            target = (u[does_jump, None] < rows[does_jump]).argmax(axis=1)
            src = occ[does_jump]
            np.add.at(transitions, (target, src), 1)
            occ[does_jump] = target
        if (k + 1) in sample_set:
            record(k + 1)

    t_arr = sys.time + dt * np.asarray(sample_steps, dtype=float)
    return JumpEnsembleResult(
        sample_times=t_arr,
        frequencies=np.asarray(freqs),
        quantum_probs=np.asarray(probs_out),
        transition_counts=transitions,
        trapped_events=trapped,
        rate_guard_violations=guard_hits,
        final_occupations=occ,
    )


def rabi_system(omega: float, hbar: float = 1.0) -> BeableSystem:
    """Two-level system H = (omega/2) sigma_x starting in the first basis state."""
    h = 0.5 * omega * np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    return BeableSystem(h, ProjectorFamily(2), np.array([1.0, 0.0]), hbar=hbar)
