"""pilotwave: quantum-equilibrium-preserving particle dynamics laboratory.

Continuum side: wavefunctions on 1D grids drive deterministic or diffusive
trajectories (guidance law plus optional divergence-free extra currents),
cross-validated against a drift-diffusion grid solver.  Discrete side:
finite-dimensional beable jump processes realizing a chosen probability
current, cross-validated against the master equation.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .dynamics import (
    DGSpec,
    DriftFields,
    check_cross_terms,
    check_finiteness,
    check_weak_continuity,
    current_velocity,
    dg_velocities,
    drift_fields,
    osmotic_velocity,
)
from .ensemble import (
    DistanceSeries,
    EmpiricalDensity,
    EnsembleResult,
    convergence_experiment,
    evolve_ensemble,
    sample_density,
)
from .errors import (
    ConfigurationError,
    DomainTruncationError,
    PilotwaveError,
    ScenarioError,
    SchemeFailureError,
    SingularProbabilityError,
)
from .fpe import FokkerPlanckSolver, GridDensity, fpe_backward_step, fpe_step
from .grid import Domain1D, RealField, line_domain, ring_domain
from .rng import RngStream
from .sde import Trajectory, em_step, propagate_trajectory, wiener_increment
from .timeline import AnalyticTimeline, CrankNicolsonTimeline
from .wavefunction import (
    CrankNicolson,
    PhysParams,
    Wavefunction,
    density,
    grad_log_density,
    grad_phase,
    harmonic_params,
    make_free_gaussian,
    make_harmonic_eigenstate,
    make_plane_wave_ring,
    make_superposition,
    propagate_cn,
)

__version__ = "0.1.0"
