"""Simulation and rate verification for a slow-fast stochastic wave/heat system.

A slow stochastic wave ``(U, V)`` is driven by a fast heat equation ``Y`` that
relaxes on time scale ``eps``.  The package integrates the coupled system, its
averaged limit and the limit equation for the normal deviations, estimates the
averaged coefficients ergodically, and measures strong, weak and CLT
convergence rates with standard errors.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    InvalidInputError,
    NoiseDominatedError,
    OracleFailure,
    ReplicaAbortError,
    SlowFastError,
)
from .spectral import (  # noqa: E402
    PhaseState,
    SpectralBasis,
    SpectralField,
    apply_wave_group,
    energy_norm,
    galerkin_project,
    sobolev_norm,
    to_physical,
    to_spectral,
)
from .noise import NoiseSpec, NoiseStream, sample_increment  # noqa: E402
from .coefficients import (  # noqa: E402
    BoundedFamily,
    CoefficientPair,
    HolderFamily,
    LinearTestFamily,
    make_family,
)
from .dynamics import (  # noqa: E402
    SimConfig,
    Streams,
    Trajectory,
    compute_Zeps,
    simulate_averaged,
    simulate_coupled,
    simulate_limit_deviation,
    simulate_slow_fast,
)
from .estimators import (  # noqa: E402
    ErgodicConfig,
    estimate_DFbar,
    estimate_Fbar,
    estimate_Psi,
    estimate_Sigma,
    fit_rate,
)
from .experiments import ExperimentSpec, ResultRecord, emit_results, load_spec, run_experiment  # noqa: E402

__all__ = [
    "__version__",
    "ConfigError",
    "InvalidInputError",
    "NoiseDominatedError",
    "OracleFailure",
    "ReplicaAbortError",
    "SlowFastError",
    "PhaseState",
    "SpectralBasis",
    "SpectralField",
    "apply_wave_group",
    "energy_norm",
    "galerkin_project",
    "sobolev_norm",
    "to_physical",
    "to_spectral",
    "BoundedFamily",
    "CoefficientPair",
    "HolderFamily",
    "LinearTestFamily",
    "make_family",
    "SimConfig",
    "Streams",
    "Trajectory",
    "compute_Zeps",
    "simulate_averaged",
    "simulate_coupled",
    "simulate_limit_deviation",
    "simulate_slow_fast",
    "ErgodicConfig",
    "estimate_DFbar",
    "estimate_Fbar",
    "estimate_Psi",
    "estimate_Sigma",
    "fit_rate",
    "ExperimentSpec",
    "ResultRecord",
    "emit_results",
    "load_spec",
    "run_experiment",
    "NoiseSpec",
    "NoiseStream",
    "sample_increment",
]
