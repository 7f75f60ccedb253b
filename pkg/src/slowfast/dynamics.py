"""Time integration of the slow-fast system and of its limit equations.

All integrators are exponential Euler schemes in mild form: the linear flows
(wave group for the slow pair, heat semigroup ``exp(t A / eps)`` for the fast
field) are applied exactly per mode, the stochastic convolutions are drawn
from their exact Gaussian law, and the nonlinear drifts are frozen at the
start of each step.  Replicas are vectorised along a leading batch axis.

Coupling rule: a run draws its slow noise ``W1`` from ``streams.w1`` and its
fast noise ``W2`` from ``streams.w2``, one block of normals per step and in a
fixed order.  Two runs on the same time grid built from the same ``streams``
therefore see bit-identical ``W1`` increments, which is how the slow-fast
solution and the averaged solution are coupled pathwise.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .coefficients import CoefficientPair
from .errors import ConfigError, InvalidInputError
from .noise import NoiseSpec, NoiseStream, fast_ou_variance, wave_convolution_factors
from .spectral import PhaseState, SpectralBasis, SpectralField, rotate, wave_group_factors

__all__ = [
    "SimConfig",
    "Streams",
    "Trajectory",
    "WaveFlow",
    "FastFlow",
    "step_slow_fast",
    "simulate_slow_fast",
    "simulate_frozen",
    "simulate_averaged",
    "simulate_coupled",
    "compute_Zeps",
    "simulate_limit_deviation",
    "limit_covariance",
    "limit_covariance_matrix",
]

log = logging.getLogger(__name__)

MAX_MICRO_FRACTION = 0.05


def _coeff_array(x, n, name):
    if x is None:
        return np.zeros(n)
    if isinstance(x, SpectralField):
        x = x.coeffs
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ConfigError(f"initial {name} must have {n} coefficients, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Scale parameter, horizon, step sizes, Galerkin size, noise and initial data.

    Use :meth:`build` to derive ``dt_micro`` from the rule ``dt_micro <= c eps``
    with ``dt_macro`` an integer multiple of it.
    """

    eps: float
    T: float
    dt_macro: float
    dt_micro: float
    n: int = 16
    u0: np.ndarray = None
    v0: np.ndarray = None
    y0: np.ndarray = None
    q1: NoiseSpec = None
    q2: NoiseSpec = None
    check_fast_resolution: bool = True

    def __post_init__(self):
        basis = SpectralBasis(self.n)
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        for name in ("u0", "v0", "y0"):
            set_(name, _coeff_array(getattr(self, name), self.n, name))
        set_("q1", self.q1 if self.q1 is not None else NoiseSpec.power_law(self.n, role="slow"))
        set_("q2", self.q2 if self.q2 is not None else NoiseSpec.power_law(self.n, role="fast"))
        if self.q1.n != self.n or self.q2.n != self.n:
            raise ConfigError("noise specs must have one eigenvalue per Galerkin mode")
        if not (self.eps > 0 and self.T > 0 and self.dt_macro > 0 and self.dt_micro > 0):
            raise ConfigError("eps, T, dt_macro and dt_micro must all be positive")
        if self.eps > 1:
            raise ConfigError(f"eps must lie in (0, 1], got {self.eps}")
        if self.check_fast_resolution and self.dt_micro > MAX_MICRO_FRACTION * self.eps * (1 + 1e-12):
            raise ConfigError(
                f"dt_micro = {self.dt_micro:g} exceeds {MAX_MICRO_FRACTION} * eps = "
                f"{MAX_MICRO_FRACTION * self.eps:g}; the fast nonlinearity would be unresolved"
            )
        for outer, inner, what in ((self.dt_macro, self.dt_micro, "dt_macro/dt_micro"), (self.T, self.dt_macro, "T/dt_macro")):
            r = outer / inner
            if abs(r - round(r)) > 1e-9 * r:
                raise ConfigError(f"{what} = {r} is not an integer")
        set_("_basis", basis)

    @classmethod
    def build(cls, eps: float, T: float = 0.5, n: int = 16, checkpoints: int = 20, c: float = 0.02, **kw):
        """Config with ``checkpoints`` macro steps and ``dt_micro = dt_macro / ceil(dt_macro / (c eps))``."""
        if not 0 < c <= MAX_MICRO_FRACTION:
            raise ConfigError(f"micro-step fraction c must lie in (0, {MAX_MICRO_FRACTION}], got {c}")
        dt_macro = T / checkpoints
        sub = math.ceil(dt_macro / (c * eps) - 1e-9)
        return cls(eps=eps, T=T, dt_macro=dt_macro, dt_micro=dt_macro / sub, n=n, **kw)

    @property
    def basis(self) -> SpectralBasis:
        return self._basis

    @property
    def substeps(self) -> int:
        return int(round(self.dt_macro / self.dt_micro))

    @property
    def checkpoints(self) -> int:
        return int(round(self.T / self.dt_macro))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.checkpoints + 1) * self.dt_macro

    def replace(self, **changes) -> "SimConfig":
        kw = {k: getattr(self, k) for k in
              ("eps", "T", "dt_macro", "dt_micro", "n", "u0", "v0", "y0", "q1", "q2", "check_fast_resolution")}
        kw.update(changes)
        return SimConfig(**kw)


@dataclass(frozen=True)
class Streams:
    """Independent noise streams: ``w1`` (slow), ``w2`` (fast), ``w`` (limit equation)."""

    w1: NoiseStream
    w2: NoiseStream
    w: NoiseStream

    @classmethod
    def from_root(cls, root: NoiseStream) -> "Streams":
        return cls(root.derive("W1"), root.derive("W2"), root.derive("W"))


@dataclass(eq=False)
class Trajectory:
    """Checkpointed batch of slow states (and optionally fast fields).

    Arrays have shape ``(checkpoints + 1, replicas, n)``; ``aborted`` flags
    replicas that produced non-finite values and were frozen at zero.
    """

    times: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    basis: SpectralBasis
    fast: np.ndarray | None = None
    aborted: np.ndarray = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times[0] != 0 or np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("checkpoint times must start at 0 and increase strictly")
        if self.aborted is None:
            self.aborted = np.zeros(self.position.shape[1], dtype=bool)

    @property
    def replicas(self) -> int:
        return self.position.shape[1]

    def state(self, i: int = -1) -> PhaseState:
        return PhaseState.from_arrays(self.position[i], self.velocity[i], self.basis)

    def energy_sq(self, alpha: float = 1.0) -> np.ndarray:
        """``|||X_t|||_alpha^2`` per checkpoint and replica."""
        lam = self.basis.eigenvalues
        return np.sum(lam**alpha * self.position**2 + lam ** (alpha - 1) * self.velocity**2, axis=-1)

    def to_csv(self, path, replica: int = 0):
        """Write ``time,mode,position,velocity`` rows for one replica."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "mode", "position", "velocity"])
            for i, t in enumerate(self.times):
                for k in range(self.basis.n):
                    w.writerow([repr(float(t)), k + 1, repr(float(self.position[i, replica, k])),
                                repr(float(self.velocity[i, replica, k]))])


class WaveFlow:
    """One exponential-Euler step of ``dX = (A X + (0, F)) dt + (0, dW)``.

    ``X' = exp(dt A) (U, V + dt F) + int_0^dt exp((dt-s) A) B dW_s``.
    """

    def __init__(self, eigenvalues, betas, dt):
        self.dt = dt
        self.cos, self.sin, self.omega = wave_group_factors(eigenvalues, dt)
        self.l11, self.l21, self.l22 = wave_convolution_factors(betas, eigenvalues, dt)

    def noise(self, rng, shape):
        z1 = rng.standard_normal(shape)
        z2 = rng.standard_normal(shape)
        return self.l11 * z1, self.l21 * z1 + self.l22 * z2

    def propagate(self, u, v, forcing, du, dv):
        if forcing is not None:
            v = v + self.dt * forcing
        u, v = rotate(u, v, self.cos, self.sin, self.omega)
        return u + du, v + dv

    def step(self, u, v, forcing, rng):
        return self.propagate(u, v, forcing, *self.noise(rng, u.shape))


class FastFlow:
    """One exponential-Euler step of ``dY = eps^-1 (A Y + G) dt + eps^-1/2 dW``."""

    def __init__(self, eigenvalues, betas, dt, eps):
        lam = np.asarray(eigenvalues, dtype=float)
        self.decay = np.exp(-lam * dt / eps)
        self.phi = -np.expm1(-lam * dt / eps) / lam
        self.sd = np.sqrt(fast_ou_variance(betas, lam, dt, eps))

    def step(self, y, drift, rng):
        y = self.decay * y
        if drift is not None:
            y = y + self.phi * drift
        return y + self.sd * rng.standard_normal(y.shape)


def _check_step(dt, eps):
    if not dt > 0:
        raise ConfigError(f"time step must be positive, got {dt}")
    if dt > MAX_MICRO_FRACTION * eps * (1 + 1e-12):
        raise ConfigError(f"step {dt:g} exceeds {MAX_MICRO_FRACTION} * eps; refine the micro step")


def step_slow_fast(X: PhaseState, y: SpectralField, dt: float, eps: float, coeffs: CoefficientPair,
                   rngs, q1: NoiseSpec | None = None, q2: NoiseSpec | None = None):
    """Single coupled step; ``rngs`` is a ``(w1, w2)`` pair of streams or generators.

    Missing noise specs mean zero noise for that component.
    """
    _check_step(dt, eps)
    basis = X.basis
    lam = basis.eigenvalues
    q1 = q1 or NoiseSpec(np.zeros(basis.n))
    q2 = q2 or NoiseSpec(np.zeros(basis.n), "fast")
    g1, g2 = (r.generator() if isinstance(r, NoiseStream) else r for r in rngs)
    u, v, yy = X.position.coeffs, X.velocity.coeffs, y.coeffs
    F = coeffs.F(u, yy)
    G = coeffs.G(u, yy)
    u2, v2 = WaveFlow(lam, q1.betas, dt).step(u, v, F, g1)
    y2 = FastFlow(lam, q2.betas, dt, eps).step(yy, G, g2)
    return PhaseState.from_arrays(u2, v2, basis), SpectralField(y2, basis)


def _guard(arrays, aborted, label):
    bad = ~np.all([np.all(np.isfinite(a), axis=-1) for a in arrays], axis=0)
    new = bad & ~aborted
    if np.any(new):
        log.warning("%s: %d replica(s) produced non-finite values and were aborted", label, int(new.sum()))
    aborted |= bad
    for a in arrays:
        a[bad] = 0.0
    return aborted


def _initial(x, replicas):
    return np.tile(np.asarray(x, dtype=float), (replicas, 1))


def simulate_slow_fast(config: SimConfig, coeffs: CoefficientPair, streams: Streams,
                       replicas: int = 1, store_fast: bool = True) -> Trajectory:
    """Integrate the coupled slow-fast system and record every macro checkpoint."""
    lam = config.basis.eigenvalues
    dt = config.dt_micro
    wave = WaveFlow(lam, config.q1.betas, dt)
    fast = FastFlow(lam, config.q2.betas, dt, config.eps)
    g1, g2 = streams.w1.generator(), streams.w2.generator()
    u, v, y = (_initial(x, replicas) for x in (config.u0, config.v0, config.y0))
    m = config.checkpoints
    P = np.empty((m + 1, replicas, config.n))
    V = np.empty_like(P)
    Y = np.empty_like(P) if store_fast else None
    aborted = np.zeros(replicas, dtype=bool)
    P[0], V[0] = u, v
    if store_fast:
        Y[0] = y
    with np.errstate(all="ignore"):
        for i in range(1, m + 1):
            for _ in range(config.substeps):
                F = coeffs.F(u, y)
                G = coeffs.G(u, y)
                u, v = wave.step(u, v, F, g1)
                y = fast.step(y, G, g2)
            aborted = _guard((u, v, y), aborted, f"slow-fast eps={config.eps:g}")
            P[i], V[i] = u, v
            if store_fast:
                Y[i] = y
    return Trajectory(config.times, P, V, config.basis, Y, aborted)


def simulate_averaged(config: SimConfig, fbar, streams: Streams, replicas: int = 1) -> Trajectory:
    """Integrate the averaged equation on the same grid and ``W1`` stream as the paired run.

    ``fbar`` maps raw position coefficients ``(..., n)`` to averaged drift coefficients.
    """
    lam = config.basis.eigenvalues
    wave = WaveFlow(lam, config.q1.betas, config.dt_micro)
    g1 = streams.w1.generator()
    u, v = _initial(config.u0, replicas), _initial(config.v0, replicas)
    m = config.checkpoints
    P = np.empty((m + 1, replicas, config.n))
    V = np.empty_like(P)
    aborted = np.zeros(replicas, dtype=bool)
    P[0], V[0] = u, v
    with np.errstate(all="ignore"):
        for i in range(1, m + 1):
            for _ in range(config.substeps):
                u, v = wave.step(u, v, fbar(u), g1)
            aborted = _guard((u, v), aborted, "averaged")
            P[i], V[i] = u, v
    return Trajectory(config.times, P, V, config.basis, None, aborted)


def simulate_frozen(u, y0, horizon: float, dt: float, coeffs: CoefficientPair, stream,
                    q2: NoiseSpec, replicas: int = 1, sample_every: int = 1):
    """Integrate the frozen fast equation (slow field ``u`` held fixed, ``eps = 1``).

    Returns ``(times, samples)`` with samples of shape ``(m, replicas, n)``, taken
    every ``sample_every`` steps including time 0.
    """
    if coeffs.mixing_margin <= 0:
        raise InvalidInputError("frozen equation is not mixing for these coefficients")
    if not dt > 0 or not horizon > 0:
        raise InvalidInputError("dt and horizon must be positive")
    u = u.coeffs if isinstance(u, SpectralField) else np.asarray(u, dtype=float)
    y0 = y0.coeffs if isinstance(y0, SpectralField) else np.asarray(y0, dtype=float)
    n = u.shape[-1]
    lam = SpectralBasis(n).eigenvalues
    flow = FastFlow(lam, q2.betas, dt, 1.0)
    rng = stream.generator() if isinstance(stream, NoiseStream) else stream
    steps = int(round(horizon / dt))
    uu = np.broadcast_to(u, (replicas, n))
    y = np.array(np.broadcast_to(y0, (replicas, n)), dtype=float)
    out = [y.copy()]
    times = [0.0]
    for j in range(1, steps + 1):
        y = flow.step(y, coeffs.G(uu, y), rng)
        if j % sample_every == 0:
            out.append(y.copy())
            times.append(j * dt)
    return np.array(times), np.array(out)


def simulate_coupled(config: SimConfig, coeffs: CoefficientPair, fbar, streams: Streams,
                     replicas: int = 1, store_fast: bool = False):
    """Slow-fast and averaged runs driven by one shared draw of ``W1`` per step.

    Bit-identical to calling :func:`simulate_slow_fast` and
    :func:`simulate_averaged` with the same streams, at a lower sampling cost.
    """
    lam = config.basis.eigenvalues
    dt = config.dt_micro
    wave = WaveFlow(lam, config.q1.betas, dt)
    fast = FastFlow(lam, config.q2.betas, dt, config.eps)
    g1, g2 = streams.w1.generator(), streams.w2.generator()
    u, v, y = (_initial(x, replicas) for x in (config.u0, config.v0, config.y0))
    ub, vb = u.copy(), v.copy()
    m = config.checkpoints
    P, V, Pb, Vb = (np.empty((m + 1, replicas, config.n)) for _ in range(4))
    Y = np.empty_like(P) if store_fast else None
    aborted = np.zeros(replicas, dtype=bool)
    aborted_bar = np.zeros(replicas, dtype=bool)
    P[0], V[0], Pb[0], Vb[0] = u, v, ub, vb
    if store_fast:
        Y[0] = y
    with np.errstate(all="ignore"):
        for i in range(1, m + 1):
            for _ in range(config.substeps):
                F = coeffs.F(u, y)
                G = coeffs.G(u, y)
                du, dv = wave.noise(g1, u.shape)
                u, v = wave.propagate(u, v, F, du, dv)
                ub, vb = wave.propagate(ub, vb, fbar(ub), du, dv)
                y = fast.step(y, G, g2)
            aborted = _guard((u, v, y), aborted, f"slow-fast eps={config.eps:g}")
            aborted_bar = _guard((ub, vb), aborted_bar, "averaged")
            P[i], V[i], Pb[i], Vb[i] = u, v, ub, vb
            if store_fast:
                Y[i] = y
    return (Trajectory(config.times, P, V, config.basis, Y, aborted),
            Trajectory(config.times, Pb, Vb, config.basis, None, aborted_bar))


def compute_Zeps(traj_eps: Trajectory, traj_bar: Trajectory, eps: float) -> Trajectory:
    """Normalised deviation ``(X^eps - Xbar) / sqrt(eps)`` per checkpoint."""
    if traj_eps.times.shape != traj_bar.times.shape or not np.allclose(traj_eps.times, traj_bar.times):
        raise InvalidInputError("trajectories must share checkpoint times")
    if traj_eps.position.shape != traj_bar.position.shape:
        raise InvalidInputError("trajectories must have the same replica count")
    s = 1.0 / math.sqrt(eps)
    return Trajectory(
        traj_eps.times,
        (traj_eps.position - traj_bar.position) * s,
        (traj_eps.velocity - traj_bar.velocity) * s,
        traj_eps.basis,
        None,
        traj_eps.aborted | traj_bar.aborted,
    )


def _as_operator(op, n, what):
    op = np.asarray(op, dtype=float)
    if op.ndim == 1 and op.shape == (n,):
        return op
    if op.ndim >= 2 and op.shape[-2:] == (n, n):
        return op
    raise InvalidInputError(f"{what} must have shape (n,), (n, n) or (replicas, n, n); got {op.shape}")


def _apply(op, z):
    if op.ndim == 1:
        return op * z
    if op.ndim == 2:
        return z @ op.T
    return np.einsum("rij,rj->ri", op, z)


def _diagonal_of(op):
    """Per-mode diagonal if ``op`` is diagonal, else None."""
    if op.ndim == 1:
        return op
    if op.ndim == 2 and np.count_nonzero(op - np.diag(np.diag(op))) == 0:
        return np.diag(op)
    return None


def _check_psd(sigma):
    if sigma.ndim == 1:
        if np.any(sigma < 0):
            raise InvalidInputError("diagonal noise factor must be nonnegative")
        return
    sym = np.swapaxes(sigma, -1, -2)
    scale = max(np.max(np.abs(sigma)), 1e-300)
    if np.max(np.abs(sigma - sym)) > 1e-10 * scale:
        raise InvalidInputError("noise factor must be symmetric")
    if np.min(np.linalg.eigvalsh(sigma)) < -1e-10 * scale:
        raise InvalidInputError("noise factor must be positive semidefinite")


def simulate_limit_deviation(bar_traj: Trajectory, dfbar, sigma, w_stream: NoiseStream,
                             config: SimConfig, replicas: int | None = None) -> Trajectory:
    """Integrate the linear limit equation for the normal deviation from zero data.

    ``dZ = (A Z + (0, DFbar(Ubar) Z_pos)) dt + (0, Sigma(Ubar) dW)``.  Providers are
    evaluated on the averaged position at the latest checkpoint of ``bar_traj``
    and may return a per-mode diagonal ``(n,)``, a matrix ``(n, n)`` or per-replica
    matrices.  Diagonal ``Sigma`` is sampled with the exact wave convolution;
    a full matrix falls back to exponential-Euler noise ``exp(dt A)(0, Sigma dW)``.
    """
    basis = bar_traj.basis
    n = basis.n
    R = bar_traj.replicas if replicas is None else replicas
    if bar_traj.replicas not in (1, R):
        raise InvalidInputError("averaged trajectory must have one replica or one per deviation replica")
    dt = config.dt_micro
    gaps = np.diff(bar_traj.times) / dt
    if np.any(np.abs(gaps - np.round(gaps)) > 1e-9 * gaps):
        raise ConfigError("checkpoint spacing must be an integer multiple of dt_micro")
    lam = basis.eigenvalues
    cos, sin, omega = wave_group_factors(lam, dt)
    unit = wave_convolution_factors(np.ones(n), lam, dt)
    rng = w_stream.generator()
    z = np.zeros((R, n))
    zd = np.zeros((R, n))
    m = bar_traj.times.size
    P = np.zeros((m, R, n))
    V = np.zeros_like(P)
    for i in range(1, m):
        ubar = np.broadcast_to(bar_traj.position[i - 1], (R, n))
        D = _as_operator(dfbar(ubar), n, "DFbar")
        S = _as_operator(sigma(ubar), n, "Sigma")
        _check_psd(S)
        diag = _diagonal_of(S)
        for _ in range(int(round(gaps[i - 1]))):
            zd_f = zd + dt * _apply(D, z)
            if diag is not None:
                z, zd = rotate(z, zd_f, cos, sin, omega)
                z1 = rng.standard_normal((R, n))
                z2 = rng.standard_normal((R, n))
                z = z + diag * unit[0] * z1
                zd = zd + diag * (unit[1] * z1 + unit[2] * z2)
            else:
                kick = _apply(S, rng.standard_normal((R, n))) * math.sqrt(dt)
                z, zd = rotate(z, zd_f + kick, cos, sin, omega)
        P[i], V[i] = z, zd
    return Trajectory(bar_traj.times, P, V, basis, None, np.broadcast_to(bar_traj.aborted, (R,)).copy())


def limit_covariance(eigenvalue: float, drift: float, sigma2: float, t: float) -> np.ndarray:
    """Covariance at time ``t`` of the per-mode limit equation started at zero.

    Mode dynamics ``d(z, z') = M (z, z') dt + (0, sigma) dw`` with
    ``M = [[0, 1], [drift - eigenvalue, 0]]``; the differential Lyapunov equation
    ``P' = M P + P M^T + G G^T`` is solved by Van Loan's block exponential.
    """
    M = np.array([[0.0, 1.0], [drift - eigenvalue, 0.0]])
    GG = np.array([[0.0, 0.0], [0.0, sigma2]])
    block = np.zeros((4, 4))
    block[:2, :2] = -M
    block[:2, 2:] = GG
    block[2:, 2:] = M.T
    E = scipy.linalg.expm(block * t)
    phi_T = E[2:, 2:]
    P = phi_T.T @ E[:2, 2:]
    return 0.5 * (P + P.T)


def limit_covariance_matrix(eigenvalues, drift, sigma_sq, t: float) -> np.ndarray:
    """Joint covariance ``(2n, 2n)`` of ``(Z_t, Z'_t)`` for matrix-valued drift and diffusion.

    Same Van Loan construction as :func:`limit_covariance` with
    ``M = [[0, I], [drift - diag(eigenvalues), 0]]`` and ``GG^T = [[0, 0], [0, sigma_sq]]``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    n = lam.size
    drift = np.diag(drift) if np.ndim(drift) == 1 else np.asarray(drift, dtype=float)
    sigma_sq = np.diag(sigma_sq) if np.ndim(sigma_sq) == 1 else np.asarray(sigma_sq, dtype=float)
    if drift.shape != (n, n) or sigma_sq.shape != (n, n):
        raise InvalidInputError("drift and sigma_sq must be (n,) or (n, n)")
    M = np.zeros((2 * n, 2 * n))
    M[:n, n:] = np.eye(n)
    M[n:, :n] = drift - np.diag(lam)
    GG = np.zeros_like(M)
    GG[n:, n:] = sigma_sq
    block = np.zeros((4 * n, 4 * n))
    block[: 2 * n, : 2 * n] = -M
    block[: 2 * n, 2 * n:] = GG
    block[2 * n:, 2 * n:] = M.T
    E = scipy.linalg.expm(block * t)
    P = E[2 * n:, 2 * n:].T @ E[: 2 * n, 2 * n:]
    return 0.5 * (P + P.T)
