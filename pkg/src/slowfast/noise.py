"""Trace-class Q-Wiener noise, exact stochastic convolutions and seed streams.

Both covariance operators are diagonal on the sine basis, ``Q e_k = beta_k e_k``.
The samplers draw the *exact* law of the stochastic convolution over one step
for the two linear flows used by the integrators:

* the fast heat semigroup ``exp(t A / eps)`` (an Ornstein-Uhlenbeck increment),
* the wave group acting on noise injected into the velocity component.

Random streams are derived by label, not by sequential splitting: a stream is
a master seed plus a path of labels, each label hashed into a ``SeedSequence``
spawn key.  Children therefore never depend on the order in which siblings
are created or consumed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .spectral import SpectralBasis, SpectralField

__all__ = [
    "NoiseSpec",
    "NoiseStream",
    "trace",
    "sample_increment",
    "fast_ou_variance",
    "fast_ou_convolution_increment",
    "wave_convolution_covariance",
    "wave_convolution_factors",
    "wave_convolution_increment",
    "derive_stream",
    "as_generator",
]

_ROLES = ("slow", "fast", "limit")


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Eigenvalues ``beta_k`` of a covariance ``Q`` on the sine basis."""

    betas: np.ndarray
    role: str = "slow"

    def __post_init__(self):
        b = np.array(self.betas, dtype=float, ndmin=1)
        if b.ndim != 1:
            raise InvalidInputError("betas must be a 1-d sequence")
        if np.any(b < 0) or not np.all(np.isfinite(b)):
            raise InvalidInputError("noise eigenvalues must be finite and nonnegative")
        if self.role not in _ROLES:
            raise InvalidInputError(f"role must be one of {_ROLES}, got {self.role!r}")
        b.setflags(write=False)
        object.__setattr__(self, "betas", b)

    @classmethod
    def power_law(cls, n: int, exponent: float = 2.0, scale: float = 1.0, role: str = "slow"):
        """``beta_k = scale * k^(-exponent)``; trace class iff ``exponent > 1``."""
        k = np.arange(1, n + 1, dtype=float)
        return cls(scale * k ** (-float(exponent)), role)

    @property
    def n(self) -> int:
        return self.betas.size

    def trace(self) -> float:
        return trace(self)

    def scaled(self, factor: float) -> "NoiseSpec":
        return NoiseSpec(self.betas * factor, self.role)


@dataclass(frozen=True)
class NoiseStream:
    """Deterministic random stream identified by ``(seed, path)``."""

    seed: int
    path: tuple = ()

    def __post_init__(self):
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InvalidInputError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "path", tuple(str(p) for p in self.path))

    def derive(self, *labels) -> "NoiseStream":
        return NoiseStream(self.seed, self.path + tuple(str(lab) for lab in labels))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=tuple(_label_key(p) for p in self.path))

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.SFC64(self.seed_sequence()))


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little")


def derive_stream(parent: NoiseStream, label) -> NoiseStream:
    """Child stream of ``parent`` labelled ``label``."""
    return parent.derive(label)


def as_generator(stream) -> np.random.Generator:
    """Accept a :class:`NoiseStream` (fresh generator) or an existing generator."""
    if isinstance(stream, NoiseStream):
        return stream.generator()
    if isinstance(stream, np.random.Generator):
        return stream
    raise InvalidInputError(f"expected a NoiseStream or numpy Generator, got {type(stream).__name__}")


def trace(spec: NoiseSpec) -> float:
    """``Tr Q = sum_k beta_k`` over the retained modes."""
    return float(np.sum(spec.betas))


def _positive(name, value):
    if not np.all(np.asarray(value) > 0):
        raise InvalidInputError(f"{name} must be positive, got {value!r}")


def _shape(size):
    if size is None:
        return ()
    return (size,) if np.isscalar(size) else tuple(size)


def sample_increment(spec: NoiseSpec, dt: float, stream, size=(), basis: SpectralBasis | None = None):
    """Q-Wiener increment over ``dt``: independent ``N(0, beta_k dt)`` per mode."""
    _positive("dt", dt)
    basis = basis or SpectralBasis(spec.n)
    rng = as_generator(stream)
    xi = rng.standard_normal(_shape(size) + (spec.n,))
    return SpectralField(xi * np.sqrt(spec.betas * dt), basis)


def fast_ou_variance(betas, eigenvalues, dt, eps):
    """Exact one-step variance ``beta (1 - exp(-2 lambda dt / eps)) / (2 lambda)``."""
    lam = np.asarray(eigenvalues, dtype=float)
    return np.asarray(betas) * -np.expm1(-2.0 * lam * dt / eps) / (2.0 * lam)


def fast_ou_convolution_increment(spec: NoiseSpec, eigenvalues, dt, eps, stream, size=()):
    """Draw ``eps^(-1/2) int_0^dt exp(lambda (s - dt) / eps) dW_s`` per mode."""
    _positive("dt", dt)
    _positive("eps", eps)
    rng = as_generator(stream)
    sd = np.sqrt(fast_ou_variance(spec.betas, eigenvalues, dt, eps))
    return sd * rng.standard_normal(_shape(size) + (spec.n,))


def _x_minus_sin(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.1
    xs = np.where(small, x, 0.0)
    x2 = xs * xs
    series = xs * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
    return np.where(small, series, x - np.sin(x))


def _kernel_moments(x):
    # P = int_0^x sin^2, Q = int_0^x cos^2, R = int_0^x sin cos, D = PQ - R^2
    p = _x_minus_sin(2.0 * x) / 4.0
    q = (2.0 * x + np.sin(2.0 * x)) / 4.0
    r = np.sin(x) ** 2 / 2.0
    d = _x_minus_sin(x) * (x + np.sin(x)) / 4.0
    return p, q, r, d


def wave_convolution_covariance(betas, eigenvalues, dt):
    """Per-mode ``(Var pos, Var vel, Cov)`` of ``int_0^dt exp((dt-s) A) B dW_s``.

    Kernel per mode is ``(sin(omega r) / omega, cos(omega r))`` with ``r = dt - s``.
    """
    omega = np.sqrt(np.asarray(eigenvalues, dtype=float))
    b = np.asarray(betas, dtype=float)
    p, q, r, _ = _kernel_moments(omega * dt)
    return b * p / omega**3, b * q / omega, b * r / omega**2


def wave_convolution_factors(betas, eigenvalues, dt):
    """Cholesky factors ``(l11, l21, l22)`` of the per-mode 2x2 covariance."""
    omega = np.sqrt(np.asarray(eigenvalues, dtype=float))
    b = np.asarray(betas, dtype=float)
    p, _, r, d = _kernel_moments(omega * dt)
    # scale-free factorisation, then multiply by sqrt(beta)
    l11 = np.sqrt(p / omega**3)
    l21 = (r / omega**2) / l11
    l22 = np.sqrt(d / omega**4 / (p / omega**3))
    sb = np.sqrt(b)
    return sb * l11, sb * l21, sb * l22


def wave_convolution_increment(spec: NoiseSpec, eigenvalues, dt, stream, size=()):
    """Exact Gaussian (position, velocity) increment of the stochastic wave convolution."""
    _positive("dt", dt)
    rng = as_generator(stream)
    l11, l21, l22 = wave_convolution_factors(spec.betas, eigenvalues, dt)
    shape = _shape(size) + (spec.n,)
    z1 = rng.standard_normal(shape)
    z2 = rng.standard_normal(shape)
    return l11 * z1, l21 * z1 + l22 * z2
