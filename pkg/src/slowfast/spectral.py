"""Dirichlet sine basis on (0, 1), Sobolev-scale norms and the wave group.

Fields are stored by their first ``n`` coefficients on the orthonormal basis
``e_k(xi) = sqrt(2) sin(k pi xi)``, with ``-A e_k = lambda_k e_k`` and
``lambda_k = (k pi)^2``.  Coefficient arrays may carry leading batch axes
(replicas); the mode axis is always the last one.

Physical values live on the interior grid ``xi_j = j / (n + 1)``, ``j = 1..n``.
On that grid the type-I discrete sine transform maps ``span{e_1..e_n}``
one-to-one onto grid values, so both transforms below are exact inverses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import InvalidInputError

__all__ = [
    "SpectralBasis",
    "SpectralField",
    "PhaseState",
    "eigenvalue",
    "sobolev_norm",
    "energy_norm",
    "wave_group_factors",
    "apply_wave_group",
    "to_physical",
    "to_spectral",
    "galerkin_project",
]


@dataclass(frozen=True)
class SpectralBasis:
    """First ``n`` Dirichlet eigenpairs of the Laplacian on (0, 1)."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInputError(f"Galerkin dimension must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.n + 1)

    @property
    def eigenvalues(self) -> np.ndarray:
        return (np.pi * self.modes) ** 2

    @property
    def grid(self) -> np.ndarray:
        """Interior quadrature points ``j / (n + 1)``."""
        return self.modes / (self.n + 1.0)

    def eigenvalue(self, k: int) -> float:
        return eigenvalue(k, self.n)

    def basis_functions(self, xi) -> np.ndarray:
        """Matrix ``E[j, k] = e_{k+1}(xi_j)`` for arbitrary points."""
        xi = np.asarray(xi, dtype=float)
        return np.sqrt(2.0) * np.sin(np.pi * np.multiply.outer(xi, self.modes))

    def zeros(self, *batch: int) -> "SpectralField":
        return SpectralField(np.zeros(batch + (self.n,)), self)

    def mode(self, k: int, scale: float = 1.0) -> "SpectralField":
        """The basis vector ``scale * e_k``."""
        eigenvalue(k, self.n)
        c = np.zeros(self.n)
        c[k - 1] = scale
        return SpectralField(c, self)

    def field(self, coeffs) -> "SpectralField":
        return SpectralField(coeffs, self)


def eigenvalue(k: int, n: int | None = None) -> float:
    """Return ``lambda_k = (k pi)^2``; ``k`` must lie in ``1..n``."""
    if int(k) != k or k < 1 or (n is not None and k > n):
        upper = "" if n is None else f"..{n}"
        raise InvalidInputError(f"mode index must lie in 1{upper}, got {k!r}")
    return float((np.pi * k) ** 2)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients ``<x, e_k>`` of a field, possibly batched over leading axes."""

    coeffs: np.ndarray
    basis: SpectralBasis

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 0 or c.shape[-1] != self.basis.n:
            raise InvalidInputError(
                f"coefficient array of shape {c.shape} does not match basis dimension {self.basis.n}"
            )
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def norm(self, alpha: float = 0.0):
        return sobolev_norm(self, alpha)

    def _check(self, other: "SpectralField"):
        if other.basis != self.basis:
            raise InvalidInputError("fields live on different bases")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.coeffs + other.coeffs, self.basis)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.coeffs - other.coeffs, self.basis)

    def __mul__(self, scalar):
        return SpectralField(self.coeffs * scalar, self.basis)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(-self.coeffs, self.basis)


@dataclass(frozen=True, eq=False)
class PhaseState:
    """Phase-space pair ``(U, V)``: position in H^alpha, velocity in H^(alpha-1)."""

    position: SpectralField
    velocity: SpectralField

    def __post_init__(self):
        if self.position.basis != self.velocity.basis:
            raise InvalidInputError("position and velocity live on different bases")
        if self.position.coeffs.shape != self.velocity.coeffs.shape:
            raise InvalidInputError("position and velocity batch shapes differ")

    @property
    def basis(self) -> SpectralBasis:
        return self.position.basis

    @classmethod
    def from_arrays(cls, position, velocity, basis: SpectralBasis) -> "PhaseState":
        return cls(SpectralField(position, basis), SpectralField(velocity, basis))

    def norm(self, alpha: float = 1.0):
        return energy_norm(self, alpha)

    def __sub__(self, other: "PhaseState") -> "PhaseState":
        return PhaseState(self.position - other.position, self.velocity - other.velocity)

    def __mul__(self, scalar) -> "PhaseState":
        return PhaseState(self.position * scalar, self.velocity * scalar)

    __rmul__ = __mul__


def sobolev_norm(x: SpectralField, alpha: float):
    """``||x||_alpha = (sum_k lambda_k^alpha <x, e_k>^2)^(1/2)``, per batch entry."""
    w = x.basis.eigenvalues ** float(alpha)
    return np.sqrt(np.sum(w * x.coeffs**2, axis=-1))


def energy_norm(X: PhaseState, alpha: float):
    """Phase-space norm ``sqrt(||U||_alpha^2 + ||V||_(alpha-1)^2)``."""
    return np.hypot(sobolev_norm(X.position, alpha), sobolev_norm(X.velocity, alpha - 1.0))


def wave_group_factors(eigenvalues, t: float):
    """Per-mode ``(cos(omega t), sin(omega t), omega)`` with ``omega = sqrt(lambda)``."""
    omega = np.sqrt(np.asarray(eigenvalues, dtype=float))
    return np.cos(omega * t), np.sin(omega * t), omega


def rotate(position, velocity, cos, sin, omega):
    """Apply the per-mode wave rotation to raw coefficient arrays."""
    return (
        cos * position + sin / omega * velocity,
        -omega * sin * position + cos * velocity,
    )


def apply_wave_group(X: PhaseState, t: float) -> PhaseState:
    """Evolve ``X`` by the free wave group for time ``t`` (negative ``t`` allowed)."""
    c, s, w = wave_group_factors(X.basis.eigenvalues, t)
    p, v = rotate(X.position.coeffs, X.velocity.coeffs, c, s, w)
    return PhaseState.from_arrays(p, v, X.basis)


def physical_values(coeffs: np.ndarray) -> np.ndarray:
    """Grid values of raw coefficient arrays (mode axis last)."""
    n = coeffs.shape[-1]
    return scipy.fft.dst(coeffs, type=1, norm="ortho", axis=-1) * np.sqrt(n + 1.0)


def spectral_coeffs(values: np.ndarray) -> np.ndarray:
    """Inverse of :func:`physical_values`."""
    n = values.shape[-1]
    return scipy.fft.dst(values, type=1, norm="ortho", axis=-1) / np.sqrt(n + 1.0)


def to_physical(x: SpectralField) -> np.ndarray:
    """Values ``sum_k c_k e_k(xi_j)`` at the interior grid points."""
    return physical_values(x.coeffs)


def to_spectral(values, basis: SpectralBasis) -> SpectralField:
    """Coefficients of the unique field in ``span{e_1..e_n}`` with these grid values."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 0 or values.shape[-1] != basis.n:
        raise InvalidInputError(
            f"expected {basis.n} grid values on the last axis, got shape {values.shape}"
        )
    return SpectralField(spectral_coeffs(values), basis)


def galerkin_project(x: SpectralField, m: int) -> SpectralField:
    """Zero every coefficient beyond mode ``m`` (the projection P_m)."""
    if int(m) != m or not 1 <= m <= x.basis.n:
        raise InvalidInputError(f"projection rank must lie in 1..{x.basis.n}, got {m!r}")
    c = np.array(x.coeffs)
    c[..., int(m):] = 0.0
    return SpectralField(c, x.basis)
