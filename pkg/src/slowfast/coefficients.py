"""Reaction functions ``f, g``, their Nemytskii lifts and closed-form oracles.

A :class:`CoefficientPair` wraps two vectorised scalar functions ``f(u, y)``
(slow drift) and ``g(u, y)`` (fast drift).  The lifts ``F`` and ``G`` act on
spectral coefficients by evaluating the scalar function on the interior grid
and transforming back, which is exactly the Galerkin projection of the
pointwise composition.

Shipped families:

* :class:`LinearTestFamily` -- ``f = c u + d y``, ``g = -a y + b u``.  Every
  averaged quantity is known in closed form, so it serves as the oracle family
  (``g`` is unbounded, deliberately).
* :class:`BoundedFamily` -- ``f = sin(u) + d tanh(y)``, ``g = tanh(b u) - a tanh(y)``;
  bounded ``g`` with bounded ``u``-derivatives of ``f``.
* :class:`HolderFamily` -- same ``f``, ``g = tanh(b u) + kappa min(|y|, 1)^(1/2) - a y``,
  only 1/2-Holder in ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .spectral import SpectralBasis, SpectralField, physical_values, spectral_coeffs
from .noise import NoiseSpec

__all__ = [
    "CoefficientPair",
    "LinearTestFamily",
    "BoundedFamily",
    "HolderFamily",
    "make_family",
    "apply_F",
    "apply_G",
    "analytic_Fbar_linear",
    "analytic_Sigma_linear",
    "analytic_DFbar_linear",
    "linear_fbar_provider",
    "linear_dfbar_provider",
    "linear_sigma_provider",
    "psd_sqrt",
]

LAMBDA_1 = np.pi**2


@dataclass(frozen=True)
class CoefficientPair:
    """Scalar drifts with the metadata the integrators and estimators rely on.

    ``lip_y_g`` is the Lipschitz constant of ``g`` in ``y``; the frozen equation
    contracts at rate ``lambda_1 - lip_y_g``, which must be positive.
    ``separable`` declares ``f(u, y) = f(u, 0) + f(0, y) - f(0, 0)``.
    """

    f: Callable
    g: Callable
    name: str = "custom"
    lip_u_f: float | None = None
    lip_y_g: float = 0.0
    sup_g: float | None = None
    holder_eta: float = 1.0
    separable: bool = False
    fast_depends_on_slow: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lip_y_g < LAMBDA_1:
            raise InvalidInputError(
                f"Lip_y(g) = {self.lip_y_g} must stay below lambda_1 = pi^2 for the frozen "
                "equation to be exponentially mixing"
            )

    @property
    def mixing_margin(self) -> float:
        return LAMBDA_1 - self.lip_y_g

    def F(self, u: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Galerkin-projected Nemytskii lift of ``f`` on raw coefficient arrays."""
        return spectral_coeffs(self.f(physical_values(u), physical_values(y)))

    def G(self, u: np.ndarray, y: np.ndarray) -> np.ndarray:
        return spectral_coeffs(self.g(physical_values(u), physical_values(y)))

    def describe(self) -> dict:
        return {"family": self.name, **self.params}


class LinearTestFamily(CoefficientPair):
    """``f(u, y) = c u + d y`` and ``g(u, y) = -a y + b u``."""

    def __init__(self, a: float = 1.0, b: float = 1.0, c: float = 0.0, d: float = 1.0):
        if a < 0 or not a + LAMBDA_1 > 0:
            raise InvalidInputError(f"decay rate a must be >= 0, got {a}")
        super().__init__(
            f=lambda u, y: c * u + d * y,
            g=lambda u, y: -a * y + b * u,
            name="linear",
            lip_u_f=abs(c),
            lip_y_g=a,
            sup_g=None,
            separable=True,
            fast_depends_on_slow=b != 0,
            params=dict(a=float(a), b=float(b), c=float(c), d=float(d)),
        )

    a = property(lambda self: self.params["a"])
    b = property(lambda self: self.params["b"])
    c = property(lambda self: self.params["c"])
    d = property(lambda self: self.params["d"])

    # linearity commutes with the transform; skip the grid round trip
    def F(self, u, y):
        return self.c * u + self.d * y

    def G(self, u, y):
        return -self.a * y + self.b * u

    def drift_factor(self, eigenvalues) -> np.ndarray:
        """Per-mode multiplier ``c + d b / (a + lambda_k)`` of the averaged drift."""
        return self.c + self.d * self.b / (self.a + np.asarray(eigenvalues))


class BoundedFamily(CoefficientPair):
    """``f = sin(u) + d tanh(y)``, ``g = tanh(b u) - a tanh(y)``."""

    def __init__(self, a: float = 1.0, b: float = 1.0, d: float = 1.0):
        if a < 0:
            raise InvalidInputError(f"a must be >= 0, got {a}")
        super().__init__(
            f=lambda u, y: np.sin(u) + d * np.tanh(y),
            g=lambda u, y: np.tanh(b * u) - a * np.tanh(y),
            name="bounded",
            lip_u_f=1.0,
            lip_y_g=a,
            sup_g=1.0 + a,
            separable=True,
            fast_depends_on_slow=b != 0,
            params=dict(a=float(a), b=float(b), d=float(d)),
        )


class HolderFamily(CoefficientPair):
    """Bounded-family ``f`` with ``g = tanh(b u) + kappa min(|y|, 1)^(1/2) - a y``.

    ``lip_y_g`` records the Lipschitz part ``a`` only; the Holder part is
    bounded by ``kappa`` and does not change the dissipativity at large ``|y|``.
    """

    def __init__(self, a: float = 1.0, b: float = 0.0, d: float = 1.0, kappa: float = 0.5):
        if a < 0:
            raise InvalidInputError(f"a must be >= 0, got {a}")
        super().__init__(
            f=lambda u, y: np.sin(u) + d * np.tanh(y),
            g=lambda u, y: np.tanh(b * u) + kappa * np.sqrt(np.minimum(np.abs(y), 1.0)) - a * y,
            name="holder",
            lip_u_f=1.0,
            lip_y_g=a,
            sup_g=None,
            holder_eta=0.5,
            separable=True,
            fast_depends_on_slow=b != 0,
            params=dict(a=float(a), b=float(b), d=float(d), kappa=float(kappa)),
        )


_FAMILIES = {"linear": LinearTestFamily, "bounded": BoundedFamily, "holder": HolderFamily}


def make_family(name: str, **params) -> CoefficientPair:
    """Instantiate a shipped family by name with a parameter block."""
    try:
        cls = _FAMILIES[name]
    except KeyError:
        raise InvalidInputError(f"unknown family {name!r}; choose from {sorted(_FAMILIES)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters for family {name!r}: {exc}") from None


def _same_basis(u: SpectralField, y: SpectralField):
    if u.basis != y.basis:
        raise InvalidInputError("u and y must share a basis")


def apply_F(u: SpectralField, y: SpectralField, coeffs: CoefficientPair) -> SpectralField:
    """``P_n F(u, y)``: pointwise ``f`` on the grid, projected back to ``n`` modes."""
    _same_basis(u, y)
    return SpectralField(coeffs.F(u.coeffs, y.coeffs), u.basis)


def apply_G(u: SpectralField, y: SpectralField, coeffs: CoefficientPair) -> SpectralField:
    _same_basis(u, y)
    return SpectralField(coeffs.G(u.coeffs, y.coeffs), u.basis)


def _require_linear(family):
    if not isinstance(family, LinearTestFamily):
        raise InvalidInputError("closed-form averaged quantities exist only for the linear family")


def analytic_Fbar_linear(family: LinearTestFamily, u: SpectralField) -> SpectralField:
    """Averaged drift: frozen stationary mean is ``b u_k / (a + lambda_k)`` per mode."""
    _require_linear(family)
    return SpectralField(family.drift_factor(u.basis.eigenvalues) * u.coeffs, u.basis)


def analytic_DFbar_linear(family: LinearTestFamily, h: SpectralField) -> SpectralField:
    """Derivative of the (linear) averaged drift in direction ``h``."""
    _require_linear(family)
    return SpectralField(family.drift_factor(h.basis.eigenvalues) * h.coeffs, h.basis)


def analytic_Sigma_linear(family: LinearTestFamily, fast_noise: NoiseSpec) -> np.ndarray:
    """Diffusion ``Sigma Sigma^*`` of the limit equation, ``diag(d^2 beta_k / (a + lambda_k)^2)``."""
    _require_linear(family)
    lam = SpectralBasis(fast_noise.n).eigenvalues
    return np.diag(family.d**2 * fast_noise.betas / (family.a + lam) ** 2)


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root of a symmetric PSD matrix."""
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def linear_fbar_provider(family: LinearTestFamily, basis: SpectralBasis):
    """Analytic averaged-drift provider on raw coefficient arrays."""
    factor = family.drift_factor(basis.eigenvalues)
    return lambda u: factor * u


def linear_dfbar_provider(family: LinearTestFamily, basis: SpectralBasis):
    """State-independent derivative, returned as a per-mode diagonal."""
    factor = family.drift_factor(basis.eigenvalues)
    return lambda u: factor


def linear_sigma_provider(family: LinearTestFamily, fast_noise: NoiseSpec):
    """State-independent noise factor ``Sigma`` of the limit equation."""
    sigma = psd_sqrt(analytic_Sigma_linear(family, fast_noise))
    return lambda u: sigma
