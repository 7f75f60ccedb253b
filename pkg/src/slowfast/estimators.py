"""Monte Carlo estimators for the averaged drift, the Poisson solution and the
limit diffusion, plus log-log rate fitting.

The invariant measure of the frozen equation has no direct sampler; every
estimator below time-averages a frozen trajectory after a burn-in and uses
independent replicas for standard errors.  The Poisson solution is never
obtained by discretising the frozen generator; it is represented as

    Psi(u, y) = int_0^inf E[dF(u, Y_t^u(y))] dt,   dF = F - Fbar,

truncated at ``T_cut`` with an exponential tail bound from the mixing margin.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .coefficients import CoefficientPair
from .dynamics import FastFlow
from .errors import InvalidInputError, NoiseDominatedError
from .noise import NoiseSpec, NoiseStream
from .spectral import SpectralBasis, SpectralField, sobolev_norm

__all__ = [
    "ErgodicConfig",
    "Estimate",
    "SigmaEstimate",
    "RateFit",
    "RateReport",
    "sigma_ergodic_config",
    "estimate_Fbar",
    "estimate_Psi",
    "estimate_Sigma",
    "estimate_DFbar",
    "ergodic_fbar_provider",
    "separable_fbar_provider",
    "fit_rate",
    "export_table",
]


@dataclass(frozen=True)
class ErgodicConfig:
    """Budget for time-averaging the frozen equation."""

    burn_in: float = 1.0
    horizon: float = 21.0
    dt: float = 0.005
    replicas: int = 1000
    thinning: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and self.burn_in >= 0 and self.horizon > self.burn_in):
            raise InvalidInputError("need dt > 0 and horizon > burn_in >= 0")
        if self.replicas < 2 or self.thinning < 1:
            raise InvalidInputError("need at least 2 replicas and thinning >= 1")

    def check_margin(self, margin: float):
        if margin <= 0:
            raise InvalidInputError(f"mixing margin {margin:g} is not positive; the frozen equation may not mix")
        if self.burn_in < 5.0 / margin:
            raise InvalidInputError(f"burn_in {self.burn_in:g} is shorter than 5 / margin = {5.0 / margin:g}")


def sigma_ergodic_config() -> ErgodicConfig:
    """Default budget for :func:`estimate_Sigma`.

    The Poisson integral resolves autocorrelations of time scale
    ``1 / (a + lambda_k)``, so the step is much finer than for the drift average.
    """
    return ErgodicConfig(burn_in=1.0, horizon=11.0, dt=4e-4, replicas=1000, thinning=25)


@dataclass(frozen=True, eq=False)
class Estimate:
    """A spectral field with per-mode Monte Carlo standard errors."""

    field: SpectralField
    stderr: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def value(self) -> np.ndarray:
        return self.field.coeffs


@dataclass(frozen=True, eq=False)
class SigmaEstimate:
    """``Sigma Sigma^*`` estimate, its PSD square root and clipping diagnostics."""

    sigma_sq: np.ndarray
    stderr: np.ndarray
    sigma: np.ndarray
    clipped_fraction: float
    reliable: bool
    raw: np.ndarray


def _fbar_value(fbar, u: np.ndarray) -> np.ndarray:
    if callable(fbar):
        return np.asarray(fbar(u), dtype=float)
    if isinstance(fbar, Estimate):
        return fbar.value
    if isinstance(fbar, SpectralField):
        return fbar.coeffs
    return np.asarray(fbar, dtype=float)


def _rng(stream):
    return stream.generator() if isinstance(stream, NoiseStream) else stream


def _coeffs_of(x):
    return x.coeffs if isinstance(x, SpectralField) else np.asarray(x, dtype=float)


def estimate_Fbar(u, coeffs: CoefficientPair, config: ErgodicConfig, stream, q2: NoiseSpec,
                  y0=None) -> Estimate:
    """Ergodic average of ``F(u, Y_t^u)`` over ``[burn_in, horizon]`` and replicas."""
    config.check_margin(coeffs.mixing_margin)
    u = _coeffs_of(u)
    n = u.size
    basis = SpectralBasis(n)
    flow = FastFlow(basis.eigenvalues, q2.betas, config.dt, 1.0)
    rng = _rng(stream)
    R = config.replicas
    uu = np.broadcast_to(u, (R, n))
    y = np.zeros((R, n)) if y0 is None else np.array(np.broadcast_to(_coeffs_of(y0), (R, n)))
    start = int(round(config.burn_in / config.dt))
    steps = int(round(config.horizon / config.dt))
    acc = np.zeros((R, n))
    count = 0
    for j in range(1, steps + 1):
        y = flow.step(y, coeffs.G(uu, y), rng)
        if j > start and (j - start) % config.thinning == 0:
            acc += coeffs.F(uu, y)
            count += 1
    per_replica = acc / count
    return Estimate(
        SpectralField(per_replica.mean(axis=0), basis),
        per_replica.std(axis=0, ddof=1) / math.sqrt(R),
        {"samples_per_replica": count, "replicas": R},
    )


def ergodic_fbar_provider(coeffs: CoefficientPair, config: ErgodicConfig, stream: NoiseStream, q2: NoiseSpec):
    """Averaged-drift provider backed by :func:`estimate_Fbar`.

    Every call replays the same stream, so nearby evaluations share common
    random numbers (finite differences stay smooth).
    """

    def fbar(u):
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            return estimate_Fbar(u, coeffs, config, stream, q2).value
        return np.array([estimate_Fbar(ui, coeffs, config, stream, q2).value for ui in u])

    return fbar


def separable_fbar_provider(coeffs: CoefficientPair, config: ErgodicConfig, stream: NoiseStream,
                            q2: NoiseSpec, n: int):
    """Tabulated averaged drift for separable ``f`` and a fast equation free of ``u``.

    Then ``Fbar(u) = F(u, 0) + (E_mu F(0, Y) - F(0, 0))`` with a single
    ``u``-independent shift, estimated once.  Returns ``(provider, shift_estimate)``.
    """
    if not coeffs.separable or coeffs.fast_depends_on_slow:
        raise InvalidInputError(
            "a tabulated averaged drift needs separable f and a fast equation independent of u"
        )
    zero = np.zeros(n)
    est = estimate_Fbar(zero, coeffs, config, stream, q2)
    shift = est.value - coeffs.F(zero[None], zero[None])[0]

    def fbar(u):
        return coeffs.F(u, np.zeros_like(u)) + shift

    return fbar, Estimate(SpectralField(shift, SpectralBasis(n)), est.stderr, est.info)


def estimate_Psi(u, y, coeffs: CoefficientPair, fbar, T_cut: float, replicas: int, dt: float,
                 stream, q2: NoiseSpec) -> Estimate:
    """Truncated time integral of ``E[F(u, Y_t^u(y))] - Fbar(u)`` (trapezoidal rule)."""
    margin = coeffs.mixing_margin
    if margin <= 0:
        raise InvalidInputError("frozen equation is not mixing")
    if T_cut < 8.0 / margin:
        raise InvalidInputError(f"T_cut = {T_cut:g} is below 8 / margin = {8.0 / margin:g}")
    if replicas < 2 or not dt > 0:
        raise InvalidInputError("need replicas >= 2 and dt > 0")
    u, y = _coeffs_of(u), _coeffs_of(y)
    n = u.size
    basis = SpectralBasis(n)
    fb = _fbar_value(fbar, u)
    flow = FastFlow(basis.eigenvalues, q2.betas, dt, 1.0)
    rng = _rng(stream)
    uu = np.broadcast_to(u, (replicas, n))
    yy = np.array(np.broadcast_to(y, (replicas, n)))
    steps = int(math.ceil(T_cut / dt - 1e-9))
    prev = coeffs.F(uu, yy) - fb
    first = prev[0].copy()
    integral = np.zeros((replicas, n))
    for _ in range(steps):
        yy = flow.step(yy, coeffs.G(uu, yy), rng)
        cur = coeffs.F(uu, yy) - fb
        integral += 0.5 * dt * (prev + cur)
        prev = cur
    tail = float(np.linalg.norm(first)) * math.exp(-margin * steps * dt) / margin
    return Estimate(
        SpectralField(integral.mean(axis=0), basis),
        integral.std(axis=0, ddof=1) / math.sqrt(replicas),
        {"tail_bound": tail, "T_cut": steps * dt},
    )


def estimate_Sigma(u, coeffs: CoefficientPair, fbar, config: ErgodicConfig, stream, q2: NoiseSpec,
                   T_cut: float | None = None) -> SigmaEstimate:
    """Ergodic average of ``dF(u, y) (x) Psi(u, y)`` symmetrised into ``Sigma Sigma^*``.

    Along each stationary frozen path the Poisson solution at ``Y_s`` is
    estimated by the single-path integral ``int_s^{s+T_cut} dF(u, Y_r) dr``,
    which is unbiased for ``Psi(u, Y_s)`` given ``Y_s`` by the Markov property.
    ``M = E_mu[dF (x) Psi]`` and ``Sigma Sigma^* = M + M^T``; negative
    eigenvalues from sampling noise are clipped and their mass reported.
    """
    margin = coeffs.mixing_margin
    config.check_margin(margin)
    T_cut = 8.0 / margin if T_cut is None else T_cut
    if T_cut < 8.0 / margin:
        raise InvalidInputError(f"T_cut = {T_cut:g} is below 8 / margin = {8.0 / margin:g}")
    u = _coeffs_of(u)
    n = u.size
    basis = SpectralBasis(n)
    fb = _fbar_value(fbar, u)
    dt = config.dt
    R = config.replicas
    flow = FastFlow(basis.eigenvalues, q2.betas, dt, 1.0)
    rng = _rng(stream)
    uu = np.broadcast_to(u, (R, n))
    y = np.zeros((R, n))
    lag = int(math.ceil(T_cut / dt - 1e-9))
    start = int(round(config.burn_in / dt))
    stop = int(round(config.horizon / dt))
    thin = config.thinning
    # only sampled times are kept: a sample is read back exactly `lag` steps later
    slots = lag // thin + 2
    ring_dF = np.zeros((slots, R, n))
    ring_S = np.zeros((slots, R, n))
    S = np.zeros((R, n))
    prev = None
    acc = np.zeros((R, n, n))
    count = 0
    for j in range(stop + lag + 1):
        if j > 0:
            y = flow.step(y, coeffs.G(uu, y), rng)
        cur = coeffs.F(uu, y) - fb
        if prev is not None:
            S += 0.5 * dt * (prev + cur)
        prev = cur
        if start <= j <= stop and (j - start) % thin == 0:
            slot = ((j - start) // thin) % slots
            ring_dF[slot] = cur
            ring_S[slot] = S
        s = j - lag
        if start <= s <= stop and (s - start) % thin == 0:
            slot = ((s - start) // thin) % slots
            psi = S - ring_S[slot]
            acc += ring_dF[slot][:, :, None] * psi[:, None, :]
            count += 1
    M_r = acc / count
    sym_r = M_r + np.swapaxes(M_r, 1, 2)
    raw = sym_r.mean(axis=0)
    stderr = sym_r.std(axis=0, ddof=1) / math.sqrt(R)
    w, v = np.linalg.eigh(raw)
    neg = float(max(0.0, -np.sum(w[w < 0])))
    pos = float(np.sum(w[w > 0]))
    frac = neg / pos if pos > 0 else (0.0 if neg == 0 else math.inf)
    wc = np.clip(w, 0.0, None)
    sigma_sq = (v * wc) @ v.T
    sigma = (v * np.sqrt(wc)) @ v.T
    # exact symmetry after the eigen round trip
    sigma_sq = 0.5 * (sigma_sq + sigma_sq.T)
    sigma = 0.5 * (sigma + sigma.T)
    return SigmaEstimate(sigma_sq, stderr, sigma, frac, frac <= 0.10, raw)


def estimate_DFbar(u, h, fbar, delta: float | None = None) -> SpectralField:
    """Central difference ``(Fbar(u + delta h) - Fbar(u - delta h)) / (2 delta)``.

    Default step ``1e-3 (1 + ||u||_1)``.
    """
    if not isinstance(u, SpectralField) or not isinstance(h, SpectralField):
        raise InvalidInputError("u and h must be SpectralFields")
    if delta is None:
        delta = 1e-3 * (1.0 + float(sobolev_norm(u, 1.0)))
    if not delta > 0:
        raise InvalidInputError(f"finite-difference step must be positive, got {delta}")
    up = _fbar_value(fbar, u.coeffs + delta * h.coeffs)
    dn = _fbar_value(fbar, u.coeffs - delta * h.coeffs)
    return SpectralField((up - dn) / (2.0 * delta), u.basis)


@dataclass(frozen=True)
class RateFit:
    slope: float
    halfwidth: float
    intercept: float


@dataclass
class RateReport:
    """Per-eps errors with standard errors and the fitted log-log slope."""

    kind: str
    eps: np.ndarray
    errors: np.ndarray
    stderrs: np.ndarray
    replicas: np.ndarray
    aborts: np.ndarray
    slope: float | None = None
    halfwidth: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def rows(self):
        for e, err, se, r, a in zip(self.eps, self.errors, self.stderrs, self.replicas, self.aborts):
            yield float(e), float(err), float(se), int(r), int(a)


def fit_rate(eps, errors, stderrs, confidence: float = 0.95) -> RateFit:
    """Weighted least squares of ``log err`` on ``log eps``.

    Weights come from the delta-method standard error ``se / err`` of each log
    error; with any zero standard error the fit is unweighted.  The half-width
    uses the residual-scaled covariance and a Student-t quantile.
    """
    eps = np.asarray(eps, dtype=float)
    err = np.asarray(errors, dtype=float)
    se = np.asarray(stderrs, dtype=float)
    if eps.size < 4 or err.size != eps.size or se.size != eps.size:
        raise InvalidInputError("rate fit needs at least 4 matching (eps, error, stderr) points")
    if np.any(eps <= 0) or np.any(err < 0) or np.any(se < 0):
        raise InvalidInputError("eps must be positive, errors and stderrs nonnegative")
    noisy = err <= 3.0 * se
    if np.any(noisy):
        raise NoiseDominatedError(
            f"errors at eps = {eps[noisy].tolist()} are within 3 standard errors of zero; "
            "raise the replica count"
        )
    x, y = np.log(eps), np.log(err)
    sig = se / err
    w = np.ones_like(x) if np.any(sig == 0) else 1.0 / sig**2
    X = np.column_stack([x, np.ones_like(x)])
    XtW = X.T * w
    cov_unscaled = np.linalg.inv(XtW @ X)
    beta = cov_unscaled @ (XtW @ y)
    resid = y - X @ beta
    dof = x.size - 2
    chi2 = float(np.sum(w * resid**2))
    cov = cov_unscaled * chi2 / dof
    t = scipy.stats.t.ppf(0.5 + confidence / 2.0, dof)
    return RateFit(float(beta[0]), float(t * math.sqrt(max(cov[0, 0], 0.0))), float(beta[1]))


def export_table(estimate, path):
    """Write an :class:`Estimate` or the diagonal of a :class:`SigmaEstimate` as
    ``mode,value,stderr`` rows."""
    if isinstance(estimate, SigmaEstimate):
        value, se = np.diag(estimate.sigma_sq), np.diag(estimate.stderr)
    elif isinstance(estimate, Estimate):
        value, se = estimate.value, np.asarray(estimate.stderr)
    else:
        raise InvalidInputError(f"cannot export {type(estimate).__name__}")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mode", "value", "stderr"])
            for k, (v, e) in enumerate(zip(value, se), start=1):
                w.writerow([k, repr(float(v)), repr(float(e))])
    except OSError as exc:
        raise OSError(f"cannot write table to {path}: {exc}") from exc
