"""Experiment orchestration: rate studies, oracle suite, moment diagnostics, output.

An :class:`ExperimentSpec` fully determines an experiment (together with the
build); it round-trips through JSON and can be read from TOML or JSON files.
Replicas are split into fixed-size chunks, each with its own noise streams
labelled ``(kind, eps, chunk)``, so results do not depend on the number of
worker threads.  Per-replica summaries are concatenated in chunk order before
any statistic is computed.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.integrate

from . import __version__
from .coefficients import (
    LinearTestFamily,
    analytic_Fbar_linear,
    analytic_Sigma_linear,
    linear_dfbar_provider,
    linear_fbar_provider,
    linear_sigma_provider,
    make_family,
)
from .dynamics import (
    SimConfig,
    Streams,
    simulate_averaged,
    simulate_coupled,
    simulate_frozen,
    simulate_limit_deviation,
    simulate_slow_fast,
    limit_covariance_matrix,
)
from .errors import ConfigError, InvalidInputError, NoiseDominatedError, ReplicaAbortError
from .estimators import (
    ErgodicConfig,
    RateReport,
    estimate_DFbar,
    estimate_Fbar,
    estimate_Psi,
    estimate_Sigma,
    ergodic_fbar_provider,
    fit_rate,
    separable_fbar_provider,
    sigma_ergodic_config,
)
from .noise import (
    NoiseSpec,
    NoiseStream,
    fast_ou_convolution_increment,
    fast_ou_variance,
    wave_convolution_covariance,
    wave_convolution_increment,
)
from .spectral import (
    PhaseState,
    SpectralBasis,
    apply_wave_group,
    energy_norm,
    rotate,
    spectral_coeffs,
    physical_values,
)

__all__ = [
    "KINDS",
    "ExperimentSpec",
    "ResultRecord",
    "OracleCheck",
    "OracleReport",
    "MomentReport",
    "load_spec",
    "read_config",
    "build_fingerprint",
    "run_strong_rate",
    "run_weak_rate",
    "run_clt_rate",
    "run_oracle_suite",
    "run_moment_diagnostics",
    "run_experiment",
    "emit_results",
]

KINDS = ("strong-rate", "weak-rate", "clt-rate", "oracle-suite", "moment-diag")
RATE_KINDS = ("strong-rate", "weak-rate", "clt-rate")
DEFAULT_EPS_GRID = tuple(2.0**-k for k in range(4, 10))
DEFAULT_REPLICAS = {"strong-rate": 2000, "weak-rate": 2000, "clt-rate": 5000,
                    "oracle-suite": 100_000, "moment-diag": 200}
EXPECTED_SLOPE = {"strong-rate": (0.40, 0.60), "weak-rate": (0.80, 1.20), "clt-rate": (0.35, 0.65)}


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one experiment.

    Initial data default to ``u = e_1``, ``v = 0``, ``y = 2 e_1``; the test
    direction defaults to ``h = e_1 + e_2 / 2``.
    """

    kind: str = "strong-rate"
    eps_grid: tuple = DEFAULT_EPS_GRID
    replicas: int | None = None
    family: str = "linear"
    family_params: dict = field(default_factory=dict)
    T: float = 0.5
    n: int = 16
    checkpoints: int = 20
    micro_fraction: float = 0.02
    u0: tuple | None = None
    v0: tuple | None = None
    y0: tuple | None = None
    q1_exponent: float = 2.0
    q1_scale: float = 1.0
    q2_exponent: float = 2.0
    q2_scale: float = 1.0
    h: tuple | None = None
    theta: float = 0.0
    fbar: str = "auto"
    providers: str = "analytic"
    limit_dt: float = 2.5e-4
    ergodic: dict = field(default_factory=dict)
    seed: int = 12345
    output: str = "results"
    threads: int = 1
    chunk: int = 500
    abort_tolerance: float = 0.001
    expected_slope: tuple | None = None
    perturb_eigenvalues: float = 0.0

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        if self.kind == "moment-diagnostics":
            set_("kind", "moment-diag")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        grid = tuple(float(e) for e in np.atleast_1d(self.eps_grid))
        set_("eps_grid", grid)
        for name in ("u0", "v0", "y0", "h", "expected_slope"):
            val = getattr(self, name)
            if val is not None:
                set_(name, tuple(float(x) for x in val))
        set_("family_params", dict(self.family_params))
        set_("ergodic", dict(self.ergodic))
        if self.replicas is None:
            set_("replicas", DEFAULT_REPLICAS[self.kind])
        if int(self.replicas) != self.replicas or self.replicas < 1:
            raise ConfigError(f"replicas must be a positive integer, got {self.replicas!r}")
        set_("replicas", int(self.replicas))
        if not grid or any(not 0 < e <= 1 for e in grid):
            raise ConfigError("eps grid must be nonempty with entries in (0, 1]")
        if any(b >= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("eps grid must be strictly decreasing")
        if self.kind in RATE_KINDS:
            if len(grid) < 4:
                raise ConfigError("rate experiments need an eps grid of length >= 4")
            if self.replicas < 100:
                raise ConfigError("rate experiments need at least 100 replicas")
        if self.threads < 1 or self.chunk < 1:
            raise ConfigError("threads and chunk must be positive")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        for name, vec in (("u0", self.u0), ("v0", self.v0), ("y0", self.y0), ("h", self.h)):
            if vec is not None and len(vec) != self.n:
                raise ConfigError(f"{name} must have n = {self.n} entries")
        if self.fbar not in ("auto", "analytic", "table"):
            raise ConfigError(f"fbar must be auto, analytic or table; got {self.fbar!r}")
        if self.providers not in ("analytic", "estimated"):
            raise ConfigError(f"providers must be analytic or estimated; got {self.providers!r}")
        try:
            self.coefficients()
            self.ergodic_config()
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from None

    # --- construction helpers -------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    @property
    def basis(self) -> SpectralBasis:
        return SpectralBasis(self.n)

    def coefficients(self):
        return make_family(self.family, **self.family_params)

    def ergodic_config(self) -> ErgodicConfig:
        return ErgodicConfig(**self.ergodic)

    def noise(self):
        return (NoiseSpec.power_law(self.n, self.q1_exponent, self.q1_scale, "slow"),
                NoiseSpec.power_law(self.n, self.q2_exponent, self.q2_scale, "fast"))

    def initial(self):
        e1 = np.zeros(self.n)
        e1[0] = 1.0
        u0 = np.array(self.u0) if self.u0 is not None else e1
        v0 = np.array(self.v0) if self.v0 is not None else np.zeros(self.n)
        y0 = np.array(self.y0) if self.y0 is not None else 2.0 * e1
        return u0, v0, y0

    def direction(self) -> np.ndarray:
        if self.h is not None:
            return np.array(self.h)
        h = np.zeros(self.n)
        h[0] = 1.0
        if self.n > 1:
            h[1] = 0.5
        return h

    def sim_config(self, eps: float) -> SimConfig:
        u0, v0, y0 = self.initial()
        q1, q2 = self.noise()
        return SimConfig.build(eps, T=self.T, n=self.n, checkpoints=self.checkpoints,
                               c=self.micro_fraction, u0=u0, v0=v0, y0=y0, q1=q1, q2=q2)

    def limit_config(self) -> SimConfig:
        u0, v0, y0 = self.initial()
        q1, q2 = self.noise()
        return SimConfig(eps=1.0, T=self.T, dt_macro=self.T / self.checkpoints, dt_micro=self.limit_dt,
                         n=self.n, u0=u0, v0=v0, y0=y0, q1=q1, q2=q2, check_fast_resolution=False)

    def expected_band(self):
        if self.expected_slope is not None:
            return tuple(self.expected_slope)
        return EXPECTED_SLOPE.get(self.kind)


def read_config(path) -> dict:
    """Parse a TOML or JSON config (chosen by extension) into a plain dict.

    A JSON result record is accepted too; its ``config`` block is returned.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    suffix = path.suffix.lower()
    if suffix not in (".toml", ".json"):
        raise ConfigError(f"config must be .toml or .json, got {path.name}")
    try:
        if suffix == ".toml":
            import tomli

            data = tomli.loads(raw.decode("utf-8"))
        else:
            data = json.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if isinstance(data, dict) and "config" in data and "fingerprint" in data:
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not hold a table of settings")
    return {k.replace("-", "_"): v for k, v in data.items()}


def load_spec(path, overrides: dict | None = None) -> ExperimentSpec:
    """Read a config file and apply ``overrides`` on top."""
    data = read_config(path)
    data.update(overrides or {})
    return ExperimentSpec.from_dict(data)


def build_fingerprint() -> str:
    """Hash of the installed package sources (identifies the build)."""
    h = hashlib.sha256(__version__.encode())
    root = Path(__file__).parent
    for p in sorted(root.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


# --- replica fan-out ---------------------------------------------------------

def _chunks(total: int, size: int):
    return [(i, min(size, total - i * size)) for i in range(math.ceil(total / size))]


def _fan_out(spec: ExperimentSpec, work, total: int | None = None):
    chunks = _chunks(spec.replicas if total is None else total, spec.chunk)
    if spec.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            return list(pool.map(lambda c: work(*c), chunks))
    return [work(*c) for c in chunks]


def _streams(spec: ExperimentSpec, *labels) -> Streams:
    return Streams.from_root(NoiseStream(spec.seed, labels))


def _check_aborts(spec, aborts, total, where):
    if aborts > spec.abort_tolerance * total:
        raise ReplicaAbortError(
            f"{where}: {aborts} of {total} replicas aborted (tolerance {spec.abort_tolerance:.2%})"
        )


def _phi(x, h, theta):
    return np.sin(x @ h + theta)


def _fbar_provider(spec: ExperimentSpec, coeffs):
    """Averaged drift for the paired runs, plus diagnostics about how it was built."""
    mode = spec.fbar
    if mode == "auto":
        mode = "analytic" if isinstance(coeffs, LinearTestFamily) else "table"
    if mode == "analytic":
        if not isinstance(coeffs, LinearTestFamily):
            raise ConfigError("an analytic averaged drift exists only for the linear family")
        return linear_fbar_provider(coeffs, spec.basis), {"fbar": "analytic"}
    _, q2 = spec.noise()
    stream = NoiseStream(spec.seed, (spec.kind, "fbar-table"))
    try:
        fbar, est = separable_fbar_provider(coeffs, spec.ergodic_config(), stream, q2, spec.n)
    except InvalidInputError as exc:
        raise ConfigError(f"cannot tabulate the averaged drift: {exc}") from None
    return fbar, {"fbar": "table", "fbar_shift": est.value.tolist(), "fbar_shift_stderr": est.stderr.tolist()}


def _paired_ensemble(spec: ExperimentSpec, eps: float, coeffs, fbar):
    """Per-replica strong and weak summaries of coupled (slow-fast, averaged) runs."""
    cfg = spec.sim_config(eps)
    lam = spec.basis.eigenvalues
    h = spec.direction()
    hv = h / lam

    def work(i, r):
        te, tb = simulate_coupled(cfg, coeffs, fbar, _streams(spec, spec.kind, f"eps={eps!r}", f"chunk={i}"), r)
        ok = ~(te.aborted | tb.aborted)
        dp, dv = te.position - tb.position, te.velocity - tb.velocity
        D = np.sum(lam * dp**2 + dv**2, axis=-1)
        wpos = _phi(te.position[-1], h, spec.theta) - _phi(tb.position[-1], h, spec.theta)
        wvel = _phi(te.velocity[-1], hv, spec.theta) - _phi(tb.velocity[-1], hv, spec.theta)
        return D[:, ok], wpos[ok], wvel[ok], int((~ok).sum())

    parts = _fan_out(spec, work)
    D = np.concatenate([p[0] for p in parts], axis=1)
    wpos = np.concatenate([p[1] for p in parts])
    wvel = np.concatenate([p[2] for p in parts])
    aborts = sum(p[3] for p in parts)
    _check_aborts(spec, aborts, spec.replicas, f"eps={eps:g}")
    return cfg, D, wpos, wvel, aborts


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def _finish(report: RateReport, spec: ExperimentSpec) -> RateReport:
    try:
        fit = fit_rate(report.eps, report.errors, report.stderrs)
        report.slope, report.halfwidth = fit.slope, fit.halfwidth
        report.diagnostics["intercept"] = fit.intercept
    except NoiseDominatedError as exc:
        report.diagnostics["fit_rejected"] = str(exc)
    except InvalidInputError as exc:
        report.diagnostics["fit_rejected"] = str(exc)
    return report


def _new_report(spec):
    m = len(spec.eps_grid)
    return RateReport(spec.kind, np.array(spec.eps_grid), np.zeros(m), np.zeros(m),
                      np.zeros(m, dtype=int), np.zeros(m, dtype=int))


def run_strong_rate(spec: ExperimentSpec) -> RateReport:
    """RMS energy-norm error ``max_t sqrt(E |||X^eps_t - Xbar_t|||_1^2)`` per eps, shared W1."""
    coeffs = spec.coefficients()
    fbar, info = _fbar_provider(spec, coeffs)
    rep = _new_report(spec)
    rep.diagnostics.update(info)
    rep.diagnostics["argmax_time"] = []
    for j, eps in enumerate(spec.eps_grid):
        cfg, D, _, _, aborts = _paired_ensemble(spec, eps, coeffs, fbar)
        N = D.shape[1]
        m = D.mean(axis=1)
        t = int(np.argmax(m))
        rep.errors[j] = math.sqrt(m[t])
        se_m = D[t].std(ddof=1) / math.sqrt(N) if N > 1 else 0.0
        rep.stderrs[j] = se_m / (2.0 * math.sqrt(m[t])) if m[t] > 0 else 0.0
        rep.replicas[j], rep.aborts[j] = N, aborts
        rep.diagnostics["argmax_time"].append(float(cfg.times[t]))
    return _finish(rep, spec)


def run_weak_rate(spec: ExperimentSpec) -> RateReport:
    """``|E phi(U^eps_T) - E phi(Ubar_T)|`` by per-replica differencing on shared W1."""
    coeffs = spec.coefficients()
    fbar, info = _fbar_provider(spec, coeffs)
    rep = _new_report(spec)
    rep.diagnostics.update(info)
    vel_err, vel_se = [], []
    for j, eps in enumerate(spec.eps_grid):
        _, _, wpos, wvel, aborts = _paired_ensemble(spec, eps, coeffs, fbar)
        mp, sp = _mean_se(wpos)
        mv, sv = _mean_se(wvel)
        rep.errors[j], rep.stderrs[j] = abs(mp), sp
        rep.replicas[j], rep.aborts[j] = wpos.size, aborts
        vel_err.append(abs(mv))
        vel_se.append(sv)
    rep.diagnostics["velocity_error"] = vel_err
    rep.diagnostics["velocity_stderr"] = vel_se
    return _finish(rep, spec)


def _clt_providers(spec: ExperimentSpec, coeffs):
    if not isinstance(coeffs, LinearTestFamily):
        raise ConfigError("the CLT study needs state-independent Sigma and DFbar (linear family)")
    _, q2 = spec.noise()
    basis = spec.basis
    if spec.providers == "analytic":
        return (linear_dfbar_provider(coeffs, basis), linear_sigma_provider(coeffs, q2),
                np.diag(coeffs.drift_factor(basis.eigenvalues)), analytic_Sigma_linear(coeffs, q2), {})
    # estimated: one evaluation suffices since neither depends on the state
    erg = spec.ergodic_config()
    stream = NoiseStream(spec.seed, (spec.kind, "providers"))
    fbar = ergodic_fbar_provider(coeffs, erg, stream.derive("fbar"), q2)
    zero = basis.zeros()
    D = np.column_stack([estimate_DFbar(zero, basis.mode(k), fbar, delta=1e-3).coeffs
                         for k in range(1, basis.n + 1)])
    est = estimate_Sigma(np.zeros(basis.n), coeffs, fbar(np.zeros(basis.n)), sigma_ergodic_config(),
                         stream.derive("sigma"), q2)
    if not est.reliable:
        raise ConfigError(f"Sigma estimate unreliable: clipped mass {est.clipped_fraction:.1%} of trace")
    return (lambda u: D, lambda u: est.sigma, D, est.sigma_sq,
            {"sigma_clipped_fraction": est.clipped_fraction})


def _variance_se(x):
    x = np.asarray(x, dtype=float)
    c = x - x.mean()
    var = float(np.mean(c**2) * x.size / (x.size - 1))
    m4 = float(np.mean(c**4))
    return var, math.sqrt(max(m4 - var**2, 0.0) / x.size)


def limit_ensemble(spec: ExperimentSpec, coeffs, fbar, dfbar, sigma):
    """Per-replica ``Zbar_T`` (position, velocity) from an independent averaged ensemble."""
    lcfg = spec.limit_config()

    def work(i, r):
        st = _streams(spec, spec.kind, "limit", f"chunk={i}")
        bar = simulate_averaged(lcfg, fbar, st, r)
        z = simulate_limit_deviation(bar, dfbar, sigma, st.w, lcfg)
        ok = ~z.aborted
        return z.position[-1][ok], z.velocity[-1][ok], int((~ok).sum())

    parts = _fan_out(spec, work)
    aborts = sum(p[2] for p in parts)
    _check_aborts(spec, aborts, spec.replicas, "limit equation")
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]), aborts


def run_clt_rate(spec: ExperimentSpec) -> RateReport:
    """``|E phi(Z^eps_T) - E phi(Zbar_T)|`` from independent ensembles, SEs in quadrature."""
    coeffs = spec.coefficients()
    fbar, info = _fbar_provider(spec, coeffs)
    dfbar, sigma, D, SS, pinfo = _clt_providers(spec, coeffs)
    lam = spec.basis.eigenvalues
    h = spec.direction()
    hv = h / lam
    zp, zv, _ = limit_ensemble(spec, coeffs, fbar, dfbar, sigma)
    lim_p, lim_p_se = _mean_se(_phi(zp, h, spec.theta))
    lim_v, lim_v_se = _mean_se(_phi(zv, hv, spec.theta))

    P = limit_covariance_matrix(lam, D, SS, spec.T)
    n = spec.n
    var_oracle = float(h @ P[:n, :n] @ h)
    var_emp, var_se = _variance_se(zp @ h)

    rep = _new_report(spec)
    rep.diagnostics.update(info)
    rep.diagnostics.update(pinfo)
    rep.diagnostics["lyapunov"] = {"variance": var_emp, "stderr": var_se, "oracle": var_oracle,
                                   "z_score": (var_emp - var_oracle) / var_se if var_se > 0 else 0.0}
    vel_err, vel_se = [], []
    for j, eps in enumerate(spec.eps_grid):
        cfg = spec.sim_config(eps)
        s = 1.0 / math.sqrt(eps)

        def work(i, r):
            te, tb = simulate_coupled(cfg, coeffs, fbar, _streams(spec, spec.kind, f"eps={eps!r}", f"chunk={i}"), r)
            ok = ~(te.aborted | tb.aborted)
            zpos = (te.position[-1] - tb.position[-1]) * s
            zvel = (te.velocity[-1] - tb.velocity[-1]) * s
            return _phi(zpos, h, spec.theta)[ok], _phi(zvel, hv, spec.theta)[ok], int((~ok).sum())

        parts = _fan_out(spec, work)
        aborts = sum(p[2] for p in parts)
        _check_aborts(spec, aborts, spec.replicas, f"eps={eps:g}")
        mp, sp = _mean_se(np.concatenate([p[0] for p in parts]))
        mv, sv = _mean_se(np.concatenate([p[1] for p in parts]))
        rep.errors[j] = abs(mp - lim_p)
        rep.stderrs[j] = math.hypot(sp, lim_p_se)
        rep.replicas[j], rep.aborts[j] = spec.replicas - aborts, aborts
        vel_err.append(abs(mv - lim_v))
        vel_se.append(math.hypot(sv, lim_v_se))
    rep.diagnostics["velocity_error"] = vel_err
    rep.diagnostics["velocity_stderr"] = vel_se
    return _finish(rep, spec)


# --- oracle suite ------------------------------------------------------------

@dataclass
class OracleCheck:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


@dataclass
class OracleReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _z_check(name, emp, exact, se, detail=""):
    z = np.abs(np.asarray(emp) - np.asarray(exact)) / np.asarray(se)
    worst = float(np.max(z))
    return OracleCheck(name, worst <= 3.0, worst, 3.0, detail or "max |z| over modes")


def run_oracle_suite(spec: ExperimentSpec) -> OracleReport:
    """Closed-form checks of every building block, with measured values.

    ``spec.replicas`` is the draw count for sampler checks;
    ``spec.perturb_eigenvalues`` injects a relative error into the frequencies
    used by the wave group (a negative control for the isometry check).
    """
    basis = spec.basis
    n = basis.n
    lam = basis.eigenvalues
    N = spec.replicas
    root = NoiseStream(spec.seed, ("oracle-suite",))
    rng = root.derive("states").generator()
    checks = []

    # deterministic core
    X = PhaseState.from_arrays(rng.standard_normal(n) / basis.modes, rng.standard_normal(n), basis)
    lam_used = lam * (1.0 + spec.perturb_eigenvalues)
    cos, sin, omega = np.cos(np.sqrt(lam_used) * 0.37), np.sin(np.sqrt(lam_used) * 0.37), np.sqrt(lam_used)
    p, v = rotate(X.position.coeffs, X.velocity.coeffs, cos, sin, omega)
    Xt = PhaseState.from_arrays(p, v, basis)
    iso = max(abs(energy_norm(Xt, a) / energy_norm(X, a) - 1.0) for a in (0.0, 1.0))
    checks.append(OracleCheck("wave-group isometry", iso <= 1e-12, float(iso), 1e-12))
    A = apply_wave_group(apply_wave_group(X, 0.21), 0.34)
    B = apply_wave_group(X, 0.55)
    comp = float(energy_norm(A - B, 1.0) / energy_norm(B, 1.0))
    checks.append(OracleCheck("wave-group composition", comp <= 1e-12, comp, 1e-12))
    c = rng.standard_normal((8, n))
    rt = float(np.max(np.abs(spectral_coeffs(physical_values(c)) - c)) / np.max(np.abs(c)))
    checks.append(OracleCheck("transform round-trip", rt <= 1e-12, rt, 1e-12))

    # exact convolution samplers
    modes = sorted({1, 2, min(4, n), min(8, n), n})
    idx = np.array(modes) - 1
    q1, q2 = NoiseSpec.power_law(n, role="slow"), NoiseSpec.power_law(n, role="fast")
    dt, eps = 0.01, 0.05
    draws = fast_ou_convolution_increment(q2, lam, dt, eps, root.derive("ou"), size=N)
    var_exact = fast_ou_variance(q2.betas, lam, dt, eps)
    emp = draws.var(axis=0, ddof=1)
    checks.append(_z_check("fast OU convolution variance", emp[idx], var_exact[idx],
                           var_exact[idx] * math.sqrt(2.0 / (N - 1))))
    dtw = 0.05
    dp, dv = wave_convolution_increment(q1, lam, dtw, root.derive("wave"), size=N)
    worst = 0.0
    for k in idx:
        w = math.sqrt(lam[k])
        quad = [scipy.integrate.quad(fn, 0.0, dtw, limit=200)[0] * q1.betas[k] for fn in (
            lambda r: (math.sin(w * r) / w) ** 2, lambda r: math.cos(w * r) ** 2,
            lambda r: math.sin(w * r) / w * math.cos(w * r))]
        prods = (dp[:, k] ** 2, dv[:, k] ** 2, dp[:, k] * dv[:, k])
        for est, ex in zip(prods, quad):
            z = abs(est.mean() - ex) / (est.std(ddof=1) / math.sqrt(N))
            worst = max(worst, z)
    checks.append(OracleCheck("wave convolution covariance vs quadrature", worst <= 3.0, worst, 3.0,
                              "max |z| over modes and entries"))
    formula = np.array(wave_convolution_covariance(q1.betas, lam, dtw))[:, idx]
    quad_err = 0.0
    for j, k in enumerate(idx):
        w = math.sqrt(lam[k])
        qv = scipy.integrate.quad(lambda r: (math.sin(w * r) / w) ** 2, 0.0, dtw)[0] * q1.betas[k]
        quad_err = max(quad_err, abs(formula[0, j] - qv) / qv)
    checks.append(OracleCheck("wave convolution closed form vs quadrature", quad_err <= 1e-8, quad_err, 1e-8))

    # frozen equation and averaged quantities on the linear family
    fam = LinearTestFamily(1.0, 1.0, 0.0, 1.0)
    u = basis.mode(1).coeffs + 0.5 * (basis.mode(2).coeffs if n > 1 else 0)
    R = 20_000
    _, ys = simulate_frozen(u, np.zeros(n), 2.0, 0.005, fam, root.derive("frozen"), q2, replicas=R,
                            sample_every=400)
    yT = ys[-1][:, :2]
    mean_exact = fam.b * u[:2] / (fam.a + lam[:2])
    var_exact = q2.betas[:2] / (2.0 * (fam.a + lam[:2]))
    checks.append(_z_check("frozen stationary mean", yT.mean(0), mean_exact, np.sqrt(var_exact / R)))
    checks.append(_z_check("frozen stationary variance", yT.var(0, ddof=1), var_exact,
                           var_exact * math.sqrt(2.0 / (R - 1))))
    est = estimate_Fbar(u, fam, ErgodicConfig(horizon=11.0, replicas=500), root.derive("fbar"), q2)
    exact = analytic_Fbar_linear(fam, basis.field(u)).coeffs
    checks.append(_z_check("averaged drift vs closed form", est.value[:4], exact[:4], est.stderr[:4]))
    y = 0.3 * basis.mode(1).coeffs
    psi = estimate_Psi(u, y, fam, linear_fbar_provider(fam, basis), 8.0 / fam.mixing_margin, 1000, 2e-4,
                       root.derive("psi"), q2)
    m = fam.b * u / (fam.a + lam)
    psi_exact = fam.d * (y - m) / (fam.a + lam)
    checks.append(_z_check("Poisson solution vs closed form", psi.value[:4], psi_exact[:4], psi.stderr[:4]))
    sig = estimate_Sigma(u, fam, linear_fbar_provider(fam, basis), sigma_ergodic_config(),
                         root.derive("sigma"), q2)
    ss_exact = np.diag(analytic_Sigma_linear(fam, q2))
    checks.append(_z_check("limit diffusion vs closed form", np.diag(sig.raw)[:4], ss_exact[:4],
                           np.diag(sig.stderr)[:4]))
    checks.append(OracleCheck("limit diffusion clipped mass", sig.clipped_fraction < 0.01,
                              sig.clipped_fraction, 0.01))
    return OracleReport(checks)


# --- moment diagnostics ------------------------------------------------------

@dataclass
class MomentReport:
    """Sampled ``sup_t E|||X_t|||_1^2`` and ``sup_t E||Y_t||^2`` across the eps grid."""

    eps: np.ndarray
    slow_energy: np.ndarray
    fast_energy: np.ndarray
    replicas: np.ndarray
    aborts: np.ndarray
    ratio: float
    flagged: bool
    blow_up: bool

    def rows(self):
        for row in zip(self.eps, self.slow_energy, self.fast_energy, self.replicas, self.aborts):
            yield float(row[0]), float(row[1]), float(row[2]), int(row[3]), int(row[4])


def run_moment_diagnostics(spec: ExperimentSpec, coeffs=None) -> MomentReport:
    """``coeffs`` overrides the configured family (e.g. a deliberately unstable stub)."""
    coeffs = spec.coefficients() if coeffs is None else coeffs
    m = len(spec.eps_grid)
    slow, fast = np.zeros(m), np.zeros(m)
    reps, aborts = np.zeros(m, dtype=int), np.zeros(m, dtype=int)
    for j, eps in enumerate(spec.eps_grid):
        cfg = spec.sim_config(eps)

        def work(i, r):
            tr = simulate_slow_fast(cfg, coeffs, _streams(spec, spec.kind, f"eps={eps!r}", f"chunk={i}"), r)
            ok = ~tr.aborted
            return tr.energy_sq(1.0)[:, ok], np.sum(tr.fast[:, ok] ** 2, axis=-1), int((~ok).sum())

        parts = _fan_out(spec, work)
        E = np.concatenate([p[0] for p in parts], axis=1)
        Y = np.concatenate([p[1] for p in parts], axis=1)
        aborts[j] = sum(p[2] for p in parts)
        reps[j] = E.shape[1]
        with np.errstate(all="ignore"):
            slow[j] = np.max(E.mean(axis=1)) if E.shape[1] else np.inf
            fast[j] = np.max(Y.mean(axis=1)) if Y.shape[1] else np.inf
    blow_up = bool(np.any(aborts > 0) or not np.all(np.isfinite(slow)) or not np.all(np.isfinite(fast)))
    with np.errstate(all="ignore"):
        ratio = float(np.max(slow) / np.min(slow)) if np.all(np.isfinite(slow)) else math.inf
    return MomentReport(np.array(spec.eps_grid), slow, fast, reps, aborts, ratio,
                        blow_up or not ratio < 2.0, blow_up)


# --- records and output --------------------------------------------------------

@dataclass
class ResultRecord:
    experiment_id: str
    kind: str
    fingerprint: str
    version: str
    seed: int
    config: dict
    columns: list
    rows: list
    slope: float | None = None
    halfwidth: float | None = None
    passed: bool | None = None
    diagnostics: dict = field(default_factory=dict)
    wall_clock: float | None = None

    def to_json_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("wall_clock")
        return _plain(d)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _experiment_id(spec: ExperimentSpec) -> str:
    blob = json.dumps(spec.to_dict(), sort_keys=True).encode()
    return f"{spec.kind}-{hashlib.sha256(blob).hexdigest()[:10]}"


def run_experiment(spec: ExperimentSpec) -> ResultRecord:
    """Run ``spec`` and package the outcome as a :class:`ResultRecord`."""
    start = time.perf_counter()
    base = dict(experiment_id=_experiment_id(spec), kind=spec.kind, fingerprint=build_fingerprint(),
                version=__version__, seed=spec.seed, config=spec.to_dict())
    if spec.kind in RATE_KINDS:
        runner = {"strong-rate": run_strong_rate, "weak-rate": run_weak_rate, "clt-rate": run_clt_rate}[spec.kind]
        rep = runner(spec)
        lo, hi = spec.expected_band()
        passed = rep.slope is not None and lo <= rep.slope <= hi
        if spec.kind == "clt-rate":
            passed = passed and abs(rep.diagnostics["lyapunov"]["z_score"]) <= 3.0
        rec = ResultRecord(**base, columns=["epsilon", "error", "stderr", "replicas", "aborts"],
                           rows=[list(r) for r in rep.rows()], slope=rep.slope, halfwidth=rep.halfwidth,
                           passed=passed, diagnostics=dict(rep.diagnostics, expected_slope=[lo, hi]))
    elif spec.kind == "oracle-suite":
        rep = run_oracle_suite(spec)
        rec = ResultRecord(**base, columns=["check", "passed", "value", "tolerance"],
                           rows=[[c.name, c.passed, c.value, c.tolerance] for c in rep.checks],
                           passed=rep.passed)
    else:
        rep = run_moment_diagnostics(spec)
        rec = ResultRecord(**base, columns=["epsilon", "sup_slow_energy", "sup_fast_energy", "replicas", "aborts"],
                           rows=[list(r) for r in rep.rows()], passed=not rep.flagged,
                           diagnostics={"ratio": rep.ratio, "flagged": rep.flagged, "blow_up": rep.blow_up})
    rec.wall_clock = time.perf_counter() - start
    return rec


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_results(record: ResultRecord, path) -> dict:
    """Write ``<id>.csv`` and ``<id>.json`` (plus a wall-clock sidecar) under ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        buf.write(f"# slowfast {record.version} build {record.fingerprint}\n")
        buf.write(f"# experiment {record.experiment_id} seed {record.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(record.columns)
        for row in record.rows:
            w.writerow([_fmt(v) for v in row])
        csv_path = out / f"{record.experiment_id}.csv"
        json_path = out / f"{record.experiment_id}.json"
        timing_path = out / f"{record.experiment_id}.timing.json"
        csv_path.write_text(buf.getvalue())
        json_path.write_text(json.dumps(record.to_json_dict(), indent=2, sort_keys=True) + "\n")
        timing_path.write_text(json.dumps({"wall_clock_seconds": record.wall_clock}) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results under {out}: {exc}") from exc
    return {"csv": csv_path, "json": json_path, "timing": timing_path}
