import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slowfast.coefficients import (
    BoundedFamily,
    LinearTestFamily,
    analytic_Sigma_linear,
    linear_fbar_provider,
)
from slowfast.dynamics import simulate_frozen
from slowfast.errors import InvalidInputError, NoiseDominatedError
from slowfast.estimators import (
    ErgodicConfig,
    estimate_DFbar,
    estimate_Fbar,
    estimate_Psi,
    estimate_Sigma,
    export_table,
    fit_rate,
    separable_fbar_provider,
)
from slowfast.noise import NoiseSpec, NoiseStream
from slowfast.spectral import SpectralBasis

N = 4
BASIS = SpectralBasis(N)
Q2 = NoiseSpec.power_law(N, role="fast")
FAM = LinearTestFamily()
CHEAP = ErgodicConfig(burn_in=1.0, horizon=6.0, dt=0.005, replicas=200)


def test_ergodic_config_validation():
    with pytest.raises(InvalidInputError):
        ErgodicConfig(burn_in=2.0, horizon=1.0)
    with pytest.raises(InvalidInputError):
        ErgodicConfig(replicas=1)
    with pytest.raises(InvalidInputError):
        ErgodicConfig(burn_in=0.1).check_margin(np.pi**2 - 1)


def test_fbar_matches_closed_form_on_linear_family():
    u = np.array([1.0, -0.5, 0.3, 2.0])
    est = estimate_Fbar(u, FAM, CHEAP, NoiseStream(1), Q2)
    exact = FAM.drift_factor(BASIS.eigenvalues) * u
    assert np.all(np.abs(est.value - exact) < 3.5 * est.stderr)


def test_fbar_stderr_scales_with_replicas():
    u = np.ones(N)
    small = estimate_Fbar(u, FAM, ErgodicConfig(1.0, 6.0, 0.005, 100), NoiseStream(2), Q2)
    large = estimate_Fbar(u, FAM, ErgodicConfig(1.0, 6.0, 0.005, 400), NoiseStream(3), Q2)
    ratio = small.stderr / large.stderr
    assert np.all((ratio > 1.5) & (ratio < 2.7))


def test_separable_table_reproduces_closed_form_when_fast_is_decoupled():
    fam = LinearTestFamily(b=0.0, c=0.4)
    fbar, shift = separable_fbar_provider(fam, CHEAP, NoiseStream(4), Q2, N)
    assert np.all(np.abs(shift.value) < 3.5 * shift.stderr)
    u = np.ones((2, N))
    np.testing.assert_allclose(fbar(u) - shift.value, 0.4 * u)


def test_separable_table_rejects_slow_dependent_fast_equation():
    with pytest.raises(InvalidInputError):
        separable_fbar_provider(BoundedFamily(b=1.0), CHEAP, NoiseStream(4), Q2, N)


def test_psi_matches_closed_form():
    u = np.array([1.0, 0.5, 0.0, 0.0])
    y = np.array([0.3, -0.2, 0.1, 0.0])
    est = estimate_Psi(u, y, FAM, linear_fbar_provider(FAM, BASIS), 1.0, 400, 5e-4, NoiseStream(5), Q2)
    lam = BASIS.eigenvalues
    exact = FAM.d * (y - FAM.b * u / (FAM.a + lam)) / (FAM.a + lam)
    assert np.all(np.abs(est.value - exact) < 3.5 * est.stderr + 1e-3 * np.abs(exact))
    assert est.info["tail_bound"] < 1e-3


def test_psi_is_centred_under_the_invariant_measure():
    u = np.array([1.0, 0.0, 0.0, 0.0])
    _, ys = simulate_frozen(u, np.zeros(N), 2.0, 0.005, FAM, NoiseStream(6), Q2, replicas=40, sample_every=400)
    fbar = linear_fbar_provider(FAM, BASIS)
    vals = np.array([estimate_Psi(u, y, FAM, fbar, 0.95, 20, 1e-3, NoiseStream(7, (str(i),)), Q2).value
                     for i, y in enumerate(ys[-1])])
    se = vals.std(axis=0, ddof=1) / math.sqrt(len(vals))
    assert np.all(np.abs(vals.mean(axis=0)) < 3.5 * se)


def test_psi_rejects_short_truncation():
    with pytest.raises(InvalidInputError):
        estimate_Psi(np.zeros(N), np.zeros(N), FAM, np.zeros(N), 0.1, 10, 1e-3, NoiseStream(1), Q2)


def test_sigma_is_symmetric_psd_and_diagonal_on_linear_family():
    cfg = ErgodicConfig(burn_in=1.0, horizon=5.0, dt=4e-4, replicas=200, thinning=25)
    est = estimate_Sigma(np.ones(N), FAM, linear_fbar_provider(FAM, BASIS), cfg, NoiseStream(8), Q2)
    np.testing.assert_array_equal(est.sigma_sq, est.sigma_sq.T)
    assert np.min(np.linalg.eigvalsh(est.sigma_sq)) >= -1e-15
    np.testing.assert_allclose(est.sigma @ est.sigma, est.sigma_sq, atol=1e-12)
    off = ~np.eye(N, dtype=bool)
    assert np.all(np.abs(est.raw[off]) < 4 * est.stderr[off])
    exact = np.diag(analytic_Sigma_linear(FAM, Q2))
    assert np.all(np.abs(np.diag(est.raw) - exact) < 4 * np.diag(est.stderr))


def test_dfbar_exact_for_linear_drift():
    fbar = linear_fbar_provider(FAM, BASIS)
    h = BASIS.field([1.0, 2.0, 0.0, -1.0])
    d = estimate_DFbar(BASIS.field(np.ones(N)), h, fbar)
    np.testing.assert_allclose(d.coeffs, FAM.drift_factor(BASIS.eigenvalues) * h.coeffs, rtol=1e-9)


def test_dfbar_central_difference_of_quadratic():
    h = BASIS.mode(2)
    d = estimate_DFbar(BASIS.field(np.arange(N, dtype=float)), h, lambda u: u**2, delta=0.1)
    np.testing.assert_allclose(d.coeffs, [0, 2.0, 0, 0], atol=1e-12)


def test_dfbar_rejects_raw_arrays():
    with pytest.raises(InvalidInputError):
        estimate_DFbar(np.zeros(N), BASIS.mode(1), lambda u: u)


def test_fit_recovers_exact_power():
    eps = 2.0 ** -np.arange(4, 10)
    fit = fit_rate(eps, 3.0 * eps**0.5, 0.01 * eps**0.5)
    assert fit.slope == pytest.approx(0.5, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert fit.halfwidth < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 100.0), st.lists(st.floats(0.8, 1.25), min_size=6, max_size=6))
def test_fit_slope_is_scale_invariant(scale, noise):
    eps = 2.0 ** -np.arange(4, 10)
    err = eps * np.array(noise)
    se = 0.05 * err
    a = fit_rate(eps, err, se)
    b = fit_rate(eps, scale * err, scale * se)
    assert b.slope == pytest.approx(a.slope, abs=1e-9)
    assert b.intercept == pytest.approx(a.intercept + math.log(scale), abs=1e-9)


def test_fit_rejects_noise_dominated_points():
    eps = 2.0 ** -np.arange(4, 9)
    with pytest.raises(NoiseDominatedError):
        fit_rate(eps, np.full(5, 1e-3), np.full(5, 5e-4))
    with pytest.raises(NoiseDominatedError):
        fit_rate(eps, np.zeros(5), np.zeros(5))


def test_fit_needs_four_points():
    with pytest.raises(InvalidInputError):
        fit_rate([0.1, 0.05, 0.02], [1, 0.5, 0.2], [0.01] * 3)


def test_export_table(tmp_path):
    est = estimate_Fbar(np.ones(N), FAM, CHEAP, NoiseStream(9), Q2)
    export_table(est, tmp_path / "fbar.csv")
    rows = list(csv.reader((tmp_path / "fbar.csv").open()))
    assert rows[0] == ["mode", "value", "stderr"] and len(rows) == N + 1
    assert float(rows[2][1]) == est.value[1]
