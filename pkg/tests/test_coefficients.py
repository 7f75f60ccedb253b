import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from slowfast.coefficients import (
    BoundedFamily,
    CoefficientPair,
    HolderFamily,
    LinearTestFamily,
    analytic_DFbar_linear,
    analytic_Fbar_linear,
    analytic_Sigma_linear,
    apply_F,
    linear_dfbar_provider,
    linear_fbar_provider,
    linear_sigma_provider,
    make_family,
    psd_sqrt,
)
from slowfast.errors import InvalidInputError
from slowfast.noise import NoiseSpec
from slowfast.spectral import SpectralBasis, physical_values

BASIS = SpectralBasis(8)
vec = arrays(np.float64, 8, elements=st.floats(-3, 3))


def test_dissipativity_threshold_enforced():
    with pytest.raises(InvalidInputError):
        CoefficientPair(f=np.add, g=np.subtract, lip_y_g=np.pi**2)
    assert CoefficientPair(f=np.add, g=np.subtract, lip_y_g=9.0).mixing_margin == pytest.approx(np.pi**2 - 9)


@pytest.mark.parametrize("name, cls", [("linear", LinearTestFamily), ("bounded", BoundedFamily),
                                       ("holder", HolderFamily)])
def test_make_family_by_name(name, cls):
    fam = make_family(name)
    assert isinstance(fam, cls) and fam.describe()["family"] == name


def test_make_family_rejects_unknown_name_and_params():
    with pytest.raises(InvalidInputError):
        make_family("cubic")
    with pytest.raises(InvalidInputError):
        make_family("linear", z=1.0)


def test_linear_family_rejects_negative_decay():
    with pytest.raises(InvalidInputError):
        LinearTestFamily(a=-0.5)


@settings(max_examples=30, deadline=None)
@given(vec, vec)
def test_linear_shortcut_equals_grid_lift(u, y):
    fam = LinearTestFamily(a=0.7, b=1.3, c=0.2, d=-0.4)
    grid = CoefficientPair(f=lambda p, q: 0.2 * p - 0.4 * q, g=lambda p, q: -0.7 * q + 1.3 * p)
    np.testing.assert_allclose(fam.F(u, y), grid.F(u, y), atol=1e-12)
    np.testing.assert_allclose(fam.G(u, y), grid.G(u, y), atol=1e-12)


def test_nemytskii_lift_evaluates_pointwise():
    fam = BoundedFamily()
    u = BASIS.mode(1, 0.8)
    y = BASIS.mode(3, -0.5)
    vals = physical_values(apply_F(u, y, fam).coeffs)
    expected = np.sin(physical_values(u.coeffs)) + np.tanh(physical_values(y.coeffs))
    np.testing.assert_allclose(vals, expected, atol=1e-13)


def test_bounded_family_drift_is_bounded():
    fam = BoundedFamily(a=2.0, b=3.0)
    y = np.random.default_rng(0).standard_normal((50, 8)) * 100
    g = fam.g(physical_values(y), physical_values(y))
    assert np.max(np.abs(g)) <= fam.sup_g


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_holder_part_has_exponent_half(y1, y2):
    fam = HolderFamily(a=0.0, b=0.0, kappa=1.0)
    diff = abs(fam.g(0.0, y1) - fam.g(0.0, y2))
    assert diff <= np.sqrt(abs(y1 - y2)) + 1e-12
    assert fam.holder_eta == 0.5


def test_linear_averaged_quantities_closed_form():
    fam = LinearTestFamily(a=1, b=1, c=0.5, d=2)
    lam = BASIS.eigenvalues
    u = BASIS.field(np.arange(1.0, 9.0))
    np.testing.assert_allclose(analytic_Fbar_linear(fam, u).coeffs, (0.5 + 2 / (1 + lam)) * u.coeffs)
    np.testing.assert_allclose(analytic_DFbar_linear(fam, u).coeffs, (0.5 + 2 / (1 + lam)) * u.coeffs)
    q2 = NoiseSpec.power_law(8, role="fast")
    np.testing.assert_allclose(np.diag(analytic_Sigma_linear(fam, q2)), 4 * q2.betas / (1 + lam) ** 2)


def test_closed_forms_reject_nonlinear_family():
    with pytest.raises(InvalidInputError):
        analytic_Fbar_linear(BoundedFamily(), BASIS.zeros())


def test_providers_agree_with_closed_forms():
    fam = LinearTestFamily()
    q2 = NoiseSpec.power_law(8, role="fast")
    u = np.random.default_rng(2).standard_normal((3, 8))
    np.testing.assert_allclose(linear_fbar_provider(fam, BASIS)(u), u * fam.drift_factor(BASIS.eigenvalues))
    np.testing.assert_allclose(linear_dfbar_provider(fam, BASIS)(u), fam.drift_factor(BASIS.eigenvalues))
    S = linear_sigma_provider(fam, q2)(u)
    np.testing.assert_allclose(S @ S, analytic_Sigma_linear(fam, q2), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-2, 2)))
def test_psd_sqrt_squares_back(a):
    m = a @ a.T
    r = psd_sqrt(m)
    np.testing.assert_allclose(r, r.T, atol=1e-12)
    assert np.min(np.linalg.eigvalsh(r)) >= -1e-10
    np.testing.assert_allclose(r @ r, m, atol=1e-8 * (1 + np.abs(m).max()))
