import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from slowfast.errors import InvalidInputError
from slowfast.spectral import (
    PhaseState,
    SpectralBasis,
    SpectralField,
    apply_wave_group,
    eigenvalue,
    energy_norm,
    galerkin_project,
    sobolev_norm,
    to_physical,
    to_spectral,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def coeff_arrays(n):
    return arrays(np.float64, n, elements=finite)


@pytest.mark.parametrize("k, expected", [(1, np.pi**2), (2, 4 * np.pi**2), (7, 49 * np.pi**2)])
def test_eigenvalue_closed_form(k, expected):
    assert eigenvalue(k) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("k", [0, -1, 17, 2.5])
def test_eigenvalue_rejects_out_of_range(k):
    with pytest.raises(InvalidInputError):
        eigenvalue(k, 16)


def test_basis_rejects_bad_dimension():
    with pytest.raises(InvalidInputError):
        SpectralBasis(0)


def test_basis_functions_are_orthonormal_by_quadrature():
    basis = SpectralBasis(6)
    xi = np.linspace(0.0, 1.0, 4001)
    E = basis.basis_functions(xi)
    gram = np.trapezoid(E[:, :, None] * E[:, None, :], xi, axis=0)
    np.testing.assert_allclose(gram, np.eye(6), atol=1e-6)


def test_basis_functions_are_laplacian_eigenfunctions():
    basis = SpectralBasis(5)
    xi = np.linspace(0.1, 0.9, 9)
    h = 1e-4
    E = basis.basis_functions(xi)
    lap = (basis.basis_functions(xi + h) - 2 * E + basis.basis_functions(xi - h)) / h**2
    np.testing.assert_allclose(-lap, E * basis.eigenvalues, rtol=1e-5, atol=1e-4)


def test_sobolev_norm_of_single_mode():
    basis = SpectralBasis(8)
    x = basis.mode(3, 2.0)
    assert sobolev_norm(x, 1.0) == pytest.approx(2.0 * 3 * np.pi)
    assert sobolev_norm(x, 0.0) == pytest.approx(2.0)


def test_energy_norm_of_mode_pair():
    basis = SpectralBasis(4)
    X = PhaseState(basis.mode(1), basis.mode(2))
    # |||X|||_1^2 = lambda_1 + 1
    assert energy_norm(X, 1.0) ** 2 == pytest.approx(np.pi**2 + 1.0)


def test_transforms_match_pointwise_sum():
    basis = SpectralBasis(10)
    c = np.random.default_rng(1).standard_normal(10)
    direct = basis.basis_functions(basis.grid) @ c
    np.testing.assert_allclose(to_physical(basis.field(c)), direct, atol=1e-13)


def test_to_spectral_checks_length():
    with pytest.raises(InvalidInputError):
        to_spectral(np.zeros(5), SpectralBasis(6))


def test_field_rejects_wrong_shape():
    with pytest.raises(InvalidInputError):
        SpectralField(np.zeros(3), SpectralBasis(4))


def test_field_is_read_only_copy():
    c = np.ones(4)
    x = SpectralField(c, SpectralBasis(4))
    c[0] = 5.0
    assert x.coeffs[0] == 1.0
    with pytest.raises(ValueError):
        x.coeffs[0] = 2.0


def test_fields_on_different_bases_do_not_mix():
    with pytest.raises(InvalidInputError):
        SpectralBasis(3).zeros() + SpectralBasis(4).zeros()


@settings(max_examples=50, deadline=None)
@given(coeff_arrays(12))
def test_transform_round_trip(c):
    basis = SpectralBasis(12)
    back = to_spectral(to_physical(basis.field(c)), basis).coeffs
    assert np.max(np.abs(back - c)) <= 1e-12 * max(1.0, np.max(np.abs(c)))


@settings(max_examples=50, deadline=None)
@given(coeff_arrays(8), coeff_arrays(8), st.floats(-20, 20), st.sampled_from([0.0, 0.5, 1.0, 2.0]))
def test_wave_group_is_isometry(p, v, t, alpha):
    basis = SpectralBasis(8)
    X = PhaseState.from_arrays(p, v, basis)
    before = energy_norm(X, alpha)
    after = energy_norm(apply_wave_group(X, t), alpha)
    assert abs(after - before) <= 1e-12 * max(before, 1e-300) + 1e-300


@settings(max_examples=50, deadline=None)
@given(coeff_arrays(8), coeff_arrays(8), st.floats(-5, 5), st.floats(-5, 5))
def test_wave_group_composition(p, v, s, t):
    basis = SpectralBasis(8)
    X = PhaseState.from_arrays(p, v, basis)
    A = apply_wave_group(apply_wave_group(X, s), t)
    B = apply_wave_group(X, s + t)
    scale = max(energy_norm(X, 1.0), 1e-300)
    assert energy_norm(A - B, 1.0) <= 1e-11 * scale


def test_wave_group_at_zero_is_identity():
    basis = SpectralBasis(5)
    X = PhaseState.from_arrays(np.arange(5.0), np.ones(5), basis)
    Y = apply_wave_group(X, 0.0)
    np.testing.assert_array_equal(Y.position.coeffs, X.position.coeffs)
    np.testing.assert_array_equal(Y.velocity.coeffs, X.velocity.coeffs)


def test_wave_group_solves_wave_equation_for_one_mode():
    basis = SpectralBasis(4)
    X = PhaseState(basis.mode(2), basis.zeros())
    t = 0.3
    Y = apply_wave_group(X, t)
    w = 2 * np.pi
    assert Y.position.coeffs[1] == pytest.approx(np.cos(w * t))
    assert Y.velocity.coeffs[1] == pytest.approx(-w * np.sin(w * t))


def test_batched_norms_keep_batch_shape():
    basis = SpectralBasis(4)
    x = basis.field(np.ones((3, 2, 4)))
    assert sobolev_norm(x, 1.0).shape == (3, 2)


@settings(max_examples=30, deadline=None)
@given(coeff_arrays(10), st.integers(1, 10))
def test_galerkin_projection_is_idempotent(c, m):
    x = SpectralBasis(10).field(c)
    once = galerkin_project(x, m)
    np.testing.assert_array_equal(galerkin_project(once, m).coeffs, once.coeffs)
    assert np.all(once.coeffs[m:] == 0)


def test_galerkin_projection_rejects_bad_rank():
    with pytest.raises(InvalidInputError):
        galerkin_project(SpectralBasis(4).zeros(), 5)
