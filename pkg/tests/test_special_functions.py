"""Tests for Hankel functions, fundamental solutions and their derivatives."""

import math

import numpy as np
import pytest

from tdpt.core.special_functions import (
    LowFreqConstants,
    MultiIndex,
    gamma_derivative_table,
    gamma_derivatives,
    gamma_helmholtz,
    gamma_laplace,
    hankel1,
    multi_indices,
)
from tdpt.errors import DomainError, SingularityError

pytestmark = pytest.mark.unit


def test_hankel_reference_value():
    assert hankel1(0, 1.0) == pytest.approx(0.7651976866 + 0.0882569642j, abs=1e-10)


@pytest.mark.parametrize("x", [0.01, 0.5, 3.0, 11.9, 12.1, 40.0, 100.0])
def test_bessel_wronskian(x):
    h0, h1 = hankel1(0, x), hankel1(1, x)
    wronskian = h0.real * h1.imag - h1.real * h0.imag
    assert wronskian == pytest.approx(-2 / (np.pi * x), rel=1e-10)


def test_hankel_rejects_bad_arguments():
    with pytest.raises(DomainError):
        hankel1(2, 1.0)
    with pytest.raises(DomainError):
        hankel1(0, 0.0)


def test_gamma_helmholtz_value_and_domain():
    assert gamma_helmholtz(1.0, 1.0) == pytest.approx(-0.0220642 + 0.1912994j, abs=1e-6)
    with pytest.raises(SingularityError):
        gamma_helmholtz(1.0, 0.0)
    with pytest.raises(DomainError):
        gamma_helmholtz(0.0, 1.0)


def test_gamma_laplace():
    assert gamma_laplace(np.e) == pytest.approx(1 / (2 * np.pi))
    with pytest.raises(DomainError):
        gamma_laplace(0.0)


def test_gamma_satisfies_helmholtz_equation():
    omega, h = 1.3, 1e-3
    point = np.array([2.0, 0.0])

    def gamma(p):
        return gamma_helmholtz(omega, np.hypot(p[0], p[1]))

    laplacian = (
        gamma(point + [h, 0]) + gamma(point - [h, 0]) + gamma(point + [0, h]) + gamma(point - [0, h])
        - 4 * gamma(point)
    ) / h ** 2
    assert abs(laplacian + omega ** 2 * gamma(point)) < 1e-6


def test_first_derivatives_match_finite_differences():
    omega, h = 2.0, 1e-5
    x, z = np.array([0.7, -0.4]), np.array([0.1, 0.2])
    table = gamma_derivatives(omega, x, z, 1)

    def gamma_at(zz):
        return gamma_helmholtz(omega, np.linalg.norm(x - zz))

    d1 = (gamma_at(z + [h, 0]) - gamma_at(z - [h, 0])) / (2 * h)
    d2 = (gamma_at(z + [0, h]) - gamma_at(z - [0, h])) / (2 * h)
    assert table[MultiIndex(1, 0)] == pytest.approx(d1, rel=1e-7)
    assert table[MultiIndex(0, 1)] == pytest.approx(d2, rel=1e-7)


def test_second_derivatives_satisfy_helmholtz_identity():
    omega = 1.7
    x, z = np.array([1.0, 0.5]), np.array([-0.2, 0.1])
    table = gamma_derivatives(omega, x, z, 3)
    laplacian = table[MultiIndex(2, 0)] + table[MultiIndex(0, 2)]
    expected = -omega ** 2 * table[MultiIndex(0, 0)]
    assert abs(laplacian - expected) < 1e-8 * abs(expected)


def test_scaled_table_divides_by_factorial():
    omega = 1.0
    points = np.array([[1.0, 0.3], [0.2, -0.9]])
    indices = multi_indices(3)
    scaled = gamma_derivative_table(omega, points, (0.0, 0.0), indices)
    raw = gamma_derivative_table(omega, points, (0.0, 0.0), indices, scaled=False)
    factorials = np.array([alpha.factorial for alpha in indices])
    np.testing.assert_allclose(scaled * factorials[None, :], raw, rtol=1e-14)


def test_gamma_derivatives_errors():
    with pytest.raises(SingularityError):
        gamma_derivatives(1.0, (0.5, 0.5), (0.5, 0.5), 1)
    with pytest.raises(DomainError):
        gamma_derivatives(1.0, (1.0, 0.0), (0.0, 0.0), 6)


def test_multi_indices_graded_order():
    labels = [alpha.label for alpha in multi_indices(2)]
    assert labels == ["0,0", "1,0", "0,1", "2,0", "1,1", "0,2"]
    assert [alpha.label for alpha in multi_indices(2, min_order=2)] == ["2,0", "1,1", "0,2"]
    assert sorted(multi_indices(2)[::-1]) == multi_indices(2)


def test_multi_index_helpers():
    alpha = MultiIndex.parse("2,1")
    assert alpha == MultiIndex(2, 1)
    assert alpha.order == 3 and alpha.factorial == 2
    points = np.array([[2.0, 3.0]])
    assert alpha.monomial(points)[0] == pytest.approx(12.0)
    np.testing.assert_allclose(alpha.monomial_gradient(points)[0], [12.0, 4.0])
    with pytest.raises(DomainError):
        MultiIndex(-1, 0)


def test_low_frequency_constant():
    constants = LowFreqConstants(eps_omega=2.0)
    assert constants.beta_eps_omega.imag == pytest.approx(-0.25)
    with pytest.raises(DomainError):
        LowFreqConstants(eps_omega=0.0)


def _series_h0(x: float, terms: int = 40) -> complex:
    j0 = 0.0
    tail = 0.0
    harmonic = 0.0
    for m in range(terms):
        term = (-1) ** m * (x / 2) ** (2 * m) / math.factorial(m) ** 2
        j0 += term
        if m:
            harmonic += 1.0 / m
            tail -= term * harmonic
    y0 = 2 / np.pi * ((np.log(x / 2) + np.euler_gamma) * j0 + tail)
    return complex(j0, y0)


@pytest.mark.parametrize("x", [0.1, 1.0, 3.0])
def test_hankel_matches_power_series(x):
    assert hankel1(0, x) == pytest.approx(_series_h0(x), rel=1e-10)


def test_hankel_large_argument_magnitude():
    assert abs(hankel1(0, 100.0)) == pytest.approx(np.sqrt(2 / (np.pi * 100.0)), rel=1e-2)
