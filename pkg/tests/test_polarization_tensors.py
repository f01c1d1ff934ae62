"""Tests for FDPTs, classical PTs and their time-domain transforms."""

import logging

import numpy as np
import pytest
from scipy.integrate import quad

from tdpt.core.geometry import make_shape
from tdpt.core.polarization_tensors import (
    FdptTable,
    FrequencyGrid,
    TransmissionSystem,
    band_transform,
    compute_classical_pt,
    compute_fdpt,
    compute_tdpt,
    converged_fdpt,
    fdpt_for_curve,
    omega_squared_transform,
    psi_rho,
    solve_density_system,
)
from tdpt.core.special_functions import MultiIndex, multi_indices
from tdpt.errors import DomainError, GridMismatchError

from tests.conftest import ellipse_pt

E1 = MultiIndex(1, 0)


@pytest.mark.unit
def test_disk_classical_pt(disk):
    pt = compute_classical_pt(disk, 3.0, 1)
    np.testing.assert_allclose(pt.first_order_block(), np.eye(2), atol=1e-8)
    assert pt.lam == pytest.approx(1.0)


@pytest.mark.unit
def test_ellipse_classical_pt_matches_closed_form(ellipse):
    pt = compute_classical_pt(ellipse, 3.0, 1)
    np.testing.assert_allclose(pt.first_order_block(), ellipse_pt(1.0, 3.0, 2.0, 0.0), atol=1e-6)


@pytest.mark.unit
def test_classical_pt_is_symmetric(ellipse, flower):
    pt = compute_classical_pt(ellipse.rotated(0.3), 5.0, 2)
    np.testing.assert_allclose(pt.values, pt.values.T, atol=1e-8 * np.max(np.abs(pt.values)))
    with pytest.raises(DomainError):
        compute_classical_pt(flower, 1.0, 1)


@pytest.mark.unit
@pytest.mark.parametrize("contrast", [0.5, 3.0])
@pytest.mark.parametrize("kind", ["disk", "ellipse"])
def test_fdpt_tends_to_classical_pt(kind, contrast):
    curve = make_shape(kind, nodes=128)
    epsilon, omega = 0.05, 0.02
    table = compute_fdpt(curve, epsilon, omega, contrast, 1)
    reference = compute_classical_pt(curve, contrast, 1).first_order_block()
    raw_block = table.raw_values()[1:3, 1:3]
    assert np.max(np.abs(raw_block - reference)) < 0.05 * np.max(np.abs(reference))
    np.testing.assert_allclose(table.first_order_block(), epsilon ** 2 * raw_block, rtol=1e-12)


@pytest.mark.unit
def test_fdpt_rotation_equivariance():
    theta = 0.4
    base = make_shape("ellipse", nodes=128)
    rotated = make_shape("ellipse", nodes=128, rotation=theta)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    block = compute_fdpt(base, 0.05, 2.0, 3.0, 1).first_order_block()
    turned = compute_fdpt(rotated, 0.05, 2.0, 3.0, 1).first_order_block()
    np.testing.assert_allclose(turned, rot @ block @ rot.T, atol=1e-8 * np.max(np.abs(block)))


@pytest.mark.unit
def test_fdpt_conjugate_symmetry_and_domain(disk):
    positive = compute_fdpt(disk, 0.05, 1.5, 3.0, 1)
    negative = compute_fdpt(disk, 0.05, -1.5, 3.0, 1)
    np.testing.assert_allclose(negative.values, np.conj(positive.values), rtol=1e-14)
    assert negative.omega == -1.5
    with pytest.raises(DomainError):
        compute_fdpt(disk, 0.05, 0.0, 3.0, 1)


@pytest.mark.unit
def test_monopole_scales_with_frequency_squared(disk):
    table = compute_fdpt(disk, 0.05, 0.4, 3.0, 0, max_order=1)
    origin = MultiIndex(0, 0)
    eps_omega = 0.05 * 0.4
    assert table.entry(origin, origin).real == pytest.approx(-(eps_omega ** 2), rel=0.05)


@pytest.mark.unit
def test_fdpt_table_helpers(flower):
    table = compute_fdpt(flower, 0.05, 1.0, 3.0, 2)
    assert table.max_order == 3
    assert len(table.indices) == len(multi_indices(3))
    low = table.truncated(1)
    assert low.indices == multi_indices(1)
    np.testing.assert_array_equal(low.values, table.values[:3, :3])
    alpha = MultiIndex(2, 1)
    assert table.raw_entry(alpha, E1) == pytest.approx(table.entry(alpha, E1) / 0.05 ** 4)
    projector = np.diag([1.0, 0.0, 1.0])
    projected = FdptTable(1.0, 1.0, float("nan"), 1, multi_indices(1), np.ones((3, 3)), projector, projector)
    np.testing.assert_array_equal(projected.project(np.ones((3, 3)))[1], 0.0)


@pytest.mark.unit
def test_fdpt_for_curve_matches_reference_scaling(ellipse):
    center = np.array([0.3, -0.1])
    physical = ellipse.scaled(0.05, center)
    direct = compute_fdpt(ellipse, 0.05, 2.0, 3.0, 1)
    from_curve = fdpt_for_curve(physical, center, 2.0, 3.0, 1)
    assert from_curve.epsilon == pytest.approx(0.05)
    np.testing.assert_allclose(from_curve.values, direct.values, rtol=1e-9, atol=1e-14)


@pytest.mark.unit
def test_density_system_residual_and_trivial_contrast(disk):
    x = disk.points
    f = x[:, 0].astype(complex)
    g = disk.normals[:, 0].astype(complex)
    system = TransmissionSystem(disk, 0.1, 3.0)
    phi, psi = system.solve(f, g)
    assert system.residual(phi, psi, f, g) < 1e-10

    pair = solve_density_system(disk, 0.1, 1.0 + 1e-8, f, g, alpha=E1)
    assert np.linalg.norm(pair.psi.values) < 1e-6 * np.linalg.norm(f)
    assert pair.interior_eps_omega == pytest.approx(0.1 / np.sqrt(1.0 + 1e-8))


@pytest.mark.unit
def test_psi_rho():
    assert psi_rho(2.0, 0.0) == pytest.approx(4.0)
    assert psi_rho(2.0, 1.0) == pytest.approx(2 * np.sin(2.0))
    with pytest.raises(DomainError):
        psi_rho(0.0, 1.0)


@pytest.mark.unit
@pytest.mark.parametrize("t", [0.0, 1e-4, 0.5, 2.0, 4.7])
def test_omega_squared_transform_matches_quadrature(t):
    rho = np.pi
    expected = 2 * quad(lambda w: w ** 2 * np.cos(w * t), 0.0, rho, epsabs=1e-13)[0]
    assert float(omega_squared_transform(rho, t)) == pytest.approx(expected, rel=1e-7, abs=1e-10)


@pytest.mark.unit
def test_frequency_grid_build_and_infer():
    grid = FrequencyGrid.build(np.pi, 8)
    step = np.pi / 8
    np.testing.assert_allclose(grid.omegas, step * np.arange(2, 9))
    np.testing.assert_allclose(grid.quadrature, step)
    assert grid.rho0 == pytest.approx(step)

    positive = FrequencyGrid.build(np.pi, 8, rho0=0.0)
    np.testing.assert_allclose(positive.omegas, step * np.arange(1, 9))
    full = FrequencyGrid.build(np.pi, 8, rho0=-1.0)
    assert full.omegas[0] == 0.0 and len(full.frequencies) == 9
    np.testing.assert_allclose(full.quadrature, step)

    windowed = FrequencyGrid.build(np.pi, 8, rho0=2 * step)
    np.testing.assert_allclose(windowed.omegas, step * np.arange(3, 9))
    inferred_window = FrequencyGrid.infer(windowed.omegas)
    assert inferred_window.half_count == 8
    np.testing.assert_allclose(inferred_window.omegas, windowed.omegas)

    inferred = FrequencyGrid.infer(grid.omegas)
    assert inferred.half_count == 8
    assert inferred.rho == pytest.approx(np.pi)

    coarse = grid.subsample(4)
    np.testing.assert_allclose(coarse.omegas, [4 * step, 8 * step])

    with pytest.raises(GridMismatchError):
        FrequencyGrid.build(np.pi, 8, rho0=4.0)
    with pytest.raises(GridMismatchError):
        FrequencyGrid.infer([0.1, 0.2, 0.4])
    with pytest.raises(GridMismatchError):
        grid.subsample(3)


@pytest.mark.unit
def test_band_transform_of_constant_and_omega_squared():
    grid = FrequencyGrid.build(np.pi, 128, rho0=0.0)
    t = np.linspace(0.0, 5.0, 201)
    constant = band_transform(grid, np.ones(len(grid.frequencies)), t)
    expected = psi_rho(np.pi, t)
    assert constant[0].real == pytest.approx(2 * np.pi, rel=1e-12)
    assert np.max(np.abs(constant - expected)) < 2e-2 * np.max(np.abs(expected))

    squared = band_transform(grid, grid.omegas ** 2, t)
    reference = omega_squared_transform(np.pi, t)
    assert np.max(np.abs(squared - reference)) < 3e-2 * np.max(np.abs(reference))


@pytest.mark.unit
def test_riemann_error_halves_with_twice_the_frequencies():
    t = np.linspace(0.5, 5.0, 91)
    errors = []
    for half_count in (64, 128):
        grid = FrequencyGrid.build(np.pi, half_count, rho0=0.0)
        constant = band_transform(grid, np.ones(len(grid.frequencies)), t)
        errors.append(np.max(np.abs(constant - psi_rho(np.pi, t))))
    assert errors[1] <= 0.6 * errors[0]


@pytest.mark.unit
def test_band_transform_of_conjugate_symmetric_data_is_real():
    grid = FrequencyGrid.build(2.0, 16)
    rng = np.random.default_rng(3)
    values = rng.standard_normal((16, 3, 3)) + 1j * rng.standard_normal((16, 3, 3))
    result = band_transform(grid, values, np.linspace(0.0, 5.0, 50))
    assert result.shape == (50, 3, 3)
    assert np.max(np.abs(result.imag)) < 1e-10 * np.max(np.abs(result.real))
    with pytest.raises(GridMismatchError):
        band_transform(grid, values[:5], [0.0])


@pytest.mark.unit
def test_compute_tdpt_validation(disk):
    with pytest.raises(GridMismatchError):
        compute_tdpt([], [0.0])
    a = compute_fdpt(disk, 0.05, 1.0, 3.0, 1)
    b = compute_fdpt(disk, 0.05, 2.0, 3.0, 0)
    with pytest.raises(GridMismatchError):
        compute_tdpt([a, b], [0.0, 1.0])


@pytest.mark.integration
def test_disk_tdpt_follows_the_envelope():
    disk = make_shape("disk", nodes=64)
    epsilon = 0.01
    grid = FrequencyGrid.build(np.pi, 16)
    t = np.linspace(0.0, 5.0, 128)
    tables = [compute_fdpt(disk, epsilon, float(omega), 3.0, 1) for omega in grid.omegas]
    tdpt = compute_tdpt(tables, t)
    assert tdpt.half_count == 16 and tdpt.rho == pytest.approx(np.pi)

    expected = epsilon ** 2 * tdpt.envelope()
    signal = tdpt.entry(E1, E1)
    assert np.max(np.abs(signal - expected)) < 1e-2 * np.max(np.abs(expected))
    np.testing.assert_allclose(tdpt.first_order_block()[:, 0, 0], signal)

    coarse = tdpt.resampled(2, t[::2])
    assert coarse.half_count == 8
    direct = compute_tdpt(tables[0::2], t[::2], grid=grid.subsample(2))
    np.testing.assert_allclose(coarse.values, direct.values)


@pytest.mark.unit
def test_converged_fdpt_keeps_a_resolved_curve(disk, caplog):
    with caplog.at_level(logging.WARNING, logger="TDPT.Geometry"):
        table = converged_fdpt(disk, 0.05, 1.0, 3.0, 1)
    direct = compute_fdpt(disk, 0.05, 1.0, 3.0, 1)
    np.testing.assert_allclose(table.values, direct.values)
    assert "doubling" not in caplog.text


@pytest.mark.unit
def test_converged_fdpt_doubles_an_underresolved_curve(caplog):
    kite = make_shape("kite", nodes=32)
    with caplog.at_level(logging.WARNING, logger="TDPT.Geometry"):
        table = converged_fdpt(kite, 0.05, 1.0, 3.0, 1, tolerance=1e-12, max_nodes=256)
    assert "doubling nodes" in caplog.text
    reference = compute_fdpt(kite.resampled(256), 0.05, 1.0, 3.0, 1)
    scale = np.max(np.abs(reference.values))
    np.testing.assert_allclose(table.values, reference.values, atol=1e-6 * scale)
