"""Tests for boundary curves, test shapes and inclusion records."""

import logging

import numpy as np
import pytest

from tdpt.core.geometry import (
    BoundaryCurve,
    EquivalentEllipse,
    Inclusion,
    area,
    boundary_distance,
    is_simple,
    make_shape,
    perturb,
    refine_nodes,
)
from tdpt.errors import ShapeValidationError

pytestmark = pytest.mark.unit


def circle_points(nodes: int, radius: float = 1.0, clockwise: bool = False) -> np.ndarray:
    t = 2 * np.pi * np.arange(nodes) / nodes
    sign = -1.0 if clockwise else 1.0
    return radius * np.stack([np.cos(t), sign * np.sin(t)], axis=1)


def test_unit_circle_perimeter_and_area():
    curve = BoundaryCurve.from_points(circle_points(64))
    assert curve.perimeter == pytest.approx(2 * np.pi, rel=1e-12)
    assert area(curve) == pytest.approx(np.pi, rel=1e-12)
    np.testing.assert_allclose(curve.curvature, 1.0, atol=1e-10)


def test_clockwise_samples_are_reoriented():
    curve = BoundaryCurve.from_points(circle_points(64, clockwise=True))
    assert curve.area > 0
    np.testing.assert_allclose(np.sum(curve.normals * curve.points, axis=1), 1.0, atol=1e-10)


@pytest.mark.parametrize("kind", ["disk", "ellipse", "flower", "kite"])
def test_make_shape_is_unit_area_and_centered(kind):
    curve = make_shape(kind, nodes=128)
    assert curve.area == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(curve.centroid, 0.0, atol=1e-10)


def test_normals_are_unit_and_orthogonal(flower):
    np.testing.assert_allclose(np.linalg.norm(flower.normals, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.sum(flower.normals * flower.tangents, axis=1), 0.0, atol=1e-12)
    assert np.sum(flower.weights) == pytest.approx(flower.perimeter)


def test_refinement_is_spectrally_converged():
    coarse = make_shape("ellipse", nodes=128)
    fine = make_shape("ellipse", nodes=256)
    assert abs(coarse.perimeter - fine.perimeter) < 1e-10
    assert abs(coarse.area - fine.area) < 1e-10


def test_node_count_validation():
    with pytest.raises(ShapeValidationError):
        BoundaryCurve.from_points(circle_points(31))
    with pytest.raises(ShapeValidationError):
        make_shape("disk", nodes=16)


def test_is_simple():
    assert is_simple(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float))
    assert not is_simple(np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float))


def test_perturb_area_change_is_first_order(disk):
    h = np.cos(2 * disk.t) + 0.5
    eta = 1e-3
    moved = perturb(disk, h, eta)
    first_order = eta * disk.integrate(h)
    assert abs(moved.area - disk.area - first_order) < 10 * eta ** 2


def test_perturb_rejects_self_intersection(disk):
    with pytest.raises(ShapeValidationError):
        perturb(disk, 2.0 * np.cos(6 * disk.t), 1.0)
    with pytest.raises(ShapeValidationError):
        perturb(disk, np.ones(3), 0.1)
    assert perturb(disk, np.ones(disk.nodes), 0.0) is disk


def test_boundary_distance():
    inner = BoundaryCurve.from_points(circle_points(128, 1.0))
    outer = BoundaryCurve.from_points(circle_points(128, 1.1))
    same = boundary_distance(inner, inner)
    assert same.hausdorff == 0.0
    assert same.l2 == pytest.approx(0.0, abs=1e-12)
    apart = boundary_distance(inner, outer)
    assert apart.hausdorff == pytest.approx(0.1, abs=1e-3)
    assert apart.l2 == pytest.approx(0.1, abs=1e-3)


def test_curve_transformations(ellipse):
    moved = ellipse.translated([1.0, -2.0])
    np.testing.assert_allclose(moved.centroid, [1.0, -2.0], atol=1e-10)
    assert ellipse.scaled(0.5).area == pytest.approx(0.25)
    assert ellipse.rotated(0.3).area == pytest.approx(1.0)
    assert ellipse.resampled(256).perimeter == pytest.approx(ellipse.perimeter, rel=1e-10)
    assert ellipse.distance_to([[10.0, 0.0]])[0] > 8.0
    np.testing.assert_array_equal(ellipse.contains([[0.0, 0.0], [3.0, 0.0]]), [True, False])


def test_inclusion_validation(disk):
    inclusion = Inclusion(base=disk, center=[0.3, -0.1], epsilon=0.05, contrast=3.0)
    assert inclusion.volume == pytest.approx(0.0025)
    assert inclusion.boundary.area == pytest.approx(0.0025)
    np.testing.assert_allclose(inclusion.boundary.centroid, [0.3, -0.1], atol=1e-10)
    with pytest.raises(ShapeValidationError):
        Inclusion(base=disk, center=[0, 0], epsilon=0.05, contrast=1.0)
    with pytest.raises(ShapeValidationError):
        Inclusion(base=disk, center=[0, 0], epsilon=1.5, contrast=2.0)
    with pytest.raises(ShapeValidationError):
        Inclusion(base=disk.scaled(2.0), center=[0, 0], epsilon=0.05, contrast=2.0)


def test_equivalent_ellipse_record():
    ellipse = EquivalentEllipse(a=0.2, b=0.1, theta=np.pi / 6, center=(0.3, -0.1))
    assert ellipse.area == pytest.approx(np.pi * 0.02)
    curve = ellipse.curve(128)
    assert curve.area == pytest.approx(ellipse.area, rel=1e-10)
    np.testing.assert_allclose(curve.centroid, [0.3, -0.1], atol=1e-10)
    with pytest.raises(ShapeValidationError):
        EquivalentEllipse(a=0.1, b=0.2, theta=0.0)
    with pytest.raises(ShapeValidationError):
        EquivalentEllipse(a=0.2, b=0.1, theta=np.pi)


def test_refine_nodes_keeps_a_converged_discretization(caplog):
    disk = make_shape("disk", nodes=64)
    with caplog.at_level(logging.WARNING, logger="TDPT.Geometry"):
        curve, values = refine_nodes(lambda c: np.array([c.perimeter, c.area]), disk)
    assert curve is disk
    np.testing.assert_allclose(values, [disk.perimeter, disk.area])
    assert "doubling" not in caplog.text


def test_refine_nodes_doubles_until_the_change_is_small(caplog):
    disk = make_shape("disk", nodes=32)
    with caplog.at_level(logging.WARNING, logger="TDPT.Geometry"):
        curve, values = refine_nodes(lambda c: np.array([1.0 + c.nodes ** -4.0]), disk, tolerance=1e-8)
    assert curve.nodes == 128
    assert values[0] == pytest.approx(1.0 + 128.0 ** -4)
    assert caplog.text.count("doubling nodes") == 2

    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="TDPT.Geometry"):
        curve, _ = refine_nodes(lambda c: np.array([float(c.nodes)]), disk, max_nodes=128)
    assert curve.nodes == 128
    assert "not converged" in caplog.text
