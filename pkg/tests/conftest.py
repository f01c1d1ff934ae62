"""Shared fixtures for the TDPT test suite."""

import os

import numpy as np
import pytest

from tdpt.core.geometry import BoundaryCurve, make_shape
from tdpt.core.polarization_tensors import FdptTable, FrequencyGrid, compute_tdpt
from tdpt.core.special_functions import multi_indices


@pytest.fixture(autouse=True)
def isolated_environment(tmp_path, monkeypatch):
    """Run every test in an empty directory with no TDPT_* variables set."""
    for name in list(os.environ):
        if name.upper().startswith("TDPT_"):
            monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def unit_circle() -> BoundaryCurve:
    t = 2 * np.pi * np.arange(256) / 256
    return BoundaryCurve.from_points(np.stack([np.cos(t), np.sin(t)], axis=1))


@pytest.fixture
def disk() -> BoundaryCurve:
    return make_shape("disk", nodes=128)


@pytest.fixture
def ellipse() -> BoundaryCurve:
    return make_shape("ellipse", nodes=128, a=2.0, b=1.0)


@pytest.fixture
def flower() -> BoundaryCurve:
    return make_shape("flower", nodes=128, petals=5, amplitude=0.3)


def ellipse_pt(volume: float, contrast: float, ratio: float, theta: float) -> np.ndarray:
    """Closed-form first-order PT of an ellipse with semi-axis ratio a/b rotated by theta."""
    a, b = ratio, 1.0
    major = (contrast - 1) * volume * (a + b) / (a + contrast * b)
    minor = (contrast - 1) * volume * (a + b) / (b + contrast * a)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return rot @ np.diag([major, minor]) @ rot.T


def synthetic_tdpt(volume: float, pt: np.ndarray, rho: float = np.pi, half_count: int = 64, t_points: int = 256):
    """Order-1 TDPTs of tables with 𝒲_00 = -ω²|D| and a constant first-order block."""
    grid = FrequencyGrid.build(rho, half_count)
    indices = multi_indices(1)
    tables = []
    for omega in grid.omegas:
        values = np.zeros((3, 3), dtype=complex)
        values[0, 0] = -omega ** 2 * volume
        values[1:, 1:] = pt
        tables.append(FdptTable(omega=float(omega), epsilon=1.0, contrast=float("nan"), order=1,
                                indices=indices, values=values))
    return compute_tdpt(tables, np.linspace(0.0, 5.0, t_points), grid=grid)
