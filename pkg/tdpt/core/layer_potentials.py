"""
Layer Potentials

Nyström discretizations of the single layer S^ω, the Neumann-Poincaré operator
(K^ω)* and its transpose K^ω on a BoundaryCurve.

Layer potentials use the source-normalized kernel G_ω with (Δ + ω²)G_ω = δ:
    G_ω(r) = -(i/4) H0(ωr)   (ω > 0)
    G_0(r) = (1/2π) ln r
so that for every ω
    ∂S^ω[φ]/∂ν |± = (±½ I + (K^ω)*)[φ]
and S^ω → S^0 + β_ω ∫· as ω → 0.

Logarithmic singularities are split off as M1(t,τ) ln(4 sin²((t-τ)/2)) and integrated
with exact trigonometric weights; the smooth remainder uses the trapezoidal rule.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from tdpt.core.geometry import BoundaryCurve
from tdpt.core.special_functions import EULER_GAMMA
from tdpt.errors import DomainError, SingularityError

logger = logging.getLogger("TDPT.LayerPotentials")


class OperatorKind(Enum):
    """Discretized boundary operators."""
    SINGLE_LAYER = "single_layer"
    DOUBLE_LAYER = "double_layer"
    K = "K"
    K_STAR = "K_star"


@dataclass(frozen=True, eq=False)
class Density:
    """Nodal density on a curve."""
    values: NDArray
    curve: BoundaryCurve

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.shape[0] != self.curve.nodes:
            raise DomainError(f"Density has {values.shape[0]} values for {self.curve.nodes} nodes")
        if not np.all(np.isfinite(values)):
            raise DomainError("Density values must be finite")
        object.__setattr__(self, "values", values)

    def integral(self) -> Union[complex, NDArray]:
        return self.curve.integrate(self.values)


@dataclass(frozen=True, eq=False)
class BoundaryOperator:
    """Assembled Q×Q operator acting on nodal densities."""
    kind: OperatorKind
    omega: float
    matrix: NDArray
    curve: BoundaryCurve

    def apply(self, density: Union[Density, NDArray]) -> Density:
        values = density.values if isinstance(density, Density) else np.asarray(density)
        return Density(self.matrix @ values, self.curve)


def layer_kernel(omega: float, r: ArrayLike) -> NDArray:
    """G_ω(r): -(i/4)H0(ωr) for ω > 0, (1/2π) ln r for ω = 0."""
    r = np.asarray(r, dtype=float)
    if omega == 0:
        return np.log(r) / (2 * np.pi)
    return -0.25j * special.hankel1(0, omega * r)


def kress_weights(nodes: int) -> NDArray[np.float64]:
    """
    Weights R_d for ∫ ln(4 sin²((t-τ)/2)) f(τ) dτ ≈ Σ_j R_{(i-j) mod Q} f(t_j).

    Exact for trigonometric polynomials of degree below Q/2.
    """
    n = nodes // 2
    tau = 2 * np.pi * np.arange(nodes) / nodes
    m = np.arange(1, n)
    series = np.cos(np.outer(tau, m)) @ (1.0 / m)
    return -(2 * np.pi / n) * series - (np.pi / n ** 2) * np.cos(n * tau)


def _kress_matrix(nodes: int) -> NDArray[np.float64]:
    weights = kress_weights(nodes)
    idx = np.arange(nodes)
    return weights[(idx[:, None] - idx[None, :]) % nodes]


def _pairwise(curve: BoundaryCurve):
    x = curve.points
    diff = x[:, None, :] - x[None, :, :]
    r = np.hypot(diff[..., 0], diff[..., 1])
    t = curve.t
    log4sin = np.zeros_like(r)
    off = ~np.eye(curve.nodes, dtype=bool)
    log4sin[off] = np.log(4.0 * np.sin(0.5 * (t[:, None] - t[None, :])[off]) ** 2)
    return diff, r, log4sin, off


def _check_omega(omega: float) -> None:
    if omega < 0:
        raise DomainError(f"Wavenumber must be nonnegative, got {omega}")


def assemble_single_layer(curve: BoundaryCurve, omega: float) -> BoundaryOperator:
    """
    Nyström matrix of S^ω on the curve.

    Args:
        curve: boundary curve
        omega: wavenumber (0 selects the Laplace kernel)
    """
    _check_omega(omega)
    n_half = curve.nodes // 2
    _, r, log4sin, off = _pairwise(curve)
    speed_j = curve.speed[None, :]

    r_safe = np.where(off, r, 1.0)
    m1 = special.j0(omega * r_safe) * speed_j / (4 * np.pi)
    kernel = layer_kernel(omega, r_safe)
    m2 = (kernel * speed_j - m1 * log4sin).astype(complex)

    speed = curve.speed
    if omega == 0:
        diagonal = np.log(speed) * speed / (2 * np.pi)
    else:
        diagonal = (-0.25j + (np.log(omega * speed / 2) + EULER_GAMMA) / (2 * np.pi)) * speed
    np.fill_diagonal(m1, speed / (4 * np.pi))
    np.fill_diagonal(m2, diagonal)

    matrix = _kress_matrix(curve.nodes) * m1 + (np.pi / n_half) * m2
    if omega == 0:
        matrix = matrix.real
    return BoundaryOperator(OperatorKind.SINGLE_LAYER, omega, matrix, curve)


def assemble_k_star(curve: BoundaryCurve, omega: float) -> BoundaryOperator:
    """
    Nyström matrix of (K^ω)*[φ](x) = ∫ ∂G_ω(x-y)/∂ν_x φ(y) dσ(y).

    The ω = 0 kernel (1/2π)⟨x-y, ν_x⟩/|x-y|² is smooth with diagonal κ/(4π); for ω > 0
    the J1 ln r part is integrated with the logarithmic weights.
    """
    _check_omega(omega)
    n_half = curve.nodes // 2
    diff, r, log4sin, off = _pairwise(curve)
    r_safe = np.where(off, r, 1.0)
    inner = np.einsum("ijk,ik->ij", diff, curve.normals)
    speed_j = curve.speed[None, :]
    diagonal = curve.curvature * curve.speed / (4 * np.pi)

    if omega == 0:
        m2 = inner / (2 * np.pi * r_safe ** 2) * speed_j
        np.fill_diagonal(m2, diagonal)
        matrix = (np.pi / n_half) * m2
    else:
        ratio = inner / r_safe
        full = 0.25j * omega * special.hankel1(1, omega * r_safe) * ratio * speed_j
        m1 = -omega / (4 * np.pi) * special.j1(omega * r_safe) * ratio * speed_j
        np.fill_diagonal(m1, 0.0)
        m2 = full - m1 * log4sin
        np.fill_diagonal(m2, diagonal)
        matrix = _kress_matrix(curve.nodes) * m1 + (np.pi / n_half) * m2
    return BoundaryOperator(OperatorKind.K_STAR, omega, matrix, curve)


def assemble_k(curve: BoundaryCurve, omega: float, k_star: Optional[BoundaryOperator] = None) -> BoundaryOperator:
    """K^ω as the transpose of (K^ω)* under the arc-length pairing: K_ij = K*_ji w_j / w_i."""
    k_star = k_star or assemble_k_star(curve, omega)
    w = curve.weights
    matrix = k_star.matrix.T * w[None, :] / w[:, None]
    return BoundaryOperator(OperatorKind.K, omega, matrix, curve)


def assemble_double_layer(curve: BoundaryCurve, omega: float = 0.0) -> BoundaryOperator:
    """Boundary (principal value) part of the Laplace double layer, i.e. K^0."""
    if omega != 0:
        raise DomainError("The double layer is only assembled for the Laplace kernel")
    op = assemble_k(curve, 0.0)
    return BoundaryOperator(OperatorKind.DOUBLE_LAYER, 0.0, op.matrix, curve)


def trace_normal_derivative(
    density: Density,
    curve: BoundaryCurve,
    omega: float,
    side: str,
    k_star: Optional[BoundaryOperator] = None,
) -> Density:
    """Normal derivative trace ∂S^ω[φ]/∂ν |± = (±½ I + (K^ω)*)[φ]."""
    if side not in ("+", "-"):
        raise DomainError(f"side must be '+' or '-', got {side!r}")
    k_star = k_star or assemble_k_star(curve, omega)
    sign = 0.5 if side == "+" else -0.5
    return Density(sign * density.values + k_star.matrix @ density.values, curve)


def double_layer_trace(density: Density, side: str, k_op: Optional[BoundaryOperator] = None) -> Density:
    """Trace of the Laplace double layer, 𝒟[φ]|± = (∓½ I + K)[φ]."""
    if side not in ("+", "-"):
        raise DomainError(f"side must be '+' or '-', got {side!r}")
    k_op = k_op or assemble_k(density.curve, 0.0)
    sign = -0.5 if side == "+" else 0.5
    return Density(sign * density.values + k_op.matrix @ density.values, density.curve)


def double_layer_normal_derivative(density: Density, single_layer: Optional[BoundaryOperator] = None) -> Density:
    """∂𝒟[φ]/∂ν (continuous across the curve) through d/ds S^0[dφ/ds]."""
    curve = density.curve
    single_layer = single_layer or assemble_single_layer(curve, 0.0)
    tangential = curve.arc_derivative(density.values)
    return Density(curve.arc_derivative(single_layer.matrix @ tangential), curve)


def _offboundary_geometry(curve: BoundaryCurve, points: ArrayLike):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    diff = pts[:, None, :] - curve.points[None, :, :]
    r = np.hypot(diff[..., 0], diff[..., 1])
    scale = np.sqrt(abs(curve.area))
    if np.any(r.min(axis=1) <= 1e-12 * scale):
        raise SingularityError("Evaluation point lies on the boundary")
    return diff, r


def eval_potential_offboundary(
    density: Density,
    curve: BoundaryCurve,
    omega: float,
    points: ArrayLike,
) -> NDArray:
    """
    S^ω[φ] at points off the curve by direct quadrature.

    Accuracy degrades within a few node spacings of the curve.
    """
    _check_omega(omega)
    _, r = _offboundary_geometry(curve, points)
    values = density.values
    weights = curve.weights.reshape((-1,) + (1,) * (values.ndim - 1))
    return layer_kernel(omega, r) @ (weights * values)


def eval_double_layer_offboundary(density: Density, curve: BoundaryCurve, points: ArrayLike) -> NDArray:
    """Laplace double layer 𝒟[φ](p) = (1/2π) ∫ ⟨y-p, ν_y⟩/|p-y|² φ(y) dσ(y)."""
    diff, r = _offboundary_geometry(curve, points)
    inner = -np.einsum("pjk,jk->pj", diff, curve.normals)
    kernel = inner / (2 * np.pi * r ** 2)
    return kernel @ (curve.weights * density.values)
