"""
Boundary Geometry

Smooth closed curves sampled at equispaced parameters t_q = 2πq/Q. Derivatives are
spectral (FFT), which keeps the periodic trapezoidal rule and the logarithmic Nyström
quadrature spectrally accurate.

Provides:
- BoundaryCurve: nodes, tangents, outward normals, arc-length weights, curvature
- make_shape: unit-area disk / ellipse / flower / kite test shapes
- perturb: normal perturbation x + η h ν
- refine_nodes: node doubling until a discretized quantity stops changing
- boundary_distance: Hausdorff and L² distances between two curves
- Inclusion, EquivalentEllipse records
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import signal
from scipy.spatial import cKDTree
from scipy.spatial.distance import directed_hausdorff

from tdpt.errors import ShapeValidationError

logger = logging.getLogger("TDPT.Geometry")

MIN_NODES = 32
DEFAULT_NODES = 128
MAX_NODES = 1024
NODE_TOLERANCE = 1e-8


class ShapeKind(Enum):
    """Supported test shapes."""
    DISK = "disk"
    ELLIPSE = "ellipse"
    FLOWER = "flower"
    KITE = "kite"


def spectral_derivative(values: NDArray, order: int = 1) -> NDArray:
    """Derivative in t of periodic samples along axis 0 (Nyquist mode dropped for odd orders)."""
    n = values.shape[0]
    k = np.fft.fftfreq(n, d=1.0 / n)
    if order % 2 == 1 and n % 2 == 0:
        k[n // 2] = 0.0
    factor = ((1j * k) ** order).reshape((-1,) + (1,) * (values.ndim - 1))
    result = np.fft.ifft(np.fft.fft(values, axis=0) * factor, axis=0)
    return result.real if np.isrealobj(values) else result


def _orientation(a: NDArray, b: NDArray, c: NDArray) -> NDArray:
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def is_simple(points: NDArray[np.float64]) -> bool:
    """True when the closed polygon through the points has no crossing edges."""
    p = np.asarray(points, dtype=float)
    q = np.roll(p, -1, axis=0)
    n = p.shape[0]
    A, B = p[:, None, :], q[:, None, :]
    C, D = p[None, :, :], q[None, :, :]
    o1 = _orientation(A, B, C)
    o2 = _orientation(A, B, D)
    o3 = _orientation(C, D, A)
    o4 = _orientation(C, D, B)
    crossing = (o1 * o2 < 0) & (o3 * o4 < 0)
    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :])
    adjacent = (gap <= 1) | (gap == n - 1)
    return not bool(np.any(crossing & ~adjacent))


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """
    Closed counterclockwise curve sampled at Q equispaced parameters.

    Attributes:
        points: node positions x(t_q), shape (Q, 2)
        tangents: dx/dt at the nodes, shape (Q, 2)
        second_derivatives: d²x/dt² at the nodes, shape (Q, 2)
        normals: outward unit normals, shape (Q, 2)
        speed: |dx/dt|
        weights: arc-length quadrature weights |dx/dt| 2π/Q
        curvature: signed curvature (positive on convex parts)
    """
    points: NDArray[np.float64]
    tangents: NDArray[np.float64]
    second_derivatives: NDArray[np.float64]
    normals: NDArray[np.float64]
    speed: NDArray[np.float64]
    weights: NDArray[np.float64]
    curvature: NDArray[np.float64]

    @classmethod
    def from_points(cls, points: ArrayLike, validate: bool = True) -> "BoundaryCurve":
        """Build a curve from equispaced samples, enforcing counterclockwise orientation."""
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ShapeValidationError(f"Expected (Q, 2) samples, got shape {pts.shape}")
        n = pts.shape[0]
        if n % 2 or n < MIN_NODES:
            raise ShapeValidationError(f"Node count must be even and >= {MIN_NODES}, got {n}")
        if not np.all(np.isfinite(pts)):
            raise ShapeValidationError("Curve samples must be finite")

        d1 = spectral_derivative(pts, 1)
        signed = 0.5 * np.sum(pts[:, 0] * d1[:, 1] - pts[:, 1] * d1[:, 0]) * 2 * np.pi / n
        if signed < 0:
            pts = np.roll(pts[::-1], 1, axis=0)
            d1 = spectral_derivative(pts, 1)
        if validate and not is_simple(pts):
            raise ShapeValidationError("Curve is self-intersecting")

        d2 = spectral_derivative(pts, 2)
        speed = np.hypot(d1[:, 0], d1[:, 1])
        if np.any(speed <= 0):
            raise ShapeValidationError("Degenerate parameterization (zero speed)")
        normals = np.stack([d1[:, 1], -d1[:, 0]], axis=1) / speed[:, None]
        curvature = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed ** 3
        return cls(
            points=pts,
            tangents=d1,
            second_derivatives=d2,
            normals=normals,
            speed=speed,
            weights=speed * 2 * np.pi / n,
            curvature=curvature,
        )

    @property
    def nodes(self) -> int:
        return self.points.shape[0]

    @property
    def t(self) -> NDArray[np.float64]:
        return 2 * np.pi * np.arange(self.nodes) / self.nodes

    @property
    def unit_tangents(self) -> NDArray[np.float64]:
        return self.tangents / self.speed[:, None]

    @property
    def area(self) -> float:
        x, dx = self.points, self.tangents
        return float(0.5 * np.sum(x[:, 0] * dx[:, 1] - x[:, 1] * dx[:, 0]) * 2 * np.pi / self.nodes)

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.weights))

    @property
    def centroid(self) -> NDArray[np.float64]:
        x, dx = self.points, self.tangents
        dt = 2 * np.pi / self.nodes
        cx = np.sum(x[:, 0] ** 2 * dx[:, 1]) * dt / (2 * self.area)
        cy = -np.sum(x[:, 1] ** 2 * dx[:, 0]) * dt / (2 * self.area)
        return np.array([cx, cy])

    def integrate(self, values: NDArray) -> Union[float, complex, NDArray]:
        """∫ f dσ with the trapezoidal arc-length rule (values along axis 0)."""
        return np.tensordot(self.weights, values, axes=(0, 0))

    def arc_derivative(self, values: NDArray) -> NDArray:
        """d/ds of nodal values."""
        speed = self.speed.reshape((-1,) + (1,) * (np.ndim(values) - 1))
        return spectral_derivative(values, 1) / speed

    def translated(self, shift: ArrayLike) -> "BoundaryCurve":
        return BoundaryCurve.from_points(self.points + np.asarray(shift, dtype=float)[None, :], validate=False)

    def scaled(self, factor: float, center: Optional[ArrayLike] = None) -> "BoundaryCurve":
        """factor·x + center."""
        shift = np.zeros(2) if center is None else np.asarray(center, dtype=float)
        return BoundaryCurve.from_points(factor * self.points + shift[None, :], validate=False)

    def rotated(self, theta: float) -> "BoundaryCurve":
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        return BoundaryCurve.from_points(self.points @ rot.T, validate=False)

    def resampled(self, nodes: int) -> "BoundaryCurve":
        """Trigonometric interpolation onto a different node count."""
        if nodes == self.nodes:
            return self
        return BoundaryCurve.from_points(signal.resample(self.points, nodes, axis=0), validate=False)

    def contains(self, points: ArrayLike) -> NDArray[np.bool_]:
        """Even-odd point-in-polygon test against the node polygon."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        a = self.points
        b = np.roll(a, -1, axis=0)
        px, py = pts[:, 0][:, None], pts[:, 1][:, None]
        ay, by = a[:, 1][None, :], b[:, 1][None, :]
        straddle = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = a[:, 0][None, :] + (py - ay) * (b[:, 0] - a[:, 0])[None, :] / (by - ay)
        crossings = np.sum(straddle & (px < x_cross), axis=1)
        return crossings % 2 == 1

    def distance_to(self, points: ArrayLike) -> NDArray[np.float64]:
        """Distance from each point to the node set."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cKDTree(self.points).query(pts)[0]


def refine_nodes(
    evaluate: Callable[[BoundaryCurve], NDArray],
    curve: BoundaryCurve,
    tolerance: float = NODE_TOLERANCE,
    max_nodes: int = MAX_NODES,
    label: str = "quantity",
) -> Tuple[BoundaryCurve, NDArray]:
    """
    Evaluate on curve and on its 2Q resampling; double Q while they disagree.

    Returns:
        (curve, values) at the coarsest node count whose doubling changes the values by
        at most tolerance (relative, Frobenius), or at max_nodes
    """
    values = np.asarray(evaluate(curve))
    if 2 * curve.nodes > max_nodes:
        return curve, values
    while 2 * curve.nodes <= max_nodes:
        finer_curve = curve.resampled(2 * curve.nodes)
        finer = np.asarray(evaluate(finer_curve))
        scale = np.linalg.norm(finer)
        change = float(np.linalg.norm(finer - values) / scale) if scale > 0 else 0.0
        if change <= tolerance:
            return curve, values
        logger.warning(
            f"{label} changed by {change:.2e} from Q={curve.nodes} to Q={finer_curve.nodes}; doubling nodes"
        )
        curve, values = finer_curve, finer
    logger.warning(f"{label} not converged at Q={curve.nodes} (limit {max_nodes})")
    return curve, values


def area(curve: BoundaryCurve) -> float:
    """Signed area by Green's theorem with the curve's spectral quadrature."""
    return curve.area


def _raw_shape(kind: ShapeKind, t: NDArray, a: float, b: float, petals: int, amplitude: float) -> NDArray:
    if kind is ShapeKind.DISK:
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if kind is ShapeKind.ELLIPSE:
        if a <= 0 or b <= 0:
            raise ShapeValidationError(f"Ellipse semi-axes must be positive, got ({a}, {b})")
        return np.stack([a * np.cos(t), b * np.sin(t)], axis=1)
    if kind is ShapeKind.FLOWER:
        if petals < 1:
            raise ShapeValidationError(f"Flower needs at least one petal, got {petals}")
        if abs(amplitude) >= 1:
            raise ShapeValidationError(f"Flower amplitude {amplitude} makes the radius vanish")
        r = 1.0 + amplitude * np.cos(petals * t)
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    if kind is ShapeKind.KITE:
        return np.stack([np.cos(t) + 0.65 * np.cos(2 * t) - 0.65, 1.5 * np.sin(t)], axis=1)
    raise ShapeValidationError(f"Unknown shape kind: {kind}")


def make_shape(
    kind: Union[str, ShapeKind],
    nodes: int = DEFAULT_NODES,
    a: float = 2.0,
    b: float = 1.0,
    rotation: float = 0.0,
    petals: int = 5,
    amplitude: float = 0.3,
) -> BoundaryCurve:
    """
    Unit-area test shape centered at its centroid.

    Args:
        kind: disk, ellipse, flower or kite
        nodes: even node count Q >= 32
        a, b: ellipse semi-axes before normalization
        rotation: rotation angle applied after normalization
        petals, amplitude: flower parameters, r(t) = 1 + amplitude·cos(petals·t)

    Returns:
        BoundaryCurve with |B| = 1 containing the origin
    """
    kind = ShapeKind(kind) if isinstance(kind, str) else kind
    if nodes % 2 or nodes < MIN_NODES:
        raise ShapeValidationError(f"Node count must be even and >= {MIN_NODES}, got {nodes}")
    t = 2 * np.pi * np.arange(nodes) / nodes
    curve = BoundaryCurve.from_points(_raw_shape(kind, t, a, b, petals, amplitude))
    curve = curve.translated(-curve.centroid)
    curve = curve.scaled(1.0 / np.sqrt(curve.area))
    if rotation:
        curve = curve.rotated(rotation)
    logger.debug(f"Built {kind.value} with {nodes} nodes, perimeter {curve.perimeter:.6f}")
    return curve


def perturb(curve: BoundaryCurve, h: ArrayLike, eta: float) -> BoundaryCurve:
    """Curve with nodes x + η h(x) ν(x); raises ShapeValidationError on self-intersection."""
    h = np.asarray(h, dtype=float)
    if h.shape != (curve.nodes,):
        raise ShapeValidationError(f"Perturbation field needs {curve.nodes} values, got {h.shape}")
    if eta == 0:
        return curve
    return BoundaryCurve.from_points(curve.points + eta * h[:, None] * curve.normals)


class BoundaryDistance(NamedTuple):
    """Hausdorff distance between node sets and symmetric L² nearest-point distance."""
    hausdorff: float
    l2: float


def boundary_distance(c1: BoundaryCurve, c2: BoundaryCurve, oversampling: int = 8) -> BoundaryDistance:
    """Distances between two curves (0 for identical curves)."""
    hausdorff = max(
        directed_hausdorff(c1.points, c2.points)[0],
        directed_hausdorff(c2.points, c1.points)[0],
    )
    fine1 = c1.resampled(oversampling * c1.nodes).points
    fine2 = c2.resampled(oversampling * c2.nodes).points
    d12 = cKDTree(fine2).query(c1.points)[0]
    d21 = cKDTree(fine1).query(c2.points)[0]
    mean12 = np.sum(c1.weights * d12 ** 2) / np.sum(c1.weights)
    mean21 = np.sum(c2.weights * d21 ** 2) / np.sum(c2.weights)
    return BoundaryDistance(hausdorff=float(hausdorff), l2=float(np.sqrt(0.5 * (mean12 + mean21))))


@dataclass(frozen=True, eq=False)
class Inclusion:
    """Small inclusion D = εB + z of contrast k."""
    base: BoundaryCurve
    center: NDArray[np.float64]
    epsilon: float
    contrast: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.contrast <= 0 or self.contrast == 1:
            raise ShapeValidationError(f"Contrast must be positive and different from 1, got {self.contrast}")
        if not 0 < self.epsilon < 1:
            raise ShapeValidationError(f"Scale ε must lie in (0, 1), got {self.epsilon}")
        if abs(self.base.area - 1.0) > 1e-10:
            raise ShapeValidationError(f"Reference shape must have unit area, got {self.base.area:.12f}")

    @property
    def boundary(self) -> BoundaryCurve:
        return self.base.scaled(self.epsilon, self.center)

    @property
    def volume(self) -> float:
        return self.epsilon ** 2 * self.base.area


@dataclass(frozen=True)
class EquivalentEllipse:
    """Ellipse with semi-axes a >= b > 0 rotated by θ ∈ [0, π) about center."""
    a: float
    b: float
    theta: float
    center: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not self.a >= self.b > 0:
            raise ShapeValidationError(f"Semi-axes must satisfy a >= b > 0, got ({self.a}, {self.b})")
        if not 0 <= self.theta < np.pi:
            raise ShapeValidationError(f"Rotation must lie in [0, π), got {self.theta}")

    @property
    def area(self) -> float:
        return float(np.pi * self.a * self.b)

    def curve(self, nodes: int = DEFAULT_NODES) -> BoundaryCurve:
        """Physical boundary of the ellipse."""
        t = 2 * np.pi * np.arange(nodes) / nodes
        c, s = np.cos(self.theta), np.sin(self.theta)
        local = np.stack([self.a * np.cos(t), self.b * np.sin(t)], axis=1)
        pts = local @ np.array([[c, -s], [s, c]]).T + np.asarray(self.center, dtype=float)[None, :]
        return BoundaryCurve.from_points(pts)
