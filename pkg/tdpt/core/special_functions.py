"""
Special Functions

Bessel/Hankel evaluation and the 2D fundamental solutions used by every boundary
operator in the package:
- Γ_ω(x) = (i/4) H0(ω|x|), outgoing solution of (Δ + ω²)Γ = -δ
- Γ_0(x) = (1/2π) ln|x|
- multi-index derivatives ∂^α Γ_ω, evaluated in closed form through the complex
  derivatives ∂1 ± i∂2 acting on cylinder harmonics H_m(ωr) e^{imθ}
"""

import logging
import math
from dataclasses import dataclass
from functools import total_ordering
from typing import Dict, List, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from tdpt.errors import DomainError, SingularityError

logger = logging.getLogger("TDPT.SpecialFunctions")

EULER_GAMMA = float(np.euler_gamma)
MAX_DERIVATIVE_ORDER = 5

Number = Union[float, complex, NDArray[np.complex128]]


@total_ordering
@dataclass(frozen=True)
class MultiIndex:
    """Pair (a1, a2) of nonnegative integers, ordered graded-lexicographically."""
    a1: int
    a2: int

    def __post_init__(self) -> None:
        if self.a1 < 0 or self.a2 < 0:
            raise DomainError(f"Multi-index entries must be nonnegative, got ({self.a1}, {self.a2})")

    @property
    def order(self) -> int:
        return self.a1 + self.a2

    @property
    def factorial(self) -> int:
        return math.factorial(self.a1) * math.factorial(self.a2)

    @property
    def sort_key(self) -> tuple:
        return (self.order, -self.a1)

    def __lt__(self, other: "MultiIndex") -> bool:
        return self.sort_key < other.sort_key

    @property
    def label(self) -> str:
        return f"{self.a1},{self.a2}"

    @classmethod
    def parse(cls, label: str) -> "MultiIndex":
        a1, a2 = label.split(",")
        return cls(int(a1), int(a2))

    def monomial(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """x^α evaluated at points of shape (..., 2)."""
        return points[..., 0] ** self.a1 * points[..., 1] ** self.a2

    def monomial_gradient(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """∇x^α at points of shape (..., 2); returns shape (..., 2)."""
        x1, x2 = points[..., 0], points[..., 1]
        d1 = self.a1 * x1 ** max(self.a1 - 1, 0) * x2 ** self.a2 if self.a1 else np.zeros_like(x1)
        d2 = self.a2 * x1 ** self.a1 * x2 ** max(self.a2 - 1, 0) if self.a2 else np.zeros_like(x2)
        return np.stack([d1, d2], axis=-1)


def multi_indices(max_order: int, min_order: int = 0) -> List[MultiIndex]:
    """All multi-indices with min_order <= |α| <= max_order in graded order."""
    if max_order < 0:
        raise DomainError(f"max_order must be nonnegative, got {max_order}")
    return [
        MultiIndex(a1, m - a1)
        for m in range(min_order, max_order + 1)
        for a1 in range(m, -1, -1)
    ]


@dataclass(frozen=True)
class LowFreqConstants:
    """Constants of the low-frequency expansion S^{εω} ≈ S^0 + β_{εω}∫·."""
    eps_omega: float
    euler_gamma: float = EULER_GAMMA

    def __post_init__(self) -> None:
        if self.eps_omega <= 0:
            raise DomainError(f"εω must be positive, got {self.eps_omega}")

    @property
    def beta_eps_omega(self) -> complex:
        return (np.log(self.eps_omega) - np.log(2.0) + self.euler_gamma - 0.5j * np.pi) / (2 * np.pi)


def hankel1(order: int, x: ArrayLike) -> Number:
    """
    Hankel function of the first kind H^(1)_order(x) = J_order(x) + i Y_order(x).

    Args:
        order: 0 or 1
        x: positive argument(s)

    Returns:
        Complex value(s) with the shape of x
    """
    if order not in (0, 1):
        raise DomainError(f"Only orders 0 and 1 are exposed, got {order}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise DomainError("Hankel argument must be positive and finite")
    value = special.hankel1(order, arr)
    return complex(value) if np.ndim(value) == 0 else value


def gamma_helmholtz(omega: float, r: ArrayLike) -> Number:
    """Outgoing fundamental solution Γ_ω(r) = (i/4) H0(ω r)."""
    if omega <= 0:
        raise DomainError(f"ω must be positive, got {omega}")
    arr = np.asarray(r, dtype=float)
    if np.any(arr == 0):
        raise SingularityError("Γ_ω is singular at r = 0")
    if np.any(arr < 0):
        raise DomainError("Distance must be nonnegative")
    value = 0.25j * special.hankel1(0, omega * arr)
    return complex(value) if np.ndim(value) == 0 else value


def gamma_laplace(r: ArrayLike) -> Union[float, NDArray[np.float64]]:
    """Laplace fundamental solution Γ_0(r) = (1/2π) ln r."""
    arr = np.asarray(r, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("Γ_0 requires r > 0")
    value = np.log(arr) / (2 * np.pi)
    return float(value) if np.ndim(value) == 0 else value


def _signed_hankel(orders: NDArray[np.complex128], m: int) -> NDArray[np.complex128]:
    """H_m for possibly negative m from a table of H_0..H_p (H_{-m} = (-1)^m H_m)."""
    return orders[abs(m)] * (-1) ** abs(m) if m < 0 else orders[m]


def gamma_derivative_array(
    omega: float,
    d: NDArray[np.float64],
    indices: Sequence[MultiIndex],
) -> NDArray[np.complex128]:
    """
    Derivatives ∂_d^α Γ_ω(d) with respect to the argument d = x - z.

    Uses ∂1 = (D+ + D-)/2, ∂2 = (D+ - D-)/(2i) with
    D+^p D-^q H0(ωr) = (-ω)^p ω^q H_{p-q}(ωr) e^{i(p-q)θ}.

    Args:
        omega: positive wavenumber
        d: offsets of shape (P, 2), all nonzero
        indices: multi-indices to evaluate

    Returns:
        Array of shape (P, len(indices))
    """
    if omega <= 0:
        raise DomainError(f"ω must be positive, got {omega}")
    d = np.atleast_2d(np.asarray(d, dtype=float))
    r = np.hypot(d[:, 0], d[:, 1])
    if np.any(r == 0):
        raise SingularityError("Derivatives of Γ_ω requested at the source point")

    max_order = max((alpha.order for alpha in indices), default=0)
    orders = np.array([special.hankel1(m, omega * r) for m in range(max_order + 1)])
    phase = np.exp(1j * np.arctan2(d[:, 1], d[:, 0]))

    out = np.zeros((d.shape[0], len(indices)), dtype=complex)
    for col, alpha in enumerate(indices):
        a1, a2 = alpha.a1, alpha.a2
        total = np.zeros(d.shape[0], dtype=complex)
        for j in range(a1 + 1):
            for l in range(a2 + 1):
                p = j + l
                q = alpha.order - p
                coef = math.comb(a1, j) * math.comb(a2, l) * (-1) ** (a2 - l)
                m = p - q
                total += coef * (-omega) ** p * omega ** q * _signed_hankel(orders, m) * phase ** m
        out[:, col] = 0.25j * total / (2.0 ** a1 * (2j) ** a2)
    return out


def gamma_derivative_table(
    omega: float,
    points: NDArray[np.float64],
    z: ArrayLike,
    indices: Sequence[MultiIndex],
    scaled: bool = True,
) -> NDArray[np.complex128]:
    """
    Rows ((1/α!) ∂_z^α Γ_ω(p - z))_α for every point p.

    Since Γ_ω is even this also equals (1/α!) ∂_z^α Γ_ω(z - p).
    """
    z = np.asarray(z, dtype=float)
    d = np.atleast_2d(np.asarray(points, dtype=float)) - z[None, :]
    table = gamma_derivative_array(omega, d, indices)
    signs = np.array([(-1.0) ** alpha.order for alpha in indices])
    if scaled:
        signs = signs / np.array([alpha.factorial for alpha in indices], dtype=float)
    return table * signs[None, :]


def gamma_derivatives(
    omega: float,
    x: ArrayLike,
    z: ArrayLike,
    max_order: int,
) -> Dict[MultiIndex, complex]:
    """
    Table β -> ∂_z^β Γ_ω(x - z) for all |β| <= max_order.

    Args:
        omega: positive wavenumber
        x: observation point
        z: source point, distinct from x
        max_order: highest derivative order (at most 5)
    """
    if max_order > MAX_DERIVATIVE_ORDER:
        raise DomainError(f"max_order must be <= {MAX_DERIVATIVE_ORDER}, got {max_order}")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.array_equal(x, z):
        raise SingularityError("x coincides with z")
    indices = multi_indices(max_order)
    row = gamma_derivative_table(omega, x[None, :], z, indices, scaled=False)[0]
    return {alpha: complex(value) for alpha, value in zip(indices, row)}
