"""
Polarization Tensors

Frequency-dependent polarization tensors (FDPTs) from the rescaled transmission
system on the reference shape B, classical polarization tensors (PTs) from the
Neumann-Poincaré resolvent, and their truncated Fourier transforms (TDPTs).

Density system on ∂B for a multi-index α, with interior wavenumber εω/√k:
    S^{εω/√k}[φ_α] - S^{εω}[ψ_α]                 = x^α
    k(-½ I + K*_{εω/√k})[φ_α] - (½ I + K*_{εω})[ψ_α] = ∂x^α/∂ν
and Ŵ_αβ = ∫_{∂B} s^β ψ_α(s) dσ(s). Tables expose the ε-scaled 𝒲_αβ = ε^{|α|+|β|} Ŵ_αβ.

Time-domain tensors are P_ρ[W](t) = ∫_{|ω|≤ρ} e^{-iωt} W(ω) dω, discretized by an
equal-weight Riemann sum (ρ/L)·Σ_l on the uniform grid ω_l = lρ/L with |ω_l| > ρ0;
negative frequencies come from W(-ω) = conj(W(ω)).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from tdpt.core.geometry import MAX_NODES, NODE_TOLERANCE, BoundaryCurve, refine_nodes
from tdpt.core.layer_potentials import Density, assemble_k_star, assemble_single_layer
from tdpt.core.special_functions import MultiIndex, multi_indices
from tdpt.errors import DomainError, GridMismatchError, ResonanceError

logger = logging.getLogger("TDPT.PolarizationTensors")

CONDITION_LIMIT = 1e12
FIRST_ORDER = (MultiIndex(1, 0), MultiIndex(0, 1))


@dataclass(frozen=True, eq=False)
class DensityPair:
    """Solution (φ, ψ) of the transmission density system."""
    phi: Density
    psi: Density
    alpha: Optional[MultiIndex]
    eps_omega: float
    interior_eps_omega: float


def _monomial_data(curve: BoundaryCurve, indices: Sequence[MultiIndex], center: ArrayLike = (0.0, 0.0)):
    """Columns x^α and ∂x^α/∂ν on the curve, x measured from center."""
    x = curve.points - np.asarray(center, dtype=float)[None, :]
    values = np.stack([alpha.monomial(x) for alpha in indices], axis=1)
    fluxes = np.stack(
        [np.sum(alpha.monomial_gradient(x) * curve.normals, axis=1) for alpha in indices], axis=1
    )
    return values, fluxes


class TransmissionSystem:
    """
    Factorized 2Q×2Q block system for a curve, wavenumber and contrast.

    Assembled once and reused for any number of right-hand sides.
    """

    def __init__(self, curve: BoundaryCurve, omega: float, contrast: float, condition_limit: float = CONDITION_LIMIT):
        if omega <= 0:
            raise DomainError(f"Transmission system needs ω > 0, got {omega}")
        if contrast <= 0 or contrast == 1:
            raise DomainError(f"Contrast must be positive and different from 1, got {contrast}")
        self.curve = curve
        self.omega = omega
        self.contrast = contrast
        self.interior_omega = omega / np.sqrt(contrast)

        q = curve.nodes
        identity = np.eye(q)
        s_in = assemble_single_layer(curve, self.interior_omega).matrix
        s_out = assemble_single_layer(curve, omega).matrix
        ks_in = assemble_k_star(curve, self.interior_omega).matrix
        ks_out = assemble_k_star(curve, omega).matrix
        self.s_out = s_out
        self.block = np.block([
            [s_in, -s_out],
            [contrast * (-0.5 * identity + ks_in), -(0.5 * identity + ks_out)],
        ])

        self.condition_number = float(np.linalg.cond(self.block))
        if not np.isfinite(self.condition_number) or self.condition_number > condition_limit:
            raise ResonanceError(
                f"Transmission system near-singular at ω={omega:.6g} (cond={self.condition_number:.3e})",
                condition_number=self.condition_number,
            )
        self._lu = scipy.linalg.lu_factor(self.block)
        logger.debug(f"Factorized transmission system Q={q}, ω={omega:.6g}, cond={self.condition_number:.3e}")

    def solve(self, f: NDArray, g: NDArray) -> Tuple[NDArray, NDArray]:
        """Densities (φ, ψ) for boundary data F and G (vectors or column stacks)."""
        q = self.curve.nodes
        rhs = np.concatenate([np.asarray(f, dtype=complex), np.asarray(g, dtype=complex)], axis=0)
        solution = scipy.linalg.lu_solve(self._lu, rhs)
        return solution[:q], solution[q:]

    def residual(self, phi: NDArray, psi: NDArray, f: NDArray, g: NDArray) -> float:
        rhs = np.concatenate([f, g], axis=0)
        return float(np.linalg.norm(self.block @ np.concatenate([phi, psi], axis=0) - rhs) / np.linalg.norm(rhs))


def solve_density_system(
    curve: BoundaryCurve,
    eps_omega: float,
    contrast: float,
    f: ArrayLike,
    g: ArrayLike,
    alpha: Optional[MultiIndex] = None,
) -> DensityPair:
    """
    Solve the transmission density system on B.

    Args:
        curve: reference curve B
        eps_omega: exterior wavenumber εω (the interior one is εω/√k)
        contrast: k > 0, k != 1
        f: Dirichlet data on the nodes
        g: Neumann data on the nodes
        alpha: multi-index the data belongs to, if any

    Returns:
        DensityPair (φ attached to the interior wavenumber)
    """
    if eps_omega >= 1:
        logger.warning(f"εω = {eps_omega:.4g} lies outside the documented accuracy window εω < 1")
    system = TransmissionSystem(curve, eps_omega, contrast)
    phi, psi = system.solve(np.asarray(f), np.asarray(g))
    return DensityPair(
        phi=Density(phi, curve),
        psi=Density(psi, curve),
        alpha=alpha,
        eps_omega=eps_omega,
        interior_eps_omega=system.interior_omega,
    )


@dataclass(frozen=True, eq=False)
class FdptTable:
    """
    ε-scaled FDPTs 𝒲_αβ(ω) at one frequency.

    Attributes:
        omega: frequency (negative values hold conjugated data)
        epsilon: scale ε of the inclusion
        contrast: contrast k
        order: tensor order n the table was built for
        indices: multi-indices labelling rows (α) and columns (β)
        values: complex matrix 𝒲[α, β]
        row_projector, col_projector: least-squares projectors of a measured table;
            a candidate table is compared through the same projectors
    """
    omega: float
    epsilon: float
    contrast: float
    order: int
    indices: List[MultiIndex]
    values: NDArray[np.complex128]
    row_projector: Optional[NDArray] = None
    col_projector: Optional[NDArray] = None

    @property
    def max_order(self) -> int:
        return max(alpha.order for alpha in self.indices)

    def position(self, alpha: MultiIndex) -> int:
        return self.indices.index(alpha)

    def entry(self, alpha: MultiIndex, beta: MultiIndex) -> complex:
        return complex(self.values[self.position(alpha), self.position(beta)])

    def raw_entry(self, alpha: MultiIndex, beta: MultiIndex) -> complex:
        """Unscaled Ŵ_αβ."""
        return self.entry(alpha, beta) / self.epsilon ** (alpha.order + beta.order)

    def raw_values(self) -> NDArray[np.complex128]:
        orders = np.array([alpha.order for alpha in self.indices])
        return self.values / self.epsilon ** (orders[:, None] + orders[None, :])

    def first_order_block(self) -> NDArray[np.complex128]:
        pos = [self.position(alpha) for alpha in FIRST_ORDER]
        return self.values[np.ix_(pos, pos)]

    def truncated(self, max_order: int) -> "FdptTable":
        keep = [i for i, alpha in enumerate(self.indices) if alpha.order <= max_order]
        return replace(
            self,
            indices=[self.indices[i] for i in keep],
            values=self.values[np.ix_(keep, keep)],
            row_projector=None if self.row_projector is None else self.row_projector[np.ix_(keep, keep)],
            col_projector=None if self.col_projector is None else self.col_projector[np.ix_(keep, keep)],
        )

    def conjugate(self) -> "FdptTable":
        """Table at -ω for real time-domain data."""
        return replace(self, omega=-self.omega, values=np.conj(self.values))

    def project(self, values: NDArray) -> NDArray:
        """Apply this table's least-squares projectors to another tensor of the same layout."""
        out = values
        if self.row_projector is not None:
            out = self.row_projector @ out
        if self.col_projector is not None:
            out = out @ self.col_projector
        return out


def compute_fdpt(
    curve: BoundaryCurve,
    epsilon: float,
    omega: float,
    contrast: float,
    order: int,
    max_order: Optional[int] = None,
) -> FdptTable:
    """
    FDPT table for D = εB at frequency ω.

    Args:
        curve: reference curve B (monomials are taken about the origin)
        epsilon: scale ε
        omega: frequency; ω < 0 returns the conjugate of the table at |ω|
        contrast: k
        order: tensor order n; entries cover |α|, |β| <= n + 1 unless max_order is given
        max_order: explicit highest multi-index order

    Returns:
        FdptTable of ε-scaled tensors
    """
    if omega < 0:
        return compute_fdpt(curve, epsilon, -omega, contrast, order, max_order).conjugate()
    if omega == 0:
        raise DomainError("FDPTs are defined for ω != 0; use compute_classical_pt for the static limit")
    if epsilon <= 0:
        raise DomainError(f"ε must be positive, got {epsilon}")

    top = order + 1 if max_order is None else max_order
    indices = multi_indices(top)
    eps_omega = epsilon * omega
    if eps_omega >= 1:
        logger.warning(f"εω = {eps_omega:.4g} lies outside the documented accuracy window εω < 1")

    system = TransmissionSystem(curve, eps_omega, contrast)
    f, g = _monomial_data(curve, indices)
    _, psi = system.solve(f, g)
    raw = psi.T @ (curve.weights[:, None] * f)
    orders = np.array([alpha.order for alpha in indices])
    values = raw * epsilon ** (orders[:, None] + orders[None, :])
    return FdptTable(
        omega=omega,
        epsilon=epsilon,
        contrast=contrast,
        order=order,
        indices=indices,
        values=values,
    )


def converged_fdpt(
    curve: BoundaryCurve,
    epsilon: float,
    omega: float,
    contrast: float,
    order: int,
    max_order: Optional[int] = None,
    tolerance: float = NODE_TOLERANCE,
    max_nodes: int = MAX_NODES,
) -> FdptTable:
    """compute_fdpt on B, doubling its node count until the table agrees with the 2Q table."""
    tables = {}

    def evaluate(nodes_curve: BoundaryCurve) -> NDArray:
        tables[nodes_curve.nodes] = compute_fdpt(nodes_curve, epsilon, omega, contrast, order, max_order)
        return tables[nodes_curve.nodes].values

    refined, _ = refine_nodes(evaluate, curve, tolerance, max_nodes, label=f"FDPT at ω={omega:.4g}")
    return tables[refined.nodes]


def fdpt_for_curve(
    curve: BoundaryCurve,
    center: ArrayLike,
    omega: float,
    contrast: float,
    order: int,
    max_order: Optional[int] = None,
) -> FdptTable:
    """FDPTs of a physical boundary, rescaled to a unit-area reference about center."""
    scale = float(np.sqrt(curve.area))
    reference = curve.translated(-np.asarray(center, dtype=float)).scaled(1.0 / scale)
    return compute_fdpt(reference, scale, omega, contrast, order, max_order)


@dataclass(frozen=True, eq=False)
class PtTable:
    """Classical polarization tensors M_αβ for 1 <= |α|, |β| <= n."""
    contrast: float
    indices: List[MultiIndex]
    values: NDArray[np.float64]

    @property
    def lam(self) -> float:
        return (self.contrast + 1) / (2 * (self.contrast - 1))

    def entry(self, alpha: MultiIndex, beta: MultiIndex) -> float:
        return float(self.values[self.indices.index(alpha), self.indices.index(beta)])

    def first_order_block(self) -> NDArray[np.float64]:
        pos = [self.indices.index(alpha) for alpha in FIRST_ORDER]
        return self.values[np.ix_(pos, pos)]


def compute_classical_pt(curve: BoundaryCurve, contrast: float, order: int, center: ArrayLike = (0.0, 0.0)) -> PtTable:
    """
    M_αβ = ∫ x^β (λI - K*)^{-1}[∂x^α/∂ν] dσ with λ = (k+1)/(2(k-1)).
    """
    if contrast <= 0 or contrast == 1:
        raise DomainError(f"Contrast must be positive and different from 1, got {contrast}")
    if order < 1:
        raise DomainError(f"PT order must be >= 1, got {order}")
    lam = (contrast + 1) / (2 * (contrast - 1))
    indices = multi_indices(order, min_order=1)
    f, g = _monomial_data(curve, indices, center)
    k_star = assemble_k_star(curve, 0.0).matrix
    densities = np.linalg.solve(lam * np.eye(curve.nodes) - k_star, g)
    values = densities.T @ (curve.weights[:, None] * f)
    return PtTable(contrast=contrast, indices=indices, values=values)


def psi_rho(rho: float, t: ArrayLike) -> NDArray[np.float64]:
    """ψ_ρ(t) = 2 sin(ρt)/t with ψ_ρ(0) = 2ρ."""
    if rho <= 0:
        raise DomainError(f"ρ must be positive, got {rho}")
    t = np.asarray(t, dtype=float)
    safe = np.where(t == 0, 1.0, t)
    value = np.where(t == 0, 2 * rho, 2 * np.sin(rho * safe) / safe)
    return float(value) if value.ndim == 0 else value


def omega_squared_transform(rho: float, t: ArrayLike) -> NDArray[np.float64]:
    """Closed form of ∫_{|ω|≤ρ} ω² e^{-iωt} dω = -ψ_ρ''(t)."""
    t = np.asarray(t, dtype=float)
    x = rho * t
    small = np.abs(x) < 1e-2
    safe = np.where(small, 1.0, t)
    exact = 2 * (rho ** 2 * np.sin(rho * safe) / safe
                 + 2 * rho * np.cos(rho * safe) / safe ** 2
                 - 2 * np.sin(rho * safe) / safe ** 3)
    series = 2 * rho ** 3 * (1 / 3 - x ** 2 / 10 + x ** 4 / 168 - x ** 6 / 6480)
    return np.where(small, series, exact)


@dataclass(frozen=True)
class FrequencyGrid:
    """
    Nonnegative half of the symmetric uniform set S_L = {lρ/L} with |ω| > ρ0.

    Every kept frequency carries the Riemann weight h = ρ/L. The default ρ0 = h drops
    the bin around ω = 0; a negative ρ0 keeps ω = 0.
    """
    rho: float
    half_count: int
    rho0: float
    frequencies: Tuple[float, ...] = field(default=())
    weights: Tuple[float, ...] = field(default=())

    @classmethod
    def build(cls, rho: float, half_count: int, rho0: Optional[float] = None) -> "FrequencyGrid":
        if rho <= 0 or half_count < 1:
            raise DomainError(f"Need ρ > 0 and L >= 1, got ρ={rho}, L={half_count}")
        step = rho / half_count
        rho0 = step if rho0 is None else rho0
        levels = np.arange(half_count + 1)
        keep = levels * step > rho0 + 1e-9 * step
        if not np.any(keep):
            raise GridMismatchError(f"Frequency exclusion ρ0={rho0} removes every frequency")
        freqs = levels[keep] * step
        weights = np.full(freqs.size, step)
        return cls(rho, half_count, float(rho0), tuple(float(f) for f in freqs), tuple(float(w) for w in weights))

    @classmethod
    def infer(cls, frequencies: Sequence[float]) -> "FrequencyGrid":
        """Recover the grid from sampled nonnegative frequencies."""
        freqs = np.sort(np.asarray(frequencies, dtype=float))
        if freqs.size == 0:
            raise GridMismatchError("Empty frequency set")
        if np.any(freqs < 0):
            raise GridMismatchError("Frequency samples must be nonnegative (negatives follow by conjugation)")
        step = freqs[1] - freqs[0] if freqs.size > 1 else freqs[0]
        if step <= 0:
            raise GridMismatchError("Repeated frequency samples")
        levels = freqs / step
        if np.max(np.abs(levels - np.round(levels))) > 1e-8:
            raise GridMismatchError("Frequencies are not on a uniform grid through 0")
        levels = np.round(levels).astype(int)
        if np.any(np.diff(levels) != 1):
            raise GridMismatchError("Frequency grid has gaps")
        grid = cls.build(float(freqs[-1]), int(levels[-1]), float(freqs[0] - step))
        if len(grid.frequencies) != freqs.size:
            raise GridMismatchError("Frequency samples do not match the inferred grid")
        return grid

    @property
    def step(self) -> float:
        return self.rho / self.half_count

    @property
    def omegas(self) -> NDArray[np.float64]:
        return np.asarray(self.frequencies)

    @property
    def quadrature(self) -> NDArray[np.float64]:
        return np.asarray(self.weights)

    def subsample(self, stride: int) -> "FrequencyGrid":
        """Every stride-th level with the same ρ0, keeping the band edge ρ."""
        if stride < 1 or self.half_count % stride:
            raise GridMismatchError(f"Stride {stride} does not divide L={self.half_count}")
        return FrequencyGrid.build(self.rho, self.half_count // stride, self.rho0)


def band_transform(grid: FrequencyGrid, values: NDArray, t: ArrayLike) -> NDArray[np.complex128]:
    """
    Σ_{l∈S_L} w_l e^{-iω_l t} W(ω_l) with W(-ω) = conj(W(ω)).

    Args:
        grid: nonnegative frequency grid
        values: samples W(ω_l) stacked along axis 0
        t: time grid

    Returns:
        Array of shape (len(t),) + values.shape[1:]
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    values = np.asarray(values, dtype=complex)
    omegas, weights = grid.omegas, grid.quadrature
    if values.shape[0] != omegas.size:
        raise GridMismatchError(f"{values.shape[0]} samples for {omegas.size} frequencies")
    weighted = values * weights.reshape((-1,) + (1,) * (values.ndim - 1))
    positive = omegas > 0
    phase = np.exp(-1j * np.outer(t, omegas[positive]))
    result = np.tensordot(phase, weighted[positive], axes=(1, 0))
    result = result + np.tensordot(np.conj(phase), np.conj(weighted[positive]), axes=(1, 0))
    if np.any(~positive):
        result = result + np.sum(weighted[~positive], axis=0)[None, ...]
    return result


@dataclass(frozen=True, eq=False)
class TdptTable:
    """
    Truncated TDPTs P_ρ[𝒲_αβ](t) on a uniform time grid.

    Keeps its per-frequency source tables so a consumer can re-aggregate the same data
    on a coarser frequency subset.
    """
    t: NDArray[np.float64]
    grid: FrequencyGrid
    indices: List[MultiIndex]
    values: NDArray[np.complex128]
    sources: List[FdptTable] = field(default_factory=list)
    variance: Optional[NDArray[np.float64]] = None

    @property
    def rho(self) -> float:
        return self.grid.rho

    @property
    def rho0(self) -> float:
        return self.grid.rho0

    @property
    def half_count(self) -> int:
        return self.grid.half_count

    def entry(self, alpha: MultiIndex, beta: MultiIndex) -> NDArray[np.complex128]:
        return self.values[:, self.indices.index(alpha), self.indices.index(beta)]

    def first_order_block(self) -> NDArray[np.complex128]:
        pos = [self.indices.index(alpha) for alpha in FIRST_ORDER]
        return self.values[:, pos][:, :, pos]

    def envelope(self) -> NDArray[np.float64]:
        """Discrete transform of W ≡ 1 on this grid (≈ ψ_ρ(t))."""
        return band_transform(self.grid, np.ones(len(self.grid.frequencies)), self.t).real

    def omega_squared(self) -> NDArray[np.float64]:
        """Discrete transform of W = ω² on this grid."""
        return band_transform(self.grid, self.grid.omegas ** 2, self.t).real

    def resampled(self, stride: int, t: ArrayLike) -> "TdptTable":
        """Re-aggregate the source tables on every stride-th frequency and a new time grid."""
        if not self.sources:
            raise GridMismatchError("Table carries no source FDPTs to re-aggregate")
        grid = self.grid.subsample(stride)
        by_omega = {round(table.omega / self.grid.step): table for table in self.sources}
        chosen = [by_omega[round(omega / self.grid.step)] for omega in grid.frequencies]
        return compute_tdpt(chosen, t, grid=grid)


def compute_tdpt(
    fdpts: Sequence[FdptTable],
    t: ArrayLike,
    grid: Optional[FrequencyGrid] = None,
) -> TdptTable:
    """
    Aggregate FDPT tables sampled on S_L into TDPTs.

    Args:
        fdpts: tables at the nonnegative frequencies of the grid
        t: time grid
        grid: frequency grid; inferred from the tables when omitted

    Returns:
        TdptTable on the given time grid
    """
    if not fdpts:
        raise GridMismatchError("Empty frequency set")
    tables = sorted(fdpts, key=lambda table: table.omega)
    omegas = [table.omega for table in tables]
    grid = grid or FrequencyGrid.infer(omegas)
    if len(grid.frequencies) != len(tables) or not np.allclose(grid.omegas, omegas, rtol=1e-10, atol=1e-12):
        raise GridMismatchError("FDPT frequencies do not match the frequency grid")
    indices = tables[0].indices
    for table in tables[1:]:
        if table.indices != indices:
            raise GridMismatchError("FDPT tables carry different multi-index sets")

    t = np.asarray(t, dtype=float)
    stacked = np.stack([table.values for table in tables], axis=0)
    values = band_transform(grid, stacked, t)
    logger.debug(f"Aggregated {len(tables)} frequencies (ρ={grid.rho:.4g}, L={grid.half_count}) on {t.size} times")
    return TdptTable(t=t, grid=grid, indices=list(indices), values=values, sources=list(tables))


def default_time_grid(t_max: float = 5.0, points: int = 512) -> NDArray[np.float64]:
    return np.linspace(0.0, t_max, points)
