"""
FDPT / TDPT Recovery

Least-squares inversion of MSR data for the ε-scaled FDPTs and their aggregation
into TDPTs.

Model: A_ω = -𝒢_ω(x) 𝒲ᵀ 𝒢_ω(y)ᵀ with rows (1/α!)∂^α_z Γ_ω(p - z), |α| <= n.
The minimum-norm solution is formed from one truncated SVD per array, so the
Kronecker-structured normal equations never have to be assembled.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import cumulative_trapezoid

from tdpt.core.polarization_tensors import FdptTable, FrequencyGrid, TdptTable, compute_tdpt
from tdpt.core.special_functions import gamma_derivative_table, multi_indices
from tdpt.errors import DomainError, GridMismatchError, IllPosedError
from tdpt.forward.forward_model import MsrDataset
from tdpt.utils.parallel import parallel_map

logger = logging.getLogger("TDPT.Recovery")

NOISELESS_CUTOFF = 1e-12
NOISY_CUTOFF = 1e-6


def greens_matrix(omega: float, points: ArrayLike, z: ArrayLike, order: int) -> NDArray[np.complex128]:
    """𝒢_ω(points, z): one row ((1/α!)∂^α_z Γ_ω(p - z))_{|α|<=n} per point."""
    return gamma_derivative_table(omega, np.atleast_2d(points), z, multi_indices(order))


@dataclass(frozen=True)
class TruncatedPseudoInverse:
    """SVD pseudo-inverse of one array's Green matrix."""
    pinv: NDArray[np.complex128]
    projector: NDArray[np.complex128]
    rank: int
    singular_values: NDArray[np.float64]

    @classmethod
    def of(cls, matrix: NDArray, cutoff: float) -> "TruncatedPseudoInverse":
        u, s, vh = np.linalg.svd(matrix, full_matrices=False)
        keep = s > cutoff * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
        v_keep = vh[keep].conj().T
        pinv = (v_keep / s[keep][None, :]) @ u[:, keep].conj().T
        return cls(pinv=pinv, projector=v_keep @ v_keep.conj().T, rank=int(np.sum(keep)), singular_values=s)


def _structural_rank(order: int, points: int) -> int:
    # Helmholtz relations leave 2n+1 independent derivative rows
    return min(points, 2 * order + 1)


def _side_inverse(
    omega: float, points: NDArray, z: ArrayLike, order: int, cutoff: float, name: str
) -> TruncatedPseudoInverse:
    inverse = TruncatedPseudoInverse.of(greens_matrix(omega, points, z, order), cutoff)
    required = _structural_rank(order, points.shape[0])
    if inverse.rank < required:
        raise IllPosedError(
            f"{name} Green matrix at ω={omega:.6g} has numerical rank {inverse.rank} < {required}",
            rank=inverse.rank,
        )
    return inverse


def recover_fdpt_matrix(
    matrix: NDArray[np.complex128],
    omega: float,
    transmitters: NDArray,
    receivers: NDArray,
    z: ArrayLike,
    order: int,
    cutoff: float = NOISELESS_CUTOFF,
) -> FdptTable:
    """
    Least-squares FDPTs from one MSR matrix.

    The returned table has scale 1 (entries are the ε-scaled 𝒲) and unknown contrast,
    and carries the projectors Π_y (rows) and conj(Π_x) (columns) of the inversion.
    """
    indices = multi_indices(order)
    if matrix.size < len(indices) ** 2:
        raise IllPosedError(f"{matrix.size} measurements for {len(indices) ** 2} unknowns", rank=matrix.size)
    rx = _side_inverse(omega, receivers, z, order, cutoff, "Receiver")
    ty = _side_inverse(omega, transmitters, z, order, cutoff, "Transmitter")
    # X = 𝒲ᵀ = -𝒢x⁺ A (𝒢yᵀ)⁺
    x = -rx.pinv @ matrix @ ty.pinv.T
    return FdptTable(
        omega=omega,
        epsilon=1.0,
        contrast=float("nan"),
        order=order,
        indices=indices,
        values=x.T,
        row_projector=ty.projector,
        col_projector=rx.projector.T,
    )


def reconstruct_fdpt(
    dataset: MsrDataset,
    z: ArrayLike,
    order: int,
    cutoff: Optional[float] = None,
    threads: int = 1,
) -> List[FdptTable]:
    """
    Recover FDPT tables of order n at every frequency of a dataset.

    Args:
        dataset: MSR data
        z: known inclusion center
        order: tensor order n
        cutoff: relative SVD cutoff; 1e-12 for noiseless and 1e-6 for noisy data by default
        threads: worker threads

    Returns:
        Tables sorted by frequency
    """
    if order < 0:
        raise DomainError(f"Tensor order must be nonnegative, got {order}")
    if cutoff is None:
        cutoff = NOISY_CUTOFF if dataset.noise_percent > 0 or np.any(dataset.sigma > 0) else NOISELESS_CUTOFF
    layout = dataset.layout
    z = np.asarray(z, dtype=float)

    def recover(index: int) -> FdptTable:
        return recover_fdpt_matrix(
            dataset.matrices[index],
            float(dataset.frequencies[index]),
            layout.transmitters,
            layout.receivers,
            z,
            order,
            cutoff,
        )

    tables = parallel_map(recover, list(range(dataset.frequencies.size)), threads)
    logger.info(f"Recovered order-{order} FDPTs at {len(tables)} frequencies (cutoff={cutoff:g})")
    return sorted(tables, key=lambda table: table.omega)


def fdpt_estimator_variance(
    dataset: MsrDataset, z: ArrayLike, order: int, cutoff: Optional[float] = None
) -> NDArray[np.float64]:
    """
    Per-frequency variance E|𝒲̂_αβ - 𝒲_αβ|² of the least-squares estimator.

    Returns:
        Array (F, m, m) indexed [l, α, β]
    """
    if cutoff is None:
        cutoff = NOISY_CUTOFF if np.any(dataset.sigma > 0) else NOISELESS_CUTOFF
    layout = dataset.layout
    out = []
    for omega, sigma in zip(dataset.frequencies, dataset.sigma):
        rx = TruncatedPseudoInverse.of(greens_matrix(omega, layout.receivers, z, order), cutoff)
        ty = TruncatedPseudoInverse.of(greens_matrix(omega, layout.transmitters, z, order), cutoff)
        rows = np.sum(np.abs(rx.pinv) ** 2, axis=1)
        cols = np.sum(np.abs(ty.pinv) ** 2, axis=1)
        out.append(sigma ** 2 * np.outer(cols, rows))
    return np.stack(out, axis=0)


def _mean_tables(realizations: Sequence[Sequence[FdptTable]]) -> List[FdptTable]:
    first = sorted(realizations[0], key=lambda table: table.omega)
    stacked = [sorted(tables, key=lambda table: table.omega) for tables in realizations]
    means = []
    for l, table in enumerate(first):
        if any(not np.isclose(tables[l].omega, table.omega) for tables in stacked):
            raise GridMismatchError("Realizations are sampled on different frequency grids")
        mean = np.mean([tables[l].values for tables in stacked], axis=0)
        means.append(replace(table, values=mean))
    return means


def reconstruct_tdpt(
    fdpts: Union[Sequence[FdptTable], Sequence[Sequence[FdptTable]]],
    t: ArrayLike,
    grid: Optional[FrequencyGrid] = None,
) -> TdptTable:
    """
    Aggregate measured FDPT tables into TDPTs.

    Args:
        fdpts: tables on the nonnegative half of S_L, or a list of such lists (one per
            noise realization)
        t: time grid
        grid: frequency grid (inferred when omitted)

    Returns:
        TdptTable; with several realizations it holds their mean and the empirical
        per-entry variance E|P - mean|²
    """
    if not fdpts:
        raise GridMismatchError("Empty frequency set")
    if isinstance(fdpts[0], FdptTable):
        return compute_tdpt(fdpts, t, grid)  # type: ignore[arg-type]

    realizations = [list(tables) for tables in fdpts]  # type: ignore[union-attr]
    transforms = [compute_tdpt(tables, t, grid) for tables in realizations]
    values = np.stack([table.values for table in transforms], axis=0)
    mean = np.mean(values, axis=0)
    variance = np.sum(np.abs(values - mean[None]) ** 2, axis=0) / max(len(transforms) - 1, 1)
    logger.info(f"Aggregated {len(transforms)} noise realizations into TDPTs")
    return replace(
        transforms[0],
        values=mean,
        variance=variance,
        sources=_mean_tables(realizations),
    )


def predicted_tdpt_variance(grid: FrequencyGrid, fdpt_variance: ArrayLike) -> NDArray[np.float64]:
    """
    Σ_l c_l w_l² Var(𝒲̂(ω_l)) with c_l = 2 for ω_l > 0 (conjugate pair) and 1 at ω = 0.

    Args:
        grid: frequency grid of the estimator
        fdpt_variance: per-frequency variances, shape (F,) or (F, m, m)
    """
    variance = np.asarray(fdpt_variance, dtype=float)
    if variance.shape[0] != len(grid.frequencies):
        raise GridMismatchError(f"{variance.shape[0]} variances for {len(grid.frequencies)} frequencies")
    factors = np.where(grid.omegas > 0, 2.0, 1.0) * grid.quadrature ** 2
    return np.tensordot(factors, variance, axes=(0, 0))


def tdpt_error_curves(measured: TdptTable, truth: TdptTable) -> pd.DataFrame:
    """
    absErr(T) = ‖P^meas - P^true‖_{L²(0,T)} and relErr(T) = absErr(T)/‖P^true‖_{L²(0,T)}.

    Norms are Frobenius over the shared multi-indices, integrated with the trapezoidal rule.
    """
    if measured.t.shape != truth.t.shape or not np.allclose(measured.t, truth.t):
        raise GridMismatchError("Measured and reference TDPTs use different time grids")
    shared = [alpha for alpha in measured.indices if alpha in truth.indices]
    if not shared:
        raise GridMismatchError("No shared multi-indices between measured and reference TDPTs")
    pos_m = [measured.indices.index(alpha) for alpha in shared]
    pos_t = [truth.indices.index(alpha) for alpha in shared]
    meas = measured.values[:, pos_m][:, :, pos_m]
    true = truth.values[:, pos_t][:, :, pos_t]

    diff_sq = np.sum(np.abs(meas - true) ** 2, axis=(1, 2))
    true_sq = np.sum(np.abs(true) ** 2, axis=(1, 2))
    abs_err = np.sqrt(cumulative_trapezoid(diff_sq, measured.t, initial=0.0))
    true_norm = np.sqrt(cumulative_trapezoid(true_sq, measured.t, initial=0.0))
    rel_err = np.divide(abs_err, true_norm, out=np.zeros_like(abs_err), where=true_norm > 0)
    return pd.DataFrame({"T": measured.t, "absErr": abs_err, "relErr": rel_err})
