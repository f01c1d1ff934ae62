"""
Forward Model

Reference and model scattered fields for a small inclusion, and multi-static
response (MSR) data sets built from them.

- bem_scattered_field: full boundary-integral solution of the transmission problem
- asymptotic_scattered_field: truncated FDPT expansion of the scattered field
- synthesize_msr / add_measurement_noise: per-frequency MSR matrices with
  reproducible additive complex Gaussian noise

MSR entries are A_ω[i, j] = v_{y_j}(x_i) - V_{y_j}(x_i) with V_y = Γ_ω(· - y).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from tdpt.core.geometry import NODE_TOLERANCE, BoundaryCurve, Inclusion, refine_nodes
from tdpt.core.layer_potentials import Density, eval_potential_offboundary
from tdpt.core.polarization_tensors import FdptTable, TransmissionSystem
from tdpt.core.special_functions import MultiIndex, gamma_derivative_array, gamma_derivative_table, gamma_helmholtz
from tdpt.errors import DomainError, GridMismatchError
from tdpt.utils.parallel import parallel_map, spawn_generators

logger = logging.getLogger("TDPT.ForwardModel")

LAYOUT_CLEARANCE = 10.0
GRADIENT = [MultiIndex(1, 0), MultiIndex(0, 1)]


@dataclass(frozen=True, eq=False)
class SourceReceiverLayout:
    """
    Transmitter and receiver arrays.

    Attributes:
        transmitters: M×2 source positions y_j
        receivers: N×2 receiver positions x_i
        geometry: "circle", "square" or "custom"
    """
    transmitters: NDArray[np.float64]
    receivers: NDArray[np.float64]
    geometry: str = "custom"

    def __post_init__(self) -> None:
        for name in ("transmitters", "receivers"):
            pts = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
                raise DomainError(f"{name} must be a non-empty list of 2D points")
            object.__setattr__(self, name, pts)

    @classmethod
    def circle(cls, count: int = 70, radius: float = 1.0) -> "SourceReceiverLayout":
        """Coincident arrays of equispaced points on a circle."""
        if count < 1 or radius <= 0:
            raise DomainError(f"Invalid circle layout (count={count}, radius={radius})")
        angles = 2 * np.pi * np.arange(count) / count
        pts = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return cls(pts, pts.copy(), "circle")

    @classmethod
    def square(cls, count: int = 80, half_side: float = 1.0) -> "SourceReceiverLayout":
        """Coincident arrays on the square [-h, h]², count/4 points per side counterclockwise."""
        if count < 4 or count % 4 or half_side <= 0:
            raise DomainError(f"Square layout needs a positive multiple of 4 points, got {count}")
        per_side = count // 4
        s = -half_side + 2 * half_side * np.arange(per_side) / per_side
        h = np.full(per_side, half_side)
        sides = [
            np.stack([s, -h], axis=1),
            np.stack([h, s], axis=1),
            np.stack([-s, h], axis=1),
            np.stack([-h, -s], axis=1),
        ]
        pts = np.concatenate(sides, axis=0)
        return cls(pts, pts.copy(), "square")

    @property
    def shape(self) -> tuple:
        return (self.receivers.shape[0], self.transmitters.shape[0])

    def validate(self, inclusion: Inclusion, clearance: float = LAYOUT_CLEARANCE) -> None:
        """Every point outside D with distance >= clearance·ε."""
        boundary = inclusion.boundary
        for name, pts in (("transmitter", self.transmitters), ("receiver", self.receivers)):
            if np.any(boundary.contains(pts)):
                raise DomainError(f"A {name} lies inside the inclusion")
            closest = float(np.min(boundary.distance_to(pts)))
            if closest < clearance * inclusion.epsilon:
                raise DomainError(
                    f"A {name} is {closest:.4g} from the inclusion, below {clearance:g}ε = "
                    f"{clearance * inclusion.epsilon:.4g}"
                )


@dataclass(frozen=True, eq=False)
class FieldSample:
    """Total, incident and scattered fields at receivers for one source."""
    total: NDArray[np.complex128]
    incident: NDArray[np.complex128]
    scattered: NDArray[np.complex128]


@dataclass(frozen=True, eq=False)
class MsrDataset:
    """
    Per-frequency MSR matrices.

    Attributes:
        layout: transmitter/receiver arrays
        frequencies: sampled frequencies ω_l (F,)
        matrices: complex array (F, N, M)
        noise_percent: noise level relative to the mean absolute entry
        sigma: per-frequency noise standard deviation σ_noise
        seed: RNG seed of the noise, None for noiseless data
        realization: noise realization index under the seed
    """
    layout: SourceReceiverLayout
    frequencies: NDArray[np.float64]
    matrices: NDArray[np.complex128]
    noise_percent: float = 0.0
    sigma: Optional[NDArray[np.float64]] = None
    seed: Optional[int] = None
    realization: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        freqs = np.asarray(self.frequencies, dtype=float)
        mats = np.asarray(self.matrices, dtype=complex)
        if mats.shape != (freqs.size,) + self.layout.shape:
            raise GridMismatchError(
                f"MSR matrices of shape {mats.shape} do not match {freqs.size} frequencies "
                f"and layout {self.layout.shape}"
            )
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "matrices", mats)
        if self.sigma is None:
            object.__setattr__(self, "sigma", np.zeros(freqs.size))

    def matrix(self, omega: float) -> NDArray[np.complex128]:
        index = np.flatnonzero(np.isclose(self.frequencies, omega, rtol=1e-12, atol=1e-14))
        if index.size == 0:
            raise GridMismatchError(f"Frequency {omega} not in dataset")
        return self.matrices[index[0]]

    def subset(self, frequencies: Sequence[float]) -> "MsrDataset":
        """Dataset restricted to the given frequencies."""
        rows = []
        for omega in frequencies:
            index = np.flatnonzero(np.isclose(self.frequencies, omega, rtol=1e-12, atol=1e-14))
            if index.size == 0:
                raise GridMismatchError(f"Frequency {omega} not in dataset")
            rows.append(int(index[0]))
        return replace(self, frequencies=self.frequencies[rows], matrices=self.matrices[rows], sigma=self.sigma[rows])


def _incident(omega: float, points: NDArray, sources: NDArray) -> NDArray[np.complex128]:
    """V_y(x) = Γ_ω(x - y) for every point (rows) and source (columns)."""
    diff = points[:, None, :] - sources[None, :, :]
    return gamma_helmholtz(omega, np.hypot(diff[..., 0], diff[..., 1]))


def _incident_flux(omega: float, curve, sources: NDArray) -> NDArray[np.complex128]:
    """∂V_y/∂ν on the curve nodes."""
    flux = np.empty((curve.nodes, sources.shape[0]), dtype=complex)
    for j, y in enumerate(sources):
        grad = gamma_derivative_array(omega, curve.points - y[None, :], GRADIENT)
        flux[:, j] = np.sum(grad * curve.normals, axis=1)
    return flux


def bem_scattered_field(
    inclusion: Inclusion,
    omega: float,
    sources: ArrayLike,
    receivers: ArrayLike,
) -> NDArray[np.complex128]:
    """
    Scattered field S^ω_D[ψ] at receivers from the full transmission solve on ∂D.

    Args:
        inclusion: D = εB + z with contrast k
        omega: frequency ω > 0
        sources: M×2 source positions (or a single point)
        receivers: N×2 receiver positions outside D

    Returns:
        Complex array (N, M)
    """
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    receivers = np.atleast_2d(np.asarray(receivers, dtype=float))
    curve = inclusion.boundary
    if np.any(curve.contains(receivers)):
        raise DomainError("Receiver inside the inclusion")
    if np.any(curve.contains(sources)):
        raise DomainError("Source inside the inclusion")

    system = TransmissionSystem(curve, omega, inclusion.contrast)
    f = _incident(omega, curve.points, sources)
    g = _incident_flux(omega, curve, sources)
    _, psi = system.solve(f, g)
    return eval_potential_offboundary(Density(psi, curve), curve, omega, receivers)


def bem_field_sample(inclusion: Inclusion, omega: float, source: ArrayLike, receivers: ArrayLike) -> FieldSample:
    """Total/incident/scattered split for a single source."""
    receivers = np.atleast_2d(np.asarray(receivers, dtype=float))
    source = np.asarray(source, dtype=float).reshape(1, 2)
    scattered = bem_scattered_field(inclusion, omega, source, receivers)[:, 0]
    incident = _incident(omega, receivers, source)[:, 0]
    return FieldSample(total=incident + scattered, incident=incident, scattered=scattered)


def _expansion_mask(indices: List[MultiIndex], order: int) -> NDArray[np.float64]:
    orders = np.array([alpha.order for alpha in indices])
    return ((orders[:, None] + orders[None, :]) <= order + 1).astype(float)


def asymptotic_scattered_field(
    inclusion: Inclusion,
    fdpt: FdptTable,
    omega: float,
    sources: ArrayLike,
    receivers: ArrayLike,
    order: int,
) -> NDArray[np.complex128]:
    """
    Truncated expansion -Σ_{|α|+|β|<=n+1} (1/α!)∂^α_z Γ_ω(y - z) (1/β!)∂^β_z Γ_ω(x - z) 𝒲_αβ.

    Args:
        inclusion: supplies the center z
        fdpt: ε-scaled FDPTs at ω covering orders up to n+1
        omega: frequency matching fdpt.omega
        sources: M×2 points y
        receivers: N×2 points x
        order: expansion order n

    Returns:
        Complex array (N, M)
    """
    if not np.isclose(fdpt.omega, omega, rtol=1e-12):
        raise GridMismatchError(f"FDPT table at ω={fdpt.omega} used for ω={omega}")
    if fdpt.max_order < order + 1:
        raise DomainError(f"Expansion of order {order} needs FDPTs up to order {order + 1}")
    indices = fdpt.indices
    z = inclusion.center
    g_src = gamma_derivative_table(omega, np.atleast_2d(sources), z, indices)
    g_rcv = gamma_derivative_table(omega, np.atleast_2d(receivers), z, indices)
    weights = fdpt.values * _expansion_mask(indices, order)
    return -g_rcv @ weights.T @ g_src.T


def msr_from_fdpt(layout: SourceReceiverLayout, center: ArrayLike, fdpt: FdptTable) -> NDArray[np.complex128]:
    """Model MSR matrix -𝒢(x) 𝒲ᵀ 𝒢(y)ᵀ over the table's full index set."""
    g_src = gamma_derivative_table(fdpt.omega, layout.transmitters, center, fdpt.indices)
    g_rcv = gamma_derivative_table(fdpt.omega, layout.receivers, center, fdpt.indices)
    return -g_rcv @ fdpt.values.T @ g_src.T


def synthetic_msr_from_fdpt(layout: SourceReceiverLayout, center: ArrayLike, fdpts: Sequence[FdptTable]) -> MsrDataset:
    """Noiseless dataset generated by the linear model itself."""
    tables = sorted(fdpts, key=lambda table: table.omega)
    matrices = np.stack([msr_from_fdpt(layout, center, table) for table in tables], axis=0)
    return MsrDataset(
        layout=layout,
        frequencies=np.array([table.omega for table in tables]),
        matrices=matrices,
        metadata={"source": "fdpt-model"},
    )


def add_measurement_noise(
    dataset: MsrDataset,
    noise_percent: float,
    seed: int,
    realization: int = 0,
    sigma: Optional[ArrayLike] = None,
) -> MsrDataset:
    """
    Add σ(G1 + iG2)/√2 to every entry.

    Args:
        dataset: noiseless dataset
        noise_percent: σ = noise_percent/100 · mean|A_ω| per frequency
        seed: base seed; one child stream per frequency
        realization: independent realization index under the same seed
        sigma: absolute per-frequency (or scalar) σ overriding noise_percent

    Returns:
        New dataset carrying the noise parameters
    """
    if noise_percent < 0:
        raise DomainError(f"Noise level must be nonnegative, got {noise_percent}")
    n_freq = dataset.frequencies.size
    if sigma is None:
        levels = noise_percent / 100.0 * np.mean(np.abs(dataset.matrices), axis=(1, 2))
    else:
        levels = np.broadcast_to(np.asarray(sigma, dtype=float), (n_freq,)).copy()

    generators = spawn_generators(seed, n_freq, realization)
    shape = dataset.layout.shape
    noisy = dataset.matrices.copy()
    for l, rng in enumerate(generators):
        noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        noisy[l] += levels[l] * noise / np.sqrt(2.0)
    return replace(
        dataset,
        matrices=noisy,
        noise_percent=noise_percent,
        sigma=levels,
        seed=seed,
        realization=realization,
    )


def synthesize_msr(
    layout: SourceReceiverLayout,
    inclusion: Inclusion,
    frequencies: Sequence[float],
    noise_percent: float = 0.0,
    seed: int = 0,
    threads: int = 1,
    node_tolerance: Optional[float] = NODE_TOLERANCE,
) -> MsrDataset:
    """
    BEM-generated MSR data over a set of frequencies.

    Args:
        layout: arrays (validated against the inclusion)
        inclusion: scatterer
        frequencies: positive frequencies
        noise_percent: relative noise level (0 = noiseless)
        seed: noise seed
        threads: worker threads for the per-frequency solves
        node_tolerance: relative change allowed when Q is doubled (None skips the check)

    Returns:
        MsrDataset
    """
    freqs = np.asarray(frequencies, dtype=float)
    if freqs.size == 0 or np.any(freqs <= 0):
        raise DomainError("MSR frequencies must be positive")
    layout.validate(inclusion)
    logger.info(
        f"Synthesizing MSR data: {freqs.size} frequencies, {layout.shape[0]}x{layout.shape[1]} array, "
        f"ε={inclusion.epsilon}, k={inclusion.contrast}"
    )

    def solve(omega: float) -> NDArray[np.complex128]:
        def evaluate(base: BoundaryCurve) -> NDArray[np.complex128]:
            resampled = replace(inclusion, base=base)
            return bem_scattered_field(resampled, float(omega), layout.transmitters, layout.receivers)

        if node_tolerance is None:
            return evaluate(inclusion.base)
        _, values = refine_nodes(evaluate, inclusion.base, node_tolerance, label=f"BEM field at ω={omega:.4g}")
        return values

    matrices = np.stack(parallel_map(solve, list(freqs), threads), axis=0)
    dataset = MsrDataset(
        layout=layout,
        frequencies=freqs,
        matrices=matrices,
        metadata={
            "source": "bem",
            "epsilon": inclusion.epsilon,
            "contrast": inclusion.contrast,
            "center": inclusion.center.tolist(),
        },
    )
    if noise_percent > 0:
        dataset = add_measurement_noise(dataset, noise_percent, seed)
        logger.info(f"Added {noise_percent:g}% noise (seed={seed})")
    return dataset
