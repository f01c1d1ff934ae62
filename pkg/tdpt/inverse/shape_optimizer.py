"""
Shape Optimizer

Recursive descent on the time-dependent discrepancy between measured and
candidate TDPTs contracted against harmonic polynomials.

- Harmonic pairs (H, F) with H = Re/Im (x1 + i x2)^m, F = Re/Im (x1 + i x2)^l,
  m, l >= 1, m + l <= K
- J^(K)[D] = Σ_pairs ∫_t |Σ a_α b_β (P[𝒲_αβ]^cand(t) - P[𝒲_αβ]^meas(t))|² dt
- Shape derivative: ⟨d_S J, h⟩ ≈ Σ_pairs ∫_t 2 Re(diff(t)) e(t) dt · ∫_{∂D} h φ̂_HF dσ
- Update: ∂D ← ∂D + η Σ_j c_j ψ_j ν, c the damped Gauss-Newton solution of the
  linearized pair residuals, η from Armijo backtracking on J

Candidate tensors are computed on a coarser frequency subset and time grid of the
measured data, and are passed through the least-squares projectors the measured
tensors were recovered with.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import trapezoid

from tdpt.core.geometry import BoundaryCurve, EquivalentEllipse, perturb
from tdpt.core.layer_potentials import (
    Density,
    assemble_k,
    assemble_k_star,
    assemble_single_layer,
    double_layer_normal_derivative,
    double_layer_trace,
    trace_normal_derivative,
)
from tdpt.core.polarization_tensors import TdptTable, compute_tdpt, fdpt_for_curve
from tdpt.core.special_functions import MultiIndex
from tdpt.errors import DomainError, EstimationError, ShapeValidationError, StepFailureError
from tdpt.utils.parallel import parallel_map

logger = logging.getLogger("TDPT.ShapeOptimizer")

MAX_HARMONIC_ORDER = 6
AREA_GUARD = (0.5, 2.0)
DEFAULT_DAMPING = 1e-3
DIRECTION_RCOND = 1e-10
ARMIJO_FRACTION = 1e-4
# largest normal displacement of one step, relative to the equivalent radius
MAX_STEP_FRACTION = 0.25


@dataclass(frozen=True)
class HarmonicPolynomial:
    """Re (kind="cos") or Im (kind="sin") of (x1 + i x2)^degree in the monomial basis."""
    degree: int
    kind: str
    coefficients: Tuple[Tuple[MultiIndex, float], ...]

    @classmethod
    def of(cls, degree: int, kind: str) -> "HarmonicPolynomial":
        if kind not in ("cos", "sin"):
            raise DomainError(f"Harmonic kind must be 'cos' or 'sin', got {kind!r}")
        parity = 0 if kind == "cos" else 1
        terms = []
        for j in range(parity, degree + 1, 2):
            # i^j contributes (-1)^{(j - parity)/2} to the selected part
            coefficient = math.comb(degree, j) * (-1) ** ((j - parity) // 2)
            terms.append((MultiIndex(degree - j, j), float(coefficient)))
        return cls(degree, kind, tuple(sorted(terms)))

    @property
    def label(self) -> str:
        return f"{self.kind}{self.degree}"

    def as_dict(self) -> dict:
        return dict(self.coefficients)

    def vector(self, indices: Sequence[MultiIndex]) -> NDArray[np.float64]:
        lookup = self.as_dict()
        missing = [alpha for alpha in lookup if alpha not in indices]
        if missing:
            raise DomainError(f"Index set lacks {missing[0].label} needed by {self.label}")
        return np.array([lookup.get(alpha, 0.0) for alpha in indices])

    def evaluate(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        return sum(c * alpha.monomial(points) for alpha, c in self.coefficients)

    def gradient(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        return sum(c * alpha.monomial_gradient(points) for alpha, c in self.coefficients)


def harmonic_coefficients(order: int) -> Tuple[List[HarmonicPolynomial], List[HarmonicPolynomial]]:
    """
    Real and imaginary parts of (x1 + i x2)^m for m = 1..K.

    Returns:
        (a, b): a[m-1] = Re (x1 + i x2)^m, b[m-1] = Im (x1 + i x2)^m
    """
    if not 1 <= order <= MAX_HARMONIC_ORDER:
        raise DomainError(f"Harmonic order must lie in [1, {MAX_HARMONIC_ORDER}], got {order}")
    real = [HarmonicPolynomial.of(m, "cos") for m in range(1, order + 1)]
    imag = [HarmonicPolynomial.of(m, "sin") for m in range(1, order + 1)]
    return real, imag


def harmonic_pairs(order: int, tensor_order: int) -> List[Tuple[HarmonicPolynomial, HarmonicPolynomial]]:
    """All (H, F) with degrees m, l >= 1, m + l <= K and m, l <= tensor order."""
    top = max(1, min(order - 1, tensor_order, MAX_HARMONIC_ORDER))
    real, imag = harmonic_coefficients(top)
    polys = [p for pair in zip(real, imag) for p in pair]
    return [
        (h, f)
        for h in polys
        for f in polys
        if h.degree + f.degree <= order
    ]


def contract_harmonic(
    values: NDArray, indices: Sequence[MultiIndex], h: HarmonicPolynomial, f: HarmonicPolynomial
) -> NDArray:
    """Σ_αβ a_α b_β W_αβ over the last two axes."""
    a = h.vector(indices)
    b = f.vector(indices)
    return np.einsum("a,...ab,b->...", a, values, b)


class LaplaceTraces:
    """Static operators on one curve and the interior traces of u_H and v_F."""

    def __init__(self, curve: BoundaryCurve, contrast: float, center: ArrayLike = (0.0, 0.0)):
        if contrast <= 0 or contrast == 1:
            raise DomainError(f"Contrast must be positive and different from 1, got {contrast}")
        self.curve = curve
        self.contrast = contrast
        self.lam = (contrast + 1) / (2 * (contrast - 1))
        self.local = curve.points - np.asarray(center, dtype=float)[None, :]
        self.k_star = assemble_k_star(curve, 0.0)
        self.k_op = assemble_k(curve, 0.0, self.k_star)
        self.single = assemble_single_layer(curve, 0.0)
        identity = np.eye(curve.nodes)
        self._adjoint_resolvent = self.lam * identity - self.k_star.matrix
        self._resolvent = self.lam * identity - self.k_op.matrix

    def u_traces(self, h: HarmonicPolynomial) -> Tuple[NDArray, NDArray]:
        """(∂u/∂ν|₋, ∂u/∂T) for u = H + S[(λI - K*)^{-1}[∂H/∂ν]]."""
        values = h.evaluate(self.local)
        flux = np.sum(h.gradient(self.local) * self.curve.normals, axis=1)
        density = Density(np.linalg.solve(self._adjoint_resolvent, flux), self.curve)
        normal = flux + trace_normal_derivative(density, self.curve, 0.0, "-", self.k_star).values
        tangential = self.curve.arc_derivative(values + self.single.apply(density).values)
        return normal, tangential

    def v_traces(self, f: HarmonicPolynomial) -> Tuple[NDArray, NDArray]:
        """(∂v/∂ν, ∂v/∂T|₋) for v = F + 𝒟[(λI - K)^{-1}[F]]."""
        values = f.evaluate(self.local)
        flux = np.sum(f.gradient(self.local) * self.curve.normals, axis=1)
        density = Density(np.linalg.solve(self._resolvent, values), self.curve)
        inner = values + double_layer_trace(density, "-", self.k_op).values
        normal = flux + double_layer_normal_derivative(density, self.single).values
        return normal, self.curve.arc_derivative(inner)

    def phi_hf(self, h: HarmonicPolynomial, f: HarmonicPolynomial) -> NDArray[np.float64]:
        du_n, du_t = self.u_traces(h)
        dv_n, dv_t = self.v_traces(f)
        k = self.contrast
        return (k - 1) * (dv_n * du_n + du_t * dv_t / k)


def phi_hf(
    curve: BoundaryCurve,
    contrast: float,
    h: HarmonicPolynomial,
    f: HarmonicPolynomial,
    center: ArrayLike = (0.0, 0.0),
) -> Density:
    """
    φ̂_HF = (k-1)[∂v/∂ν ∂u/∂ν|₋ + (1/k) ∂u/∂T ∂v/∂T|₋], the shape-derivative density
    of the contracted first-order-in-time PT Σ a_α b_β M_αβ.
    """
    return Density(LaplaceTraces(curve, contrast, center).phi_hf(h, f), curve)


def fourier_basis(curve: BoundaryCurve, order: int) -> NDArray[np.float64]:
    """Columns 1, cos(jt), sin(jt) for j = 1..K on the curve parameter."""
    t = curve.t
    columns = [np.ones_like(t)]
    for j in range(1, order + 1):
        columns.extend([np.cos(j * t), np.sin(j * t)])
    return np.stack(columns, axis=1)


@dataclass(frozen=True, eq=False)
class DiscrepancyEvaluation:
    """Candidate tensors of one curve and their residual against the measurement."""
    curve: BoundaryCurve
    candidate: TdptTable
    residuals: List[NDArray[np.complex128]]
    value: float


@dataclass(frozen=True, eq=False)
class ShapeState:
    """
    Optimizer state; steps return a new state.

    Attributes:
        curve: current physical boundary
        contrast: frozen contrast k
        center: inclusion center z
        order: harmonic order K of the current stage
        measured: reference TDPTs on the working grid
        initial_area: area of the starting guess (area guard reference)
        history: accepted discrepancy values
        iterates: accepted boundaries
        converged: no admissible decrease at the last step
    """
    curve: BoundaryCurve
    contrast: float
    center: NDArray[np.float64]
    order: int
    measured: TdptTable
    initial_area: float
    history: Tuple[float, ...] = ()
    iterates: Tuple[BoundaryCurve, ...] = ()
    converged: bool = False
    threads: int = 1

    @property
    def basis_size(self) -> int:
        return 2 * self.order + 1

    @property
    def tensor_order(self) -> int:
        return max(alpha.order for alpha in self.measured.indices)


def candidate_tdpt(
    curve: BoundaryCurve, center: ArrayLike, contrast: float, measured: TdptTable, threads: int = 1
) -> TdptTable:
    """TDPTs of a candidate boundary on the measured grid, projected like the measurement."""
    if not measured.sources:
        raise EstimationError("Measured TDPTs carry no per-frequency tables")

    def one(source):
        table = fdpt_for_curve(curve, center, source.omega, contrast, source.order, max_order=source.max_order)
        if table.indices != source.indices:
            raise DomainError("Candidate and measured index sets differ")
        return replace(table, values=source.project(table.values))

    tables = parallel_map(one, list(measured.sources), threads)
    return compute_tdpt(tables, measured.t, grid=measured.grid)


def discrepancy_from_tables(candidate: TdptTable, measured: TdptTable, order: int) -> Tuple[float, List[NDArray]]:
    """J^(K) and the per-pair residual signals for two TDPT tables on one time grid."""
    if candidate.t.shape != measured.t.shape or not np.allclose(candidate.t, measured.t):
        raise DomainError("Candidate and measured TDPTs use different time grids")
    tensor_order = max(alpha.order for alpha in measured.indices)
    residuals = []
    total = 0.0
    for h, f in harmonic_pairs(order, tensor_order):
        diff = contract_harmonic(candidate.values, candidate.indices, h, f) - contract_harmonic(
            measured.values, measured.indices, h, f
        )
        residuals.append(diff)
        total += float(trapezoid(np.abs(diff) ** 2, measured.t))
    return total, residuals


def _evaluate(curve: BoundaryCurve, state: ShapeState, order: int) -> DiscrepancyEvaluation:
    candidate = candidate_tdpt(curve, state.center, state.contrast, state.measured, state.threads)
    value, residuals = discrepancy_from_tables(candidate, state.measured, order)
    return DiscrepancyEvaluation(curve=curve, candidate=candidate, residuals=residuals, value=value)


def discrepancy(state: ShapeState, measured: TdptTable, order: int) -> float:
    """J^(K) of the state's curve against a measured TDPT table."""
    candidate = candidate_tdpt(state.curve, state.center, state.contrast, measured, state.threads)
    value, _ = discrepancy_from_tables(candidate, measured, order)
    return value


def shape_sensitivities(
    state: ShapeState, evaluation: Optional[DiscrepancyEvaluation] = None
) -> Tuple[NDArray[np.float64], NDArray[np.float64], float]:
    """
    Linearized residual model around the current curve.

    A perturbation h = Σ_j c_j ψ_j ν changes each contracted candidate by e(t)·(A c)_p
    with A_pj = ∫_{∂D} ψ_j φ̂_HF,p dσ.

    Returns:
        (A, b, E): per-pair sensitivities, residuals projected on e(t), and E = ∫ e² dt
    """
    evaluation = evaluation or _evaluate(state.curve, state, state.order)
    curve = state.curve
    t = state.measured.t
    envelope = state.measured.envelope()
    energy = float(trapezoid(envelope ** 2, t))
    if energy <= 0:
        raise EstimationError("Envelope vanishes on the working time grid")
    traces = LaplaceTraces(curve, state.contrast, state.center)
    weighted_basis = fourier_basis(curve, state.order) * curve.weights[:, None]

    pairs = harmonic_pairs(state.order, state.tensor_order)
    sensitivities = np.empty((len(pairs), state.basis_size))
    projected = np.empty(len(pairs))
    for p, ((h, f), diff) in enumerate(zip(pairs, evaluation.residuals)):
        sensitivities[p] = weighted_basis.T @ traces.phi_hf(h, f)
        projected[p] = float(trapezoid(diff.real * envelope, t)) / energy
    return sensitivities, projected, energy


def shape_gradient(state: ShapeState, evaluation: Optional[DiscrepancyEvaluation] = None) -> NDArray[np.float64]:
    """g_j ≈ ⟨d_S J, ψ_j⟩ for the Fourier basis of the current order."""
    sensitivities, projected, energy = shape_sensitivities(state, evaluation)
    return 2.0 * energy * (sensitivities.T @ projected)


def gauss_newton_direction(
    sensitivities: NDArray[np.float64], projected: NDArray[np.float64], damping: float = DEFAULT_DAMPING
) -> NDArray[np.float64]:
    """
    Marquardt-damped least-squares coefficients c minimizing ‖A c + b‖² + μ Σ_j D_jj c_j².

    D is the diagonal of AᵀA. Modes no pair responds to get a zero coefficient.
    """
    scales = np.sqrt(np.sum(sensitivities ** 2, axis=0))
    system = np.vstack([sensitivities, np.sqrt(damping) * np.diag(scales)])
    rhs = np.concatenate([-projected, np.zeros(scales.size)])
    coefficients, *_ = scipy.linalg.lstsq(system, rhs, cond=DIRECTION_RCOND)
    return coefficients


def shape_gradient_step(
    state: ShapeState,
    max_halvings: int = 8,
    evaluation: Optional[DiscrepancyEvaluation] = None,
    damping: float = DEFAULT_DAMPING,
) -> Tuple[ShapeState, DiscrepancyEvaluation]:
    """
    One damped Gauss-Newton step with Armijo backtracking on the true J.

    Returns:
        (new state, evaluation at its curve). When no admissible curve decreases J
        sufficiently the state comes back unchanged with converged=True.

    Raises:
        StepFailureError: every trial curve self-intersected or left the area guard
    """
    evaluation = evaluation or _evaluate(state.curve, state, state.order)
    value = evaluation.value
    if value == 0.0:
        return replace(state, converged=True), evaluation

    sensitivities, projected, energy = shape_sensitivities(state, evaluation)
    gradient = 2.0 * energy * (sensitivities.T @ projected)
    coefficients = gauss_newton_direction(sensitivities, projected, damping)
    slope = float(gradient @ coefficients)
    if not slope < 0.0:
        logger.debug(f"No descent direction (slope {slope:.3e}); J={value:.6e}")
        return replace(state, converged=True), evaluation

    direction = fourier_basis(state.curve, state.order) @ coefficients
    radius = math.sqrt(abs(state.curve.area) / math.pi)
    largest = float(np.max(np.abs(direction)))
    eta = min(1.0, MAX_STEP_FRACTION * radius / largest) if largest > 0 else 1.0

    admissible = False
    low, high = AREA_GUARD
    for attempt in range(max_halvings + 1):
        try:
            trial = perturb(state.curve, direction, eta)
        except ShapeValidationError as e:
            logger.debug(f"Step {attempt}: η={eta:.3g} rejected ({e})")
            eta *= 0.5
            continue
        if not low * state.initial_area <= trial.area <= high * state.initial_area:
            logger.debug(f"Step {attempt}: η={eta:.3g} leaves the area guard (area={trial.area:.4g})")
            eta *= 0.5
            continue
        admissible = True
        trial_eval = _evaluate(trial, state, state.order)
        if trial_eval.value <= value + ARMIJO_FRACTION * eta * slope:
            logger.debug(f"Accepted η={eta:.3g}: J {value:.6e} -> {trial_eval.value:.6e}")
            new_state = replace(
                state,
                curve=trial,
                history=state.history + (trial_eval.value,),
                iterates=state.iterates + (trial,),
                converged=False,
            )
            return new_state, trial_eval
        eta *= 0.5

    if not admissible:
        raise StepFailureError(f"No admissible step after {max_halvings} halvings (J={value:.4e})")
    logger.debug(f"No sufficient decrease after {max_halvings} halvings; J={value:.6e}")
    return replace(state, converged=True), evaluation


@dataclass(frozen=True)
class OptimizationSchedule:
    """Recursive schedule K = 2..k_max."""
    k_max: int = 4
    iterations: int = 30
    tolerance: float = 1e-6
    max_halvings: int = 8
    damping: float = DEFAULT_DAMPING
    working_frequencies: int = 16
    working_t_points: int = 64
    nodes: int = 128


@dataclass
class ShapeOptimizationResult:
    """Final boundary with the per-stage trace."""
    curve: BoundaryCurve
    initial: BoundaryCurve
    history: List[Tuple[int, float]] = field(default_factory=list)
    iterates: List[BoundaryCurve] = field(default_factory=list)


def working_measurement(measured: TdptTable, schedule: OptimizationSchedule) -> TdptTable:
    """Measured TDPTs re-aggregated on the working frequency subset and coarse time grid."""
    half = max(schedule.working_frequencies // 2, 1)
    levels = measured.half_count
    stride = max(d for d in range(1, levels + 1) if levels % d == 0 and levels // d >= min(half, levels))
    if levels // stride != half and levels > half:
        logger.warning(
            f"L={levels} is not a multiple of {half} working levels; using stride {stride} "
            f"({levels // stride} levels)"
        )
    t = np.linspace(measured.t[0], measured.t[-1], schedule.working_t_points)
    return measured.resampled(stride, t)


def optimize_shape(
    measured: TdptTable,
    init: EquivalentEllipse,
    contrast: float,
    schedule: Optional[OptimizationSchedule] = None,
    threads: int = 1,
) -> ShapeOptimizationResult:
    """
    Refine the equivalent ellipse by recursive damped Gauss-Newton descent on J^(K), K = 2..k_max.

    Args:
        measured: measured TDPTs with per-frequency source tables
        init: equivalent ellipse (its center is the known inclusion center)
        contrast: frozen contrast estimate
        schedule: stage/iteration/backtracking parameters
        threads: worker threads for candidate FDPTs

    Returns:
        ShapeOptimizationResult
    """
    schedule = schedule or OptimizationSchedule()
    if schedule.k_max < 2:
        raise DomainError(f"k_max must be >= 2, got {schedule.k_max}")
    working = working_measurement(measured, schedule)
    initial = init.curve(schedule.nodes)
    state = ShapeState(
        curve=initial,
        contrast=contrast,
        center=np.asarray(init.center, dtype=float),
        order=2,
        measured=working,
        initial_area=initial.area,
        threads=threads,
    )
    result = ShapeOptimizationResult(curve=initial, initial=initial)
    logger.info(
        f"Shape optimization: K=2..{schedule.k_max}, {len(working.grid.frequencies)} working frequencies, "
        f"{working.t.size} time samples"
    )

    for order in range(2, schedule.k_max + 1):
        state = replace(state, order=order, converged=False)
        evaluation = _evaluate(state.curve, state, order)
        result.history.append((order, evaluation.value))
        iteration = 0
        for iteration in range(schedule.iterations):
            previous = evaluation.value
            state, evaluation = shape_gradient_step(state, schedule.max_halvings, evaluation, schedule.damping)
            if state.converged:
                break
            result.history.append((order, evaluation.value))
            result.iterates.append(state.curve)
            if previous > 0 and (previous - evaluation.value) / previous < schedule.tolerance:
                break
        logger.info(f"K={order}: J={evaluation.value:.6e} after {iteration + 1} iterations")

    result.curve = state.curve
    return result
