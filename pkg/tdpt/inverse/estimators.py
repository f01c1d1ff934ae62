"""
Size, Contrast and Equivalent Ellipse

Estimates read off measured TDPTs. With e(t) the transform of W ≡ 1 on the same
frequency grid (≈ 2 sin(ρt)/t):
- P[𝒲_00](t) ≈ -|D| · P[ω²](t)
- P[𝒲_(1)](t) ≈ e(t) · M(D, k)
For an ellipse with eigenvalues m1, m2 of M: |D|(1/m1 + 1/m2) = (k+1)/(k-1).

Pointwise-in-t relations are aggregated by weighted least squares over the
t-points where the denominator exceeds 20% of its maximum.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from tdpt.core.geometry import EquivalentEllipse
from tdpt.core.polarization_tensors import TdptTable
from tdpt.core.special_functions import MultiIndex
from tdpt.errors import EstimationError

logger = logging.getLogger("TDPT.Estimators")

DENOMINATOR_FRACTION = 0.2
MONOPOLE_SPREAD_LIMIT = 0.5
ORIGIN = MultiIndex(0, 0)


@dataclass
class SizeContrastEstimate:
    """Aggregated size/contrast with the per-t samples they came from."""
    volume: float
    contrast: float
    theta: float
    t: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    volume_t: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    volume_samples: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    contrast_samples: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    size_source: str = "monopole"


def _mask(denominator: NDArray[np.float64]) -> NDArray[np.bool_]:
    scale = np.max(np.abs(denominator)) if denominator.size else 0.0
    if not np.isfinite(scale) or scale <= 0:
        raise EstimationError("Degenerate denominator on the whole time grid")
    mask = np.abs(denominator) > DENOMINATOR_FRACTION * scale
    if not np.any(mask):
        raise EstimationError("No time sample with a usable denominator")
    return mask


def _rotation(theta: float) -> NDArray[np.float64]:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def measured_first_order_pt(tdpt: TdptTable) -> NDArray[np.float64]:
    """M^meas: least-squares fit of Re P[𝒲_(1)](t) against e(t), symmetrized."""
    envelope = tdpt.envelope()
    mask = _mask(envelope)
    block = tdpt.first_order_block().real[mask]
    e = envelope[mask]
    fitted = np.tensordot(e, block, axes=(0, 0)) / np.sum(e ** 2)
    return 0.5 * (fitted + fitted.T)


def principal_angle(pt: ArrayLike, contrast: float) -> float:
    """Angle in [0, π) of the major axis encoded by a symmetric first-order PT."""
    values, vectors = np.linalg.eigh(np.asarray(pt, dtype=float))
    # eigh sorts ascending; the major axis has the larger |m| for k > 1 and the smaller for k < 1
    major = vectors[:, 1] if contrast > 1 else vectors[:, int(np.argmin(np.abs(values)))]
    return float(np.mod(np.arctan2(major[1], major[0]), np.pi))


def _size_samples(tdpt: TdptTable) -> Tuple[NDArray, NDArray, NDArray, float]:
    if ORIGIN not in tdpt.indices:
        raise EstimationError("TDPT table has no (0,0),(0,0) entry")
    denominator = tdpt.omega_squared()
    mask = _mask(denominator)
    monopole = tdpt.entry(ORIGIN, ORIGIN).real[mask]
    d = denominator[mask]
    weights = tdpt.envelope()[mask] ** 2
    volume = -float(np.sum(weights * d * monopole) / np.sum(weights * d ** 2))
    return tdpt.t[mask], -monopole / d, weights, volume


def estimate_size(tdpt: TdptTable) -> float:
    """|D| from the monopole TDPT, P[𝒲_00](t) ≈ -|D| P[ω²](t)."""
    _, _, _, volume = _size_samples(tdpt)
    logger.debug(f"Monopole size estimate |D|={volume:.6g}")
    return volume


def contrast_from_pt(pt: ArrayLike, volume: float, theta: float) -> float:
    """k from a first-order PT: s = |D|(1/m'11 + 1/m'22), k = (s+1)/(s-1)."""
    rot = _rotation(-theta)
    rotated = rot @ np.asarray(pt, dtype=float) @ rot.T
    diagonal = np.diag(rotated)
    if np.any(np.abs(diagonal) < 1e-300):
        raise EstimationError("Rotated first-order PT has a vanishing diagonal entry")
    s = volume * float(np.sum(1.0 / diagonal))
    if abs(s) <= 1.0:
        raise EstimationError(f"Contrast invariant |D|·tr(1/m) = {s:.4g} does not correspond to k > 0")
    return (s + 1.0) / (s - 1.0)


def estimate_contrast(tdpt: TdptTable, volume: float, theta: float) -> float:
    """Contrast from the measured first-order block rotated by -θ."""
    if volume <= 0:
        raise EstimationError(f"Contrast needs a positive size, got {volume}")
    return contrast_from_pt(measured_first_order_pt(tdpt), volume, theta)


def _contrast_samples(tdpt: TdptTable, volume: float, theta: float) -> Tuple[NDArray, NDArray]:
    envelope = tdpt.envelope()
    mask = _mask(envelope)
    rot = _rotation(-theta)
    block = np.einsum("ij,tjk,lk->til", rot, tdpt.first_order_block().real[mask], rot)
    diagonal = np.stack([block[:, 0, 0], block[:, 1, 1]], axis=1) / envelope[mask][:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = volume * np.sum(1.0 / diagonal, axis=1)
        return tdpt.t[mask], (s + 1.0) / (s - 1.0)


def ellipse_from_pt(pt: ArrayLike, volume: float, contrast: float, center: ArrayLike = (0.0, 0.0)) -> EquivalentEllipse:
    """
    Ellipse of area |D| whose first-order PT at contrast k has the eigenvalues of pt.

    Eigenvalues of an ellipse PT are (k-1)|D|(a+b)/(a+kb) and (k-1)|D|(a+b)/(b+ka);
    their ratio q fixes a/b = (qk-1)/(k-q).
    """
    if volume <= 0:
        raise EstimationError(f"Equivalent ellipse needs a positive size, got {volume}")
    sym = 0.5 * (np.asarray(pt, dtype=float) + np.asarray(pt, dtype=float).T)
    values = np.linalg.eigvalsh(sym)
    expected_sign = 1.0 if contrast > 1 else -1.0
    if np.any(expected_sign * values <= 0):
        raise EstimationError(
            f"First-order PT eigenvalues {values} are not {'positive' if contrast > 1 else 'negative'} definite"
        )
    magnitudes = np.abs(values)
    if contrast > 1:
        q = magnitudes[1] / magnitudes[0]
    else:
        q = magnitudes.min() / magnitudes.max()
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (q * contrast - 1.0) / (contrast - q)
    if not np.isfinite(ratio) or ratio <= 0:
        raise EstimationError(f"PT eigenvalue ratio {q:.4g} is not attainable by an ellipse at k={contrast:.4g}")

    theta = principal_angle(sym, contrast)
    if ratio < 1.0:
        ratio, theta = 1.0, 0.0
    if np.isclose(ratio, 1.0, rtol=1e-9):
        theta = 0.0
    b = float(np.sqrt(volume / (np.pi * ratio)))
    center = tuple(float(c) for c in np.asarray(center, dtype=float))
    return EquivalentEllipse(a=ratio * b, b=b, theta=theta, center=center)  # type: ignore[arg-type]


def equivalent_ellipse(
    tdpt: TdptTable,
    volume: float,
    contrast: float,
    center: ArrayLike = (0.0, 0.0),
) -> EquivalentEllipse:
    """Equivalent ellipse from the measured first-order TDPT block."""
    ellipse = ellipse_from_pt(measured_first_order_pt(tdpt), volume, contrast, center)
    logger.info(f"Equivalent ellipse a={ellipse.a:.5g}, b={ellipse.b:.5g}, θ={np.degrees(ellipse.theta):.2f}°")
    return ellipse


def _monopole_usable(volume: float, samples: NDArray[np.float64], weights: NDArray[np.float64]) -> bool:
    if not np.isfinite(volume) or volume <= 0:
        return False
    spread = np.sqrt(np.sum(weights * (samples - volume) ** 2) / np.sum(weights))
    return bool(spread <= MONOPOLE_SPREAD_LIMIT * volume)


def estimate_size_and_contrast(
    tdpt: TdptTable,
    prior_volume: Optional[float] = None,
    size_source: str = "monopole",
) -> SizeContrastEstimate:
    """
    Size, principal angle and contrast with their per-t samples.

    Args:
        tdpt: measured TDPTs containing the (0,0) and first-order entries
        prior_volume: fallback |D| used when the monopole estimate is unusable
        size_source: "monopole" (estimate from P[𝒲_00]) or "prior"

    Returns:
        SizeContrastEstimate recording which size source was used
    """
    if size_source not in ("monopole", "prior"):
        raise EstimationError(f"Unknown size source {size_source!r}")
    t_size = volume_samples = weights = np.zeros(0)
    volume = float("nan")
    if size_source == "monopole":
        t_size, volume_samples, weights, volume = _size_samples(tdpt)

    source = size_source
    if size_source == "monopole" and not _monopole_usable(volume, volume_samples, weights):
        if prior_volume is None:
            raise EstimationError(f"Monopole size estimate {volume:.4g} is unusable and no prior size is set")
        logger.warning(f"Monopole size estimate {volume:.4g} is unusable; falling back to prior |D|={prior_volume:.6g}")
        volume, source = prior_volume, "prior"
    elif size_source == "prior":
        if prior_volume is None:
            raise EstimationError("Size source 'prior' requires a prior volume")
        volume = prior_volume

    pt = measured_first_order_pt(tdpt)
    # the angle only depends on the sign of k - 1, which the trace of M carries
    sign_hint = 2.0 if np.trace(pt) > 0 else 0.5
    theta = principal_angle(pt, sign_hint)
    contrast = contrast_from_pt(pt, volume, theta)
    t_k, contrast_samples = _contrast_samples(tdpt, volume, theta)
    logger.info(f"Estimated |D|={volume:.6g} ({source}), k={contrast:.5g}, θ={np.degrees(theta):.2f}°")
    return SizeContrastEstimate(
        volume=float(volume),
        contrast=float(contrast),
        theta=theta,
        t=t_k,
        volume_t=t_size,
        volume_samples=volume_samples,
        contrast_samples=contrast_samples,
        size_source=source,
    )
