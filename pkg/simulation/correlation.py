"""
Coincidence rate and intensity-fluctuation correlation for a thermal source.

With a delta-correlated source, every double integral over source coordinates collapses
to a single sum over the source grid weighted by S(x) = G0·exp(-x^2 / 2a^2):

    <I(u)>        = sum_j S_j |h(x_j, u)|^2 dx
    dG2(u1, u2)   = |sum_j S_j h1(x_j, u1) conj(h2(x_j, u2)) dx|^2
    G2(u1, u2)    = <I(u1)><I(u2)> + dG2(u1, u2)
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from optics.errors import DimensionMismatchError
from optics.fields import SampledField
from optics.propagation import KernelMatrix, build_kernels, row_block_bounds
from optics.scene import Scene, SourceModel

logger = logging.getLogger(__name__)

Kernel = Union[KernelMatrix, np.ndarray]


class ProfileCondition(Enum):
    OK = "ok"
    DEGENERATE_OBJECT = "degenerate_object"   # test arm is dark, <I(u1)> = 0


class Normalization(Enum):
    NONE = "none"
    PEAK = "peak"               # divided by max G2
    BACKGROUND = "background"   # divided by <I(u1)><I(u2)> pointwise


@dataclass(frozen=True, eq=False)
class CorrelationProfile:
    """Per-u2 correlation record at a fixed test-detector position"""
    u2_positions: np.ndarray
    mean_intensity_test: float
    mean_intensity_ref: np.ndarray
    delta_g2: np.ndarray
    g2: np.ndarray
    normalization_record: Normalization = Normalization.NONE
    condition: ProfileCondition = ProfileCondition.OK

    @property
    def background(self) -> np.ndarray:
        return self.mean_intensity_test * self.mean_intensity_ref

    @property
    def is_degenerate(self) -> bool:
        return self.condition is ProfileCondition.DEGENERATE_OBJECT


# ─── Elementary sums ─────────────────────────────────────────────────────────

def source_diagonal_weight(source: SourceModel, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """G0·exp(-x^2 / (2a^2)), the source correlation on the diagonal x1 = x2 = x."""
    return source.g0 * np.exp(-np.asarray(x) ** 2 / (2.0 * source.a_m ** 2))


def _values(column: Union[SampledField, np.ndarray]) -> np.ndarray:
    return column.values if isinstance(column, SampledField) else np.asarray(column)


def mean_intensity(weights: np.ndarray, kernel_column: Union[SampledField, np.ndarray], dx: float) -> float:
    """sum_j S_j |h_j|^2 dx for one detector position."""
    h = _values(kernel_column)
    weights = np.asarray(weights)
    if weights.shape != h.shape:
        raise DimensionMismatchError(f"weights {weights.shape} vs kernel column {h.shape}")
    return float(np.sum(weights * np.abs(h) ** 2) * dx)


def _kernel_shape(kernel: Kernel) -> Tuple[int, int]:
    return kernel.shape if isinstance(kernel, KernelMatrix) else np.shape(kernel)


def _row_block(kernel: Kernel, start: int, stop: int) -> np.ndarray:
    if isinstance(kernel, KernelMatrix):
        return kernel.row_block(start, stop)
    return np.asarray(kernel[start:stop])


def _reduce_blocks(kernel: Kernel, partial: Callable, n_jobs: int = 1) -> List[np.ndarray]:
    """Apply partial(start, stop, block) over fixed row blocks; sum results in block order.

    Blocks are evaluated in workers but always joined in index order, so the totals are
    bitwise identical for any n_jobs.
    """
    if isinstance(kernel, KernelMatrix):
        bounds = kernel.block_bounds()
    else:
        bounds = row_block_bounds(_kernel_shape(kernel)[0])

    def job(start, stop):
        return partial(start, stop, _row_block(kernel, start, stop))

    if n_jobs == 1:
        parts = [job(start, stop) for start, stop in bounds]
    else:
        parts = Parallel(n_jobs=n_jobs)(delayed(job)(start, stop) for start, stop in bounds)

    totals = [np.array(p, copy=True) for p in parts[0]]
    for part in parts[1:]:
        for total, value in zip(totals, part):
            total += value
    return totals


def _check_rows(weights: np.ndarray, kernel: Kernel, h1: Optional[np.ndarray] = None):
    rows = _kernel_shape(kernel)[0]
    if weights.shape != (rows,) or (h1 is not None and h1.shape != (rows,)):
        shapes = f"weights {weights.shape}" + ("" if h1 is None else f", h1 {h1.shape}")
        raise DimensionMismatchError(f"{shapes} do not match kernel rows {rows}")


def reference_intensity(weights: np.ndarray, h2_matrix: Kernel, dx: float, n_jobs: int = 1) -> np.ndarray:
    """<I(u2)> for every column of the reference kernel."""
    weights = np.asarray(weights)
    _check_rows(weights, h2_matrix)

    def energy(start, stop, block):
        return ((weights[start:stop, None] * np.abs(block) ** 2).sum(axis=0),)

    return _reduce_blocks(h2_matrix, energy, n_jobs)[0] * dx


def delta_g2(weights: np.ndarray, h1_column: Union[SampledField, np.ndarray], h2_matrix: Kernel,
             dx: float, n_jobs: int = 1) -> np.ndarray:
    """|sum_j S_j h1_j conj(h2_jm) dx|^2 for every reference detector position m."""
    weights = np.asarray(weights)
    h1 = _values(h1_column)
    _check_rows(weights, h2_matrix, h1)
    amplitude = weights * h1 * dx

    def cross(start, stop, block):
        return ((amplitude[start:stop, None] * np.conj(block)).sum(axis=0),)

    return np.abs(_reduce_blocks(h2_matrix, cross, n_jobs)[0]) ** 2


# ─── Profiles ────────────────────────────────────────────────────────────────

def full_profile(scene: Scene, n_jobs: int = 1, check_sampling: bool = True) -> CorrelationProfile:
    """<I1>, <I2>(u2), dG2(u2) and G2(u2) on the detector grid, unnormalized."""
    h1, h2 = build_kernels(scene, check_sampling=check_sampling, n_jobs=n_jobs)
    x = scene.source_grid.positions
    dx = scene.source_grid.spacing
    weights = source_diagonal_weight(scene.source, x)

    i1 = mean_intensity(weights, h1, dx)
    amplitude = weights * h1.values * dx

    # one pass over the kernel: reference energy and the cross term are separate sums
    def both(start, stop, block):
        return (
            (weights[start:stop, None] * np.abs(block) ** 2).sum(axis=0),
            (amplitude[start:stop, None] * np.conj(block)).sum(axis=0),
        )

    energy, cross = _reduce_blocks(h2, both, n_jobs)
    i2 = energy * dx
    dg2 = np.abs(cross) ** 2

    condition = ProfileCondition.OK
    if i1 <= 0.0:
        condition = ProfileCondition.DEGENERATE_OBJECT
        logger.warning("Test arm is dark (mask transmits nothing); profile marked degenerate")

    return CorrelationProfile(
        u2_positions=scene.detector_grid.positions,
        mean_intensity_test=i1,
        mean_intensity_ref=i2,
        delta_g2=dg2,
        g2=i1 * i2 + dg2,
        condition=condition,
    )


def normalized(profile: CorrelationProfile, mode: Normalization) -> CorrelationProfile:
    """Rescaled copy that still satisfies g2 = <I1><I2> + dG2.

    PEAK divides the reference intensity, dG2 and G2 by max G2.
    BACKGROUND divides by <I1><I2>(u2), so <I1> = <I2> = 1 and G2 = 1 + dG2.
    """
    if profile.normalization_record is not Normalization.NONE:
        raise ValueError(f"profile is already {profile.normalization_record.value}-normalized")
    if mode is Normalization.NONE:
        return profile
    if profile.is_degenerate:
        raise ValueError("cannot normalize a degenerate profile")

    if mode is Normalization.PEAK:
        peak = profile.g2.max()
        return replace(
            profile,
            mean_intensity_ref=profile.mean_intensity_ref / peak,
            delta_g2=profile.delta_g2 / peak,
            g2=profile.g2 / peak,
            normalization_record=mode,
        )

    background = profile.background
    ones = np.ones_like(profile.mean_intensity_ref)
    return replace(
        profile,
        mean_intensity_test=1.0,
        mean_intensity_ref=ones,
        delta_g2=profile.delta_g2 / background,
        g2=profile.g2 / background,
        normalization_record=mode,
    )


def peak_normalized_g2(profile: CorrelationProfile) -> np.ndarray:
    return normalized(profile, Normalization.PEAK).g2


def background_normalized_delta_g2(profile: CorrelationProfile) -> np.ndarray:
    return normalized(profile, Normalization.BACKGROUND).delta_g2
