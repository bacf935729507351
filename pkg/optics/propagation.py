"""
Fresnel impulse responses of the two arms.

Reference arm: free space over z,
    h2(x, u) = e^{-ikz}/(i lambda z) · exp[-i pi (u - x)^2 / (lambda z)]
Test arm: free space over z1, the mask t(x'), free space over z2,
    h1(x, u1) = ∫ h(x -> x'; z1) · t(x') · h(x' -> u1; z2) dx'

The test arm is evaluated either in closed form (one Fresnel integral per open slit)
or by an edge-corrected trapezoid rule on the object grid.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, List, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.special import fresnel

from optics.errors import GridTooSmallError, NyquistViolationError
from optics.fields import SampledField
from optics.sampling import nyquist_limit_rad, object_phase_rate, source_phase_rate
from optics.scene import Grid1D, OpticalLayout, Scene, TestArmMethod, TransmissionMask

logger = logging.getLogger(__name__)

# Row block size for kernel evaluation. Fixed so results never depend on worker count.
KERNEL_BLOCK_ROWS = 2048

ArrayLike = Union[float, np.ndarray]


def row_block_bounds(rows: int, block_rows: int = KERNEL_BLOCK_ROWS) -> List[Tuple[int, int]]:
    """Half-open [start, stop) row ranges of at most block_rows rows, in order."""
    if block_rows < 1:
        raise ValueError(f"block_rows must be >= 1, got {block_rows!r}")
    return [(start, min(start + block_rows, rows)) for start in range(0, rows, block_rows)]


def free_space_response(layout: OpticalLayout, x: ArrayLike, u: ArrayLike, distance: float) -> ArrayLike:
    """Paraxial point-source response from x to u over `distance` (broadcasts over arrays)."""
    if not distance > 0:
        raise ValueError(f"propagation distance must be > 0, got {distance!r} m")
    wavelength = layout.wavelength_m
    prefactor = np.exp(-1j * layout.wavenumber_rad_per_m * distance) / (1j * wavelength * distance)
    return prefactor * np.exp(-1j * np.pi * (np.asarray(u) - np.asarray(x)) ** 2 / (wavelength * distance))


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Free-space kernel h(x_j, u_m) over row_grid × col_grid, evaluated lazily by row blocks.

    Source grids for wide sources run to 10^5+ rows, so the full matrix is only built
    when `entries` is asked for.
    """
    row_grid: Grid1D
    col_grid: Grid1D
    layout: OpticalLayout
    distance_m: float
    block_rows: int = KERNEL_BLOCK_ROWS

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.row_grid.sample_count, self.col_grid.sample_count)

    def block_bounds(self) -> List[Tuple[int, int]]:
        return row_block_bounds(self.row_grid.sample_count, self.block_rows)

    def row_block(self, start: int, stop: int) -> np.ndarray:
        x = self.row_grid.positions[start:stop, None]
        u = self.col_grid.positions[None, :]
        return free_space_response(self.layout, x, u, self.distance_m)

    def blocks(self) -> Iterator[Tuple[int, int, np.ndarray]]:
        for start, stop in self.block_bounds():
            yield start, stop, self.row_block(start, stop)

    @cached_property
    def entries(self) -> np.ndarray:
        return np.vstack([block for _, _, block in self.blocks()])

    def __getitem__(self, key):
        if isinstance(key, tuple) and len(key) == 2 and all(isinstance(k, (int, np.integer)) for k in key):
            j, m = key
            x = self.row_grid.positions[j]
            u = self.col_grid.positions[m]
            return complex(free_space_response(self.layout, x, u, self.distance_m))
        return self.entries[key]


# ─── Test arm ────────────────────────────────────────────────────────────────

def _arm_prefactor(layout: OpticalLayout) -> complex:
    z1, z2 = layout.z1_m, layout.z2_m
    k, wavelength = layout.wavenumber_rad_per_m, layout.wavelength_m
    return (np.exp(-1j * k * z1) / (1j * wavelength * z1)) * (np.exp(-1j * k * z2) / (1j * wavelength * z2))


def object_quadrature(mask: TransmissionMask, grid: Grid1D) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and trapezoid weights for ∫ t(x') f(x') dx' on the object grid.

    Each open interval uses its two exact edges plus the grid points strictly inside,
    so partial cells at the slit edges are weighted by their true width.
    """
    if not grid.covers(mask.support_half_width_m):
        raise GridTooSmallError(
            f"object grid half extent {grid.half_extent_m:.4e} m does not cover mask support "
            f"{mask.support_half_width_m:.4e} m"
        )
    x = grid.positions
    tolerance = 1e-9 * grid.spacing
    all_nodes, all_weights = [], []
    for lo, hi in mask.open_intervals():
        inside = x[(x > lo + tolerance) & (x < hi - tolerance)]
        nodes = np.concatenate(([lo], inside, [hi]))
        gaps = np.diff(nodes)
        weights = np.zeros_like(nodes)
        weights[:-1] += gaps / 2.0
        weights[1:] += gaps / 2.0
        all_nodes.append(nodes)
        all_weights.append(weights)
    return np.concatenate(all_nodes), np.concatenate(all_weights) * mask.amplitude


def _object_step_rad(scene: Scene, x: ArrayLike, u1: float) -> float:
    """Worst phase advance per object-grid step of the test-arm chirp product at source point(s) x."""
    layout, grid = scene.layout, scene.object_grid
    x_far = float(np.max(np.abs(x)))
    edge = grid.half_extent_m
    rate = 2.0 * math.pi / layout.wavelength_m * ((edge + x_far) / layout.z1_m + (edge + abs(u1)) / layout.z2_m)
    return rate * grid.spacing


def _trapezoid_rows(scene: Scene, x: np.ndarray, u1: float,
                    nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    layout = scene.layout
    wavelength = layout.wavelength_m
    phase = ((nodes[None, :] - x[:, None]) ** 2 / layout.z1_m
             + (u1 - nodes[None, :]) ** 2 / layout.z2_m)
    chirps = np.exp(-1j * np.pi * phase / wavelength)
    return _arm_prefactor(layout) * (chirps * weights[None, :]).sum(axis=1)


def test_arm_response(scene: Scene, x: ArrayLike, u1: float) -> ArrayLike:
    """h1(x, u1) by edge-corrected trapezoid quadrature over the object grid.

    Raises NyquistViolationError when the object grid undersamples the chirps at x.
    """
    limit = nyquist_limit_rad()
    step = _object_step_rad(scene, x, u1)
    if step > limit * (1.0 + 1e-9):
        raise NyquistViolationError("object", step, limit)

    nodes, weights = object_quadrature(scene.mask, scene.object_grid)
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    values = _trapezoid_rows(scene, x_arr, u1, nodes, weights)
    return complex(values[0]) if np.ndim(x) == 0 else values


test_arm_response.__test__ = False  # not a pytest test when imported into test modules


def test_arm_response_exact(scene: Scene, x: ArrayLike, u1: float) -> ArrayLike:
    """h1(x, u1) in closed form: the chirp product over each slit is a Fresnel integral.

    (x'-x)^2/z1 + (x'-u1)^2/z2 = (1/z1 + 1/z2)(x' - m)^2 + (x - u1)^2/(z1 + z2),
    m being the stationary point of the combined chirp.
    """
    layout, mask = scene.layout, scene.mask
    z1, z2, wavelength = layout.z1_m, layout.z2_m, layout.wavelength_m
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))

    curvature = 1.0 / z1 + 1.0 / z2
    stationary = (x_arr / z1 + u1 / z2) / curvature
    scale = math.sqrt(2.0 * curvature / wavelength)

    total = np.zeros(x_arr.shape, dtype=complex)
    for lo, hi in mask.open_intervals():
        s_hi, c_hi = fresnel(scale * (hi - stationary))
        s_lo, c_lo = fresnel(scale * (lo - stationary))
        total += (c_hi - c_lo) - 1j * (s_hi - s_lo)

    residual = np.exp(-1j * np.pi * (x_arr - u1) ** 2 / (wavelength * (z1 + z2)))
    values = _arm_prefactor(layout) * mask.amplitude * residual * total / scale
    return complex(values[0]) if np.ndim(x) == 0 else values


test_arm_response_exact.__test__ = False


# ─── Sampling bound ──────────────────────────────────────────────────────────

def _grid_steps(scene: Scene) -> List[Tuple[str, float]]:
    layout, mask = scene.layout, scene.mask
    source_rate = source_phase_rate(
        layout.wavelength_m, layout.z_m, layout.z1_m,
        scene.source_grid.half_extent_m, scene.detector_grid.half_extent_m, mask.support_half_width_m,
    )
    object_rate = object_phase_rate(
        layout.wavelength_m, layout.z1_m, layout.z2_m,
        scene.object_grid.half_extent_m, scene.source_grid.half_extent_m, scene.test_detector_position_m,
    )
    return [
        ("source", source_rate * scene.source_grid.spacing),
        ("object", object_rate * scene.object_grid.spacing),
    ]


def chirp_phase_gradient_bound(scene: Scene) -> float:
    """Largest phase advance per grid step (radians) over the source and object grids."""
    return max(step for _, step in _grid_steps(scene))


# ─── Kernel precomputation ───────────────────────────────────────────────────

def build_kernels(scene: Scene, check_sampling: bool = True,
                  n_jobs: int = 1) -> Tuple[SampledField, KernelMatrix]:
    """h1 over the source grid at fixed u1, and the lazy free-space kernel over source × detector."""
    if check_sampling:
        limit = nyquist_limit_rad()
        for name, step in _grid_steps(scene):
            if name == "object" and scene.test_arm_method is not TestArmMethod.TRAPEZOID:
                continue
            logger.debug(f"{name} grid phase step {step:.4f} rad (limit {limit:.4f})")
            if step > limit * (1.0 + 1e-9):
                raise NyquistViolationError(name, step, limit)
    else:
        logger.warning("Chirp sampling check disabled; kernels may be aliased")

    x = scene.source_grid.positions
    u1 = scene.test_detector_position_m
    h2 = KernelMatrix(scene.source_grid, scene.detector_grid, scene.layout, scene.layout.z_m)
    bounds = h2.block_bounds()

    if scene.test_arm_method is TestArmMethod.TRAPEZOID:
        nodes, weights = object_quadrature(scene.mask, scene.object_grid)
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_trapezoid_rows)(scene, x[start:stop], u1, nodes, weights) for start, stop in bounds
        )
        h1 = np.concatenate(parts)
    else:
        h1 = test_arm_response_exact(scene, x, u1)

    logger.debug(f"Kernels ready: h1 {h1.shape}, h2 {h2.shape} ({len(h2.block_bounds())} blocks)")
    return SampledField(scene.source_grid, h1), h2
