"""
Monte Carlo speckle oracle.

Draws delta-correlated circular complex Gaussian source fields, propagates each one
through both arms and estimates <I1>, <I2>(u2) and cov(I1, I2(u2)) from the ensemble.
The deterministic dG2 of the correlation module is the exact expectation of that
covariance, so the two must agree within statistical error.

Each realization comes from its own Philox stream keyed by the seed, with the
realization index in the counter, so any subset of realizations can be drawn in any
order (or in parallel) and still give the same numbers.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from joblib import Parallel, delayed

from optics.errors import DimensionMismatchError, OracleError
from optics.fields import SampledField
from optics.propagation import KernelMatrix, build_kernels
from optics.sampling import GRID_POLICY
from optics.scene import Grid1D, Scene, SourceModel, coarsen_scene
from simulation.correlation import CorrelationProfile, _values, source_diagonal_weight

logger = logging.getLogger(__name__)

ORACLE_DEFAULTS = {
    "realizations": 20_000,
    "batches": 50,
    "coarse_source_points": 801,
    "coarse_detector_points": 101,
    "min_cli_realizations": 100,
    "z_gate": 4.0,
    "required_fraction": 0.95,
}

SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class SpeckleEnsembleSpec:
    """Ensemble size, seed and the source it samples"""
    realization_count: int
    seed: int
    grid: Grid1D
    source: SourceModel

    def __post_init__(self):
        if self.realization_count < 2:
            raise OracleError(f"need at least 2 realizations, got {self.realization_count}")
        if not 0 <= self.seed <= SEED_MASK:
            raise OracleError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.grid.sample_count < 2:
            raise OracleError(f"source grid needs at least 2 samples, got {self.grid.sample_count}")
        required = GRID_POLICY["source_extent_sigmas"] * self.source.a_m
        if not self.grid.covers(required):
            raise OracleError(f"source grid half extent {self.grid.half_extent_m:.4e} m < 4a = {required:.4e} m")


@dataclass(frozen=True, eq=False)
class CorrelationEstimate:
    """Ensemble estimates with batch-means standard errors"""
    mean_i1: float
    mean_i1_stderr: float
    mean_i2_per_u2: np.ndarray
    mean_i2_stderr: np.ndarray
    delta_g2_per_u2: np.ndarray      # cov(I1, I2(u2))
    delta_g2_stderr: np.ndarray
    field_correlation_per_u2: np.ndarray   # <E1 conj(E2)>
    realization_count: int
    batch_count: int


@dataclass(frozen=True, eq=False)
class OracleComparison:
    """Per-u2 z-scores of Monte Carlo against deterministic dG2"""
    u2_positions: np.ndarray
    delta_g2_deterministic: np.ndarray
    delta_g2_mc: np.ndarray
    mc_stderr: np.ndarray
    z_scores: np.ndarray
    z_gate: float

    @property
    def fraction_within_gate(self) -> float:
        return float(np.mean(np.abs(self.z_scores) <= self.z_gate))


# ─── Fields ──────────────────────────────────────────────────────────────────

def _stream(seed: int, realization_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, realization_index]))


def draw_field(spec: SpeckleEnsembleSpec, realization_index: int) -> SampledField:
    """Circular complex Gaussian source field with variance S(x_j)/dx at every grid point."""
    if not 0 <= realization_index < spec.realization_count:
        raise OracleError(f"realization index {realization_index} outside [0, {spec.realization_count})")
    grid = spec.grid
    variance = source_diagonal_weight(spec.source, grid.positions) / grid.spacing
    normals = _stream(spec.seed, realization_index).standard_normal((2, grid.sample_count))
    values = np.sqrt(variance / 2.0) * (normals[0] + 1j * normals[1])
    return SampledField(grid, values)


def propagate_realization(field: SampledField, h1_column, h2_matrix, dx: float) -> Tuple[float, np.ndarray]:
    """Test-detector intensity and reference intensities for one source field."""
    e = field.values
    h1 = _values(h1_column)
    h2 = h2_matrix.entries if isinstance(h2_matrix, KernelMatrix) else np.asarray(h2_matrix)
    if h1.shape != e.shape or h2.shape[0] != e.shape[0]:
        raise DimensionMismatchError(f"field {e.shape}, h1 {h1.shape}, h2 {h2.shape}")
    e1 = np.sum(e * h1) * dx
    e2 = np.einsum("j,jm->m", e, h2) * dx
    return float(np.abs(e1) ** 2), np.abs(e2) ** 2


# ─── Ensemble moments ────────────────────────────────────────────────────────

@dataclass
class _Moments:
    """Running first and second moments of one batch (or a merge of batches)"""
    count: int
    mean_i1: float
    mean_i2: np.ndarray
    m2_i1: float            # sum (I1 - mean)^2
    m2_i2: np.ndarray
    c12: np.ndarray         # sum (I1 - mean)(I2 - mean)
    mean_e12: np.ndarray    # mean of E1 conj(E2)

    @property
    def covariance(self) -> np.ndarray:
        return self.c12 / (self.count - 1)

    def merge(self, other: "_Moments") -> "_Moments":
        """Pairwise update of the moments of two disjoint sample sets."""
        n = self.count + other.count
        d1 = other.mean_i1 - self.mean_i1
        d2 = other.mean_i2 - self.mean_i2
        f = other.count / n
        return _Moments(
            count=n,
            mean_i1=self.mean_i1 + d1 * f,
            mean_i2=self.mean_i2 + d2 * f,
            m2_i1=self.m2_i1 + other.m2_i1 + d1 * d1 * self.count * f,
            m2_i2=self.m2_i2 + other.m2_i2 + d2 * d2 * self.count * f,
            c12=self.c12 + other.c12 + d1 * d2 * self.count * f,
            mean_e12=self.mean_e12 + (other.mean_e12 - self.mean_e12) * f,
        )


def _batch_moments(spec: SpeckleEnsembleSpec, start: int, stop: int,
                   h1: np.ndarray, h2: np.ndarray) -> _Moments:
    dx = spec.grid.spacing
    fields = np.stack([draw_field(spec, i).values for i in range(start, stop)])
    e1 = np.einsum("bj,j->b", fields, h1) * dx
    e2 = np.einsum("bj,jm->bm", fields, h2) * dx
    i1 = np.abs(e1) ** 2
    i2 = np.abs(e2) ** 2

    mean_i1 = i1.mean()
    mean_i2 = i2.mean(axis=0)
    r1 = i1 - mean_i1
    r2 = i2 - mean_i2
    return _Moments(
        count=stop - start,
        mean_i1=float(mean_i1),
        mean_i2=mean_i2,
        m2_i1=float(np.sum(r1 * r1)),
        m2_i2=np.sum(r2 * r2, axis=0),
        c12=np.einsum("b,bm->m", r1, r2),
        mean_e12=(e1[:, None] * np.conj(e2)).mean(axis=0),
    )


def batch_bounds(realization_count: int, batches: int = None) -> List[Tuple[int, int]]:
    """Contiguous, nearly equal batches of at least two realizations each."""
    wanted = ORACLE_DEFAULTS["batches"] if batches is None else batches
    count = max(1, min(wanted, realization_count // 2))
    edges = np.linspace(0, realization_count, count + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _stderr(values: np.ndarray) -> np.ndarray:
    """Standard error of the mean across batches (axis 0)."""
    return np.std(values, axis=0, ddof=1) / np.sqrt(values.shape[0])


def estimate_correlations(spec: SpeckleEnsembleSpec, scene: Scene, n_jobs: int = 1,
                          batches: int = None) -> CorrelationEstimate:
    """Ensemble estimates of <I1>, <I2>(u2) and cov(I1, I2(u2)) for the scene's kernels.

    Kernels are built on the scene's own grids without the chirp sampling check; the
    oracle deliberately runs on coarse grids and compares against a deterministic
    profile computed on the same grids.
    """
    if spec.grid != scene.source_grid:
        raise DimensionMismatchError("ensemble grid differs from the scene's source grid")
    h1_field, h2_kernel = build_kernels(scene, check_sampling=False)
    h1, h2 = h1_field.values, h2_kernel.entries

    bounds = batch_bounds(spec.realization_count, batches)
    if len(bounds) < 2:
        raise OracleError(f"{spec.realization_count} realizations give a single batch; standard errors need two")
    logger.info(f"Oracle: {spec.realization_count} realizations in {len(bounds)} batches, seed {spec.seed}")

    if n_jobs == 1:
        parts = [_batch_moments(spec, a, b, h1, h2) for a, b in bounds]
    else:
        parts = Parallel(n_jobs=n_jobs)(delayed(_batch_moments)(spec, a, b, h1, h2) for a, b in bounds)

    total = parts[0]
    for part in parts[1:]:
        total = total.merge(part)

    return CorrelationEstimate(
        mean_i1=total.mean_i1,
        mean_i1_stderr=float(_stderr(np.array([p.mean_i1 for p in parts]))),
        mean_i2_per_u2=total.mean_i2,
        mean_i2_stderr=_stderr(np.stack([p.mean_i2 for p in parts])),
        delta_g2_per_u2=total.covariance,
        delta_g2_stderr=_stderr(np.stack([p.covariance for p in parts])),
        field_correlation_per_u2=total.mean_e12,
        realization_count=spec.realization_count,
        batch_count=len(bounds),
    )


# ─── Checks ──────────────────────────────────────────────────────────────────

def compare_with_deterministic(estimate: CorrelationEstimate, profile: CorrelationProfile,
                               z_gate: float = None) -> OracleComparison:
    gate = ORACLE_DEFAULTS["z_gate"] if z_gate is None else z_gate
    if estimate.delta_g2_per_u2.shape != profile.delta_g2.shape:
        raise DimensionMismatchError(
            f"estimate has {estimate.delta_g2_per_u2.shape[0]} points, profile {profile.delta_g2.shape[0]}"
        )
    z = (estimate.delta_g2_per_u2 - profile.delta_g2) / estimate.delta_g2_stderr
    return OracleComparison(
        u2_positions=profile.u2_positions,
        delta_g2_deterministic=profile.delta_g2,
        delta_g2_mc=estimate.delta_g2_per_u2,
        mc_stderr=estimate.delta_g2_stderr,
        z_scores=z,
        z_gate=gate,
    )


def gaussian_moment_residual(estimate: CorrelationEstimate) -> np.ndarray:
    """(cov(I1, I2) - |<E1 conj(E2)>|^2) / stderr per u2.

    Both terms come from the same ensemble; for Gaussian fields the fourth moment
    factorizes, so the residual is statistical noise only.
    """
    factorized = np.abs(estimate.field_correlation_per_u2) ** 2
    return (estimate.delta_g2_per_u2 - factorized) / estimate.delta_g2_stderr


def coarse_oracle_scene(scene: Scene, source_points: int = None, detector_points: int = None) -> Scene:
    """Same bench on the oracle's coarse source and detector grids."""
    return coarsen_scene(
        scene,
        source_points=source_points or ORACLE_DEFAULTS["coarse_source_points"],
        detector_points=detector_points or ORACLE_DEFAULTS["coarse_detector_points"],
    )
