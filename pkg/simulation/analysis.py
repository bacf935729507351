"""
Visibility, parameter sweeps and the Fourier-limit comparison.

Visibility follows the thermal-light definition

    V = max dG2(u1, u2) / max G2(u1, u2)

which never exceeds 0.5 because dG2 <= <I1><I2> for a thermal source.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.signal import find_peaks

from optics.errors import DegenerateObjectError
from optics.scene import Scene, TransmissionMask, rebuild_scene
from simulation.correlation import CorrelationProfile, Normalization, full_profile, normalized

logger = logging.getLogger(__name__)

EXCLUSION_POLICY = {
    "peak_threshold": 0.1,   # peaks below this fraction of the maximum are not counted
}

# Slack on the thermal bound V <= 0.5
VISIBILITY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class VisibilityResult:
    """Visibility of one profile and where its fluctuation peak sits"""
    visibility: float
    peak_position_m: float
    peak_delta_g2: float
    background_at_peak: float
    maxima_coincide: bool = True   # max G2 sits at the dG2 peak (flat background)


@dataclass
class SweepResult:
    """Visibility per parameter value, in input order"""
    parameter_name: str
    parameter_values: List[float]
    visibilities: List[float]
    profiles: Optional[List[CorrelationProfile]] = None
    excluded_points: List[float] = field(default_factory=list)

    def is_excluded(self, value: float) -> bool:
        return value in self.excluded_points

    def to_rows(self) -> List[dict]:
        return [
            {"parameter_value": v, "visibility": vis, "excluded_flag": self.is_excluded(v)}
            for v, vis in zip(self.parameter_values, self.visibilities)
        ]


@dataclass(frozen=True, eq=False)
class FluctuationCurve:
    """Background-normalized dG2(0, u2) for one sweep variant"""
    parameter_name: str
    parameter_value: float
    u2_positions: np.ndarray
    normalized_delta_g2: np.ndarray
    visibility: float


# ─── Visibility ──────────────────────────────────────────────────────────────

def _peak_index(values: np.ndarray, positions: np.ndarray) -> int:
    """Index of the maximum; ties go to the smallest |u|, then to u >= 0."""
    candidates = np.flatnonzero(values == values.max())
    if len(candidates) == 1:
        return int(candidates[0])
    order = sorted(candidates, key=lambda i: (abs(positions[i]), positions[i] < 0))
    return int(order[0])


def visibility(profile: CorrelationProfile) -> VisibilityResult:
    if profile.is_degenerate or not np.any(profile.delta_g2 > 0):
        raise DegenerateObjectError("fluctuation correlation is zero everywhere; visibility undefined")

    peak = _peak_index(profile.delta_g2, profile.u2_positions)
    peak_dg2 = float(profile.delta_g2[peak])
    background = float(profile.background[peak])
    v = peak_dg2 / float(profile.g2.max())

    pointwise = peak_dg2 / (background + peak_dg2)
    coincide = math.isclose(v, pointwise, rel_tol=1e-9, abs_tol=0.0)
    if not coincide:
        logger.warning(f"Maxima of dG2 and G2 do not coincide: V={v:.12g}, pointwise={pointwise:.12g}")
    if v > 0.5 + VISIBILITY_TOLERANCE:
        logger.warning(f"Visibility {v:.6f} above the thermal bound")

    return VisibilityResult(
        visibility=v,
        peak_position_m=float(profile.u2_positions[peak]),
        peak_delta_g2=peak_dg2,
        background_at_peak=background,
        maxima_coincide=coincide,
    )


# ─── Analytic object spectrum ────────────────────────────────────────────────

def analytic_multislit_transform(mask: TransmissionMask, spatial_frequency) -> np.ndarray:
    """|T(f)|^2 of the symmetric n-slit mask, f in cycles/m.

    T(f) = amplitude·w·sinc(w f)·sin(n pi d f)/sin(pi d f), limits taken where sin(pi d f) = 0.
    """
    f = np.asarray(spatial_frequency, dtype=float)
    n, w, d = mask.slit_count, mask.slit_width_m, mask.slit_pitch_m

    envelope = mask.amplitude * w * np.sinc(w * f)
    numerator = np.sin(n * np.pi * d * f)
    denominator = np.sin(np.pi * d * f)
    singular = np.abs(denominator) < 1e-12
    safe = np.where(singular, 1.0, denominator)
    array_factor = np.where(singular, n * np.cos(n * np.pi * d * f) / np.cos(np.pi * d * f), numerator / safe)
    return (envelope * array_factor) ** 2


def analytic_profile(scene: Scene, u2_positions: Optional[np.ndarray] = None) -> np.ndarray:
    """|T(u2 / (lambda z2))|^2 on the detector grid, the large-source limit of dG2(0, u2)."""
    u2 = scene.detector_grid.positions if u2_positions is None else u2_positions
    return analytic_multislit_transform(scene.mask, u2 / (scene.layout.wavelength_m * scene.layout.z2_m))


def fourier_limit_distance(profile: CorrelationProfile, scene: Scene) -> float:
    """Relative RMS distance between peak-normalized dG2(0, .) and peak-normalized |T|^2."""
    computed = profile.delta_g2 / profile.delta_g2.max()
    reference = analytic_profile(scene, profile.u2_positions)
    reference = reference / reference.max()
    return float(np.sqrt(np.mean((computed - reference) ** 2)) / np.sqrt(np.mean(reference ** 2)))


def _count_peaks(values: np.ndarray) -> int:
    scaled = values / values.max()
    peaks, _ = find_peaks(np.concatenate(([0.0], scaled, [0.0])), height=EXCLUSION_POLICY["peak_threshold"])
    return len(peaks)


def is_distorted(profile: CorrelationProfile, scene: Scene) -> bool:
    """True when dG2 shows a different number of significant peaks than the object spectrum."""
    if profile.is_degenerate:
        return True
    return _count_peaks(profile.delta_g2) != _count_peaks(analytic_profile(scene, profile.u2_positions))


def fringe_period(profile: CorrelationProfile) -> float:
    """Distance between the two dark fringes that flank the main dG2 peak.

    Minima are refined by a parabola through the lowest sample and its neighbours.
    """
    values, u = profile.delta_g2, profile.u2_positions
    peak = _peak_index(values, u)

    def refine(i: int) -> float:
        left, mid, right = values[i - 1], values[i], values[i + 1]
        curvature = left - 2.0 * mid + right
        offset = 0.5 * (left - right) / curvature if curvature > 0 else 0.0
        return u[i] + offset * (u[1] - u[0])

    right_min = next((i for i in range(peak + 1, len(values) - 1)
                      if values[i] <= values[i - 1] and values[i] <= values[i + 1]), None)
    left_min = next((i for i in range(peak - 1, 0, -1)
                     if values[i] <= values[i - 1] and values[i] <= values[i + 1]), None)
    if right_min is None or left_min is None:
        raise ValueError("no dark fringe on both sides of the main peak within the detector span")
    return float(refine(right_min) - refine(left_min))


# ─── Sweeps ──────────────────────────────────────────────────────────────────

def _evaluate(scene: Scene) -> Tuple[CorrelationProfile, float, bool]:
    profile = full_profile(scene)
    if profile.is_degenerate:
        return profile, float("nan"), True
    return profile, visibility(profile).visibility, is_distorted(profile, scene)


def _run_sweep(name: str, values: Sequence[float], scenes: List[Scene],
               n_jobs: int, keep_profiles: bool) -> SweepResult:
    if n_jobs == 1:
        outcomes = [_evaluate(s) for s in scenes]
    else:
        outcomes = Parallel(n_jobs=n_jobs)(delayed(_evaluate)(s) for s in scenes)

    result = SweepResult(parameter_name=name, parameter_values=list(values), visibilities=[])
    profiles = []
    for value, (profile, v, distorted) in zip(values, outcomes):
        result.visibilities.append(v)
        profiles.append(profile)
        if distorted:
            result.excluded_points.append(value)
            logger.warning(f"{name}={value}: dG2 structure does not match the object spectrum, flagged")
        logger.info(f"{name}={value}: V={v:.6f}")
    if keep_profiles:
        result.profiles = profiles
    return result


def sweep_slit_number(base: Scene, n_values: Sequence[int], n_jobs: int = 1,
                      keep_profiles: bool = False) -> SweepResult:
    if not n_values:
        raise ValueError("slit-number sweep needs at least one value")
    for n in n_values:
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
            raise ValueError(f"slit count must be an integer >= 1, got {n!r}")
    scenes = [rebuild_scene(base, mask=replace(base.mask, slit_count=int(n))) for n in n_values]
    return _run_sweep("slit_count", [int(n) for n in n_values], scenes, n_jobs, keep_profiles)


def sweep_width_ratio(base: Scene, ratios: Sequence[float], n_jobs: int = 1,
                      keep_profiles: bool = False) -> SweepResult:
    """Vary w = ratio·d at the base pitch d."""
    if not ratios:
        raise ValueError("width-ratio sweep needs at least one value")
    for r in ratios:
        if not 0.0 < r < 1.0:
            raise ValueError(f"width ratio must lie in (0, 1), got {r!r}")
    pitch = base.mask.slit_pitch_m
    scenes = [rebuild_scene(base, mask=replace(base.mask, slit_width_m=r * pitch)) for r in ratios]
    return _run_sweep("width_ratio", list(ratios), scenes, n_jobs, keep_profiles)


def sweep_source_size(base: Scene, a_values_m: Sequence[float], n_jobs: int = 1,
                      keep_profiles: bool = False) -> SweepResult:
    if not a_values_m:
        raise ValueError("source-size sweep needs at least one value")
    for a in a_values_m:
        if not a > 0:
            raise ValueError(f"source size must be > 0, got {a!r}")
    scenes = [rebuild_scene(base, source=replace(base.source, a_m=a)) for a in a_values_m]
    return _run_sweep("source_size_m", list(a_values_m), scenes, n_jobs, keep_profiles)


def fluctuation_curves(base: Scene, slit_counts: Optional[Sequence[int]] = None,
                       width_ratios: Optional[Sequence[float]] = None,
                       n_jobs: int = 1) -> List[FluctuationCurve]:
    """dG2(0, u2) / (<I1><I2>) per variant; each curve peaks at V / (1 - V)."""
    if (slit_counts is None) == (width_ratios is None):
        raise ValueError("give exactly one of slit_counts or width_ratios")
    if slit_counts is not None:
        sweep = sweep_slit_number(base, slit_counts, n_jobs=n_jobs, keep_profiles=True)
    else:
        sweep = sweep_width_ratio(base, width_ratios, n_jobs=n_jobs, keep_profiles=True)

    curves = []
    for value, v, profile in zip(sweep.parameter_values, sweep.visibilities, sweep.profiles):
        if profile.is_degenerate:
            continue
        curves.append(FluctuationCurve(
            parameter_name=sweep.parameter_name,
            parameter_value=value,
            u2_positions=profile.u2_positions,
            normalized_delta_g2=normalized(profile, Normalization.BACKGROUND).delta_g2,
            visibility=v,
        ))
    return curves

