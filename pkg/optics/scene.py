"""
Optical bench description for lensless ghost imaging.

A Scene bundles the geometry (OpticalLayout), the incoherent source (SourceModel),
the multi-slit object (TransmissionMask) and the three discretization grids. Scenes
are immutable; builders size the grids automatically from the chirp sampling rule.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from optics.errors import GridTooSmallError
from optics.fields import SampledField
from optics.sampling import (
    GRID_POLICY,
    nyquist_limit_rad,
    object_phase_rate,
    samples_for,
    source_phase_rate,
)

logger = logging.getLogger(__name__)

MM = 1e-3
NM = 1e-9

# Parameter list of the double-slit experiment, in the units the config file uses
BENCH_DEFAULTS = {
    "wavelength_nm": 532.0,
    "z_mm": 175.0,
    "z1_mm": 75.0,
    "a_mm": 1.0,
    "g0": 1.0,
    "slit_count": 2,
    "slit_width_mm": 0.075,
    "slit_pitch_mm": 0.15,
    "u1_mm": 0.0,
    "detector_halfspan_mm": 1.5,
    "detector_points": 601,
    "amplitude": 1.0,
    "test_arm_method": "fresnel",
    "resolution_scale": 1.0,
}


class TestArmMethod(Enum):
    """How the test-arm impulse response integral is evaluated"""
    __test__ = False  # keep pytest from collecting this as a test class

    FRESNEL = "fresnel"        # closed form per open interval
    TRAPEZOID = "trapezoid"    # composite trapezoid on the object grid


@dataclass(frozen=True)
class OpticalLayout:
    """Wavelength and the three propagation distances of the bench"""
    wavelength_m: float
    z_m: float          # source -> reference detector
    z1_m: float         # source -> object
    z2_m: Optional[float] = None   # object -> test detector
    coupled_distances: bool = True    # enforce z2 = z - z1

    def __post_init__(self):
        derived = self.z_m - self.z1_m
        if self.coupled_distances:
            if self.z2_m is None:
                object.__setattr__(self, "z2_m", derived)
            elif not math.isclose(self.z2_m, derived, rel_tol=1e-12, abs_tol=1e-15):
                raise ValueError(
                    f"coupled distances require z2 = z - z1 = {derived!r} m, got {self.z2_m!r} m"
                )
        elif self.z2_m is None:
            raise ValueError("z2_m is required when coupled_distances is off")

    @property
    def wavenumber_rad_per_m(self) -> float:
        return 2.0 * math.pi / self.wavelength_m


@dataclass(frozen=True)
class SourceModel:
    """Delta-correlated source with a Gaussian intensity envelope"""
    a_m: float          # transverse source size
    g0: float = 1.0     # normalization constant


@dataclass(frozen=True)
class TransmissionMask:
    """n identical slits of width w, pitch d (centre to centre), centred on the axis"""
    slit_count: int
    slit_width_m: float
    slit_pitch_m: float
    amplitude: float = 1.0

    @property
    def slit_centers(self) -> np.ndarray:
        offsets = np.arange(self.slit_count) - (self.slit_count - 1) / 2.0
        return offsets * self.slit_pitch_m

    @property
    def support_half_width_m(self) -> float:
        return (self.slit_count - 1) * self.slit_pitch_m / 2.0 + self.slit_width_m / 2.0

    @property
    def open_length_m(self) -> float:
        return self.slit_count * self.slit_width_m

    def open_intervals(self) -> List[Tuple[float, float]]:
        half = self.slit_width_m / 2.0
        return [(float(c - half), float(c + half)) for c in self.slit_centers]


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid whose points are integer multiples of the spacing about 0.

    Even counts span [-H, H) with dx = 2H/N; odd counts span [-H, H] with dx = 2H/(N-1).
    Either way 0 is a grid point and mirror points are exact negations.
    """
    half_extent_m: float
    sample_count: int

    @property
    def spacing(self) -> float:
        if self.sample_count % 2 == 0:
            return 2.0 * self.half_extent_m / self.sample_count
        return 2.0 * self.half_extent_m / max(self.sample_count - 1, 1)

    @property
    def center_index(self) -> int:
        return self.sample_count // 2

    @property
    def positions(self) -> np.ndarray:
        offsets = np.arange(self.sample_count) - self.center_index
        return offsets * self.spacing

    def mirror_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """Index arrays (i, j) with positions[i] == -positions[j]."""
        start = 1 if self.sample_count % 2 == 0 else 0
        idx = np.arange(start, self.sample_count)
        return idx, idx[::-1]

    def covers(self, half_width_m: float) -> bool:
        return self.half_extent_m >= half_width_m * (1.0 - 1e-12)


@dataclass(frozen=True)
class Scene:
    """Complete optical bench: geometry, source, object, grids"""
    layout: OpticalLayout
    source: SourceModel
    mask: TransmissionMask
    source_grid: Grid1D
    object_grid: Grid1D
    detector_grid: Grid1D
    test_detector_position_m: float = 0.0
    test_arm_method: TestArmMethod = TestArmMethod.FRESNEL
    resolution_scale: float = 1.0


@dataclass(frozen=True)
class Violation:
    """One broken scene invariant"""
    invariant: str
    value: Any
    message: str

    def __str__(self) -> str:
        return f"[{self.invariant}] {self.message} (value={self.value!r})"


# ─── Builders ────────────────────────────────────────────────────────────────

def size_grids(layout: OpticalLayout, source: SourceModel, mask: TransmissionMask,
               u1_m: float, detector_halfspan_m: float,
               resolution_scale: float = 1.0) -> Tuple[Grid1D, Grid1D]:
    """Source and object grids sized from the chirp sampling rule."""
    source_half = GRID_POLICY["source_extent_sigmas"] * source.a_m
    object_half = mask.support_half_width_m * (1.0 + GRID_POLICY["object_margin"])

    if min(layout.wavelength_m, layout.z_m, layout.z1_m, layout.z2_m) > 0:
        src_rate = source_phase_rate(layout.wavelength_m, layout.z_m, layout.z1_m,
                                     source_half, detector_halfspan_m, mask.support_half_width_m)
        obj_rate = object_phase_rate(layout.wavelength_m, layout.z1_m, layout.z2_m,
                                     object_half, source_half, u1_m)
    else:
        # unphysical layout: minimal grids, validate_scene reports the cause
        src_rate = obj_rate = 0.0

    source_grid = Grid1D(source_half, samples_for(source_half, src_rate, oversampling=resolution_scale))
    object_grid = Grid1D(object_half, samples_for(
        object_half, obj_rate, oversampling=GRID_POLICY["object_oversampling"] * resolution_scale))
    return source_grid, object_grid


def build_scene(layout: OpticalLayout, source: SourceModel, mask: TransmissionMask,
                u1_m: float = 0.0, detector_halfspan_m: float = 1.5 * MM,
                detector_points: int = 601,
                test_arm_method: TestArmMethod = TestArmMethod.FRESNEL,
                resolution_scale: float = 1.0) -> Scene:
    """Assemble a Scene with automatically sized source and object grids.

    resolution_scale multiplies the sample density of every grid, the detector included.
    """
    source_grid, object_grid = size_grids(layout, source, mask, u1_m, detector_halfspan_m, resolution_scale)
    if resolution_scale != 1.0:
        detector_points = int(round((detector_points - 1) * resolution_scale)) + 1
    detector_grid = Grid1D(detector_halfspan_m, detector_points)

    logger.debug(f"Grids: source {source_grid.sample_count} pts over +-{source_grid.half_extent_m:.3e} m, "
                 f"object {object_grid.sample_count} pts over +-{object_grid.half_extent_m:.3e} m, "
                 f"detector {detector_grid.sample_count} pts")

    return Scene(
        layout=layout,
        source=source,
        mask=mask,
        source_grid=source_grid,
        object_grid=object_grid,
        detector_grid=detector_grid,
        test_detector_position_m=u1_m,
        test_arm_method=test_arm_method,
        resolution_scale=resolution_scale,
    )


def paper_default_scene(**overrides) -> Scene:
    """Double slit w=0.075 mm, d=0.15 mm; a=1 mm; lambda=532 nm; z=175 mm, z1=75 mm.

    Keyword overrides use the config keys (mm / nm units), e.g. a_mm=2.0.
    """
    return scene_from_parameters(overrides)


def scene_from_parameters(params: Dict[str, Any]) -> Scene:
    """Build a Scene from config-style parameters (mm / nm units, see BENCH_DEFAULTS)."""
    merged = dict(BENCH_DEFAULTS)
    merged.update({k: v for k, v in params.items() if v is not None})

    if params.get("z2_mm") is None:
        layout = OpticalLayout(merged["wavelength_nm"] * NM, merged["z_mm"] * MM, merged["z1_mm"] * MM)
    else:
        layout = OpticalLayout(merged["wavelength_nm"] * NM, merged["z_mm"] * MM, merged["z1_mm"] * MM,
                               z2_m=params["z2_mm"] * MM, coupled_distances=False)

    return build_scene(
        layout=layout,
        source=SourceModel(a_m=merged["a_mm"] * MM, g0=merged["g0"]),
        mask=TransmissionMask(
            slit_count=merged["slit_count"],
            slit_width_m=merged["slit_width_mm"] * MM,
            slit_pitch_m=merged["slit_pitch_mm"] * MM,
            amplitude=merged["amplitude"],
        ),
        u1_m=merged["u1_mm"] * MM,
        detector_halfspan_m=merged["detector_halfspan_mm"] * MM,
        detector_points=int(merged["detector_points"]),
        test_arm_method=TestArmMethod(merged["test_arm_method"]),
        resolution_scale=float(merged["resolution_scale"]),
    )


def rebuild_scene(base: Scene, mask: Optional[TransmissionMask] = None,
                  source: Optional[SourceModel] = None,
                  layout: Optional[OpticalLayout] = None) -> Scene:
    """Swap parts of a scene and re-size source/object grids; the detector grid is kept."""
    layout = layout or base.layout
    source = source or base.source
    mask = mask or base.mask
    source_grid, object_grid = size_grids(layout, source, mask, base.test_detector_position_m,
                                          base.detector_grid.half_extent_m, base.resolution_scale)
    return replace(base, layout=layout, source=source, mask=mask,
                   source_grid=source_grid, object_grid=object_grid)


def coarsen_scene(scene: Scene, source_points: int = 801, detector_points: int = 101) -> Scene:
    """Same bench on coarse source/detector grids (for the Monte Carlo oracle)."""
    return replace(
        scene,
        source_grid=Grid1D(scene.source_grid.half_extent_m, source_points),
        detector_grid=Grid1D(scene.detector_grid.half_extent_m, detector_points),
    )


# ─── Object sampling ─────────────────────────────────────────────────────────

def sample_mask(mask: TransmissionMask, grid: Grid1D) -> SampledField:
    """t(x') on the grid: amplitude within w/2 of a slit centre (edges included), else 0."""
    if not grid.covers(mask.support_half_width_m):
        raise GridTooSmallError(
            f"grid half extent {grid.half_extent_m:.4e} m does not cover mask support "
            f"{mask.support_half_width_m:.4e} m"
        )
    x = grid.positions
    half = mask.slit_width_m / 2.0
    tolerance = 1e-12 * mask.slit_width_m
    distance = np.abs(x[:, None] - mask.slit_centers[None, :]).min(axis=1)
    open_ = distance <= half + tolerance
    return SampledField(grid, np.where(open_, float(mask.amplitude), 0.0))


# ─── Validation ──────────────────────────────────────────────────────────────

def validate_scene(scene: Scene) -> List[Violation]:
    """Every broken invariant of the scene; empty when the scene is consistent."""
    violations: List[Violation] = []

    def check(ok: bool, invariant: str, value: Any, message: str):
        if not ok:
            violations.append(Violation(invariant, value, message))

    layout, source, mask = scene.layout, scene.source, scene.mask
    check(layout.wavelength_m > 0, "wavelength_positive", layout.wavelength_m, "wavelength must be > 0")
    check(layout.z_m > 0, "z_positive", layout.z_m, "z must be > 0")
    check(layout.z1_m > 0, "z1_positive", layout.z1_m, "z1 must be > 0")
    check(layout.z2_m > 0, "z2_positive", layout.z2_m, "z2 must be > 0")
    check(layout.z1_m < layout.z_m, "object_before_detector_plane", layout.z1_m, "z1 must be < z")

    check(source.g0 > 0, "g0_positive", source.g0, "G0 must be > 0")
    check(source.a_m > 0, "source_size_positive", source.a_m, "source size a must be > 0")

    check(isinstance(mask.slit_count, (int, np.integer)) and mask.slit_count >= 1,
          "slit_count_positive", mask.slit_count, "slit count must be an integer >= 1")
    check(mask.slit_width_m > 0, "slit_width_positive", mask.slit_width_m, "slit width must be > 0")
    check(mask.slit_pitch_m > 0, "slit_pitch_positive", mask.slit_pitch_m, "slit pitch must be > 0")
    check(0.0 <= mask.amplitude <= 1.0, "amplitude_range", mask.amplitude, "amplitude must lie in [0, 1]")
    if mask.slit_count >= 2:
        check(mask.slit_width_m < mask.slit_pitch_m, "slits_do_not_overlap",
              mask.slit_width_m / mask.slit_pitch_m, "slit width must be smaller than the pitch")

    for name in ("source_grid", "object_grid", "detector_grid"):
        grid = getattr(scene, name)
        check(grid.sample_count >= 2, f"{name}_size", grid.sample_count, f"{name} needs >= 2 samples")
        check(grid.half_extent_m > 0, f"{name}_extent", grid.half_extent_m, f"{name} extent must be > 0")

    check(scene.object_grid.covers(mask.support_half_width_m), "object_grid_covers_mask",
          scene.object_grid.half_extent_m,
          f"object grid must cover the mask support {mask.support_half_width_m:.4e} m")
    required = GRID_POLICY["source_extent_sigmas"] * source.a_m
    check(scene.source_grid.covers(required), "source_grid_covers_envelope",
          scene.source_grid.half_extent_m, f"source grid must extend to 4a = {required:.4e} m")

    if not violations:
        from optics.propagation import chirp_phase_gradient_bound

        bound = chirp_phase_gradient_bound(scene)
        limit = nyquist_limit_rad()
        check(bound <= limit * (1.0 + 1e-9), "chirp_nyquist", bound,
              f"chirp phase step exceeds pi/{GRID_POLICY['safety_factor']:g} per sample")

    return violations


# ─── Serialization (SI units) ────────────────────────────────────────────────

def scene_to_dict(scene: Scene) -> Dict[str, Any]:
    """Plain-JSON description of a scene; scene_from_dict inverts it exactly."""
    def grid(g: Grid1D) -> Dict[str, Any]:
        return {"half_extent_m": g.half_extent_m, "sample_count": g.sample_count}

    return {
        "layout": {
            "wavelength_m": scene.layout.wavelength_m,
            "z_m": scene.layout.z_m,
            "z1_m": scene.layout.z1_m,
            "z2_m": scene.layout.z2_m,
            "coupled_distances": scene.layout.coupled_distances,
        },
        "source": {"a_m": scene.source.a_m, "g0": scene.source.g0},
        "mask": {
            "slit_count": scene.mask.slit_count,
            "slit_width_m": scene.mask.slit_width_m,
            "slit_pitch_m": scene.mask.slit_pitch_m,
            "amplitude": scene.mask.amplitude,
        },
        "source_grid": grid(scene.source_grid),
        "object_grid": grid(scene.object_grid),
        "detector_grid": grid(scene.detector_grid),
        "test_detector_position_m": scene.test_detector_position_m,
        "test_arm_method": scene.test_arm_method.value,
        "resolution_scale": scene.resolution_scale,
    }


def scene_from_dict(data: Dict[str, Any]) -> Scene:
    lay = data["layout"]
    return Scene(
        layout=OpticalLayout(lay["wavelength_m"], lay["z_m"], lay["z1_m"],
                             z2_m=lay["z2_m"], coupled_distances=lay["coupled_distances"]),
        source=SourceModel(**data["source"]),
        mask=TransmissionMask(**data["mask"]),
        source_grid=Grid1D(**data["source_grid"]),
        object_grid=Grid1D(**data["object_grid"]),
        detector_grid=Grid1D(**data["detector_grid"]),
        test_detector_position_m=data["test_detector_position_m"],
        test_arm_method=TestArmMethod(data["test_arm_method"]),
        resolution_scale=data["resolution_scale"],
    )
