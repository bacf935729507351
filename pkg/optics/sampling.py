"""
Chirp sampling rules for the bench grids.

All kernels in this system are quadratic-phase (Fresnel) chirps. A grid samples a
chirp safely when the phase advances by less than pi/safety_factor per step, so the
grid spacing follows directly from the largest phase rate (rad/m) on the grid.
"""

import math

GRID_POLICY = {
    "safety_factor": 4.0,
    "source_extent_sigmas": 4.0,   # source grid spans +-4a
    "object_margin": 0.2,          # object grid = mask support + 20%
    "object_oversampling": 8,      # trapezoid path needs far more than Nyquist
    "min_samples": 64,
}


def nyquist_limit_rad(safety_factor: float = None) -> float:
    """Largest allowed phase advance per grid step."""
    factor = GRID_POLICY["safety_factor"] if safety_factor is None else safety_factor
    return math.pi / factor


def source_phase_rate(wavelength_m: float, z_m: float, z1_m: float,
                      source_half_m: float, detector_half_m: float,
                      support_half_m: float) -> float:
    """Max phase rate of S(x)·h1(x,u1)·conj(h2(x,u2)) along the source coordinate.

    Three terms: the residual quadratic chirp |1/z1 - 1/z|·x, the linear tilt from the
    reference detector position, and the band limit of the object seen from the source.
    """
    quadratic = abs(1.0 / z1_m - 1.0 / z_m) * source_half_m
    tilt = detector_half_m / z_m
    band = support_half_m / z1_m
    return 2.0 * math.pi * (quadratic + tilt + band) / wavelength_m


def object_phase_rate(wavelength_m: float, z1_m: float, z2_m: float,
                      object_half_m: float, source_half_m: float,
                      u1_m: float) -> float:
    """Max phase rate of the two test-arm chirps along the object coordinate."""
    first = (object_half_m + source_half_m) / z1_m
    second = (object_half_m + abs(u1_m)) / z2_m
    return 2.0 * math.pi * (first + second) / wavelength_m


def samples_for(half_extent_m: float, phase_rate: float, limit_rad: float = None,
                oversampling: float = 1.0, min_samples: int = None) -> int:
    """Odd sample count (0 and both ends on the grid) keeping phase_rate·dx under limit_rad/oversampling."""
    limit = nyquist_limit_rad() if limit_rad is None else limit_rad
    floor = GRID_POLICY["min_samples"] if min_samples is None else min_samples
    intervals = math.ceil(2.0 * half_extent_m * phase_rate * oversampling / limit)
    intervals = max(intervals, floor)
    intervals += intervals % 2
    return intervals + 1
