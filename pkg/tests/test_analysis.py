"""Tests for visibility, sweeps and the Fourier-limit comparison"""

import logging
from dataclasses import replace

import numpy as np
import pytest

from optics.errors import DegenerateObjectError
from optics.propagation import free_space_response, test_arm_response_exact
from optics.scene import MM, TransmissionMask, paper_default_scene
from simulation.analysis import (
    analytic_multislit_transform,
    analytic_profile,
    fluctuation_curves,
    fourier_limit_distance,
    fringe_period,
    is_distorted,
    sweep_slit_number,
    sweep_source_size,
    sweep_width_ratio,
    visibility,
)
from simulation.correlation import CorrelationProfile, ProfileCondition, full_profile, source_diagonal_weight

WIDTH_RATIOS = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]


@pytest.fixture(scope="module")
def default_scene():
    return paper_default_scene()


@pytest.fixture(scope="module")
def default_profile(default_scene):
    return full_profile(default_scene)


@pytest.fixture(scope="module")
def slit_sweep(default_scene):
    return sweep_slit_number(default_scene, [1, 2, 3, 4, 5])


def _profile(u, delta, background=1.0, condition=ProfileCondition.OK):
    u = np.asarray(u, dtype=float)
    delta = np.asarray(delta, dtype=float)
    ref = np.full_like(u, background)
    return CorrelationProfile(u2_positions=u, mean_intensity_test=1.0, mean_intensity_ref=ref,
                              delta_g2=delta, g2=ref + delta, condition=condition)


class TestVisibility:
    """Test V = max dG2 / max G2"""

    def test_full_correlation_is_half(self):
        result = visibility(_profile([-1.0, 0.0, 1.0], [0.0, 1.0, 0.0]))
        assert result.visibility == 0.5
        assert result.peak_position_m == 0.0
        assert result.maxima_coincide

    def test_tie_prefers_smallest_offset(self):
        result = visibility(_profile([-1.0, 0.5, 2.0], [0.3, 0.0, 0.3]))
        assert result.peak_position_m == -1.0

    def test_tie_prefers_positive_side(self):
        result = visibility(_profile([-1.0, 0.0, 1.0], [0.3, 0.0, 0.3]))
        assert result.peak_position_m == 1.0

    def test_zero_correlation(self):
        with pytest.raises(DegenerateObjectError):
            visibility(_profile([-1.0, 0.0, 1.0], [0.0, 0.0, 0.0]))

    def test_degenerate_profile(self):
        with pytest.raises(DegenerateObjectError):
            visibility(_profile([0.0, 1.0], [0.0, 1.0], condition=ProfileCondition.DEGENERATE_OBJECT))

    def test_non_coincident_maxima_warn(self, caplog):
        profile = CorrelationProfile(
            u2_positions=np.array([-1.0, 0.0, 1.0]), mean_intensity_test=1.0,
            mean_intensity_ref=np.array([5.0, 1.0, 1.0]), delta_g2=np.array([0.0, 0.5, 0.0]),
            g2=np.array([5.0, 1.5, 1.0]),
        )
        with caplog.at_level(logging.WARNING, logger="simulation.analysis"):
            result = visibility(profile)
        assert result.visibility == pytest.approx(0.1)
        assert not result.maxima_coincide
        assert "do not coincide" in caplog.text

    def test_default_within_thermal_bound(self, default_profile):
        result = visibility(default_profile)
        assert 0.0 < result.visibility <= 0.5
        assert result.peak_position_m == 0.0
        assert result.maxima_coincide

    def test_default_matches_direct_sums(self, default_scene, default_profile):
        layout = default_scene.layout
        x = default_scene.source_grid.positions
        dx = default_scene.source_grid.spacing
        u = default_scene.detector_grid.positions
        s = source_diagonal_weight(default_scene.source, x)
        h1 = test_arm_response_exact(default_scene, x, 0.0)
        h2 = free_space_response(layout, x[:, None], u[None, :], layout.z_m)

        i1 = np.sum(s * np.abs(h1) ** 2) * dx
        i2 = np.sum(s[:, None] * np.abs(h2) ** 2, axis=0) * dx
        dg2 = np.abs(np.sum((s * h1)[:, None] * np.conj(h2), axis=0) * dx) ** 2
        expected = dg2.max() / (i1 * i2 + dg2).max()
        assert visibility(default_profile).visibility == pytest.approx(expected, rel=1e-10)


class TestAnalyticTransform:
    """Test the closed-form multi-slit spectrum"""

    def test_zero_frequency(self):
        mask = TransmissionMask(3, 0.075 * MM, 0.15 * MM, amplitude=0.5)
        value = analytic_multislit_transform(mask, 0.0)
        assert value == pytest.approx((3 * 0.075 * MM * 0.5) ** 2, rel=1e-12)

    def test_double_slit_dark_fringe(self):
        mask = TransmissionMask(2, 0.075 * MM, 0.15 * MM)
        peak = analytic_multislit_transform(mask, 0.0)
        assert analytic_multislit_transform(mask, 1.0 / (2 * mask.slit_pitch_m)) < 1e-20 * peak

    def test_principal_maximum_limit(self):
        mask = TransmissionMask(2, 0.075 * MM, 0.15 * MM)
        f = 1.0 / mask.slit_pitch_m
        expected = (2 * mask.slit_width_m * 2 / np.pi) ** 2
        assert analytic_multislit_transform(mask, f) == pytest.approx(expected, rel=1e-9)
        assert analytic_multislit_transform(mask, f * (1 + 1e-9)) == pytest.approx(expected, rel=1e-5)

    def test_single_slit_is_envelope(self):
        mask = TransmissionMask(1, 0.075 * MM, 0.15 * MM)
        f = np.linspace(-2e4, 2e4, 41)
        np.testing.assert_allclose(analytic_multislit_transform(mask, f),
                                   (mask.slit_width_m * np.sinc(mask.slit_width_m * f)) ** 2, rtol=1e-12)

    def test_profile_is_even(self, default_scene):
        values = analytic_profile(default_scene)
        np.testing.assert_allclose(values, values[::-1], rtol=1e-9, atol=1e-12 * values.max())


class TestStructure:
    """Test fringe spacing and distortion checks"""

    def test_fringe_period(self, default_scene, default_profile):
        layout = default_scene.layout
        expected = layout.wavelength_m * layout.z2_m / default_scene.mask.slit_pitch_m
        assert fringe_period(default_profile) == pytest.approx(expected, rel=0.02)

    def test_fringe_period_needs_minima(self):
        u = np.linspace(-0.1, 0.1, 21)
        with pytest.raises(ValueError, match="dark fringe"):
            fringe_period(_profile(u, np.exp(-u ** 2)))

    def test_default_not_distorted(self, default_scene, default_profile):
        assert not is_distorted(default_profile, default_scene)

    def test_single_bump_is_distorted(self, default_scene):
        u = default_scene.detector_grid.positions
        assert is_distorted(_profile(u, np.exp(-(u / (0.5 * MM)) ** 2)), default_scene)

    def test_analytic_curve_has_zero_distance(self, default_scene):
        u = default_scene.detector_grid.positions
        profile = _profile(u, analytic_profile(default_scene))
        assert fourier_limit_distance(profile, default_scene) == pytest.approx(0.0, abs=1e-15)


class TestSweeps:
    """Test visibility sweeps"""

    def test_single_point_matches_direct(self, default_scene, default_profile):
        result = sweep_slit_number(default_scene, [2])
        assert result.visibilities[0] == pytest.approx(visibility(default_profile).visibility, rel=1e-12)

    def test_visibility_rises_with_slit_number(self, slit_sweep):
        v = slit_sweep.visibilities
        assert slit_sweep.parameter_values == [1, 2, 3, 4, 5]
        assert all(b > a for a, b in zip(v, v[1:]))
        assert all(0.0 < x <= 0.5 for x in v)

    def test_visibility_rises_with_width(self, default_scene):
        v = sweep_width_ratio(default_scene, WIDTH_RATIOS).visibilities
        assert all(b >= a - 1e-12 for a, b in zip(v, v[1:]))
        assert all(0.0 < x <= 0.5 for x in v)

    def test_width_change_against_slit_change(self, default_scene, slit_sweep):
        widths = sweep_width_ratio(default_scene, WIDTH_RATIOS)
        assert widths.excluded_points == []
        assert not {2, 5} & set(slit_sweep.excluded_points)
        width_change = widths.visibilities[-1] - widths.visibilities[0]
        slit_change = slit_sweep.visibilities[4] - slit_sweep.visibilities[1]
        assert width_change == pytest.approx(0.0999, abs=1e-3)
        assert slit_change == pytest.approx(0.1070, abs=1e-3)
        assert width_change < slit_change

    def test_width_half_matches_double_slit(self, default_scene, slit_sweep):
        v = sweep_width_ratio(default_scene, [0.5]).visibilities[0]
        assert v == pytest.approx(slit_sweep.visibilities[1], rel=1e-12)

    def test_input_order_kept(self, default_scene, slit_sweep):
        result = sweep_slit_number(default_scene, [3, 2])
        assert result.parameter_values == [3, 2]
        assert result.visibilities == pytest.approx([slit_sweep.visibilities[2], slit_sweep.visibilities[1]],
                                                    rel=1e-12)

    def test_keep_profiles(self, default_scene):
        result = sweep_slit_number(default_scene, [2, 3], keep_profiles=True)
        assert len(result.profiles) == 2
        assert result.profiles[1].u2_positions.shape == default_scene.detector_grid.positions.shape

    def test_rows(self, default_scene):
        rows = sweep_width_ratio(default_scene, [0.3]).to_rows()
        assert rows[0]["parameter_value"] == 0.3
        assert rows[0]["excluded_flag"] is False

    def test_workers_give_same_answer(self, default_scene):
        serial = sweep_slit_number(default_scene, [2, 3])
        parallel = sweep_slit_number(default_scene, [2, 3], n_jobs=2)
        assert parallel.visibilities == serial.visibilities

    def test_source_sweep(self, default_scene):
        result = sweep_source_size(default_scene, [0.5 * MM, 2 * MM])
        assert result.parameter_name == "source_size_m"
        assert result.parameter_values == [0.5 * MM, 2 * MM]
        assert all(0.0 < v <= 0.5 for v in result.visibilities)

    @pytest.mark.parametrize("values", [[], [2, 0], [2, -1], [True], [2.5]])
    def test_bad_slit_counts(self, default_scene, values):
        with pytest.raises(ValueError):
            sweep_slit_number(default_scene, values)

    def test_bad_slit_count_named(self, default_scene):
        with pytest.raises(ValueError, match="got 0"):
            sweep_slit_number(default_scene, [2, 0])

    @pytest.mark.parametrize("values", [[], [0.0], [1.0], [0.5, 1.2]])
    def test_bad_width_ratios(self, default_scene, values):
        with pytest.raises(ValueError):
            sweep_width_ratio(default_scene, values)

    @pytest.mark.parametrize("values", [[], [0.0], [-1 * MM]])
    def test_bad_source_sizes(self, default_scene, values):
        with pytest.raises(ValueError):
            sweep_source_size(default_scene, values)

    def test_resolution_robust(self, default_scene, default_profile):
        fine = full_profile(paper_default_scene(resolution_scale=2.0))
        v = visibility(default_profile).visibility
        assert visibility(fine).visibility == pytest.approx(v, rel=1e-3)


class TestFluctuationCurves:
    """Test background-normalized dG2 curves"""

    def test_peak_is_v_over_one_minus_v(self, default_scene):
        for curve in fluctuation_curves(default_scene, slit_counts=[2, 3]):
            v = curve.visibility
            assert curve.normalized_delta_g2.max() == pytest.approx(v / (1 - v), rel=1e-10)
            assert curve.normalized_delta_g2.max() <= 1.0 + 1e-9

    def test_double_slit_shared(self, default_scene):
        by_count = fluctuation_curves(default_scene, slit_counts=[2])[0]
        by_width = fluctuation_curves(default_scene, width_ratios=[0.5])[0]
        np.testing.assert_allclose(by_count.normalized_delta_g2, by_width.normalized_delta_g2, rtol=1e-12,
                                   atol=1e-15)

    def test_exactly_one_family(self, default_scene):
        with pytest.raises(ValueError):
            fluctuation_curves(default_scene)
        with pytest.raises(ValueError):
            fluctuation_curves(default_scene, slit_counts=[2], width_ratios=[0.5])


@pytest.mark.slow
class TestLargeSourceLimit:
    """Test convergence to |T|^2 and the thermal bound over the parameter space"""

    def test_fourier_limit_reached(self):
        for n in (2, 3):
            scene = paper_default_scene(slit_count=n, a_mm=10.0)
            assert fourier_limit_distance(full_profile(scene), scene) < 0.05

    def test_fourier_limit_monotone(self):
        distances = []
        for a in (1.0, 2.0, 5.0, 10.0):
            scene = paper_default_scene(a_mm=a)
            distances.append(fourier_limit_distance(full_profile(scene), scene))
        assert all(b < a for a, b in zip(distances, distances[1:]))

    def test_thermal_bound_everywhere(self, default_scene):
        for a in (0.5 * MM, 1 * MM, 2 * MM):
            base = replace(default_scene, source=replace(default_scene.source, a_m=a))
            for n in range(1, 6):
                scene = replace(base, mask=replace(base.mask, slit_count=n))
                v = sweep_width_ratio(scene, WIDTH_RATIOS).visibilities
                assert all(0.0 < x <= 0.5 + 1e-9 for x in v)
