"""Tests for the Monte Carlo speckle oracle"""

import numpy as np
import pytest

from optics.errors import DimensionMismatchError, OracleError
from optics.fields import SampledField
from optics.propagation import build_kernels
from optics.scene import MM, Grid1D, SourceModel, paper_default_scene
from simulation.correlation import full_profile, source_diagonal_weight
from simulation.speckle_oracle import (
    ORACLE_DEFAULTS,
    SpeckleEnsembleSpec,
    batch_bounds,
    coarse_oracle_scene,
    compare_with_deterministic,
    draw_field,
    estimate_correlations,
    gaussian_moment_residual,
    propagate_realization,
)


@pytest.fixture(scope="module")
def small_scene():
    return coarse_oracle_scene(paper_default_scene(), source_points=201, detector_points=21)


@pytest.fixture(scope="module")
def small_kernels(small_scene):
    h1, h2 = build_kernels(small_scene, check_sampling=False)
    return h1, h2.entries


def _spec(scene, count, seed=7):
    return SpeckleEnsembleSpec(count, seed, scene.source_grid, scene.source)


class TestSpeckleEnsembleSpec:
    """Test ensemble validation"""

    def test_valid(self, small_scene):
        spec = _spec(small_scene, 100)
        assert spec.realization_count == 100

    def test_too_few_realizations(self, small_scene):
        with pytest.raises(OracleError):
            _spec(small_scene, 1)

    @pytest.mark.parametrize("seed", [-1, 2 ** 64])
    def test_seed_range(self, small_scene, seed):
        with pytest.raises(OracleError, match="seed"):
            _spec(small_scene, 100, seed=seed)

    def test_largest_seed(self, small_scene):
        spec = _spec(small_scene, 10, seed=2 ** 64 - 1)
        assert len(draw_field(spec, 9)) == small_scene.source_grid.sample_count

    def test_grid_must_cover_envelope(self):
        with pytest.raises(OracleError, match="4a"):
            SpeckleEnsembleSpec(100, 0, Grid1D(2 * MM, 101), SourceModel(1 * MM))

    def test_oracle_error_is_value_error(self, small_scene):
        with pytest.raises(ValueError):
            _spec(small_scene, 0)


class TestDrawField:
    """Test per-realization source fields"""

    def test_reproducible(self, small_scene):
        spec = _spec(small_scene, 50)
        np.testing.assert_array_equal(draw_field(spec, 17).values, draw_field(spec, 17).values)

    def test_independent_of_ensemble_size(self, small_scene):
        np.testing.assert_array_equal(draw_field(_spec(small_scene, 50), 3).values,
                                      draw_field(_spec(small_scene, 5000), 3).values)

    def test_streams_differ(self, small_scene):
        spec = _spec(small_scene, 50)
        assert not np.array_equal(draw_field(spec, 0).values, draw_field(spec, 1).values)
        assert not np.array_equal(draw_field(spec, 0).values, draw_field(_spec(small_scene, 50, seed=8), 0).values)

    def test_index_out_of_range(self, small_scene):
        spec = _spec(small_scene, 50)
        with pytest.raises(OracleError):
            draw_field(spec, 50)
        with pytest.raises(OracleError):
            draw_field(spec, -1)

    def test_second_order_statistics(self):
        source = SourceModel(1 * MM)
        grid = Grid1D(4 * MM, 33)
        count = 10_000
        spec = SpeckleEnsembleSpec(count, 11, grid, source)
        fields = np.stack([draw_field(spec, i).values for i in range(count)])
        variance = source_diagonal_weight(source, grid.positions) / grid.spacing
        gate = 5.0 / np.sqrt(count)

        mean_field = np.mean(fields, axis=0)
        assert np.all(np.abs(mean_field) < 4.0 * np.sqrt(variance / count))

        power = np.mean(np.abs(fields) ** 2, axis=0) / variance
        assert np.all(np.abs(power - 1.0) < gate)

        scale = np.sqrt(variance)
        cross = np.mean(fields[:, 10] * np.conj(fields[:, 20])) / (scale[10] * scale[20])
        assert abs(cross) < gate
        pseudo = np.mean(fields ** 2, axis=0) / variance
        assert np.all(np.abs(pseudo) < gate)


class TestPropagateRealization:
    """Test single-realization intensities"""

    def test_dark_field(self, small_scene, small_kernels):
        h1, h2 = small_kernels
        field = SampledField(small_scene.source_grid, np.zeros(small_scene.source_grid.sample_count, dtype=complex))
        i1, i2 = propagate_realization(field, h1, h2, small_scene.source_grid.spacing)
        assert i1 == 0.0
        np.testing.assert_array_equal(i2, 0.0)

    def test_quadratic_in_field(self, small_scene, small_kernels):
        h1, h2 = small_kernels
        dx = small_scene.source_grid.spacing
        field = draw_field(_spec(small_scene, 10), 4)
        doubled = SampledField(field.grid, 2.0 * field.values)
        i1, i2 = propagate_realization(field, h1, h2, dx)
        j1, j2 = propagate_realization(doubled, h1, h2, dx)
        assert j1 == pytest.approx(4.0 * i1, rel=1e-14)
        np.testing.assert_allclose(j2, 4.0 * i2, rtol=1e-14)

    def test_point_source_is_flat(self, small_scene, small_kernels):
        h1, h2 = small_kernels
        grid = small_scene.source_grid
        layout = small_scene.layout
        values = np.zeros(grid.sample_count, dtype=complex)
        values[40] = 1.0
        _, i2 = propagate_realization(SampledField(grid, values), h1, h2, grid.spacing)
        np.testing.assert_allclose(i2, (grid.spacing / (layout.wavelength_m * layout.z_m)) ** 2, rtol=1e-12)

    def test_dimension_mismatch(self, small_scene, small_kernels):
        h1, h2 = small_kernels
        field = SampledField(Grid1D(4 * MM, 11), np.ones(11))
        with pytest.raises(DimensionMismatchError):
            propagate_realization(field, h1, h2, 1.0)


class TestBatchBounds:
    """Test batch partitioning"""

    def test_default_batches(self):
        bounds = batch_bounds(20_000)
        assert len(bounds) == ORACLE_DEFAULTS["batches"]
        assert bounds[0] == (0, 400)
        assert bounds[-1] == (19_600, 20_000)

    def test_contiguous(self):
        bounds = batch_bounds(1003, 7)
        assert bounds[0][0] == 0
        assert bounds[-1][1] == 1003
        assert all(a[1] == b[0] for a, b in zip(bounds[:-1], bounds[1:]))

    def test_at_least_two_per_batch(self):
        bounds = batch_bounds(10)
        assert len(bounds) == 5
        assert all(b - a == 2 for a, b in bounds)

    def test_single_batch(self):
        assert batch_bounds(3) == [(0, 3)]


class TestEstimateCorrelations:
    """Test ensemble moments against direct sums"""

    def test_matches_direct_moments(self, small_scene, small_kernels):
        h1, h2 = small_kernels
        dx = small_scene.source_grid.spacing
        spec = _spec(small_scene, 40)
        estimate = estimate_correlations(spec, small_scene)

        samples = [propagate_realization(draw_field(spec, i), h1, h2, dx) for i in range(40)]
        i1 = np.array([s[0] for s in samples])
        i2 = np.stack([s[1] for s in samples])

        assert estimate.batch_count == 20
        assert estimate.realization_count == 40
        assert estimate.mean_i1 == pytest.approx(i1.mean(), rel=1e-12)
        np.testing.assert_allclose(estimate.mean_i2_per_u2, i2.mean(axis=0), rtol=1e-12)
        covariance = np.array([np.cov(i1, i2[:, m])[0, 1] for m in range(i2.shape[1])])
        np.testing.assert_allclose(estimate.delta_g2_per_u2, covariance, rtol=1e-9,
                                   atol=1e-9 * np.max(np.abs(covariance)))
        assert np.all(estimate.delta_g2_stderr > 0)

    def test_reproducible(self, small_scene):
        first = estimate_correlations(_spec(small_scene, 400), small_scene)
        second = estimate_correlations(_spec(small_scene, 400), small_scene)
        np.testing.assert_array_equal(first.delta_g2_per_u2, second.delta_g2_per_u2)
        np.testing.assert_array_equal(first.delta_g2_stderr, second.delta_g2_stderr)

    def test_worker_count_invariant(self, small_scene):
        serial = estimate_correlations(_spec(small_scene, 400), small_scene, n_jobs=1)
        parallel = estimate_correlations(_spec(small_scene, 400), small_scene, n_jobs=2)
        np.testing.assert_array_equal(serial.delta_g2_per_u2, parallel.delta_g2_per_u2)
        assert serial.mean_i1 == parallel.mean_i1

    def test_seed_changes_estimate(self, small_scene):
        first = estimate_correlations(_spec(small_scene, 400, seed=1), small_scene)
        second = estimate_correlations(_spec(small_scene, 400, seed=2), small_scene)
        assert not np.array_equal(first.delta_g2_per_u2, second.delta_g2_per_u2)

    def test_single_batch_rejected(self, small_scene):
        with pytest.raises(OracleError):
            estimate_correlations(_spec(small_scene, 3), small_scene)

    def test_grid_mismatch(self, small_scene):
        spec = SpeckleEnsembleSpec(100, 0, Grid1D(4 * MM, 101), small_scene.source)
        with pytest.raises(DimensionMismatchError):
            estimate_correlations(spec, small_scene)

    def test_compare_shape_mismatch(self, small_scene):
        estimate = estimate_correlations(_spec(small_scene, 100), small_scene)
        profile = full_profile(coarse_oracle_scene(small_scene, 201, 31), check_sampling=False)
        with pytest.raises(DimensionMismatchError):
            compare_with_deterministic(estimate, profile)

    def test_coarse_scene_defaults(self):
        scene = coarse_oracle_scene(paper_default_scene())
        assert scene.source_grid.sample_count == ORACLE_DEFAULTS["coarse_source_points"]
        assert scene.detector_grid.sample_count == ORACLE_DEFAULTS["coarse_detector_points"]


@pytest.mark.slow
class TestOracleAgreement:
    """Test Monte Carlo against the deterministic correlation"""

    @pytest.fixture(scope="class")
    def coarse(self):
        return coarse_oracle_scene(paper_default_scene())

    @pytest.fixture(scope="class")
    def estimate(self, coarse):
        spec = SpeckleEnsembleSpec(ORACLE_DEFAULTS["realizations"], 2024, coarse.source_grid, coarse.source)
        return estimate_correlations(spec, coarse)

    def test_delta_g2_within_gate(self, coarse, estimate):
        comparison = compare_with_deterministic(estimate, full_profile(coarse, check_sampling=False))
        assert comparison.fraction_within_gate >= ORACLE_DEFAULTS["required_fraction"]

    def test_mean_intensities(self, coarse, estimate):
        profile = full_profile(coarse, check_sampling=False)
        assert abs(estimate.mean_i1 - profile.mean_intensity_test) < 5 * estimate.mean_i1_stderr
        z = (estimate.mean_i2_per_u2 - profile.mean_intensity_ref) / estimate.mean_i2_stderr
        assert np.mean(np.abs(z) <= 5.0) >= 0.95

    def test_gaussian_moment_factorization(self, estimate):
        z = gaussian_moment_residual(estimate)
        assert np.mean(np.abs(z) <= ORACLE_DEFAULTS["z_gate"]) >= ORACLE_DEFAULTS["required_fraction"]

    def test_standard_error_scaling(self, small_scene):
        half = estimate_correlations(_spec(small_scene, 10_000, seed=5), small_scene, batches=500)
        full = estimate_correlations(_spec(small_scene, 20_000, seed=5), small_scene, batches=500)
        ratio = np.median(full.delta_g2_stderr) / np.median(half.delta_g2_stderr)
        assert ratio == pytest.approx(1.0 / np.sqrt(2.0), rel=0.15)
