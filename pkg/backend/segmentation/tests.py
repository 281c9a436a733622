"""
Tests for arc curves, CAC and regime extraction.
Run with: python manage.py test segmentation
"""
import numpy as np
from django.test import SimpleTestCase
from hypothesis import HealthCheck, given, settings, strategies as st

from timeseries.profile import MatrixProfile, matrix_profile
from timeseries.series import Series

from .arcs import ArcCurve, CorrectedArcCurve, arc_curve, corrected_arc_curve, ideal_crossings
from .exceptions import InvalidParameter, InvalidProfile
from .regimes import extract_regimes, locate_boundary
from .runner import SegmentationParams, segment_series

PROPERTY_SETTINGS = settings(
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)


def _profile_from_indices(indices, m=4, radius=0, max_offset=None):
    indices = np.asarray(indices, dtype=np.int64)
    return MatrixProfile(m=m, distances=np.zeros(indices.size), indices=indices,
                         exclusion_radius=radius, max_offset=max_offset)


def _direct_crossings(indices):
    length = len(indices)
    out = np.zeros(length, dtype=np.int64)
    for k in range(length):
        for i, j in enumerate(indices):
            if j >= 0 and min(i, j) < k < max(i, j):
                out[k] += 1
    return out


def two_regime_series(seed, noise=0.05):
    rng = np.random.default_rng(seed)
    t = np.arange(300)
    first = np.sin(2 * np.pi * t / 20 + rng.uniform(0, 2 * np.pi))
    second = np.sin(2 * np.pi * t / 50 + rng.uniform(0, 2 * np.pi))
    values = np.concatenate([first, second]) + rng.normal(scale=noise, size=600)
    return Series(f"two-regime-{seed}", values)


class ArcCurveTest(SimpleTestCase):
    def test_adjacent_mutual_pairs_have_no_interior(self):
        arcs = arc_curve(_profile_from_indices([1, 0, 3, 2]))
        np.testing.assert_array_equal(arcs.raw_crossings, [0, 0, 0, 0])

    def test_hand_counted_arcs(self):
        arcs = arc_curve(_profile_from_indices([2, 3, 0, 1]))
        np.testing.assert_array_equal(arcs.raw_crossings, [0, 2, 2, 0])

    def test_halves_do_not_span_midpoint(self):
        left = [3, 4, 0, 1, 2]
        right = [8, 9, 5, 6, 7]
        arcs = arc_curve(_profile_from_indices(left + right))
        self.assertEqual(arcs.raw_crossings[5], 0)

    def test_matches_direct_count(self):
        rng = np.random.default_rng(31)
        indices = rng.integers(0, 100, size=100)
        indices[rng.random(100) < 0.1] = -1
        arcs = arc_curve(_profile_from_indices(indices))
        np.testing.assert_array_equal(arcs.raw_crossings, _direct_crossings(indices))

    def test_total_conservation(self):
        rng = np.random.default_rng(32)
        indices = rng.integers(0, 80, size=80)
        arcs = arc_curve(_profile_from_indices(indices))
        positions = np.arange(80)
        lengths = np.abs(indices - positions)
        expected = int(np.sum(np.maximum(lengths - 1, 0)))
        self.assertEqual(int(arcs.raw_crossings.sum()), expected)
        self.assertTrue(np.all(arcs.raw_crossings <= 80))

    def test_rejects_out_of_range_index(self):
        with self.assertRaises(InvalidProfile):
            arc_curve(_profile_from_indices([1, 0, 7]))


class CorrectedArcCurveTest(SimpleTestCase):
    def _arcs(self, raw, m=0):
        return ArcCurve(raw_crossings=np.asarray(raw, dtype=np.int64), m=m, exclusion_radius=0)

    def test_ideal_count_gives_one(self):
        raw = np.zeros(10, dtype=np.int64)
        raw[5] = 5  # 2·5·5/10
        cac = corrected_arc_curve(self._arcs(raw), edge_exclusion=0)
        self.assertEqual(cac.values[5], 1.0)

    def test_zero_crossings_give_zero(self):
        raw = np.full(10, 4, dtype=np.int64)
        raw[5] = 0
        cac = corrected_arc_curve(self._arcs(raw), edge_exclusion=0)
        self.assertEqual(cac.values[5], 0.0)

    def test_edges_pinned(self):
        cac = corrected_arc_curve(self._arcs(np.zeros(40, dtype=np.int64), m=5))
        np.testing.assert_array_equal(cac.values[:5], 1.0)
        np.testing.assert_array_equal(cac.values[-5:], 1.0)
        self.assertEqual(cac.values[20], 0.0)
        self.assertTrue(np.all((cac.values >= 0) & (cac.values <= 1)))

    def test_too_short(self):
        with self.assertRaises(InvalidProfile):
            corrected_arc_curve(self._arcs([0, 0]))

    def test_parabola_reversal_symmetry(self):
        length = 57
        ideal = ideal_crossings(length)
        for i in range(1, length):
            self.assertAlmostEqual(ideal[i], ideal[length - i])

    def test_horizon_ideal_matches_enumeration(self):
        length, radius, horizon = 40, 3, 10
        expected = np.zeros(length)
        for i in range(length):
            partners = [j for j in range(length) if radius < abs(j - i) <= horizon]
            for j in partners:
                for k in range(min(i, j) + 1, max(i, j)):
                    expected[k] += 1.0 / len(partners)
        np.testing.assert_allclose(ideal_crossings(length, radius, horizon), expected, atol=1e-12)

    def test_two_regime_minimum_near_boundary(self):
        hits = 0
        for seed in range(100):
            profile = matrix_profile(two_regime_series(seed), 25)
            cac = corrected_arc_curve(arc_curve(profile))
            if abs(int(np.argmin(cac.values)) - 300) <= 25:
                hits += 1
        self.assertGreaterEqual(hits, 95)


class ExtractRegimesTest(SimpleTestCase):
    def _cac(self, values, m=25):
        return CorrectedArcCurve(values=np.asarray(values, dtype=float), edge_exclusion=m, m=m)

    def test_flat_curve_yields_nothing(self):
        self.assertEqual(extract_regimes(self._cac(np.ones(500)), 0.45, 50), [])

    def test_single_dip(self):
        values = np.ones(600)
        values[300] = 0.1
        changes = extract_regimes(self._cac(values), 0.45, 50)
        self.assertEqual(len(changes), 1)
        self.assertEqual(changes[0].position, 300)
        self.assertAlmostEqual(changes[0].salience, 0.9)

    def test_parameter_validation(self):
        with self.assertRaises(InvalidParameter):
            extract_regimes(self._cac(np.ones(10)), 1.0, 5)
        with self.assertRaises(InvalidParameter):
            extract_regimes(self._cac(np.ones(10)), 0.5, 0)

    @PROPERTY_SETTINGS
    @given(
        values=st.lists(st.floats(0.0, 1.0), min_size=3, max_size=300),
        threshold=st.floats(0.05, 0.95),
        exclusion=st.integers(1, 60),
    )
    def test_selected_points_are_low_and_separated(self, values, threshold, exclusion):
        changes = extract_regimes(self._cac(values, m=1), threshold, exclusion)
        positions = [c.position for c in changes]
        self.assertEqual(positions, sorted(positions))
        for c in changes:
            self.assertLess(values[c.position], threshold)
            self.assertGreaterEqual(c.salience, 1 - threshold)
        for a, b in zip(positions, positions[1:]):
            self.assertGreaterEqual(b - a, exclusion)

    def test_homogeneous_noise_has_no_regimes(self):
        for seed in range(5):
            values = np.random.default_rng(seed).normal(size=500)
            self.assertEqual(segment_series(Series("noise", values), SegmentationParams()), [])

    def test_constant_offset_keeps_positions(self):
        series = two_regime_series(3)
        moved = series.with_values(series.values + 250.0)
        params = SegmentationParams()
        self.assertEqual(
            [c.position for c in segment_series(series, params)],
            [c.position for c in segment_series(moved, params)],
        )


class BoundaryLocationTest(SimpleTestCase):
    def test_step_into_flat_floor(self):
        rng = np.random.default_rng(2)
        values = rng.normal(size=200)
        values[120:] = -5.0
        self.assertEqual(locate_boundary(values, 105, 25), 120)

    def test_outage_episode_with_horizon(self):
        rng = np.random.default_rng(17)
        t = np.arange(300)
        values = np.sin(2 * np.pi * t / 37) + rng.normal(scale=0.2, size=300)
        values[100:160] = -3.0
        series = Series("port", values, start_timestamp=0)
        changes = segment_series(series, SegmentationParams(m=25, arc_horizon=50))
        stamps = [c.timestamp for c in changes]
        self.assertTrue(any(98 <= s <= 110 for s in stamps), stamps)
        self.assertTrue(any(158 <= s <= 170 for s in stamps), stamps)
