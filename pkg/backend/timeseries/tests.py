"""
Tests for the numerical kernels.
Run with: python manage.py test timeseries
"""
import math
from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from hypothesis import HealthCheck, given, settings, strategies as st

from .exceptions import IndexOutOfRange, InvalidSeries, InvalidWindow, SeriesTooShort
from .profile import (
    distance_profile,
    matrix_profile,
    matrix_profile_bruteforce,
    top_discords,
)
from .series import Series
from .stats import sliding_stats

PROPERTY_SETTINGS = settings(
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)


def _direct_stats(values, m):
    windows = np.array([values[i:i + m] for i in range(len(values) - m + 1)])
    return windows.mean(axis=1), windows.std(axis=1)


def _explicit_distances(values, m, i):
    """z-normalize every window explicitly, then take Euclidean distances to window i."""
    l = len(values) - m + 1
    z = []
    for j in range(l):
        w = np.asarray(values[j:j + m], dtype=float)
        s = w.std()
        z.append(np.zeros(m) if s < 1e-12 else (w - w.mean()) / s)
    z = np.array(z)
    return np.linalg.norm(z - z[i], axis=1)


def _runner_up_gaps(values, m, radius, max_offset=None):
    """Gap between the best and second-best admissible neighbour of every window."""
    values = np.asarray(values, dtype=float)
    l = len(values) - m + 1
    gaps = np.full(l, np.inf)
    stats = sliding_stats(values, m)
    for i in range(l):
        d = distance_profile(values, i, m, stats).copy()
        d[max(0, i - radius):i + radius + 1] = np.inf
        if max_offset is not None:
            d[:max(0, i - max_offset)] = np.inf
            d[i + max_offset + 1:] = np.inf
        finite = np.sort(d[np.isfinite(d)])
        if finite.size >= 2:
            gaps[i] = finite[1] - finite[0]
    return gaps


class SeriesTypeTest(SimpleTestCase):
    def test_values_are_read_only_copies(self):
        raw = np.array([1.0, 2.0, 3.0])
        s = Series("s1", raw)
        raw[0] = 99.0
        self.assertEqual(s.values[0], 1.0)
        with self.assertRaises(ValueError):
            s.values[0] = 5.0

    def test_rejects_non_finite_values(self):
        with self.assertRaises(InvalidSeries):
            Series("s1", [1.0, float("nan"), 2.0])

    def test_rejects_non_positive_interval(self):
        with self.assertRaises(InvalidSeries):
            Series("s1", [1.0, 2.0], sampling_interval=0)

    def test_window_keeps_timeline(self):
        s = Series("s1", np.arange(10.0), start_timestamp=100)
        w = s.window(3, 7)
        self.assertEqual(w.start_timestamp, 103)
        self.assertEqual(len(w), 4)
        self.assertEqual(w.source_id, "s1")


class SlidingStatsTest(SimpleTestCase):
    def test_constant_series(self):
        st_ = sliding_stats(Series("c", [1, 1, 1, 1]), 2)
        np.testing.assert_array_equal(st_.means, [1, 1, 1])
        np.testing.assert_array_equal(st_.stds, [0, 0, 0])

    def test_arithmetic_by_hand(self):
        st_ = sliding_stats(Series("a", [0, 1, 2, 3]), 2)
        np.testing.assert_allclose(st_.means, [0.5, 1.5, 2.5], rtol=1e-12)
        np.testing.assert_allclose(st_.stds, [0.5, 0.5, 0.5], rtol=1e-12)

    def test_matches_direct_recomputation(self):
        rng = np.random.default_rng(11)
        values = rng.normal(size=128)
        st_ = sliding_stats(values, 8)
        means, stds = _direct_stats(values, 8)
        np.testing.assert_allclose(st_.means, means, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(st_.stds, stds, rtol=1e-9)

    def test_large_offset_small_variance(self):
        rng = np.random.default_rng(3)
        values = 1e8 + rng.normal(scale=1e-3, size=200)
        st_ = sliding_stats(values, 16)
        means, stds = _direct_stats(values, 16)
        np.testing.assert_allclose(st_.means, means, rtol=1e-9)
        np.testing.assert_allclose(st_.stds, stds, rtol=1e-6)
        self.assertTrue(np.all(st_.stds >= 0))

    def test_errors(self):
        with self.assertRaises(SeriesTooShort):
            sliding_stats([1.0, 2.0], 3)
        with self.assertRaises(InvalidWindow):
            sliding_stats([1.0, 2.0, 3.0], 1)


class DistanceProfileTest(SimpleTestCase):
    def test_linear_ramp_is_all_zero(self):
        values = np.arange(32.0)
        d = distance_profile(values, 0, 4, sliding_stats(values, 4))
        np.testing.assert_allclose(d, 0.0, atol=1e-10)

    def test_self_distance_is_zero(self):
        values = np.random.default_rng(5).normal(size=64)
        d = distance_profile(values, 17, 8, sliding_stats(values, 8))
        self.assertAlmostEqual(d[17], 0.0, places=12)

    def test_matches_explicit_znormalization(self):
        values = np.random.default_rng(21).normal(size=128)
        stats = sliding_stats(values, 8)
        for i in (0, 40, 120):
            np.testing.assert_allclose(
                distance_profile(values, i, 8, stats),
                _explicit_distances(values, 8, i),
                atol=1e-8,
            )

    def test_flat_window_conventions(self):
        values = np.concatenate([np.zeros(10), np.sin(np.arange(20.0))])
        d = distance_profile(values, 0, 4, sliding_stats(values, 4))
        self.assertEqual(d[3], 0.0)  # flat vs flat
        self.assertAlmostEqual(d[20], math.sqrt(8))  # flat vs non-flat

    def test_query_out_of_range(self):
        values = np.arange(20.0)
        with self.assertRaises(IndexOutOfRange):
            distance_profile(values, 17, 4, sliding_stats(values, 4))


class MatrixProfileTest(SimpleTestCase):
    def test_linear_ramp(self):
        mp = matrix_profile(np.arange(64.0), 8)
        np.testing.assert_allclose(mp.distances, 0.0, atol=1e-10)

    def test_constant_series(self):
        mp = matrix_profile(np.full(64, 3.5), 8)
        np.testing.assert_array_equal(mp.distances, np.zeros(57))

    def test_bruteforce_ramp(self):
        mp = matrix_profile_bruteforce(np.arange(32.0), 4)
        np.testing.assert_allclose(mp.distances, 0.0, atol=1e-10)

    def test_bruteforce_planted_motif(self):
        rng = np.random.default_rng(8)
        values = rng.normal(size=80)
        pattern = rng.normal(size=12)
        values[10:22] = pattern
        values[40:52] = pattern
        mp = matrix_profile_bruteforce(values, 12)
        self.assertAlmostEqual(mp.distances[10], 0.0, places=9)
        self.assertAlmostEqual(mp.distances[40], 0.0, places=9)
        self.assertEqual(mp.indices[10], 40)
        self.assertEqual(mp.indices[40], 10)

    def test_too_short(self):
        with self.assertRaises(SeriesTooShort):
            matrix_profile(np.arange(15.0), 8)
        with self.assertRaises(SeriesTooShort):
            matrix_profile_bruteforce(np.arange(15.0), 8)

    def _assert_equivalent(self, values, m, max_offset=None):
        fast = matrix_profile(values, m, max_offset=max_offset)
        oracle = matrix_profile_bruteforce(values, m, max_offset=max_offset)
        np.testing.assert_allclose(fast.distances, oracle.distances, atol=1e-8, rtol=0)
        gaps = _runner_up_gaps(values, m, fast.exclusion_radius, max_offset)
        stable = gaps > 1e-6
        np.testing.assert_array_equal(fast.indices[stable], oracle.indices[stable])
        return fast

    def test_oracle_equivalence_seeded(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            n = int(rng.integers(64, 513))
            m = int(rng.integers(4, 33))
            values = rng.normal(size=n).cumsum() if rng.random() < 0.5 else rng.normal(size=n)
            fast = self._assert_equivalent(values, m)
            matched = fast.matched
            self.assertTrue(np.all(fast.distances[matched] >= 0))
            self.assertTrue(np.all(fast.distances[matched] <= 2 * math.sqrt(m) + 1e-12))
            positions = np.flatnonzero(matched)
            self.assertTrue(np.all(np.abs(fast.indices[matched] - positions) > fast.exclusion_radius))

    def test_oracle_equivalence_with_horizon(self):
        rng = np.random.default_rng(77)
        for _ in range(10):
            values = rng.normal(size=int(rng.integers(100, 300)))
            self._assert_equivalent(values, 10, max_offset=int(rng.integers(6, 40)))

    def test_periodic_restart_and_blocking(self):
        values = np.random.default_rng(4).normal(size=300).cumsum()
        reference = matrix_profile(values, 16)
        with mock.patch("timeseries.profile.RESTART_INTERVAL", 7), \
                mock.patch("timeseries.profile._BLOCK_CELLS", 500):
            restarted = matrix_profile(values, 16)
        np.testing.assert_allclose(restarted.distances, reference.distances, atol=1e-10)
        np.testing.assert_array_equal(restarted.indices, reference.indices)

    def test_distance_matches_pair(self):
        values = np.random.default_rng(9).normal(size=200)
        mp = matrix_profile(values, 10)
        for i in (0, 55, 190):
            explicit = _explicit_distances(values, 10, i)
            self.assertAlmostEqual(mp.distances[i], explicit[mp.indices[i]], delta=1e-8)

    def test_minimality(self):
        values = np.random.default_rng(12).normal(size=150)
        mp = matrix_profile(values, 8)
        stats = sliding_stats(values, 8)
        for i in range(0, len(mp), 13):
            d = distance_profile(values, i, 8, stats).copy()
            d[max(0, i - mp.exclusion_radius):i + mp.exclusion_radius + 1] = np.inf
            self.assertLessEqual(mp.distances[i], d.min() + 1e-8)

    def test_no_admissible_neighbour(self):
        # n = 2m leaves the central window with nothing outside its exclusion zone
        mp = matrix_profile(np.random.default_rng(1).normal(size=8), 4)
        self.assertEqual(mp.indices[2], -1)
        self.assertTrue(math.isinf(mp.distances[2]))

    def test_horizon_must_exceed_exclusion(self):
        with self.assertRaises(InvalidWindow):
            matrix_profile(np.arange(100.0), 10, max_offset=5)

    def test_deterministic(self):
        values = np.random.default_rng(6).normal(size=256)
        a = matrix_profile(values, 12)
        b = matrix_profile(values, 12)
        self.assertEqual(a.distances.tobytes(), b.distances.tobytes())
        self.assertEqual(a.indices.tobytes(), b.indices.tobytes())

    @PROPERTY_SETTINGS
    @given(
        seed=st.integers(0, 2**32 - 1),
        scale=st.floats(0.1, 100.0),
        offset=st.floats(-1000.0, 1000.0),
    )
    def test_scale_invariance(self, seed, scale, offset):
        values = np.random.default_rng(seed).normal(size=120)
        base = matrix_profile(values, 8)
        moved = matrix_profile(scale * values + offset, 8)
        np.testing.assert_allclose(moved.distances, base.distances, atol=1e-6)
        stable = _runner_up_gaps(values, 8, base.exclusion_radius) > 1e-6
        np.testing.assert_array_equal(moved.indices[stable], base.indices[stable])


class DiscordTest(SimpleTestCase):
    def test_planted_anomaly_ranks_first(self):
        t = np.arange(400.0)
        values = np.sin(2 * np.pi * t / 25) + np.random.default_rng(0).normal(scale=0.01, size=400)
        values[200:210] += np.linspace(0, 3, 10)
        mp = matrix_profile(values, 20)
        discords = top_discords(mp, k=2)
        self.assertEqual(len(discords), 2)
        self.assertTrue(180 <= discords[0].position <= 210)
        self.assertGreaterEqual(discords[0].distance, discords[1].distance)
        self.assertGreater(abs(discords[0].position - discords[1].position), 20)
