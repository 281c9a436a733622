"""
Tests for the fleet aggregator.
Run with: python manage.py test fleet
"""
import random

import numpy as np
from django.test import SimpleTestCase, TestCase
from hypothesis import HealthCheck, given, settings, strategies as st

from segmentation.regimes import RegimeChange
from sentinel.exceptions import ValidationFailure

from .events import EventKind, EventOfInterest
from .exceptions import InvalidFleetSize, MixedTimelines
from .histogram import build_histogram
from .labeling import label_events
from .memory import PatternMemory, classify_event
from .memory_store import load_memory, reset_memory, save_memory
from .models import EventSignature
from .spikes import coincidence_counts, detect_spikes, pair_recovery

PROPERTY_SETTINGS = settings(
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)


def change(series_id, timestamp, interval=6.0):
    return RegimeChange(series_id=series_id, position=timestamp, timestamp=timestamp,
                        salience=0.8, boundary=timestamp, sampling_interval=interval)


def fleet_ids(n=50):
    return [f"s{i:02d}" for i in range(n)]


def noisy_changes(seed, n_bins=300, per_bin_max=3, ids=None):
    rng = np.random.default_rng(seed)
    ids = ids or fleet_ids()
    out = []
    for b in range(n_bins):
        for sid in rng.choice(ids, size=int(rng.integers(0, per_bin_max + 1)), replace=False):
            out.append(change(str(sid), b))
    return out


def event(event_id, detection_bin, participants, magnitude=None, kind=None):
    participants = frozenset(participants)
    return EventOfInterest(
        event_id=event_id, peak_bin=detection_bin, detection_bin=detection_bin,
        magnitude=magnitude or len(participants), participants=participants,
        start_bin=detection_bin, end_bin=detection_bin, threshold=10.0, kind=kind,
    )


class HistogramTest(SimpleTestCase):
    def test_empty_changes(self):
        hist = build_histogram([], 1, n_bins=10)
        np.testing.assert_array_equal(hist.counts, np.zeros(10))
        self.assertEqual(hist.total, 0)

    def test_simultaneous_changes(self):
        hist = build_histogram([change(sid, 50) for sid in fleet_ids(40)], 1)
        self.assertEqual(hist.counts[50], 40)

    def test_series_counts_once_per_bin(self):
        hist = build_histogram([change("s1", 10), change("s1", 10), change("s2", 10)], 1)
        self.assertEqual(hist.counts[10], 2)

    def test_matches_naive_counting(self):
        changes = noisy_changes(5)
        hist = build_histogram(changes, 3)
        expected = {}
        for c in changes:
            expected.setdefault(c.timestamp // 3, set()).add(c.series_id)
        for b, count in enumerate(hist.counts):
            self.assertEqual(count, len(expected.get(b, ())))
        self.assertEqual(hist.total, sum(len(s) for s in expected.values()))

    def test_device_grouping_hook(self):
        hist = build_histogram(
            [change("dev1/cpu", 5), change("dev1/mem", 5), change("dev2/cpu", 5)], 1,
            group_of=lambda sid: sid.split("/")[0],
        )
        self.assertEqual(hist.counts[5], 2)

    def test_mixed_sampling_intervals(self):
        with self.assertRaises(MixedTimelines):
            build_histogram([change("a", 1, 6.0), change("b", 2, 10.0)], 1)

    def test_change_before_origin(self):
        with self.assertRaises(MixedTimelines):
            build_histogram([change("a", 3)], 1, origin=10)

    def test_merge_is_associative_and_commutative(self):
        changes = noisy_changes(9)
        random.Random(1).shuffle(changes)
        parts = [build_histogram(changes[i::3], 1, n_bins=300) for i in range(3)]
        whole = build_histogram(changes, 1, n_bins=300)
        left = parts[0].merge(parts[1]).merge(parts[2])
        right = parts[2].merge(parts[0].merge(parts[1]))
        np.testing.assert_array_equal(left.counts, whole.counts)
        np.testing.assert_array_equal(right.counts, whole.counts)
        self.assertEqual(dict(left.contributors), dict(whole.contributors))

    def test_merge_rejects_different_binning(self):
        with self.assertRaises(MixedTimelines):
            build_histogram([], 1).merge(build_histogram([], 2))

    def test_tsv(self):
        tsv = build_histogram([change("a", 1)], 1, n_bins=3).to_tsv()
        self.assertEqual(tsv, "bin\tcount\n0\t0\n1\t1\n2\t0\n")


class SpikeDetectionTest(SimpleTestCase):
    def test_all_zero(self):
        self.assertEqual(detect_spikes(build_histogram([], 1, n_bins=200), fleet_size=50), [])

    def test_single_spike_in_quiet_fleet(self):
        changes = [c for c in noisy_changes(3) if c.timestamp != 50]
        changes += [change(sid, 50) for sid in fleet_ids(40)]
        events = detect_spikes(build_histogram(changes, 1), 100, 5.0, 0.2, 50)
        self.assertEqual(len(events), 1)
        self.assertEqual(events[0].peak_bin, 50)
        self.assertEqual(events[0].detection_bin, 50)
        self.assertGreaterEqual(events[0].magnitude, events[0].threshold)
        self.assertIn("min_fraction", events[0].explanation["rule"])

    def test_jittered_onset_detected_within_ten_bins(self):
        rng = np.random.default_rng(4)
        changes = [change(sid, 50 + int(rng.integers(0, 9))) for sid in fleet_ids(40)]
        hist = build_histogram(changes, 1, n_bins=300)
        events = detect_spikes(hist, fleet_size=50, coincidence_window=10)
        self.assertEqual(len(events), 1)
        self.assertLessEqual(events[0].detection_bin, 60)
        self.assertEqual(len(events[0].participants), 40)

    def test_coincidence_window_counts_distinct_series(self):
        hist = build_histogram([change("a", 1), change("a", 3), change("b", 4)], 1, n_bins=8)
        np.testing.assert_array_equal(coincidence_counts(hist, 3), [0, 1, 1, 1, 2, 2, 1, 0])

    def test_detection_adds_no_latency(self):
        for spread in range(0, 9):
            changes = [change(sid, 120 + (i % (spread + 1))) for i, sid in enumerate(fleet_ids(40))]
            events = detect_spikes(build_histogram(changes, 1, n_bins=300),
                                   fleet_size=50, coincidence_window=10)
            self.assertLessEqual(events[0].detection_bin - 120, spread)

    def test_background_noise_does_not_join_onset_and_recovery(self):
        changes = [change(sid, 50) for sid in fleet_ids(40)]
        changes += [change(f"n{b}", b) for b in range(51, 80)]
        changes += [change(sid, 80) for sid in fleet_ids(38)]
        hist = build_histogram(changes, 1, n_bins=120)
        events = detect_spikes(hist, 100, 5.0, 0.2, 100, coincidence_window=1)
        self.assertEqual([e.detection_bin for e in events], [50, 80])
        self.assertEqual(events[0].participants, frozenset(fleet_ids(40)))
        self.assertEqual(events[1].participants, frozenset(fleet_ids(38)))
        self.assertEqual([e.event_id for e in events], [1, 2])

    def test_event_ends_with_last_firing_bin(self):
        changes = [change(sid, 50) for sid in fleet_ids(40)]
        changes += [change(f"n{b}-{i}", b) for b in range(51, 56) for i in range(3)]
        events = detect_spikes(build_histogram(changes, 1, n_bins=120), 100, 5.0, 0.2, 100)
        self.assertEqual(len(events), 1)
        self.assertEqual(events[0].participants, frozenset(fleet_ids(40)))
        self.assertEqual((events[0].start_bin, events[0].end_bin), (50, 50))
        self.assertEqual(events[0].magnitude, 40)

    def test_short_quiet_gap_inside_window_is_bridged(self):
        ids = fleet_ids(50)
        changes = [change(sid, 50) for sid in ids[:25]] + [change(sid, 55) for sid in ids[25:]]
        hist = build_histogram(changes, 1, n_bins=120)
        bridged = detect_spikes(hist, 100, 5.0, 0.2, 100, coincidence_window=3)
        self.assertEqual(len(bridged), 1)
        self.assertEqual(bridged[0].participants, frozenset(ids))
        self.assertEqual((bridged[0].start_bin, bridged[0].end_bin), (50, 57))
        split = detect_spikes(hist, 100, 5.0, 0.2, 100, coincidence_window=1)
        self.assertEqual([len(e.participants) for e in split], [25, 25])

    def test_fleet_size_must_be_positive(self):
        hist = build_histogram([change("a", 1)], 1, n_bins=5)
        with self.assertRaises(InvalidFleetSize) as ctx:
            detect_spikes(hist, fleet_size=0)
        self.assertIsInstance(ctx.exception, ValidationFailure)

    @PROPERTY_SETTINGS
    @given(seed=st.integers(0, 10_000), low=st.floats(0.0, 0.5), high=st.floats(0.0, 0.5))
    def test_raising_min_fraction_never_adds_events(self, seed, low, high):
        low, high = sorted((low, high))
        changes = noisy_changes(seed, n_bins=150, per_bin_max=6)
        hist = build_histogram(changes, 1)
        a = detect_spikes(hist, 50, 3.0, low, 50, coincidence_window=3)
        b = detect_spikes(hist, 50, 3.0, high, 50, coincidence_window=3)
        self.assertLessEqual(len(b), len(a))

    def test_permutation_invariance(self):
        changes = noisy_changes(8) + [change(sid, 70) for sid in fleet_ids(30)]
        rename = {sid: f"renamed-{sid[::-1]}" for sid in fleet_ids()}
        moved = [change(rename[c.series_id], c.timestamp) for c in changes]
        a = detect_spikes(build_histogram(changes, 1), fleet_size=50)
        b = detect_spikes(build_histogram(moved, 1), fleet_size=50)
        np.testing.assert_array_equal(build_histogram(changes, 1).counts, build_histogram(moved, 1).counts)
        self.assertEqual([(e.peak_bin, e.detection_bin, e.magnitude) for e in a],
                         [(e.peak_bin, e.detection_bin, e.magnitude) for e in b])
        self.assertEqual([frozenset(rename[s] for s in e.participants) for e in a],
                         [e.participants for e in b])


class RecoveryPairingTest(SimpleTestCase):
    def test_single_spike(self):
        paired = pair_recovery([event(1, 50, fleet_ids(40))])
        self.assertIsNone(paired[0].kind)
        self.assertIsNone(paired[0].paired_event)

    def test_shutdown_then_recovery_pair(self):
        onset = event(1, 50, fleet_ids(40))
        recovery = event(2, 105, fleet_ids(38))
        paired = pair_recovery([recovery, onset])
        self.assertEqual(paired[1].kind, EventKind.RECOVERY)
        self.assertEqual(paired[1].paired_event, 1)
        self.assertEqual(paired[0].paired_event, 2)
        self.assertGreater(paired[1].detection_bin, paired[0].detection_bin)

    def test_disjoint_participants_stay_unpaired(self):
        ids = fleet_ids()
        paired = pair_recovery([event(1, 50, ids[:20]), event(2, 90, ids[20:40])])
        self.assertTrue(all(e.kind is None for e in paired))

    def test_outside_horizon(self):
        paired = pair_recovery([event(1, 50, fleet_ids(40)), event(2, 400, fleet_ids(40))], 200)
        self.assertIsNone(paired[1].kind)


class ClassificationTest(SimpleTestCase):
    def test_first_spike_is_interest(self):
        classified, memory = classify_event(event(1, 10, fleet_ids(40)), PatternMemory())
        self.assertEqual(classified.kind, EventKind.INTEREST)
        self.assertEqual(len(memory), 1)

    def test_fourth_occurrence_is_no_interest(self):
        memory = PatternMemory(no_interest_threshold=3)
        kinds, counts = [], []
        for i in range(5):
            classified, memory = classify_event(event(i, 100 * i, fleet_ids(40)), memory)
            kinds.append(classified.kind)
            counts.append(next(iter(memory.signatures.values())).occurrences)
        self.assertEqual(kinds[:3], [EventKind.INTEREST] * 3)
        self.assertEqual(kinds[3:], [EventKind.NO_INTEREST] * 2)
        self.assertEqual(counts, sorted(counts))

    def test_reset_forgets(self):
        memory = PatternMemory()
        for i in range(4):
            classify_event(event(i, i, fleet_ids(40)), memory)
        memory.reset()
        classified, _ = classify_event(event(9, 9, fleet_ids(40)), memory)
        self.assertEqual(classified.kind, EventKind.INTEREST)

    def test_operator_objection_blocks_learning(self):
        memory = PatternMemory()
        classify_event(event(0, 0, fleet_ids(40)), memory)
        memory.record_objection(next(iter(memory.signatures)))
        for i in range(1, 6):
            classified, _ = classify_event(event(i, i, fleet_ids(40)), memory)
            self.assertEqual(classified.kind, EventKind.INTEREST)

    def test_similar_participants_match(self):
        memory = PatternMemory()
        ids = fleet_ids()
        for i in range(3):
            classify_event(event(i, i, ids[:40]), memory)
        classified, _ = classify_event(event(5, 5, ids[1:40]), memory)  # Jaccard 39/40
        self.assertEqual(classified.kind, EventKind.NO_INTEREST)

    def test_adjacent_magnitude_band_matches(self):
        memory = PatternMemory()
        for i, magnitude in enumerate((31, 33, 31)):
            classify_event(event(i, i, fleet_ids(40), magnitude=magnitude), memory)
        self.assertEqual(len(memory), 1)
        classified, _ = classify_event(event(3, 3, fleet_ids(40), magnitude=33), memory)
        self.assertEqual(classified.kind, EventKind.NO_INTEREST)

    def test_distant_magnitude_band_is_new_signature(self):
        memory = PatternMemory()
        classify_event(event(0, 0, fleet_ids(40), magnitude=16), memory)
        classified, _ = classify_event(event(1, 1, fleet_ids(40), magnitude=64), memory)
        self.assertEqual(classified.kind, EventKind.INTEREST)
        self.assertEqual(len(memory), 2)

    def test_firmware_recurrence_with_novel_spike(self):
        ids = fleet_ids()
        firmware = ids[:40]  # 80% of the fleet
        changes = noisy_changes(12, n_bins=1100, per_bin_max=2)
        changes = [c for c in changes if c.timestamp not in (50, 300, 550, 800, 1000)]
        for t in (50, 300, 550, 800):
            changes += [change(sid, t) for sid in firmware]
        changes += [change(sid, 1000) for sid in ids[30:50]]
        events = detect_spikes(build_histogram(changes, 1), 100, 5.0, 0.2, 50)
        labelled = label_events(events, PatternMemory(no_interest_threshold=3))
        by_bin = {e.detection_bin: e.kind for e in labelled}
        self.assertEqual([by_bin[t] for t in (50, 300, 550)], [EventKind.INTEREST] * 3)
        self.assertEqual(by_bin[800], EventKind.NO_INTEREST)
        self.assertEqual(by_bin[1000], EventKind.INTEREST)

    def test_recovery_is_not_classified(self):
        memory = PatternMemory()
        recovery = event(2, 105, fleet_ids(38), kind=EventKind.RECOVERY)
        same, memory = classify_event(recovery, memory)
        self.assertIs(same, recovery)
        self.assertEqual(len(memory), 0)


class EventSignatureStoreTest(TestCase):
    def test_round_trip_and_monotone_counts(self):
        memory = PatternMemory()
        for i in range(4):
            classify_event(event(i, i, fleet_ids(40)), memory)
        self.assertEqual(save_memory(memory), 1)
        row = EventSignature.objects.get()
        self.assertEqual(row.occurrences, 4)
        self.assertTrue(row.no_interest)
        self.assertIn("×4", str(row))

        stale = PatternMemory()
        classify_event(event(0, 0, fleet_ids(40)), stale)
        save_memory(stale)
        self.assertEqual(EventSignature.objects.get().occurrences, 4)

        loaded = load_memory()
        classified, _ = classify_event(event(7, 7, fleet_ids(40)), loaded)
        self.assertEqual(classified.kind, EventKind.NO_INTEREST)

    def test_reset(self):
        memory = PatternMemory()
        classify_event(event(0, 0, fleet_ids(10)), memory)
        save_memory(memory)
        self.assertEqual(reset_memory(), 1)
        self.assertEqual(EventSignature.objects.count(), 0)
