"""
Arc curve and corrected arc curve (CAC) from a matrix-profile index.

Every window i draws an arc to its nearest neighbour indices[i].  Few arcs
spanning a position means the windows on either side do not resemble each
other, i.e. a behavioural boundary.  The corrected curve divides the raw
count by the count expected if every window picked a random partner.

Usage
-----
    from segmentation.arcs import arc_curve, corrected_arc_curve

    cac = corrected_arc_curve(arc_curve(profile))
    cac.values            # in [0, 1], dips mark regime changes
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from timeseries.profile import MatrixProfile

from .exceptions import InvalidProfile


@dataclass(frozen=True, eq=False)
class ArcCurve:
    raw_crossings: np.ndarray
    m: int
    exclusion_radius: int
    max_offset: int | None = None

    def __len__(self):
        return int(self.raw_crossings.size)


@dataclass(frozen=True, eq=False)
class CorrectedArcCurve:
    values: np.ndarray
    edge_exclusion: int
    m: int

    def __len__(self):
        return int(self.values.size)


def arc_curve(profile: MatrixProfile) -> ArcCurve:
    """raw_crossings[k] = #{i : min(i, idx[i]) < k < max(i, idx[i])}, by difference array."""
    indices = np.asarray(profile.indices, dtype=np.int64)
    length = indices.size
    if length == 0:
        raise InvalidProfile("empty profile")
    if np.any(indices >= length) or np.any(indices < -1):
        raise InvalidProfile("profile index refers outside the profile")

    positions = np.flatnonzero(indices >= 0)
    partners = indices[positions]
    lo = np.minimum(positions, partners)
    hi = np.maximum(positions, partners)

    diff = np.zeros(length + 1, dtype=np.int64)
    np.add.at(diff, lo + 1, 1)
    np.add.at(diff, hi, -1)
    crossings = np.cumsum(diff[:-1])
    crossings.setflags(write=False)
    return ArcCurve(
        raw_crossings=crossings,
        m=profile.m,
        exclusion_radius=profile.exclusion_radius,
        max_offset=profile.max_offset,
    )


def _parabola(length: int) -> np.ndarray:
    i = np.arange(length, dtype=np.float64)
    return 2.0 * i * (length - i) / length


@lru_cache(maxsize=64)
def _horizon_ideal(length: int, radius: int, horizon: int) -> np.ndarray:
    """
    Expected crossings when every window picks a uniformly random partner
    j with radius < |j − i| ≤ horizon inside the profile.
    """
    k = np.arange(length)
    right_total = np.clip(np.minimum(k + horizon, length - 1) - (k + radius), 0, None)
    left_total = np.clip((k - radius - 1) - np.maximum(k - horizon, 0) + 1, 0, None)
    admissible = (right_total + left_total).astype(np.float64)
    weight = np.divide(1.0, admissible, out=np.zeros(length), where=admissible > 0)

    expected = np.zeros(length)
    for d in range(1, horizon):
        # windows i = k − d on the left reaching past k
        i = k - d
        ok = i >= 0
        count = np.minimum(i + horizon, length - 1) - np.maximum(k + 1, i + radius + 1) + 1
        count = np.where(ok, np.clip(count, 0, None), 0)
        expected += count * weight[np.where(ok, i, 0)]
        # windows i = k + d on the right reaching before k
        i = k + d
        ok = i < length
        count = np.minimum(k - 1, i - radius - 1) - np.maximum(i - horizon, 0) + 1
        count = np.where(ok, np.clip(count, 0, None), 0)
        expected += count * weight[np.where(ok, i, 0)]
    expected.setflags(write=False)
    return expected


def ideal_crossings(length: int, exclusion_radius: int = 0, max_offset: int | None = None) -> np.ndarray:
    """2·i·(L−i)/L for unrestricted arcs, exact expectation under a horizon."""
    if max_offset is None:
        return _parabola(length)
    return _horizon_ideal(int(length), int(exclusion_radius), int(max_offset))


def corrected_arc_curve(arcs: ArcCurve, edge_exclusion: int | None = None) -> CorrectedArcCurve:
    length = len(arcs)
    if length < 3:
        raise InvalidProfile(f"corrected arc curve needs at least 3 positions, got {length}")
    edge = arcs.m if edge_exclusion is None else int(edge_exclusion)
    if edge < 0:
        raise InvalidProfile(f"edge exclusion must be >= 0, got {edge}")

    ideal = ideal_crossings(length, arcs.exclusion_radius, arcs.max_offset)
    raw = arcs.raw_crossings.astype(np.float64)
    values = np.ones(length)
    np.divide(raw, ideal, out=values, where=ideal > 0)
    np.minimum(values, 1.0, out=values)
    values[:edge] = 1.0
    values[max(0, length - edge):] = 1.0
    values.setflags(write=False)
    return CorrectedArcCurve(values=values, edge_exclusion=edge, m=arcs.m)
