"""
Z-normalized distance profiles and matrix profiles.

``matrix_profile`` walks the distance matrix diagonal by diagonal.  Along a
diagonal the window dot product follows the streaming recurrence

    QT[i+1, j+1] = QT[i, j] + T[i+m]·T[j+m] − T[i]·T[j]

so each cell costs O(1).  Diagonals are processed in blocks as 2-D numpy
arrays, and every ``RESTART_INTERVAL`` cells the dot product is recomputed
exactly.  Once the nearest neighbour of every window is known, its distance
is re-evaluated from the explicit z-normalized windows, so reported
distances are exact for the chosen index.

``matrix_profile_bruteforce`` is the O(n²·m) oracle.

Usage
-----
    from timeseries.profile import matrix_profile, top_discords

    mp = matrix_profile(series, m=25)
    mp.distances, mp.indices
    mp_local = matrix_profile(series, m=25, max_offset=50)   # temporal horizon
    top_discords(mp, k=3)

Conventions
-----------
    * windows with std < 1e-12 are flat; flat vs flat is 0, flat vs
      non-flat is sqrt(2m)
    * the exclusion radius defaults to ceil(m/2); candidates need
      |j − i| > exclusion_radius (and ≤ max_offset when a horizon is set)
    * ties go to the lowest index
    * a window with no admissible candidate has distance inf and index −1
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import IndexOutOfRange, InvalidWindow, SeriesTooShort
from .series import as_values
from .stats import SlidingStats, sliding_stats

logger = logging.getLogger(__name__)

FLAT_STD = 1e-12
RESTART_INTERVAL = 4096
_BLOCK_CELLS = 1 << 20
_BRUTEFORCE_LIMIT = 4096


def default_exclusion_radius(m: int) -> int:
    return int(math.ceil(m / 2))


@dataclass(frozen=True, eq=False)
class MatrixProfile:
    m: int
    distances: np.ndarray
    indices: np.ndarray
    exclusion_radius: int
    max_offset: int | None = None

    def __len__(self):
        return int(self.distances.size)

    @property
    def matched(self) -> np.ndarray:
        """Mask of windows that found an admissible neighbour."""
        return self.indices >= 0


@dataclass(frozen=True)
class Discord:
    position: int
    distance: float
    neighbour: int


# ── Shared helpers ────────────────────────────────────────────────

def znormalized_windows(values: np.ndarray, m: int, stats: SlidingStats | None = None):
    """
    Returns
    -------
    (z, flat) – z is the (n−m+1) × m matrix of z-normalized windows with
    flat windows as zero rows; flat is the boolean flat-window mask.
    """
    stats = stats if stats is not None else sliding_stats(values, m)
    windows = sliding_window_view(values, m)
    flat = stats.stds < FLAT_STD
    scale = np.where(flat, 1.0, stats.stds)
    z = (windows - stats.means[:, None]) / scale[:, None]
    z[flat] = 0.0
    return z, flat


def _pair_distances(z, flat, rows, cols, m):
    d = np.linalg.norm(z[rows] - z[cols], axis=1)
    d[flat[rows] != flat[cols]] = math.sqrt(2 * m)
    return np.minimum(d, 2.0 * math.sqrt(m))


def _resolve_window(values, m, exclusion_radius, max_offset, series_id):
    m = int(m)
    if m < 2:
        raise InvalidWindow(f"window length must be >= 2, got {m}")
    if values.size < 2 * m:
        raise SeriesTooShort(values.size, 2 * m, series_id)
    radius = default_exclusion_radius(m) if exclusion_radius is None else int(exclusion_radius)
    if radius < 0:
        raise InvalidWindow(f"exclusion radius must be >= 0, got {radius}")
    if max_offset is not None:
        max_offset = int(max_offset)
        if max_offset <= radius:
            raise InvalidWindow(
                f"max_offset ({max_offset}) must exceed the exclusion radius ({radius})"
            )
    return m, radius, max_offset


def _merge(distances, indices, positions, candidate_d, candidate_i):
    cur_d = distances[positions]
    cur_i = indices[positions]
    better = (candidate_d < cur_d) | ((candidate_d == cur_d) & (candidate_i < cur_i))
    distances[positions[better]] = candidate_d[better]
    indices[positions[better]] = candidate_i[better]


# ── Distance profile ──────────────────────────────────────────────

def distance_profile(series, query_start: int, m: int, stats: SlidingStats) -> np.ndarray:
    """
    Distance from window ``query_start`` to every window of the series.

    Entry j equals sqrt(2m·(1 − corr(i, j))), evaluated as the Euclidean
    distance between the z-normalized windows.
    """
    values = as_values(series)
    m = int(m)
    n = values.size
    if not 0 <= int(query_start) <= n - m:
        raise IndexOutOfRange(f"query_start {query_start} outside [0, {n - m}]")
    if stats.m != m or len(stats) != n - m + 1:
        raise InvalidWindow("sliding stats were computed for a different series or window length")
    z, flat = znormalized_windows(values, m, stats)
    q = int(query_start)
    d = np.linalg.norm(z - z[q], axis=1)
    d[flat != flat[q]] = math.sqrt(2 * m)
    return np.minimum(d, 2.0 * math.sqrt(m))


# ── Matrix profile ────────────────────────────────────────────────

def _diagonal_block(centred, windows, m, ks, mu, inv_sigma, flat):
    """Distances for the diagonals ``ks``; shape (len(ks), l), inf outside the matrix."""
    n = centred.size
    l = n - m + 1
    k_count = ks.size
    pos = np.arange(l)
    valid = pos[None, :] < (l - ks)[:, None]
    partner = np.minimum(pos[None, :] + ks[:, None], l - 1)

    qt = np.empty((k_count, l))
    if l > 1:
        t = np.arange(l - 1)
        right = np.minimum(t[None, :] + ks[:, None], n - 1 - m)
        increments = (
            centred[t + m][None, :] * centred[right + m]
            - centred[t][None, :] * centred[right]
        )
    for start in range(0, l, RESTART_INTERVAL):
        stop = min(start + RESTART_INTERVAL, l)
        qt[:, start] = windows[partner[:, start]] @ windows[start]
        if stop - start > 1:
            qt[:, start + 1:stop] = qt[:, start:start + 1] + np.cumsum(
                increments[:, start:stop - 1], axis=1
            )

    corr = (qt - m * mu[pos][None, :] * mu[partner]) * (
        inv_sigma[pos][None, :] * inv_sigma[partner]
    ) / m
    np.clip(corr, -1.0, 1.0, out=corr)
    dist = np.sqrt(np.maximum(2.0 * m * (1.0 - corr), 0.0))

    flat_row = flat[pos][None, :]
    flat_col = flat[partner]
    dist = np.where(
        flat_row | flat_col,
        np.where(flat_row & flat_col, 0.0, math.sqrt(2 * m)),
        dist,
    )
    dist[~valid] = np.inf
    return dist


def matrix_profile(series, m: int, exclusion_radius: int | None = None,
                   max_offset: int | None = None) -> MatrixProfile:
    """
    Parameters
    ----------
    series : Series | array-like (n ≥ 2m)
    m : int – subsequence length
    exclusion_radius : int – defaults to ceil(m/2)
    max_offset : int – optional temporal horizon; only neighbours with
        |j − i| ≤ max_offset are admissible

    Returns
    -------
    MatrixProfile
    """
    values = as_values(series)
    m, radius, max_offset = _resolve_window(
        values, m, exclusion_radius, max_offset, getattr(series, 'series_id', None)
    )
    n = values.size
    l = n - m + 1

    shift = float(values.mean())
    centred = values - shift
    stats = sliding_stats(centred, m)
    flat = stats.stds < FLAT_STD
    inv_sigma = np.where(flat, 0.0, 1.0 / np.where(flat, 1.0, stats.stds))
    mu = stats.means
    windows = sliding_window_view(centred, m)

    distances = np.full(l, np.inf)
    indices = np.full(l, -1, dtype=np.int64)
    last = l - 1 if max_offset is None else min(l - 1, max_offset)
    offsets = np.arange(radius + 1, last + 1)
    block = max(1, _BLOCK_CELLS // l)
    pos = np.arange(l)

    for first in range(0, offsets.size, block):
        ks = offsets[first:first + block]
        dist = _diagonal_block(centred, windows, m, ks, mu, inv_sigma, flat)

        # right-hand partners i + k: smallest k among ties is the lowest index
        pick = np.argmin(dist, axis=0)
        best = dist[pick, pos]
        ok = np.isfinite(best)
        _merge(distances, indices, pos[ok], best[ok], (pos + ks[pick])[ok])

        # left-hand partners p − k: largest k among ties is the lowest index
        src = pos[None, :] - ks[:, None]
        shifted = np.where(
            src >= 0, dist[np.arange(ks.size)[:, None], np.maximum(src, 0)], np.inf
        )
        pick = ks.size - 1 - np.argmin(shifted[::-1], axis=0)
        best = shifted[pick, pos]
        ok = np.isfinite(best)
        _merge(distances, indices, pos[ok], best[ok], (pos - ks[pick])[ok])

    matched = np.flatnonzero(indices >= 0)
    if matched.size:
        z, _ = znormalized_windows(centred, m, stats)
        distances[matched] = _pair_distances(z, flat, matched, indices[matched], m)

    distances.setflags(write=False)
    indices.setflags(write=False)
    return MatrixProfile(m=m, distances=distances, indices=indices,
                         exclusion_radius=radius, max_offset=max_offset)


def matrix_profile_bruteforce(series, m: int, exclusion_radius: int | None = None,
                              max_offset: int | None = None) -> MatrixProfile:
    """Direct O(n²·m) evaluation over explicitly z-normalized windows."""
    values = as_values(series)
    m, radius, max_offset = _resolve_window(
        values, m, exclusion_radius, max_offset, getattr(series, 'series_id', None)
    )
    if values.size > _BRUTEFORCE_LIMIT:
        logger.warning("Brute-force profile on %d samples; expect quadratic runtime", values.size)
    z, flat = znormalized_windows(values, m)
    l = z.shape[0]
    distances = np.full(l, np.inf)
    indices = np.full(l, -1, dtype=np.int64)
    cap = 2.0 * math.sqrt(m)
    for i in range(l):
        d = np.linalg.norm(z - z[i], axis=1)
        d[flat != flat[i]] = math.sqrt(2 * m)
        np.minimum(d, cap, out=d)
        d[max(0, i - radius):i + radius + 1] = np.inf
        if max_offset is not None:
            d[:max(0, i - max_offset)] = np.inf
            d[i + max_offset + 1:] = np.inf
        j = int(np.argmin(d))
        if np.isfinite(d[j]):
            distances[i] = d[j]
            indices[i] = j
    distances.setflags(write=False)
    indices.setflags(write=False)
    return MatrixProfile(m=m, distances=distances, indices=indices,
                         exclusion_radius=radius, max_offset=max_offset)


# ── Discords ──────────────────────────────────────────────────────

def top_discords(profile: MatrixProfile, k: int = 3, exclusion: int | None = None) -> list[Discord]:
    """
    The ``k`` windows farthest from their nearest neighbour, each at least
    ``exclusion`` samples (default m) from every other one reported.
    """
    exclusion = profile.m if exclusion is None else int(exclusion)
    d = np.where(profile.matched, profile.distances, -np.inf)
    order = np.lexsort((np.arange(d.size), -d))
    blocked = np.zeros(d.size, dtype=bool)
    found: list[Discord] = []
    for p in order:
        if len(found) >= k or d[p] == -np.inf:
            break
        if blocked[p]:
            continue
        found.append(Discord(int(p), float(d[p]), int(profile.indices[p])))
        blocked[max(0, p - exclusion):p + exclusion + 1] = True
    return found
