"""
Regime-change extraction from a corrected arc curve.

Extraction is greedy: take the lowest CAC value under the threshold, mask
every position closer than ``regime_exclusion`` to it, repeat.  A CAC dip
sits somewhere in the window that overlaps the change, so when the source
series is supplied each dip is refined to a sample-level boundary with a
single change-in-mean-and-variance split (``locate_boundary``).
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from timeseries.series import Series, as_values

from .arcs import CorrectedArcCurve
from .exceptions import InvalidParameter

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.45
_MIN_SIDE = 3


@dataclass(frozen=True)
class RegimeChange:
    series_id: str
    position: int
    timestamp: int
    salience: float
    boundary: int | None = None
    sampling_interval: float | None = None

    def to_dict(self):
        return asdict(self)


def locate_boundary(series, position: int, m: int) -> int:
    """
    Sample index of the best single split near a CAC dip.

    Scans splits t in [position − m + 1, position + m] over the segment
    [position − m, position + 2m) and minimises the two-segment Gaussian
    cost nL·log σL² + nR·log σR² (variances floored relative to the
    segment's own variance).
    """
    values = as_values(series)
    n = values.size
    lo = max(0, int(position) - m)
    hi = min(n, int(position) + 2 * m)
    segment = values[lo:hi]
    if segment.size < 2 * _MIN_SIDE:
        return int(position)

    floor = 1e-6 * (float(segment.var()) + 1e-12)
    csum = np.concatenate(([0.0], np.cumsum(segment - segment.mean())))
    csum2 = np.concatenate(([0.0], np.cumsum((segment - segment.mean()) ** 2)))
    total = segment.size

    first = max(_MIN_SIDE, int(position) - m + 1 - lo)
    last = min(total - _MIN_SIDE, int(position) + m - lo)
    if first > last:
        return int(position)
    splits = np.arange(first, last + 1)
    n_left = splits.astype(np.float64)
    n_right = total - n_left
    mean_left = csum[splits] / n_left
    mean_right = (csum[-1] - csum[splits]) / n_right
    var_left = csum2[splits] / n_left - mean_left ** 2
    var_right = (csum2[-1] - csum2[splits]) / n_right - mean_right ** 2
    cost = (
        n_left * np.log(np.maximum(var_left, 0.0) + floor)
        + n_right * np.log(np.maximum(var_right, 0.0) + floor)
    )
    return int(lo + splits[int(np.argmin(cost))])


def extract_regimes(cac: CorrectedArcCurve, threshold: float = DEFAULT_THRESHOLD,
                    regime_exclusion: int | None = None,
                    series: Series | None = None) -> list[RegimeChange]:
    """
    Parameters
    ----------
    cac : CorrectedArcCurve
    threshold : float in (0, 1)
    regime_exclusion : int ≥ 1, defaults to 2·m
    series : Series, optional – source of the curve; supplies series_id and
        timeline, and enables boundary refinement

    Returns
    -------
    list[RegimeChange] sorted by position
    """
    if not 0.0 < threshold < 1.0:
        raise InvalidParameter(f"threshold must be in (0, 1), got {threshold}")
    exclusion = 2 * cac.m if regime_exclusion is None else int(regime_exclusion)
    if exclusion < 1:
        raise InvalidParameter(f"regime_exclusion must be >= 1, got {exclusion}")

    values = np.asarray(cac.values, dtype=np.float64)
    available = values < threshold
    picked: list[int] = []
    while available.any():
        candidates = np.where(available, values, np.inf)
        p = int(np.argmin(candidates))
        picked.append(p)
        available[max(0, p - exclusion + 1):p + exclusion] = False

    series_id = series.series_id if series is not None else ""
    start = series.start_timestamp if series is not None else 0
    interval = series.sampling_interval if series is not None else None

    changes = []
    for p in sorted(picked):
        boundary = locate_boundary(series, p, cac.m) if series is not None else None
        changes.append(RegimeChange(
            series_id=series_id,
            position=p,
            timestamp=start + (boundary if boundary is not None else p),
            salience=float(1.0 - values[p]),
            boundary=boundary,
            sampling_interval=interval,
        ))
    if changes:
        logger.debug("Series %s: %d regime change(s) at %s",
                     series_id, len(changes), [c.position for c in changes])
    return changes
