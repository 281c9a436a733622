"""
Sliding-window mean and population standard deviation.

Running sums are taken on the series centred on its global mean, which
keeps the sums small.  Windows where the variance is a tiny fraction of the
second moment (the cancellation-prone case) are recomputed with a direct
two-pass evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import InvalidWindow, SeriesTooShort
from .series import as_values

# Below this ratio of variance to second moment the running-sum variance
# has lost more than six significant digits.
_CANCELLATION_RATIO = 1e-6


@dataclass(frozen=True, eq=False)
class SlidingStats:
    m: int
    means: np.ndarray
    stds: np.ndarray

    def __len__(self):
        return int(self.means.size)


def sliding_stats(series, m: int) -> SlidingStats:
    """
    Parameters
    ----------
    series : Series | array-like
    m : int – window length in samples (≥ 2)

    Returns
    -------
    SlidingStats with ``n - m + 1`` entries.
    """
    values = as_values(series)
    m = int(m)
    if m < 2:
        raise InvalidWindow(f"window length must be >= 2, got {m}")
    n = values.size
    if n < m:
        raise SeriesTooShort(n, m, getattr(series, 'series_id', None))

    shift = float(values.mean())
    centred = values - shift

    csum = np.concatenate(([0.0], np.cumsum(centred)))
    csum2 = np.concatenate(([0.0], np.cumsum(centred * centred)))
    means = (csum[m:] - csum[:-m]) / m
    second = (csum2[m:] - csum2[:-m]) / m
    variances = second - means * means

    suspect = variances <= second * _CANCELLATION_RATIO
    if suspect.any():
        windows = sliding_window_view(centred, m)[suspect]
        window_means = windows.mean(axis=1)
        means[suspect] = window_means
        variances[suspect] = ((windows - window_means[:, None]) ** 2).mean(axis=1)

    np.maximum(variances, 0.0, out=variances)
    means += shift
    stds = np.sqrt(variances)
    means.setflags(write=False)
    stds.setflags(write=False)
    return SlidingStats(m=m, means=means, stds=stds)
