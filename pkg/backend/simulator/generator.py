"""
Synthetic telemetry fleet.

Each series is one device metric sampled every ``sampling_interval``
seconds on a shared timeline starting at 0.  Baselines follow one of three
profiles:

* periodic    – sine with period 30–48 samples + Gaussian noise
* stationary  – Gaussian noise around a level
* drift       – slow linear drift + Gaussian noise

Every series also carries a shared low-amplitude common component, so the
fleet is weakly related the way metrics of one network are.  Baseline
levels sit well above 0, which is the floor a dead port drops to.
"""

import logging
from dataclasses import dataclass

import numpy as np

from timeseries.series import DEFAULT_SAMPLING_INTERVAL, Series

from .exceptions import InvalidSpec

logger = logging.getLogger(__name__)

DEFAULT_M = 25
PROFILES = ('periodic', 'stationary', 'drift')

# ── Baseline shape parameters ─────────────────────────────────────
PERIOD_RANGE = (30.0, 48.0)
AMPLITUDE_RANGE = (0.8, 1.2)
LEVEL_RANGE = (4.0, 8.0)
NOISE_SD = 0.2
STATIONARY_SD = 0.5
DRIFT_TOTAL = 2.0
COMMON_AMPLITUDE = 0.05
COMMON_PERIOD_RANGE = (90.0, 140.0)


@dataclass(frozen=True)
class FleetSpec:
    n_series: int = 50
    length: int = 300
    sampling_interval: float = DEFAULT_SAMPLING_INTERVAL
    profile_weights: tuple = (('periodic', 0.6), ('stationary', 0.2), ('drift', 0.2))
    seed: int = 0
    m: int = DEFAULT_M

    def validate(self):
        if self.n_series < 1:
            raise InvalidSpec(f"n_series must be >= 1, got {self.n_series}")
        if self.length < 4 * self.m:
            raise InvalidSpec(f"length must be >= 4*m = {4 * self.m}, got {self.length}")
        if not self.sampling_interval > 0:
            raise InvalidSpec(f"sampling_interval must be > 0, got {self.sampling_interval}")
        names = [name for name, _ in self.profile_weights]
        unknown = sorted(set(names) - set(PROFILES))
        if unknown:
            raise InvalidSpec(f"unknown baseline profile(s): {', '.join(unknown)}")
        weights = np.array([w for _, w in self.profile_weights], dtype=np.float64)
        if weights.size == 0 or np.any(weights < 0) or weights.sum() <= 0:
            raise InvalidSpec("profile weights must be non-negative with a positive sum")
        return self

    def series_ids(self) -> list[str]:
        width = len(str(self.n_series))
        return [f"s{i + 1:0{width}d}" for i in range(self.n_series)]


def _baseline(profile: str, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    level = rng.uniform(*LEVEL_RANGE)
    if profile == 'periodic':
        period = rng.uniform(*PERIOD_RANGE)
        phase = rng.uniform(0.0, 2 * np.pi)
        amplitude = rng.uniform(*AMPLITUDE_RANGE)
        return level + amplitude * np.sin(2 * np.pi * t / period + phase) + rng.normal(0.0, NOISE_SD, t.size)
    if profile == 'stationary':
        return level + rng.normal(0.0, STATIONARY_SD, t.size)
    slope = rng.uniform(-DRIFT_TOTAL, DRIFT_TOTAL) / max(t.size, 1)
    return level + slope * t + rng.normal(0.0, NOISE_SD, t.size)


def generate_fleet(spec: FleetSpec) -> list[Series]:
    """
    Returns
    -------
    list[Series] of ``spec.n_series`` series, ``spec.length`` samples each.
    Bit-identical for identical specs.
    """
    spec.validate()
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_series + 1)
    t = np.arange(spec.length, dtype=np.float64)

    shared = np.random.default_rng(children[0])
    common = COMMON_AMPLITUDE * np.sin(
        2 * np.pi * t / shared.uniform(*COMMON_PERIOD_RANGE) + shared.uniform(0.0, 2 * np.pi)
    )

    names = [name for name, _ in spec.profile_weights]
    weights = np.array([w for _, w in spec.profile_weights], dtype=np.float64)
    weights = weights / weights.sum()

    fleet = []
    for sid, child in zip(spec.series_ids(), children[1:]):
        rng = np.random.default_rng(child)
        profile = names[int(rng.choice(len(names), p=weights))]
        fleet.append(Series(sid, _baseline(profile, t, rng) + common,
                            sampling_interval=spec.sampling_interval))
    logger.info("Generated fleet: %d series x %d samples (seed %d)", spec.n_series, spec.length, spec.seed)
    return fleet

