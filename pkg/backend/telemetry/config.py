"""
Pipeline configuration.

Defaults come from Django settings (themselves read from ``SENTINEL_*``
environment variables), a ``--config`` JSON file overrides them, and
explicit command-line flags are applied last.

Usage
-----
    from telemetry.config import PipelineConfig

    config = PipelineConfig.from_settings().merged(load_config_file(path)).merged(flags)
    config.validate()
    config.config_hash()
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

from fleet.memory import DEFAULT_NO_INTEREST_THRESHOLD, DEFAULT_SIGNATURE_JACCARD
from fleet.spikes import (
    DEFAULT_BASELINE_WINDOW,
    DEFAULT_K_MAD,
    DEFAULT_MIN_FRACTION,
    DEFAULT_RECOVERY_HORIZON,
    DEFAULT_RECOVERY_JACCARD,
)
from segmentation.regimes import DEFAULT_THRESHOLD
from segmentation.runner import SegmentationParams
from timeseries.profile import default_exclusion_radius
from timeseries.series import DEFAULT_SAMPLING_INTERVAL

from .exceptions import InvalidConfig

DEFAULT_M = 25
DEFAULT_COINCIDENCE_WINDOW = 10
DEFAULT_GAP_LIMIT = 3

# Django setting name for each field read by from_settings()
_SETTINGS = {
    'm': 'SENTINEL_M',
    'cac_threshold': 'SENTINEL_CAC_THRESHOLD',
    'k_mad': 'SENTINEL_K_MAD',
    'min_fraction': 'SENTINEL_MIN_FRACTION',
    'baseline_window': 'SENTINEL_BASELINE_WINDOW',
    'coincidence_window': 'SENTINEL_COINCIDENCE_WINDOW',
    'no_interest_threshold': 'SENTINEL_NO_INTEREST_THRESHOLD',
    'sampling_interval': 'SENTINEL_SAMPLING_INTERVAL',
    'workers': 'REGIME_SENTINEL_THREADS',
}


@dataclass(frozen=True)
class PipelineConfig:
    m: int = DEFAULT_M
    exclusion_radius: int | None = None
    arc_horizon: int | None = None
    global_arcs: bool = False
    cac_threshold: float = DEFAULT_THRESHOLD
    regime_exclusion: int | None = None
    bin_width: int = 1
    k_mad: float = DEFAULT_K_MAD
    min_fraction: float = DEFAULT_MIN_FRACTION
    baseline_window: int = DEFAULT_BASELINE_WINDOW
    coincidence_window: int = DEFAULT_COINCIDENCE_WINDOW
    no_interest_threshold: int = DEFAULT_NO_INTEREST_THRESHOLD
    sampling_interval: float = DEFAULT_SAMPLING_INTERVAL
    workers: int = 0
    recovery_horizon: int = DEFAULT_RECOVERY_HORIZON
    recovery_jaccard: float = DEFAULT_RECOVERY_JACCARD
    signature_jaccard: float = DEFAULT_SIGNATURE_JACCARD
    gap_limit: int = DEFAULT_GAP_LIMIT
    device_groups: dict = field(default_factory=dict)

    @classmethod
    def from_settings(cls) -> "PipelineConfig":
        from django.conf import settings

        values = {}
        for name, setting in _SETTINGS.items():
            value = getattr(settings, setting, None)
            if value is not None:
                values[name] = value
        groups = getattr(settings, 'SENTINEL_DEVICE_GROUPS', None)
        if groups:
            values['device_groups'] = dict(groups)
        return cls(**values)

    def merged(self, overrides: dict | None) -> "PipelineConfig":
        """Copy with ``overrides`` applied; ``None`` values are ignored."""
        if not overrides:
            return self
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise InvalidConfig(f"unknown setting(s): {', '.join(unknown)}")
        changes = {k: v for k, v in overrides.items() if v is not None}
        try:
            return replace(self, **changes)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from None

    # ── Resolved values ───────────────────────────────────────────

    @property
    def resolved_exclusion_radius(self) -> int:
        return default_exclusion_radius(self.m) if self.exclusion_radius is None else self.exclusion_radius

    @property
    def resolved_arc_horizon(self) -> int | None:
        if self.global_arcs:
            return None
        return 2 * self.m if self.arc_horizon is None else self.arc_horizon

    @property
    def resolved_regime_exclusion(self) -> int:
        return 2 * self.m if self.regime_exclusion is None else self.regime_exclusion

    @property
    def resolved_workers(self) -> int:
        cores = os.cpu_count() or 1
        return cores if self.workers <= 0 else min(self.workers, cores)

    def segmentation_params(self) -> SegmentationParams:
        return SegmentationParams(
            m=self.m,
            exclusion_radius=self.resolved_exclusion_radius,
            arc_horizon=self.resolved_arc_horizon,
            threshold=self.cac_threshold,
            regime_exclusion=self.resolved_regime_exclusion,
        )

    # ── Validation ────────────────────────────────────────────────

    def validate(self) -> "PipelineConfig":
        def need(ok, name, rule):
            if not ok:
                raise InvalidConfig(f"{name}={getattr(self, name)!r}: must be {rule}")

        def is_int(name):
            value = getattr(self, name)
            need(isinstance(value, int) and not isinstance(value, bool), name, "an integer")

        for name in ('m', 'bin_width', 'baseline_window', 'coincidence_window',
                     'no_interest_threshold', 'workers', 'recovery_horizon', 'gap_limit'):
            is_int(name)
        need(self.m >= 4, 'm', ">= 4")
        radius = self.resolved_exclusion_radius
        need(1 <= radius < self.m, 'exclusion_radius', f">= 1 and < m ({self.m})")
        need(0 < self.cac_threshold < 1, 'cac_threshold', "in (0, 1)")
        need(self.resolved_regime_exclusion >= 1, 'regime_exclusion', ">= 1")
        need(self.bin_width >= 1, 'bin_width', ">= 1")
        need(self.k_mad >= 0, 'k_mad', ">= 0")
        need(0 <= self.min_fraction <= 1, 'min_fraction', "in [0, 1]")
        need(self.baseline_window >= 1, 'baseline_window', ">= 1")
        need(self.coincidence_window >= 1, 'coincidence_window', ">= 1")
        need(self.no_interest_threshold >= 1, 'no_interest_threshold', ">= 1")
        need(self.sampling_interval > 0, 'sampling_interval', "> 0")
        need(self.workers >= 0, 'workers', ">= 0")
        horizon = self.resolved_arc_horizon
        need(horizon is None or horizon > radius, 'arc_horizon', f"> exclusion_radius ({radius})")
        need(0 < self.recovery_jaccard <= 1, 'recovery_jaccard', "in (0, 1]")
        need(0 < self.signature_jaccard <= 1, 'signature_jaccard', "in (0, 1]")
        need(self.recovery_horizon >= 1, 'recovery_horizon', ">= 1")
        need(self.gap_limit >= 0, 'gap_limit', ">= 0")
        need(isinstance(self.device_groups, dict), 'device_groups', "a mapping of series id to group")
        return self

    # ── Hashing ───────────────────────────────────────────────────

    def as_block(self) -> dict:
        """The resolved config as emitted in reports (``workers`` excluded: it never changes results)."""
        block = asdict(self)
        block.pop('workers')
        block['exclusion_radius'] = self.resolved_exclusion_radius
        block['arc_horizon'] = self.resolved_arc_horizon
        block['regime_exclusion'] = self.resolved_regime_exclusion
        return block

    def config_hash(self) -> str:
        return hash_block(self.as_block())


def hash_block(block: dict) -> str:
    canonical = json.dumps(block, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def load_config_file(path) -> dict:
    try:
        with open(path, encoding='utf-8') as handle:
            data = json.load(handle)
    except OSError as exc:
        raise InvalidConfig(f"cannot read config file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: not JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path}: expected a JSON object of settings")
    return data
