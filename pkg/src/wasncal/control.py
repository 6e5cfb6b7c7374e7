"""Adaptive relay-audio control: delay estimation, feature-mode switching,
and bandwidth allocation over a discrete level set.

Per-stream quality is proxied by bandwidth/distance; the allocator
maximizes the summed proxy under a total-budget constraint.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import signal

from .errors import NoPeak, ZeroEnergy

BANDWIDTH_LEVELS = (0, 8, 16, 32, 64, 128)  # kbit/s; 0 = embedding-only
DELAY_THRESHOLD_MS = 50.0
FIRST_PEAK_RATIO = 0.5
EXHAUSTIVE_STREAM_LIMIT = 5


class FeatureMode(Enum):
    TIME_VARIANT = "time_variant"
    TIME_INVARIANT = "time_invariant"


@dataclass(frozen=True)
class StreamDescriptor:
    stream_id: int
    distance_m: float
    measured_delay_ms: float | None = None
    mode: FeatureMode = FeatureMode.TIME_VARIANT

    def __post_init__(self):
        if self.distance_m <= 0:
            raise ValueError("distance_m must be positive")


@dataclass
class AllocationPlan:
    levels: dict  # stream_id -> allocated level
    utility: float

    def total(self) -> int:
        return sum(self.levels.values())


def estimate_delay(reference: np.ndarray, received: np.ndarray,
                   sample_rate_hz: float,
                   peak_ratio: float = FIRST_PEAK_RATIO) -> float:
    """Transmission delay in ms via cross-correlation first-peak picking.

    Scans nonnegative lags in increasing order and returns the first one
    whose correlation reaches `peak_ratio` of the global maximum, which
    catches the direct path ahead of any later echo peak.
    """
    ref = np.asarray(reference, dtype=float)
    rec = np.asarray(received, dtype=float)
    if ref.size < 2 or rec.size < 2:
        raise ValueError("signals must have at least 2 samples")
    if not np.any(ref) or not np.any(rec):
        raise ZeroEnergy("delay estimation needs nonzero-energy signals")
    corr = signal.correlate(rec, ref, mode="full", method="fft")
    zero_lag = ref.size - 1
    nonneg = corr[zero_lag:]
    peak = float(nonneg.max())
    if peak <= 0:
        raise NoPeak("no positively correlated lag found")
    hits = np.flatnonzero(nonneg >= peak_ratio * peak)
    if hits.size == 0:
        raise NoPeak("no lag cleared the peak threshold")
    return float(hits[0]) / sample_rate_hz * 1000.0


def select_mode(delay_ms: float,
                threshold_ms: float = DELAY_THRESHOLD_MS) -> FeatureMode:
    """Time-variant conditioning while the delay stays tolerable (inclusive)."""
    if delay_ms < 0:
        raise ValueError("delay must be nonnegative")
    return (FeatureMode.TIME_VARIANT if delay_ms <= threshold_ms
            else FeatureMode.TIME_INVARIANT)


def _utility(levels: Sequence[int], streams: Sequence[StreamDescriptor]) -> float:
    return float(sum(lvl / s.distance_m for lvl, s in zip(levels, streams)))


def allocate_bandwidth(streams: Sequence[StreamDescriptor],
                       total_budget: int) -> AllocationPlan:
    """Maximize sum(level/distance) under the total bandwidth budget.

    Time-invariant streams are pinned to level 0. Up to
    `EXHAUSTIVE_STREAM_LIMIT` adjustable streams are solved by exhaustive
    enumeration; beyond that a greedy marginal-utility upgrade is used.
    Utility ties prefer giving the higher level to the lowest stream id.
    """
    if total_budget < 0:
        raise ValueError("budget must be nonnegative")
    ordered = sorted(streams, key=lambda s: s.stream_id)
    levels = {s.stream_id: 0 for s in ordered}
    adjustable = [s for s in ordered if s.mode is FeatureMode.TIME_VARIANT]

    if len(adjustable) <= EXHAUSTIVE_STREAM_LIMIT:
        best_levels, best_utility = None, -1.0
        for combo in itertools.product(BANDWIDTH_LEVELS, repeat=len(adjustable)):
            if sum(combo) > total_budget:
                continue
            u = _utility(combo, adjustable)
            if (u > best_utility + 1e-12
                    or (abs(u - best_utility) <= 1e-12
                        and (best_levels is None or combo > best_levels))):
                best_levels, best_utility = combo, u
        for s, lvl in zip(adjustable, best_levels or ()):
            levels[s.stream_id] = lvl
        utility = best_utility if best_levels is not None else 0.0
    else:
        remaining = total_budget
        current = {s.stream_id: 0 for s in adjustable}
        while True:
            best = None  # (ratio, -stream_id) to upgrade
            for s in adjustable:
                idx = BANDWIDTH_LEVELS.index(current[s.stream_id])
                if idx + 1 >= len(BANDWIDTH_LEVELS):
                    continue
                step = BANDWIDTH_LEVELS[idx + 1] - BANDWIDTH_LEVELS[idx]
                if step > remaining:
                    continue
                ratio = 1.0 / s.distance_m  # utility gain per kbit/s
                key = (ratio, -s.stream_id)
                if best is None or key > best[0]:
                    best = (key, s, step, BANDWIDTH_LEVELS[idx + 1])
            if best is None:
                break
            _, s, step, new_level = best
            current[s.stream_id] = new_level
            remaining -= step
        levels.update(current)
        utility = _utility([levels[s.stream_id] for s in adjustable], adjustable)

    return AllocationPlan(levels=levels, utility=utility)


def equal_split_allocation(streams: Sequence[StreamDescriptor],
                           total_budget: int) -> AllocationPlan:
    """Baseline: every adjustable stream gets an equal budget share."""
    ordered = sorted(streams, key=lambda s: s.stream_id)
    adjustable = [s for s in ordered if s.mode is FeatureMode.TIME_VARIANT]
    levels = {s.stream_id: 0 for s in ordered}
    if adjustable:
        share = total_budget // len(adjustable)
        level = max((lvl for lvl in BANDWIDTH_LEVELS if lvl <= share), default=0)
        for s in adjustable:
            levels[s.stream_id] = level
    return AllocationPlan(
        levels=levels,
        utility=_utility([levels[s.stream_id] for s in ordered], ordered),
    )


def waterfall_allocation(streams: Sequence[StreamDescriptor],
                         total_budget: int) -> AllocationPlan:
    """Baseline: in stream order, each takes the largest level that fits."""
    ordered = sorted(streams, key=lambda s: s.stream_id)
    levels = {s.stream_id: 0 for s in ordered}
    remaining = total_budget
    for s in ordered:
        if s.mode is not FeatureMode.TIME_VARIANT:
            continue
        level = max((lvl for lvl in BANDWIDTH_LEVELS if lvl <= remaining),
                    default=0)
        levels[s.stream_id] = level
        remaining -= level
    return AllocationPlan(
        levels=levels,
        utility=_utility([levels[s.stream_id] for s in ordered], ordered),
    )
