"""Mobile calibration: motion compensation plus sliding-window solving.

Moving nodes report inertial deltas relative to their initial pose.
Compensating each observation back into the node's reference frame turns
the moving-node problem into the static one solved by `geometry`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Hashable, Mapping, Sequence

import numpy as np

from . import geometry
from .errors import InsufficientObservations
from .geometry import (
    GeometryEstimate,
    PolarObservation,
    Pose2,
    polar_to_local,
    rotation_matrix,
    wrap_angle,
)


@dataclass(frozen=True)
class MotionDelta:
    """Pose change of a node since its reference frame.

    `rotation` is the orientation change; `translation` is the displacement
    expressed in the reference frame's coordinates, so that a point p seen
    in the current local frame maps to R(rotation) p + translation in the
    reference frame.
    """

    rotation: float
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", wrap_angle(float(self.rotation)))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=float)
        )


IDENTITY_DELTA = MotionDelta(0.0, np.zeros(2))


@dataclass(frozen=True)
class MobileObservation:
    """One node's observation of one source at one time step."""

    node_id: Hashable
    time_index: int
    obs: PolarObservation
    motion: MotionDelta
    timestamp: float
    embedding: np.ndarray | None = None
    sound_level: float | None = None


def motion_compensate(obs: MobileObservation) -> np.ndarray:
    """Map the observation into the node's reference (time-0) frame."""
    local = polar_to_local(obs.obs)
    return rotation_matrix(obs.motion.rotation) @ local + obs.motion.translation


def rebase_delta(delta: MotionDelta, reference: MotionDelta) -> MotionDelta:
    """Delta relative to a new reference frame along the same track.

    Both arguments are deltas from the original reference; the result maps
    the current local frame into `reference`'s frame. Composing the result
    with `reference` recovers `delta` exactly.
    """
    rot_back = rotation_matrix(-reference.rotation)
    return MotionDelta(
        delta.rotation - reference.rotation,
        rot_back @ (delta.translation - reference.translation),
    )


def compose_delta(first: MotionDelta, second: MotionDelta) -> MotionDelta:
    """Delta obtained by applying `second` within `first`'s reference frame."""
    return MotionDelta(
        first.rotation + second.rotation,
        first.translation + rotation_matrix(first.rotation) @ second.translation,
    )


def pose_at_delta(reference_pose: Pose2, delta: MotionDelta) -> Pose2:
    """Global pose of a node displaced by `delta` from its reference pose."""
    return reference_pose.compose(Pose2(delta.rotation, delta.translation))


@dataclass(frozen=True)
class WindowConfig:
    """Sliding-window parameters for dynamic calibration."""

    window_length: int = 50
    decay_floor: float = 0.1

    def __post_init__(self):
        if self.window_length < 2:
            raise ValueError("window_length must be >= 2")
        if self.decay_floor <= 0:
            raise ValueError("decay_floor must be > 0")


def time_decay_weights(timestamps: Sequence[float], now: float,
                       cfg: WindowConfig) -> np.ndarray:
    """Inverse-age weights, floored so the newest observation stays finite."""
    ages = now - np.asarray(timestamps, dtype=float)
    if np.any(ages < -1e-9):
        raise ValueError("timestamps must not exceed `now`")
    return 1.0 / (np.maximum(ages, 0.0) + cfg.decay_floor)


# One batch: all nodes' observations sharing a time index, keyed by the
# aligned source id assigned by observation alignment.
Batch = Mapping[Hashable, Sequence[MobileObservation]]


@dataclass
class WindowEstimate:
    """Calibration result for one window position."""

    estimate: GeometryEstimate
    reference_deltas: dict
    timestamp: float
    carried_forward: bool = False

    def current_pose(self, node_id, current_delta: MotionDelta) -> Pose2:
        """Node pose now, given its inertial delta from the shared origin."""
        reb = rebase_delta(current_delta, self.reference_deltas[node_id])
        return pose_at_delta(self.estimate.poses[node_id], reb)


class SlidingCalibrator:
    """Incremental dynamic calibration over a sliding batch window.

    Single-writer: push batches in time order, read the latest estimate.
    Windows that fail the calibration preconditions carry the previous
    estimate forward. `stride` > 1 recalibrates only every n-th batch.
    """

    def __init__(self, cfg: WindowConfig, *, stride: int = 1):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.cfg = cfg
        self.stride = stride
        self._batches: list[tuple[float, Batch]] = []
        self._pushes = 0
        self.latest: WindowEstimate | None = None

    def push(self, timestamp: float, batch: Batch) -> WindowEstimate | None:
        self._batches.append((timestamp, batch))
        if len(self._batches) > self.cfg.window_length:
            self._batches = self._batches[-self.cfg.window_length:]
        self._pushes += 1
        if (self._pushes - 1) % self.stride == 0 or self.latest is None:
            self.latest = self._calibrate_window()
        return self.latest

    def _calibrate_window(self) -> WindowEstimate | None:
        window = self._batches
        now = window[-1][0]

        # Each node's earliest in-window delta is its rebasing reference.
        reference: dict = {}
        for _, batch in window:
            for obs_list in batch.values():
                for mo in obs_list:
                    if mo.node_id not in reference:
                        reference[mo.node_id] = mo.motion

        observations: dict = {}
        for _, batch in window:
            for source_id, obs_list in batch.items():
                for mo in obs_list:
                    decay = time_decay_weights([mo.timestamp], now, self.cfg)[0]
                    reb = rebase_delta(mo.motion, reference[mo.node_id])
                    comp = motion_compensate(replace(mo, motion=reb))
                    polar = PolarObservation(
                        azimuth=float(np.arctan2(comp[1], comp[0])),
                        distance=float(np.linalg.norm(comp)),
                        weight=mo.obs.weight * float(decay),
                    )
                    observations.setdefault(mo.node_id, {})[source_id] = polar

        init = None
        if self.latest is not None and not self.latest.carried_forward:
            init = self._rebased_init(reference)
        try:
            estimate = geometry.calibrate(observations, init=init)
            if init is not None and not estimate.converged:
                # The warm start can trap the solver in a stale local
                # minimum inherited from an ill-conditioned early window;
                # a cold solve re-bootstraps from the data itself.
                retry = geometry.calibrate(observations)
                if (geometry.cost(retry, observations)
                        < geometry.cost(estimate, observations)):
                    estimate = retry
        except InsufficientObservations:
            if self.latest is None:
                return None
            return WindowEstimate(
                estimate=self.latest.estimate,
                reference_deltas=self.latest.reference_deltas,
                timestamp=now,
                carried_forward=True,
            )
        return WindowEstimate(estimate=estimate, reference_deltas=reference,
                              timestamp=now)

    def _rebased_init(self, reference: dict) -> GeometryEstimate | None:
        """Warm start: previous poses moved to the new reference frames."""
        prev = self.latest
        poses = {}
        for node_id, new_ref in reference.items():
            if node_id not in prev.reference_deltas:
                continue
            reb = rebase_delta(new_ref, prev.reference_deltas[node_id])
            poses[node_id] = pose_at_delta(prev.estimate.poses[node_id], reb)
        if not poses:
            return None
        est = prev.estimate
        sources = dict(est.sources)
        # Re-anchor so the lowest node id sits at the identity pose, matching
        # the gauge the new calibration will fix.
        anchor = min(poses)
        to_gauge = poses[anchor].inverse()
        poses = {l: to_gauge.compose(p) for l, p in poses.items()}
        sources = {k: to_gauge.apply(s) for k, s in sources.items()}
        return GeometryEstimate(
            node_ids=tuple(sorted(poses)),
            poses=poses,
            source_ids=est.source_ids,
            sources=sources,
            final_cost=est.final_cost,
        )


def sliding_calibrate(
    stream: Sequence[tuple[float, Batch]],
    cfg: WindowConfig,
    *,
    stride: int = 1,
) -> list[WindowEstimate | None]:
    """Run the sliding calibrator over a whole stream of (timestamp, batch)."""
    calib = SlidingCalibrator(cfg, stride=stride)
    return [calib.push(t, batch) for t, batch in stream]
