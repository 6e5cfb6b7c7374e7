"""Deterministic conversation-scene simulator.

Synthesizes ground-truth trajectories, orientations, and speech schedules,
then emulates the node-discovery front end: per-frame direction-of-arrival,
speaker embedding, and sound level for every (listener, active speaker)
pair, with configurable noise. Everything is a pure function of
(config, seed); independent substreams keep noise knobs from perturbing
trajectories.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import alignment
from .conversation import NodePoseSnapshot
from .errors import InvalidConfig, SizeLimitExceeded
from .geometry import PolarObservation, rotation_matrix, wrap_angle
from .mobile import MobileObservation, MotionDelta

# Closest range the discovery front end can report; kept inside the
# path-loss gain guard so level-derived distances stay invertible.
MIN_DISTANCE_M = 0.05

# Substream ids for the seeded generator.
_STREAM_TRAJECTORY = 0
_STREAM_SCHEDULE = 1
_STREAM_EMBEDDING = 2
_STREAM_DRIFT = 3
_STREAM_OBSERVE = 4


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))))


@dataclass(frozen=True)
class NoiseModel:
    doa_sigma_deg: float = 0.0
    distance_sigma_rel: float = 0.0
    embedding_sigma: float = 0.0
    miss_prob: float = 0.0
    imu_drift_rot_rad_s: float = 0.0
    imu_drift_m_s: float = 0.0

    def validate(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise InvalidConfig(f"noise.{name} must be nonnegative")
        if self.miss_prob > 1:
            raise InvalidConfig("noise.miss_prob must be within [0, 1]")


@dataclass(frozen=True)
class ScenarioConfig:
    num_nodes: int = 4
    room_size: tuple = (8.0, 8.0)
    speed: float = 0.0
    duration_s: float = 10.0
    frame_s: float = 0.1
    max_simultaneous: int = 2
    overlap_prob: float = 0.2
    turn_range_s: tuple = (1.0, 3.0)
    tx_level_db: float = 60.0
    embedding_dim: int = 256
    noise: NoiseModel = field(default_factory=NoiseModel)

    def validate(self):
        if self.num_nodes < 2:
            raise InvalidConfig("num_nodes must be >= 2")
        if len(self.room_size) != 2 or min(self.room_size) <= 0:
            raise InvalidConfig("room_size must be two positive extents")
        if self.speed < 0:
            raise InvalidConfig("speed must be nonnegative")
        if self.duration_s <= 0:
            raise InvalidConfig("duration_s must be positive")
        if self.frame_s <= 0:
            raise InvalidConfig("frame_s must be positive")
        if self.max_simultaneous < 1:
            raise InvalidConfig("max_simultaneous must be >= 1")
        if not 0 <= self.overlap_prob <= 1:
            raise InvalidConfig("overlap_prob must be within [0, 1]")
        if self.turn_range_s[0] <= 0 or self.turn_range_s[1] < self.turn_range_s[0]:
            raise InvalidConfig("turn_range_s must be a positive (lo, hi)")
        if self.embedding_dim < 2:
            raise InvalidConfig("embedding_dim must be >= 2")
        self.noise.validate()


@dataclass
class Scenario:
    """Fully materialized ground truth driving the observation oracle."""

    config: ScenarioConfig
    seed: int
    num_frames: int
    positions: np.ndarray       # (frames, nodes, 2)
    orientations: np.ndarray    # (frames, nodes)
    embeddings: np.ndarray      # (nodes, dim), unit rows
    groups: list                # conversation groups, lists of node ids
    speech_intervals: dict      # node id -> [(start, end), ...]
    active: list                # per frame, sorted tuple of active node ids
    drift_rot: np.ndarray       # (nodes,) signed rad/s bias
    drift_trans: np.ndarray     # (nodes, 2) m/s bias

    def frame_time(self, frame: int) -> float:
        return frame * self.config.frame_s

    def true_snapshots(self, frame: int) -> list[NodePoseSnapshot]:
        return [
            NodePoseSnapshot(l, self.positions[frame, l],
                             self.orientations[frame, l])
            for l in range(self.config.num_nodes)
        ]

    def active_speakers(self, frame: int) -> tuple:
        return self.active[frame]

    def source_positions(self, frame: int) -> np.ndarray:
        return self.positions[frame, list(self.active[frame])]

    def true_delta(self, node: int, frame: int) -> MotionDelta:
        """Exact pose change of a node since frame 0, drift-free."""
        rot0 = self.orientations[0, node]
        return MotionDelta(
            self.orientations[frame, node] - rot0,
            rotation_matrix(-rot0)
            @ (self.positions[frame, node] - self.positions[0, node]),
        )

    def imu_delta(self, node: int, frame: int) -> MotionDelta:
        """Inertial delta as reported: true delta plus accumulated drift."""
        t = self.frame_time(frame)
        exact = self.true_delta(node, frame)
        return MotionDelta(
            exact.rotation + self.drift_rot[node] * t,
            exact.translation + self.drift_trans[node] * t,
        )

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["room_size"] = list(self.config.room_size)
        cfg["turn_range_s"] = list(self.config.turn_range_s)
        return {
            "config": cfg,
            "seed": self.seed,
            "num_frames": self.num_frames,
            "positions": self.positions.tolist(),
            "orientations": self.orientations.tolist(),
            "embeddings": self.embeddings.tolist(),
            "groups": [list(g) for g in self.groups],
            "speech_intervals": {
                str(k): [list(iv) for iv in v]
                for k, v in self.speech_intervals.items()
            },
            "active": [list(a) for a in self.active],
            "drift_rot": self.drift_rot.tolist(),
            "drift_trans": self.drift_trans.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        cfg = dict(data["config"])
        cfg["room_size"] = tuple(cfg["room_size"])
        cfg["turn_range_s"] = tuple(cfg["turn_range_s"])
        cfg["noise"] = NoiseModel(**cfg["noise"])
        return cls(
            config=ScenarioConfig(**cfg),
            seed=data["seed"],
            num_frames=data["num_frames"],
            positions=np.array(data["positions"]),
            orientations=np.array(data["orientations"]),
            embeddings=np.array(data["embeddings"]),
            groups=[list(g) for g in data["groups"]],
            speech_intervals={
                int(k): [tuple(iv) for iv in v]
                for k, v in data["speech_intervals"].items()
            },
            active=[tuple(a) for a in data["active"]],
            drift_rot=np.array(data["drift_rot"]),
            drift_trans=np.array(data["drift_trans"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


def _make_groups(num_nodes: int) -> list:
    groups = [[i, i + 1] for i in range(0, num_nodes - 1, 2)]
    if num_nodes % 2 == 1:
        if groups:
            groups[-1].append(num_nodes - 1)
        else:
            groups = [[0]]
    return groups


def _make_schedule(cfg: ScenarioConfig, groups, rng):
    """Turn-taking speech intervals per node, cycling within each group."""
    intervals = {l: [] for l in range(cfg.num_nodes)}
    for group in groups:
        t = rng.uniform(0.0, 0.5)
        order = itertools.cycle(group)
        while t < cfg.duration_s:
            speaker = next(order)
            length = rng.uniform(*cfg.turn_range_s)
            end = min(t + length, cfg.duration_s)
            intervals[speaker].append((t, end))
            if rng.random() < cfg.overlap_prob and end - 0.3 > t:
                t = end - 0.3
            else:
                t = end + rng.uniform(0.1, 0.5)
    return intervals


def _active_sets(cfg: ScenarioConfig, intervals, num_frames: int) -> list:
    active = []
    for f in range(num_frames):
        t = f * cfg.frame_s
        speakers = sorted(
            l for l, ivs in intervals.items()
            if any(s <= t < e for s, e in ivs)
        )
        active.append(tuple(speakers[: cfg.max_simultaneous]))
    return active


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Build a full ground-truth scene, deterministically from (config, seed)."""
    config.validate()
    num_frames = max(1, int(round(config.duration_s / config.frame_s)))
    L = config.num_nodes
    w, h = config.room_size
    margin = min(1.0, 0.2 * min(w, h))

    groups = _make_groups(L)
    traj_rng = _rng(seed, _STREAM_TRAJECTORY)

    # Group centers random-walk between waypoints; members keep offsets
    # around the center at conversational distance. Groups repel each other
    # so that two conversations never walk through one another.
    positions = np.zeros((num_frames, L, 2))
    lo = np.array([margin + 1.5, margin + 1.5])
    hi = np.array([w - margin - 1.5, h - margin - 1.5])
    centers, waypoints, radii, all_offsets = [], [], [], []
    for group in groups:
        center = traj_rng.uniform(lo, hi)
        for _ in range(200):  # keep initial centers apart where possible
            if all(np.linalg.norm(center - c) >= 2.8 for c in centers):
                break
            center = traj_rng.uniform(lo, hi)
        base_angle = traj_rng.uniform(0, 2 * np.pi)
        radius = traj_rng.uniform(0.75, 1.25)
        offsets = [
            radius * np.array([np.cos(a), np.sin(a)])
            for a in base_angle + 2 * np.pi * np.arange(len(group)) / max(len(group), 2)
        ]
        centers.append(center.copy())
        waypoints.append(center.copy())
        radii.append(radius)
        all_offsets.append(offsets)

    def separate(points):
        """Push group centers apart until no two conversations overlap."""
        for _ in range(4):
            moved = False
            for i in range(len(points)):
                for j in range(i + 1, len(points)):
                    sep = radii[i] + radii[j] + 0.5
                    diff = points[i] - points[j]
                    d = np.linalg.norm(diff)
                    if d >= sep:
                        continue
                    direction = diff / d if d > 1e-9 else np.array([1.0, 0.0])
                    shift = 0.5 * (sep - d) * direction
                    points[i] = np.clip(points[i] + shift, lo, hi)
                    points[j] = np.clip(points[j] - shift, lo, hi)
                    moved = True
            if not moved:
                break

    separate(centers)
    for f in range(num_frames):
        if config.speed > 0:
            step = config.speed * config.frame_s
            for g in range(len(groups)):
                to_wp = waypoints[g] - centers[g]
                dist = np.linalg.norm(to_wp)
                while dist < step:
                    waypoints[g] = traj_rng.uniform(lo, hi)
                    to_wp = waypoints[g] - centers[g]
                    dist = np.linalg.norm(to_wp)
                centers[g] = centers[g] + step * to_wp / dist
            separate(centers)
        for group, c, offsets in zip(groups, centers, all_offsets):
            for member, offset in zip(group, offsets):
                positions[f, member] = c + offset

    # Orientation: face the active speaker in the group (or the next member
    # when speaking / idle); singleton groups face their travel direction.
    schedule_rng = _rng(seed, _STREAM_SCHEDULE)
    speech = _make_schedule(config, groups, schedule_rng)
    active = _active_sets(config, speech, num_frames)

    orientations = np.zeros((num_frames, L))
    group_of = {m: g for g in groups for m in g}
    for f in range(num_frames):
        for l in range(L):
            g = group_of[l]
            others = [m for m in g if m != l]
            if not others:
                if f > 0 and config.speed > 0:
                    v = positions[f, l] - positions[f - 1, l]
                    orientations[f, l] = (np.arctan2(v[1], v[0])
                                          if np.any(v) else orientations[f - 1, l])
                continue
            speaking = [m for m in active[f] if m in others]
            target = speaking[0] if speaking else others[0]
            d = positions[f, target] - positions[f, l]
            orientations[f, l] = np.arctan2(d[1], d[0])

    embed_rng = _rng(seed, _STREAM_EMBEDDING)
    embeddings = embed_rng.normal(size=(L, config.embedding_dim))
    embeddings /= np.linalg.norm(embeddings, axis=1, keepdims=True)

    drift_rng = _rng(seed, _STREAM_DRIFT)
    drift_rot = (config.noise.imu_drift_rot_rad_s
                 * drift_rng.choice([-1.0, 1.0], size=L))
    drift_dirs = drift_rng.uniform(0, 2 * np.pi, size=L)
    drift_trans = (config.noise.imu_drift_m_s
                   * np.stack([np.cos(drift_dirs), np.sin(drift_dirs)], axis=1))

    return Scenario(
        config=config,
        seed=seed,
        num_frames=num_frames,
        positions=positions,
        orientations=orientations,
        embeddings=embeddings,
        groups=groups,
        speech_intervals=speech,
        active=active,
        drift_rot=drift_rot,
        drift_trans=drift_trans,
    )


def observe(scenario: Scenario, frame: int):
    """Emulated discovery output for one frame.

    Returns (observations, imu) where `observations[l]` lists node l's
    noisy views of every active speaker other than itself, and `imu[l]`
    is node l's inertial delta (including drift) for this frame. The frame
    noise stream is seeded independently per frame, so frames can be
    generated in any order.
    """
    cfg = scenario.config
    if not 0 <= frame < scenario.num_frames:
        raise ValueError(f"frame {frame} outside scenario duration")
    rng = _rng(scenario.seed, _STREAM_OBSERVE, frame)
    noise = cfg.noise
    t = scenario.frame_time(frame)
    imu = {l: scenario.imu_delta(l, frame) for l in range(cfg.num_nodes)}

    observations = {l: [] for l in range(cfg.num_nodes)}
    for l in range(cfg.num_nodes):
        for k in scenario.active[frame]:
            if k == l:
                continue  # self-voice is recognized and not re-discovered
            if noise.miss_prob > 0 and rng.random() < noise.miss_prob:
                continue
            diff = scenario.positions[frame, k] - scenario.positions[frame, l]
            d_true = float(np.linalg.norm(diff))
            azimuth = wrap_angle(
                np.arctan2(diff[1], diff[0]) - scenario.orientations[frame, l]
                + (np.radians(noise.doa_sigma_deg) * rng.standard_normal()
                   if noise.doa_sigma_deg > 0 else 0.0)
            )
            d_obs = d_true
            if noise.distance_sigma_rel > 0:
                d_obs *= 1.0 + noise.distance_sigma_rel * rng.standard_normal()
            d_obs = max(d_obs, MIN_DISTANCE_M)
            level = alignment.level_at_distance(cfg.tx_level_db, d_obs)
            emb = scenario.embeddings[k]
            if noise.embedding_sigma > 0:
                emb = alignment.normalize_embedding(
                    emb + noise.embedding_sigma * rng.standard_normal(emb.shape))
            observations[l].append(MobileObservation(
                node_id=l,
                time_index=frame,
                obs=PolarObservation(azimuth=azimuth, distance=d_obs),
                motion=imu[l],
                timestamp=t,
                embedding=np.array(emb),
                sound_level=level,
            ))
    return observations, imu


def match_tracks(estimates: Sequence[np.ndarray],
                 truths: Sequence[np.ndarray],
                 mode: str = "auto"):
    """Best assignment of estimated points to true points.

    Exhaustive over all permutations up to 6 points (ties broken toward
    the lexicographically smallest permutation); larger inputs fall back
    to greedy nearest-neighbor in `auto` mode, flagged `exact=False`.
    Returns (permutation, cost, exact) where `permutation[i]` is the truth
    index assigned to estimate i.
    """
    est = np.asarray(estimates, dtype=float).reshape(-1, 2)
    tru = np.asarray(truths, dtype=float).reshape(-1, 2)
    if len(est) != len(tru):
        raise ValueError("estimate and truth lists differ in length")
    n = len(est)
    if n == 0:
        return (), 0.0, True
    if n <= 6 or mode == "exhaustive":
        if n > 6:
            raise SizeLimitExceeded(f"exhaustive matching capped at 6, got {n}")
        best_perm, best_cost = None, np.inf
        for perm in itertools.permutations(range(n)):
            c = float(np.sum((est - tru[list(perm)]) ** 2))
            if c < best_cost:
                best_perm, best_cost = perm, c
        return best_perm, best_cost, True
    # Greedy fallback: each estimate takes the nearest unclaimed truth.
    remaining = list(range(n))
    perm = []
    total = 0.0
    for i in range(n):
        dists = [float(np.sum((est[i] - tru[j]) ** 2)) for j in remaining]
        pick = int(np.argmin(dists))
        total += dists[pick]
        perm.append(remaining.pop(pick))
    return tuple(perm), total, False
