"""Static geometry calibration by weighted rigid point-set matching.

Each sensor node observes a set of shared sources in its own polar frame.
Node poses (rotation + translation) and global source positions are
recovered jointly by alternating between per-node rigid alignment and a
closed-form source update, with residual-based reweighting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateConfiguration,
    InsufficientObservations,
    ZeroTotalWeight,
)

TWO_PI = 2.0 * np.pi

# Regularizer for the inverse-squared-residual weights (m^2).
WEIGHT_EPS = 1e-6

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100


def wrap_angle(angle):
    """Wrap angle(s) to (-pi, pi]."""
    wrapped = (np.asarray(angle, dtype=float) + np.pi) % TWO_PI - np.pi
    wrapped = np.where(wrapped <= -np.pi, wrapped + TWO_PI, wrapped)
    if np.ndim(angle) == 0:
        return float(wrapped)
    return wrapped


def rotation_matrix(angle: float) -> np.ndarray:
    """2x2 proper rotation matrix for the given angle."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2:
    """Rigid transform from a node's local frame to the global frame."""

    angle: float
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angle", wrap_angle(float(self.angle)))
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=float)
        )

    @property
    def matrix(self) -> np.ndarray:
        return rotation_matrix(self.angle)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map local point(s), shape (2,) or (N, 2), into the global frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.matrix.T + self.translation

    def compose(self, other: "Pose2") -> "Pose2":
        """self after other: (self * other).apply(p) == self.apply(other.apply(p))."""
        return Pose2(
            self.angle + other.angle,
            self.matrix @ other.translation + self.translation,
        )

    def inverse(self) -> "Pose2":
        return Pose2(-self.angle, -(self.matrix.T @ self.translation))


IDENTITY_POSE = Pose2(0.0, np.zeros(2))


@dataclass(frozen=True)
class PolarObservation:
    """One node's polar observation of one source: azimuth, distance, weight."""

    azimuth: float
    distance: float
    weight: float = 1.0

    def __post_init__(self):
        if self.distance < 0:
            raise ValueError(f"negative distance {self.distance}")
        if self.weight < 0:
            raise ValueError(f"negative weight {self.weight}")


def polar_to_local(obs: PolarObservation) -> np.ndarray:
    """Cartesian location of the observation in the node's local frame."""
    return obs.distance * np.array([np.cos(obs.azimuth), np.sin(obs.azimuth)])


def weighted_centroid(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted mean of 2-D points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if len(pts) == 0 or len(pts) != len(w):
        raise ValueError("points and weights must be nonempty and equal length")
    total = w.sum()
    if total <= 0:
        raise ZeroTotalWeight("total weight is zero")
    return (w[:, None] * pts).sum(axis=0) / total


def dispersion_matrix(
    local_pts: np.ndarray, global_pts: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """Weighted cross-covariance of centered local vs. centered global points."""
    lp = np.asarray(local_pts, dtype=float).reshape(-1, 2)
    gp = np.asarray(global_pts, dtype=float).reshape(-1, 2)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if not (len(lp) == len(gp) == len(w)) or len(lp) == 0:
        raise ValueError("inputs must be nonempty and equal length")
    lc = lp - weighted_centroid(lp, w)
    gc = gp - weighted_centroid(gp, w)
    return (lc * w[:, None]).T @ gc / len(lp)


def match_datasets(
    local_pts: np.ndarray, global_pts: np.ndarray, weights: np.ndarray
) -> Pose2:
    """Weighted rigid alignment taking local points onto global points.

    Returns the pose minimizing sum_i w_i ||global_i - (R local_i + n)||^2.
    The returned rotation is always proper (det +1); a reflection-optimal
    configuration gets the standard sign correction on the last singular
    direction.
    """
    lp = np.asarray(local_pts, dtype=float).reshape(-1, 2)
    gp = np.asarray(global_pts, dtype=float).reshape(-1, 2)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if np.count_nonzero(w > 0) < 2:
        raise DegenerateConfiguration("need at least 2 points with positive weight")
    d = dispersion_matrix(lp, gp, w)
    if not np.any(np.abs(d) > 1e-300):
        raise DegenerateConfiguration("weighted points coincide; rotation undefined")
    u, _, vt = np.linalg.svd(d)
    v = vt.T
    if np.linalg.det(v @ u.T) < 0:
        v = v.copy()
        v[:, -1] *= -1.0
    r = v @ u.T
    angle = float(np.arctan2(r[1, 0], r[0, 0]))
    n = weighted_centroid(gp, w) - r @ weighted_centroid(lp, w)
    return Pose2(angle, n)


def project_observation(pose: Pose2, local_pt: np.ndarray) -> np.ndarray:
    """Map a local observation into the global frame through a node pose."""
    return pose.apply(local_pt)


def estimate_source(projections: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Closed-form source position: weighted mean of projected observations."""
    return weighted_centroid(projections, weights)


def residual_weights(residuals: np.ndarray, eps: float = WEIGHT_EPS) -> np.ndarray:
    """Inverse-squared-residual weights, regularized so exact fits stay finite."""
    r = np.asarray(residuals, dtype=float)
    return 1.0 / (eps + r * r)


@dataclass
class GeometryEstimate:
    """Joint estimate of node poses and global source positions."""

    node_ids: tuple
    poses: dict
    source_ids: tuple
    sources: dict
    final_cost: float
    weights: dict = field(default_factory=dict)
    iterations: int = 0
    converged: bool = True
    cost_history: list = field(default_factory=list)

    def pose(self, node_id) -> Pose2:
        return self.poses[node_id]

    def source(self, source_id) -> np.ndarray:
        return self.sources[source_id]

    def node_positions(self) -> np.ndarray:
        return np.array([self.poses[l].translation for l in self.node_ids])


Observations = Mapping[Hashable, Mapping[Hashable, PolarObservation]]


def cost(estimate: GeometryEstimate, observations: Observations,
         weights: Mapping | None = None) -> float:
    """Weighted sum of squared deviations between projections and sources."""
    total = 0.0
    for l, node_obs in observations.items():
        pose = estimate.poses[l]
        for k, obs in node_obs.items():
            w = weights[(l, k)] if weights is not None else obs.weight
            r = estimate.sources[k] - pose.apply(polar_to_local(obs))
            total += w * float(r @ r)
    return total


def _index_observations(observations: Observations):
    node_ids = tuple(sorted(observations))
    source_ids = tuple(sorted({k for node_obs in observations.values()
                               for k in node_obs}))
    src_index = {k: i for i, k in enumerate(source_ids)}
    per_node = {}
    for l in node_ids:
        node_obs = observations[l]
        ks = sorted(node_obs, key=lambda k: src_index[k])
        idx = np.array([src_index[k] for k in ks], dtype=int)
        pts = np.array([polar_to_local(node_obs[k]) for k in ks]).reshape(-1, 2)
        base = np.array([node_obs[k].weight for k in ks], dtype=float)
        per_node[l] = (ks, idx, pts, base)
    return node_ids, source_ids, per_node


def calibrate(
    observations: Observations,
    *,
    reweight: bool = True,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: GeometryEstimate | None = None,
) -> GeometryEstimate:
    """Alternating calibration of node poses and source positions.

    `observations[l][k]` is node l's polar observation of aligned source k.
    The lowest node id is anchored at the origin with zero orientation to
    fix the gauge. Each sweep updates every other node pose by rigid
    matching against the current sources, then refreshes all sources in
    closed form; residual weights are refreshed once per sweep when
    `reweight` is on. Stops on relative cost change below `tol` or after
    `max_iter` sweeps (non-convergence is flagged, not an error).
    """
    if len(observations) < 2:
        raise InsufficientObservations("need at least 2 nodes")
    node_ids, source_ids, per_node = _index_observations(observations)
    counts = np.zeros(len(source_ids), dtype=int)
    for l in node_ids:
        _, idx, _, _ = per_node[l]
        if len(idx) < 2:
            raise InsufficientObservations(f"node {l!r} observes < 2 sources")
        counts[idx] += 1
    if np.any(counts < 2):
        bad = [source_ids[i] for i in np.flatnonzero(counts < 2)]
        raise InsufficientObservations(f"sources observed by < 2 nodes: {bad}")

    anchor = node_ids[0]
    n_src = len(source_ids)

    poses = {l: IDENTITY_POSE for l in node_ids}
    if init is not None:
        for l in node_ids:
            if l in init.poses and l != anchor:
                poses[l] = init.poses[l]
    else:
        # Pairwise bootstrap: rigidly match each node's view of the sources
        # it shares with the anchor against the anchor's own projections.
        # Starting every pose at the identity instead routinely lands the
        # alternating sweeps in a distant local minimum.
        _, a_idx, a_pts, _ = per_node[anchor]
        anchor_proj = {int(i): a_pts[j] for j, i in enumerate(a_idx)}
        for l in node_ids:
            if l == anchor:
                continue
            _, idx, pts, base = per_node[l]
            mask = np.array([int(i) in anchor_proj for i in idx])
            if mask.sum() >= 2:
                target = np.array([anchor_proj[int(i)] for i in idx[mask]])
                try:
                    poses[l] = match_datasets(pts[mask], target, base[mask])
                except DegenerateConfiguration:
                    pass

    # Initial sources: anchor projections where available, otherwise the
    # weighted mean of projections through the current (initial) poses.
    sources = np.zeros((n_src, 2))
    filled = np.zeros(n_src, dtype=bool)
    if init is not None:
        for i, k in enumerate(source_ids):
            if k in init.sources:
                sources[i] = init.sources[k]
                filled[i] = True
    if not filled.all():
        num = np.zeros((n_src, 2))
        den = np.zeros(n_src)
        anchor_ks, anchor_idx, anchor_pts, _ = per_node[anchor]
        for l in node_ids:
            _, idx, pts, base = per_node[l]
            proj = poses[l].apply(pts)
            np.add.at(num, idx, np.maximum(base, 1e-12)[:, None] * proj)
            np.add.at(den, idx, np.maximum(base, 1e-12))
        fallback = num / np.maximum(den, 1e-300)[:, None]
        sources[~filled] = fallback[~filled]
        anchored = np.zeros(n_src, dtype=bool)
        anchored[anchor_idx] = True
        use_anchor = anchored & ~filled
        anchor_proj = poses[anchor].apply(anchor_pts)
        for j, i in enumerate(anchor_idx):
            if use_anchor[i]:
                sources[i] = anchor_proj[j]

    weights = {l: per_node[l][3].copy() for l in node_ids}
    cost_history: list[float] = []

    # Costs this far below the data's squared-distance scale are pure
    # floating-point noise; treat them as exactly solved so that noiseless
    # instances stop instead of chasing relative change at machine epsilon.
    data_scale = max(
        sum(float(np.sum(per_node[l][3] * np.sum(per_node[l][2] ** 2, axis=1)))
            for l in node_ids),
        1.0,
    )
    cost_floor = 1e-20 * data_scale

    def sweep_cost() -> float:
        total = 0.0
        for l in node_ids:
            _, idx, pts, _ = per_node[l]
            res = sources[idx] - poses[l].apply(pts)
            total += float(np.sum(weights[l] * np.sum(res * res, axis=1)))
        return total

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        for l in node_ids:
            if l == anchor:
                continue
            _, idx, pts, _ = per_node[l]
            try:
                poses[l] = match_datasets(pts, sources[idx], weights[l])
            except DegenerateConfiguration:
                pass  # keep the previous pose for this sweep
        num = np.zeros((n_src, 2))
        den = np.zeros(n_src)
        for l in node_ids:
            _, idx, pts, _ = per_node[l]
            proj = poses[l].apply(pts)
            np.add.at(num, idx, weights[l][:, None] * proj)
            np.add.at(den, idx, weights[l])
        nonzero = den > 0
        sources[nonzero] = num[nonzero] / den[nonzero, None]

        c = sweep_cost()
        cost_history.append(c)
        if c <= cost_floor:
            converged = True
        elif len(cost_history) >= 2:
            prev = cost_history[-2]
            if abs(prev - c) <= tol * max(prev, 1e-30):
                converged = True
        if converged:
            break

        if reweight:
            for l in node_ids:
                _, idx, pts, base = per_node[l]
                res = np.linalg.norm(sources[idx] - poses[l].apply(pts), axis=1)
                weights[l] = base * residual_weights(res)

    weight_map = {}
    for l in node_ids:
        ks, _, _, _ = per_node[l]
        for k, w in zip(ks, weights[l]):
            weight_map[(l, k)] = float(w)

    return GeometryEstimate(
        node_ids=node_ids,
        poses=dict(poses),
        source_ids=source_ids,
        sources={k: sources[i].copy() for i, k in enumerate(source_ids)},
        final_cost=cost_history[-1] if cost_history else 0.0,
        weights=weight_map,
        iterations=iterations,
        converged=converged,
        cost_history=cost_history,
    )


def gauge_align(estimate: GeometryEstimate,
                reference: GeometryEstimate) -> GeometryEstimate:
    """Remove the global rigid-transform ambiguity against a reference.

    Finds the single rigid transform best aligning the estimate's node
    positions onto the reference's (unit weights) and applies it to every
    pose and source. Cost is invariant under this transform.
    """
    if estimate.node_ids != reference.node_ids:
        raise ValueError("estimates cover different node sets")
    est_pos = estimate.node_positions()
    ref_pos = reference.node_positions()
    transform = match_datasets(est_pos, ref_pos, np.ones(len(est_pos)))
    poses = {l: transform.compose(p) for l, p in estimate.poses.items()}
    sources = {k: transform.apply(s) for k, s in estimate.sources.items()}
    return GeometryEstimate(
        node_ids=estimate.node_ids,
        poses=poses,
        source_ids=estimate.source_ids,
        sources=sources,
        final_cost=estimate.final_cost,
        weights=dict(estimate.weights),
        iterations=estimate.iterations,
        converged=estimate.converged,
        cost_history=list(estimate.cost_history),
    )
