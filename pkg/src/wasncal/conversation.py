"""Conversation grouping from head orientation and the evaluation metrics.

Two users are paired when each one's head orientation points within pi/4
of the bearing to the other; conversation groups are the connected
components of these mutual pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .errors import CoincidentPositions, IdMismatch
from .geometry import match_datasets, wrap_angle

INTEREST_HALF_ANGLE = np.pi / 4


@dataclass(frozen=True)
class NodePoseSnapshot:
    """A node's position and head orientation at one instant."""

    node_id: Hashable
    position: np.ndarray
    orientation: float

    def __post_init__(self):
        object.__setattr__(self, "position",
                           np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation",
                           wrap_angle(float(self.orientation)))


@dataclass
class ConversationGraph:
    interest_edges: set  # directed (i, j): i shows interest toward j
    mutual_edges: set    # frozenset({i, j}) where both directions hold
    groups: list         # connected components of mutual edges, as sets


@dataclass
class GroupingMetrics:
    setup_accuracy: float
    orientation_error_deg: float
    position_error_m: float


def bearing(i: NodePoseSnapshot, j: NodePoseSnapshot) -> float:
    """Direction from i's position toward j's position, global frame."""
    d = j.position - i.position
    if not np.any(np.abs(d) > 0):
        raise CoincidentPositions(f"nodes {i.node_id!r} and {j.node_id!r} coincide")
    return float(np.arctan2(d[1], d[0]))


def interest(i: NodePoseSnapshot, j: NodePoseSnapshot) -> bool:
    """True when i's head orientation points within pi/4 of j (strict)."""
    return abs(wrap_angle(bearing(i, j) - i.orientation)) < INTEREST_HALF_ANGLE


def build_graph(snapshots: Sequence[NodePoseSnapshot]) -> ConversationGraph:
    """Directed interest edges, mutual edges, and connected-component groups."""
    interest_edges = set()
    for i in snapshots:
        for j in snapshots:
            if i.node_id == j.node_id:
                continue
            if interest(i, j):
                interest_edges.add((i.node_id, j.node_id))
    mutual_edges = {
        frozenset((a, b)) for (a, b) in interest_edges
        if (b, a) in interest_edges
    }
    # Connected components over mutual edges; singletons stay alone.
    parent = {s.node_id: s.node_id for s in snapshots}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for edge in mutual_edges:
        a, b = tuple(edge)
        parent[find(a)] = find(b)
    components: dict = {}
    for s in snapshots:
        components.setdefault(find(s.node_id), set()).add(s.node_id)
    groups = sorted(components.values(), key=lambda g: sorted(map(str, g)))
    return ConversationGraph(interest_edges, mutual_edges, groups)


def align_snapshots(
    estimated: Sequence[NodePoseSnapshot],
    truth: Sequence[NodePoseSnapshot],
) -> list[NodePoseSnapshot]:
    """Rigidly align estimated snapshots onto the truth (unit weights)."""
    est = {s.node_id: s for s in estimated}
    tru = {s.node_id: s for s in truth}
    if set(est) != set(tru):
        raise IdMismatch("snapshot node ids differ")
    ids = sorted(est)
    transform = match_datasets(
        np.array([est[i].position for i in ids]),
        np.array([tru[i].position for i in ids]),
        np.ones(len(ids)),
    )
    return [
        NodePoseSnapshot(
            node_id=i,
            position=transform.apply(est[i].position),
            orientation=wrap_angle(est[i].orientation + transform.angle),
        )
        for i in ids
    ]


def evaluate(
    estimated: Sequence[NodePoseSnapshot],
    truth: Sequence[NodePoseSnapshot],
) -> GroupingMetrics:
    """Pairing accuracy plus mean orientation/position errors.

    Callers should gauge-align the estimated snapshots first (see
    `align_snapshots`); the metrics compare frames directly.
    """
    est = {s.node_id: s for s in estimated}
    tru = {s.node_id: s for s in truth}
    if set(est) != set(tru):
        raise IdMismatch("snapshot node ids differ")
    ids = sorted(est)
    ori_err = np.mean([
        abs(wrap_angle(est[i].orientation - tru[i].orientation)) for i in ids
    ])
    pos_err = np.mean([
        np.linalg.norm(est[i].position - tru[i].position) for i in ids
    ])
    matches = 0
    pairs = 0
    for i in ids:
        for j in ids:
            if i == j:
                continue
            pairs += 1
            if interest(est[i], est[j]) == interest(tru[i], tru[j]):
                matches += 1
    accuracy = matches / pairs if pairs else 1.0
    return GroupingMetrics(
        setup_accuracy=float(accuracy),
        orientation_error_deg=float(np.degrees(ori_err)),
        position_error_m=float(pos_err),
    )
