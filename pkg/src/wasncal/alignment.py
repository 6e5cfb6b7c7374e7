"""Cross-node source association and level-based distance estimation.

Sources seen by different nodes are associated by speaker-embedding
similarity; transmitter-receiver distance comes from the level drop under
a free-field spherical-spreading path-loss model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from .errors import ImplausibleGain, ZeroVector

SIMILARITY_THRESHOLD = 0.8
EMBEDDING_DIM = 256

# 20 dB/decade spherical spreading, referenced to 1 m. The guard band
# admits every distance the discovery front end can report (its sensing
# floor is 5 cm, i.e. a 26.02 dB apparent gain) while rejecting clearly
# amplified paths beyond that.
PATH_LOSS_REFERENCE_M = 1.0
GAIN_GUARD_DB = 26.1

# Down-weight for calibration terms whose distance came from level
# comparison rather than a direct measurement.
DISTANCE_TERM_WEIGHT = 0.25


def normalize_embedding(vector: np.ndarray) -> np.ndarray:
    v = np.asarray(vector, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ZeroVector("cannot normalize a zero vector")
    return v / norm


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass
class AlignedSource:
    """A group of same-speaker observations spanning multiple nodes."""

    group_id: int
    members: list  # (node_id, observation index within that node's list)
    representative: np.ndarray  # normalized mean of member embeddings


def align_sources(
    embeddings: Mapping[Hashable, Sequence[np.ndarray]],
    *,
    threshold: float = SIMILARITY_THRESHOLD,
    keep_singletons: bool = False,
) -> list[AlignedSource]:
    """Greedy agglomeration of one time step's embeddings across nodes.

    Observations are visited in (node id, observation order); each joins
    the first existing group whose representative similarity exceeds the
    threshold and that has no member from the same node, else it seeds a
    new group. Groups spanning fewer than two nodes are dropped unless
    `keep_singletons` is set.
    """
    groups: list[AlignedSource] = []
    sums: list[np.ndarray] = []
    for node_id in sorted(embeddings):
        for idx, emb in enumerate(embeddings[node_id]):
            emb = np.asarray(emb, dtype=float)
            placed = False
            for g, total in zip(groups, sums):
                if any(m[0] == node_id for m in g.members):
                    continue
                if cosine_similarity(emb, g.representative) > threshold:
                    g.members.append((node_id, idx))
                    total += emb
                    g.representative = normalize_embedding(total)
                    placed = True
                    break
            if not placed:
                groups.append(AlignedSource(
                    group_id=len(groups),
                    members=[(node_id, idx)],
                    representative=normalize_embedding(emb),
                ))
                sums.append(emb.copy())
    if keep_singletons:
        return groups
    valid = [g for g in groups if len({m[0] for m in g.members}) >= 2]
    for new_id, g in enumerate(valid):
        g.group_id = new_id
    return valid


def estimate_distance(tx_level_db: float, rx_level_db: float) -> float:
    """Distance implied by the level drop from transmitter to receiver."""
    if not (np.isfinite(tx_level_db) and np.isfinite(rx_level_db)):
        raise ValueError("levels must be finite")
    if tx_level_db < rx_level_db - GAIN_GUARD_DB:
        raise ImplausibleGain(
            f"received level {rx_level_db} dB exceeds transmitted "
            f"{tx_level_db} dB beyond the {GAIN_GUARD_DB} dB guard"
        )
    return PATH_LOSS_REFERENCE_M * 10.0 ** ((tx_level_db - rx_level_db) / 20.0)


def level_at_distance(tx_level_db: float, distance_m: float) -> float:
    """Received level under the same path-loss law (inverse of the above)."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    return tx_level_db - 20.0 * np.log10(distance_m / PATH_LOSS_REFERENCE_M)


def single_source_segments(
    activity: Mapping[Hashable, Sequence[tuple[float, float]]],
) -> list[tuple[float, float]]:
    """Maximal time intervals during which exactly one speaker is active."""
    events: list[tuple[float, int]] = []
    for intervals in activity.values():
        for start, end in intervals:
            if not start < end:
                raise ValueError(f"malformed interval ({start}, {end})")
            events.append((start, +1))
            events.append((end, -1))
    events.sort()
    segments: list[tuple[float, float]] = []
    active = 0
    seg_start = None
    i = 0
    while i < len(events):
        t = events[i][0]
        while i < len(events) and events[i][0] == t:
            active += events[i][1]
            i += 1
        if active == 1 and seg_start is None:
            seg_start = t
        elif active != 1 and seg_start is not None:
            if t > seg_start:
                segments.append((seg_start, t))
            seg_start = None
    # Merge abutting segments produced by zero-length activity gaps.
    merged: list[tuple[float, float]] = []
    for seg in segments:
        if merged and merged[-1][1] == seg[0]:
            merged[-1] = (merged[-1][0], seg[1])
        else:
            merged.append(seg)
    return [tuple(s) for s in merged]
