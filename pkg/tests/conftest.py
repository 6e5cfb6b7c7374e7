import numpy as np
import pytest

from wasncal import geometry as geo


def random_pose(rng):
    return geo.Pose2(rng.uniform(-np.pi, np.pi), rng.uniform(-3.0, 3.0, 2))


def synth_static_problem(rng, num_nodes, num_sources, span=5.0):
    """Forward-synthesize noiseless polar observations from random geometry.

    Returns (observations, truth) where truth is a GeometryEstimate holding
    the generating poses and sources.
    """
    poses = {0: geo.Pose2(0.0, np.zeros(2))}
    for l in range(1, num_nodes):
        poses[l] = random_pose(rng)
    sources = rng.uniform(-span, span, (num_sources, 2))
    observations = {}
    for l in range(num_nodes):
        inv = poses[l].inverse()
        local = inv.apply(sources)
        observations[l] = {
            k: geo.PolarObservation(
                azimuth=float(np.arctan2(local[k, 1], local[k, 0])),
                distance=float(np.linalg.norm(local[k])),
            )
            for k in range(num_sources)
        }
    truth = geo.GeometryEstimate(
        node_ids=tuple(range(num_nodes)),
        poses=poses,
        source_ids=tuple(range(num_sources)),
        sources={k: sources[k] for k in range(num_sources)},
        final_cost=0.0,
    )
    return observations, truth


def pose_errors(aligned, truth):
    pos = max(
        np.linalg.norm(aligned.poses[l].translation - truth.poses[l].translation)
        for l in truth.node_ids
    )
    ori = max(
        abs(geo.wrap_angle(aligned.poses[l].angle - truth.poses[l].angle))
        for l in truth.node_ids
    )
    return pos, ori


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
