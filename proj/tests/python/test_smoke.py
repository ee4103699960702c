import math

import numpy as np
import pytest

import automerge as am


def test_pose_algebra():
    a = am.Pose2(1.0, 2.0, 0.3)
    b = am.Pose2(-0.5, 4.0, -1.1)
    back = am.compose(a, am.between(a, b))
    assert back.x == pytest.approx(b.x, abs=1e-12)
    assert back.y == pytest.approx(b.y, abs=1e-12)
    assert back.yaw == pytest.approx(b.yaw, abs=1e-12)
    assert am.normalize_angle(-math.pi) == math.pi


def test_rigid_transform_recovers_a_quarter_turn():
    t = am.estimate_rigid_transform([(0, 0), (1, 0), (0, 1)], [(1, 2), (1, 3), (0, 2)])
    assert (t.x, t.y, t.yaw) == pytest.approx((1, 2, math.pi / 2), abs=1e-9)


def test_descriptor_math():
    assert am.cosine_distance([1, 0], [0, 1]) == pytest.approx(1.0)
    assert am.self_attention([0.5, -2.0, 3.0], 0.0) == [0.5, -2.0, 3.0]
    loss = am.lazy_quadruplet_loss(
        [1, 0, 0, 0, 0, 0], [[3, 4, 0, 0, 0, 0]], [[1, 1, 1, 1, 0, 0]], [2, 2, 2, 0, 2, 3], 0.5, 0.0
    )
    assert loss == 0.4


def test_spectral_cluster_on_two_blocks():
    W = np.zeros((5, 5))
    for i, j in [(0, 1), (1, 2), (3, 4)]:
        W[i, j] = W[j, i] = 1.0
    clusters, eigenvalues = am.spectral_cluster(W)
    assert clusters == [[0, 1, 2], [3, 4]]
    assert sum(e <= 1e-9 for e in eigenvalues) == 2


def test_connection_weight_grows_with_overlap():
    assert am.connection_weight(0.1, 100.0) > am.connection_weight(0.1, 10.0)


def test_pipeline_on_a_small_world():
    spec = am.WorldSpec(3)
    spec.n_segments = 4
    spec.segment_length = 400.0
    spec.clear_aliases()
    spec.clear_overlaps()
    spec.add_overlap(0, 1, 120.0)
    spec.add_overlap(2, 3, 100.0, reverse=True)
    world = am.generate_world(spec)
    assert world.n_segments == 4
    assert world.keyframes == 320
    assert world.partition == [[0, 1], [2, 3]]

    offline = am.run_offline(world, jobs=1)
    incremental = am.run_incremental(world, order_seed=5, batch=50, jobs=1)
    assert offline.partition == world.partition
    assert incremental.partition == offline.partition
    assert incremental.n_closures == offline.n_closures
    assert offline.n_poses == 320

    m = am.evaluate(offline, world, top_n=3)
    assert m["merging_accuracy"] == 1.0
    assert m["false_merges"] == 0
    assert m["precision"] == 1.0
    assert len(m["recall_at"]) == 3
    assert m["partition_exact"]


def test_errors_surface_as_python_exceptions():
    spec = am.WorldSpec(1)
    spec.n_segments = 2
    spec.segment_length = 100.0
    spec.clear_aliases()
    spec.clear_overlaps()
    spec.add_overlap(0, 1, 5.0)
    with pytest.raises(am.Error, match="InvalidArgument"):
        am.generate_world(spec)
