import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from pocketforge.analysis.metrics import (
    aar,
    aggregate_topk,
    crmsd,
    ec_metrics,
    group_by,
    kabsch_align,
    tm_d0,
    tm_score,
)
from pocketforge.analysis.models import MetricDirection
from pocketforge.errors import DegenerateGeometryError, LengthError, ShapeError


@pytest.fixture
def cloud(rng):
    return rng.normal(scale=5.0, size=(32, 3))


def test_kabsch_recovers_rigid_motion(cloud, rng):
    rot = Rotation.random(random_state=rng).as_matrix()
    shift = np.array([3.0, -1.0, 7.5])
    moved = cloud @ rot.T + shift
    r, t, rmsd = kabsch_align(cloud, moved)
    assert rmsd < 1e-10
    assert np.allclose(r, rot, atol=1e-10)
    assert np.allclose(t, shift, atol=1e-9)


def test_kabsch_never_reflects(cloud):
    mirrored = cloud * np.array([1.0, 1.0, -1.0])
    r, _, rmsd = kabsch_align(cloud, mirrored)
    assert np.linalg.det(r) == pytest.approx(1.0)
    assert rmsd > 0.1


def test_no_sampled_rotation_beats_kabsch(rng):
    for _ in range(3):
        p = rng.normal(scale=4.0, size=(12, 3))
        q = rng.normal(scale=4.0, size=(12, 3))
        _, _, best = kabsch_align(p, q)
        pc, qc = p - p.mean(0), q - q.mean(0)
        # the centroid shift is the optimal translation for any fixed rotation
        rots = Rotation.random(5000, random_state=rng).as_matrix()
        residual = np.einsum("rij,nj->rni", rots, pc) - qc
        sampled = np.sqrt((residual**2).sum(-1).mean(-1))
        assert sampled.min() >= best - 1e-9
        # a small perturbation of the returned rotation only does worse
        near = Rotation.from_matrix(kabsch_align(p, q)[0]) * Rotation.from_rotvec(rng.normal(scale=1e-3, size=3))
        nudged = np.sqrt(((pc @ near.as_matrix().T - qc) ** 2).sum(-1).mean())
        assert best - 1e-12 <= nudged < best + 1e-2


def test_kabsch_degenerate_inputs():
    with pytest.raises(DegenerateGeometryError):
        kabsch_align(np.zeros((2, 3)), np.zeros((2, 3)))
    line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateGeometryError):
        kabsch_align(line, line)
    with pytest.raises(DegenerateGeometryError):
        kabsch_align(np.ones((4, 3)), np.ones((4, 3)))
    with pytest.raises(ShapeError):
        kabsch_align(np.zeros((4, 3)), np.zeros((5, 3)))


def test_crmsd_is_invariant_to_motion_of_either_set(cloud, rng):
    noisy = cloud + rng.normal(scale=0.5, size=cloud.shape)
    base = crmsd(noisy, cloud)
    rot = Rotation.random(random_state=rng).as_matrix()
    assert crmsd(noisy @ rot.T + 4.0, cloud) == pytest.approx(base, abs=1e-9)
    assert crmsd(noisy, cloud @ rot.T - 2.0) == pytest.approx(base, abs=1e-9)
    assert crmsd(cloud, cloud) < 1e-10


def test_tm_d0():
    assert tm_d0(32) == pytest.approx(1.3884, abs=1e-4)
    with pytest.raises(LengthError):
        tm_d0(15)


def test_tm_score_ladder(cloud):
    """Radial scaling about the centroid lowers the score monotonically"""
    center = cloud.mean(axis=0)
    assert tm_score(cloud, cloud) == pytest.approx(1.0)
    scores = [tm_score(center + s * (cloud - center), cloud) for s in (1.0, 1.05, 1.2, 1.5, 2.0)]
    assert all(a > b for a, b in zip(scores, scores[1:]))
    assert 0.0 < scores[-1] < 1.0


def test_tm_score_needs_sixteen_residues(rng):
    points = rng.normal(size=(15, 3))
    with pytest.raises(LengthError):
        tm_score(points, points)


def test_aar():
    assert aar("ACDE", "ACDF") == 0.75
    assert aar([1, 2], [1, 2]) == 1.0
    with pytest.raises(ShapeError):
        aar("A", "AC")
    with pytest.raises(ShapeError):
        aar("", "")


def test_ec_metrics_macro_average():
    m = ec_metrics([1, 1, 2], [1, 2, 2])
    assert m.accuracy == pytest.approx(2 / 3)
    assert m.precision == pytest.approx(0.75)
    assert m.recall == pytest.approx(0.75)
    assert m.f1 == pytest.approx(2 / 3)
    assert set(m.per_class) == {1, 2}
    assert m.count == 3


def test_ec_metrics_counts_predicted_only_classes():
    m = ec_metrics([3], [1])
    assert set(m.per_class) == {1, 3}
    assert (m.accuracy, m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0, 0.0)
    assert ec_metrics([], []).accuracy == 0.0
    with pytest.raises(ShapeError):
        ec_metrics([1], [])


def test_aggregate_topk_minimize():
    groups = {"a": [3.0, 1.0, 2.0], "b": [4.0]}
    s = aggregate_topk(groups, 2, MetricDirection.MINIMIZE, metric="crmsd")
    assert (s.top1, s.topk, s.median) == (2.5, 2.75, 3.0)
    assert s.groups == 2
    assert s.as_row() == {"metric": "crmsd", "top1": 2.5, "topk": 2.75, "median": 3.0, "k": 2, "reactions": 2}


def test_aggregate_topk_maximize():
    s = aggregate_topk({"a": [3.0, 1.0, 2.0], "b": [4.0]}, 2, MetricDirection.MAXIMIZE)
    assert (s.top1, s.topk, s.median) == (3.5, 3.25, 3.0)


def test_aggregate_topk_errors():
    with pytest.raises(ShapeError):
        aggregate_topk({}, 1, MetricDirection.MINIMIZE)
    with pytest.raises(ShapeError):
        aggregate_topk({"a": []}, 1, MetricDirection.MINIMIZE)


def test_group_by_keeps_order():
    assert group_by(["x", "y", "x"], [1.0, 2.0, 3.0]) == {"x": [1.0, 3.0], "y": [2.0]}
