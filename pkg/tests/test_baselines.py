import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import small_config
from lidarseg.baselines import Timeout, dbscan, mean_shift, shift_modes
from lidarseg.model import PointCloud, SemanticMap
from lidarseg.synth import oracle_cluster


def scan(xyz, sem=None):
    xyz = np.asarray(xyz, dtype=float)
    sem = np.ones(len(xyz), dtype=int) if sem is None else np.asarray(sem)
    return PointCloud.from_xyz(xyz), SemanticMap(sem, np.zeros(len(xyz)))


def test_mean_shift_single_point():
    cloud, labels = scan([[1, 2, 0]])
    props = mean_shift(cloud, labels, small_config())
    assert props.instance_of_point.tolist() == [1]


def test_mean_shift_coincident_points_stop_after_one_iteration():
    pts = np.ones((20, 3))
    modes, iterations = shift_modes(pts, 1.0)
    assert iterations == 1 and (modes == 1).all()
    cloud, labels = scan(pts)
    assert len(mean_shift(cloud, labels, small_config())) == 1


def test_mean_shift_two_blobs(rng):
    a = rng.normal([0, 0, 0], 0.1, (100, 3))
    b = rng.normal([10, 0, 0], 0.1, (100, 3))
    cloud, labels = scan(np.concatenate([a, b]))
    inst = mean_shift(cloud, labels, small_config(radius=1.0)).instance_of_point
    assert set(inst[:100]) == {1} and set(inst[100:]) == {2}


def test_mean_shift_deadline():
    cloud, labels = scan(np.zeros((10, 3)))
    with pytest.raises(Timeout):
        mean_shift(cloud, labels, small_config(), deadline=0.0)


def test_dbscan_isolated_point_is_noise():
    cloud, labels = scan([[0, 0, 0], [5, 0, 0], [5.1, 0, 0]])
    props = dbscan(cloud, labels, small_config(), eps=0.5, min_pts=2)
    assert props.instance_of_point.tolist() == [0, 1, 1]


def test_dbscan_dense_blob(rng):
    cloud, labels = scan(rng.uniform(0, 0.1, (100, 3)))
    props = dbscan(cloud, labels, small_config(), eps=0.5, min_pts=5)
    assert len(props) == 1 and (props.instance_of_point == 1).all()


def test_dbscan_border_point_joins_nearest_core():
    # chain: three cores left, one border point, three cores right
    xyz = [[0, 0, 0], [0.1, 0, 0], [0.2, 0, 0], [0.6, 0, 0], [1.2, 0, 0], [1.3, 0, 0], [1.4, 0, 0]]
    props = dbscan(*scan(xyz), small_config(), eps=0.45, min_pts=3)
    assert props.instance_of_point.tolist() == [1, 1, 1, 1, 2, 2, 2]


def test_dbscan_rejects_bad_parameters():
    cloud, labels = scan([[0, 0, 0]])
    with pytest.raises(ValueError):
        dbscan(cloud, labels, small_config(), eps=0.0, min_pts=1)
    with pytest.raises(ValueError):
        dbscan(cloud, labels, small_config(), eps=1.0, min_pts=0)


@given(st.integers(0, 2**32 - 1))
def test_dbscan_min_pts_one_is_ccl(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 1000))
    eps = float(rng.uniform(0.1, 1.0))
    xyz = rng.uniform(0, rng.uniform(1, 10), (n, 3))
    sem = rng.choice([1, 2, 9], n)
    cloud, labels = scan(xyz, sem)
    cfg = small_config()
    got = dbscan(cloud, labels, cfg, eps=eps, min_pts=1).instance_of_point
    expected = oracle_cluster(cloud, labels, {1: eps, 2: eps}).instance_of_point
    assert got.tolist() == expected.tolist()


@given(st.integers(0, 2**32 - 1), st.sampled_from(["dbscan", "meanshift"]))
def test_baselines_partition_and_class_separation(seed, method):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 300))
    xyz = rng.uniform(-3.5, 3.5, (n, 3))
    sem = rng.choice([1, 2, 9], n)
    cloud, labels = scan(xyz, sem)
    cfg = small_config(radius=1.0, extent=((-3, 3),) * 3)
    if method == "dbscan":
        props = dbscan(cloud, labels, cfg, eps=0.6, min_pts=3)
    else:
        props = mean_shift(cloud, labels, cfg)
    inst = props.instance_of_point
    outside = (sem == 9) | ~cfg.inside_extent(cloud.xyz)
    assert (inst[outside] == 0).all()
    if method == "meanshift":
        assert (inst[~outside] > 0).all()
    for p in props.proposals:
        assert len(set(sem[p.indices].tolist())) == 1
    assert sorted(set(inst[inst > 0].tolist())) == list(range(1, len(props) + 1))
