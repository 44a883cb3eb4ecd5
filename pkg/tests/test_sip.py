import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import small_config
from lidarseg.bench_oracles import bfs_seed_groups, dense_adjacency, dense_shift_oracle
from lidarseg.model import PointCloud, SeedSet, SemanticMap
from lidarseg.sip import (
    balanced_sample,
    bubble_shrink,
    build_bubble_graph,
    group_proposals,
    run_sip,
    shrink_iterates,
)
from lidarseg.synth import SceneSpec, generate_scene


def seeds_at(positions, classes=None):
    positions = np.asarray(positions, dtype=float)
    m = len(positions)
    classes = np.ones(m, dtype=int) if classes is None else np.asarray(classes)
    return SeedSet(positions, classes, np.arange(m))


def random_seeds(seed, m_max=300):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, m_max))
    pos = rng.uniform(0, rng.uniform(1, 8), (m, 3))
    return seeds_at(pos, rng.integers(1, 3, m)), rng


# --- balanced sampling -------------------------------------------------------


def test_single_point_is_its_own_seed():
    cfg = small_config()
    seeds = balanced_sample(PointCloud.from_xyz([[0.5, 0.5, 0.5]]), SemanticMap([1], [0]), cfg)
    assert len(seeds) == 1
    assert np.allclose(seeds.positions[0], [0.5, 0.5, 0.5], atol=1e-6)
    assert seeds.assignment.tolist() == [0]


def test_two_points_in_one_voxel():
    cfg = small_config(extent=((0, 10), (0, 10), (0, 10)))
    cloud = PointCloud.from_xyz([[0.0, 0, 0], [0.1, 0, 0]])
    seeds = balanced_sample(cloud, SemanticMap([1, 1], [0, 0]), cfg)
    assert len(seeds) == 1
    assert np.allclose(seeds.positions[0], [0.05, 0, 0])


def test_stuff_and_outside_points_do_not_participate():
    cfg = small_config(extent=((0, 10), (0, 10), (0, 10)))
    cloud = PointCloud.from_xyz([[1, 1, 1], [2, 2, 2], [-1, 1, 1], [np.nan, 1, 1]])
    seeds = balanced_sample(cloud, SemanticMap([1, 9, 1, 1], [0] * 4), cfg)
    assert seeds.assignment.tolist() == [0, -1, -1, -1]


@given(st.integers(0, 2**32 - 1))
def test_voxel_means_match_naive_pass(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 2000))
    cfg = small_config(extent=((-2, 2), (-2, 2), (-1, 1)))
    xyz = rng.uniform(-2.5, 2.5, (n, 3))
    sem = rng.choice([1, 2, 9], n)
    cloud = PointCloud.from_xyz(xyz)
    seeds = balanced_sample(cloud, SemanticMap(sem, np.zeros(n)), cfg)
    # independent pass: dictionary of voxel -> members, in point order
    p = cloud.points[:, :3].astype(float)
    size, origin = np.array(cfg.voxel_size), cfg.origin
    groups = {}
    for i in range(n):
        if sem[i] == 9 or not ((p[i] >= origin) & (p[i] < cfg.upper)).all():
            continue
        key = tuple(np.minimum(np.floor((p[i] - origin) / size), np.ceil((cfg.upper - origin) / size) - 1).astype(int))
        groups.setdefault(key, []).append(i)
    assert len(seeds) == len(groups)
    for k, key in enumerate(sorted(groups)):
        members = groups[key]
        assert sorted(np.flatnonzero(seeds.assignment == k).tolist()) == members
        assert np.allclose(seeds.positions[k], p[members].mean(axis=0), rtol=0, atol=1e-12)
        values, counts = np.unique(sem[members], return_counts=True)
        assert seeds.seed_class[k] == values[np.argmax(counts)]


# --- bubble shrinking -------------------------------------------------------------


def test_isolated_seed_does_not_move():
    cfg = small_config(radius=1.0)
    out = bubble_shrink(seeds_at([[0, 0, 0], [5, 0, 0]]), cfg)
    assert out.positions.tolist() == [[0, 0, 0], [5, 0, 0]]


def test_two_seeds_meet_at_midpoint():
    cfg = small_config(radius=1.5)
    steps = list(shrink_iterates(seeds_at([[0, 0, 0], [1, 0, 0]]), cfg))
    for x in steps:
        assert np.allclose(x, [[0.5, 0, 0], [0.5, 0, 0]])


def test_graph_is_symmetric_with_self_loops():
    seeds, _ = random_seeds(3)
    g = build_bubble_graph(seeds, small_config(radius=1.0))
    adj = g.adjacency.toarray() > 0
    assert (adj == adj.T).all()
    assert adj.diagonal().all()
    assert (g.degree == adj.sum(axis=1)).all()


@given(st.integers(0, 2**32 - 1))
def test_shrink_matches_dense_oracle(seed):
    seeds, rng = random_seeds(seed, m_max=2000)
    cfg = small_config(radius=float(rng.uniform(0.3, 2.0)), shift_iterations=int(rng.integers(1, 6)))
    k = dense_adjacency(seeds.positions, seeds.seed_class, cfg.radius)
    expected = dense_shift_oracle(seeds.positions, k, cfg.shift_iterations)
    got = bubble_shrink(seeds, cfg).positions
    assert np.abs(got - expected).max() <= 1e-9


@given(st.integers(0, 2**32 - 1))
def test_bounding_box_contracts_every_iteration(seed):
    seeds, rng = random_seeds(seed)
    cfg = small_config(radius=float(rng.uniform(0.3, 2.0)), shift_iterations=6)
    g = build_bubble_graph(seeds, cfg)
    from scipy.sparse.csgraph import connected_components

    _, comp = connected_components(g.adjacency, directed=False)
    prev = seeds.positions
    for x in shrink_iterates(seeds, cfg):
        for c in np.unique(comp):
            m = comp == c
            assert (x[m].min(axis=0) >= prev[m].min(axis=0) - 1e-12).all()
            assert (x[m].max(axis=0) <= prev[m].max(axis=0) + 1e-12).all()
        prev = x


# --- grouping ----------------------------------------------------------------------


def test_three_close_seeds_one_proposal():
    cfg = small_config(radius=1.0)
    props = group_proposals(seeds_at([[0, 0, 0], [0.3, 0, 0], [0.1, 0.2, 0]]), cfg)
    assert len(props) == 1 and props.instance_of_point.tolist() == [1, 1, 1]


def test_two_distant_seeds_two_proposals():
    cfg = small_config(radius=1.0)
    props = group_proposals(seeds_at([[0, 0, 0], [0.5, 0, 0]]), cfg)
    assert props.instance_of_point.tolist() == [1, 2]


def test_classes_never_share_a_proposal():
    cfg = small_config(radius=1.0)
    props = group_proposals(seeds_at([[0, 0, 0], [0.1, 0, 0]], [1, 2]), cfg)
    assert len(props) == 2


@given(st.integers(0, 2**32 - 1))
def test_grouping_matches_bfs(seed):
    seeds, rng = random_seeds(seed, m_max=400)
    cfg = small_config(radius=float(rng.uniform(0.3, 2.0)))
    expected = bfs_seed_groups(seeds.positions, seeds.seed_class, cfg.radius) + 1
    assert group_proposals(seeds, cfg).instance_of_point.tolist() == expected.tolist()


# --- end to end -----------------------------------------------------------------------


def blob(rng, center, n):
    return rng.normal(center, 0.15, (n, 3))


def test_two_blobs_two_proposals(rng):
    cfg = small_config(radius=1.0)
    xyz = np.concatenate([blob(rng, [0, 0, 0], 200), blob(rng, [10, 0, 0], 200)])
    res = run_sip(PointCloud.from_xyz(xyz), SemanticMap(np.ones(400), np.zeros(400)), cfg)
    assert len(res.proposals) == 2
    inst = res.proposals.instance_of_point
    assert set(inst[:200]) == {1} and set(inst[200:]) == {2}
    assert set(res.timings) == {"sample", "shrink", "group", "total"}


def test_empty_thing_set():
    cfg = small_config()
    res = run_sip(PointCloud.from_xyz([[0, 0, 0]]), SemanticMap([9], [0]), cfg)
    assert len(res.proposals) == 0 and res.proposals.instance_of_point.tolist() == [0]


def test_single_blob_one_proposal(rng):
    cfg = small_config(radius=1.0)
    res = run_sip(PointCloud.from_xyz(blob(rng, [1, 1, 1], 300)), SemanticMap(np.ones(300), np.zeros(300)), cfg)
    assert len(res.proposals) == 1 and (res.proposals.instance_of_point == 1).all()


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_partition_and_class_separation(seed, shift):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 1500))
    cfg = small_config(radius=float(rng.uniform(0.3, 1.5)), extent=((-3, 3), (-3, 3), (-3, 3)))
    xyz = rng.uniform(-3.5, 3.5, (n, 3))
    sem = rng.choice([1, 2, 9], n)
    cloud = PointCloud.from_xyz(xyz)
    res = run_sip(cloud, SemanticMap(sem, np.zeros(n)), cfg, shift=shift)
    inst = res.proposals.instance_of_point
    part = res.seeds.assignment >= 0
    assert (inst[part] > 0).all() and (inst[~part] == 0).all()
    covered = np.concatenate([p.indices for p in res.proposals.proposals]) if len(res.proposals) else np.empty(0)
    assert sorted(covered.tolist()) == np.flatnonzero(part).tolist()
    seed_cls = res.seeds.seed_class
    for p in res.proposals.proposals:
        assert len(p) > 0
        # every seed dominating this proposal has the proposal's class
        assert set(seed_cls[res.seeds.assignment[p.indices]].tolist()) == {p.class_id}
        values, counts = np.unique(sem[p.indices], return_counts=True)
        assert p.class_id == values[np.argmax(counts)]
    assert sorted(set(inst[part])) == list(range(1, len(res.proposals) + 1))


def test_repeat_runs_are_byte_identical(cfg):
    cloud, labels = generate_scene(SceneSpec(thing_points=5000), 3)
    a = run_sip(cloud, labels, cfg)
    b = run_sip(cloud, labels, cfg)
    assert a.shifted.positions.tobytes() == b.shifted.positions.tobytes()
    assert a.proposals.instance_of_point.tobytes() == b.proposals.instance_of_point.tobytes()


def test_seedset_shape_errors():
    with pytest.raises(ValueError):
        seeds_at(np.zeros((2, 2)))
