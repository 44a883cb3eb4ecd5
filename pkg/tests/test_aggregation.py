import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import small_config
from lidarseg.aggregation import (
    AffinityGraph,
    GeometricAffinity,
    aggregate,
    candidate_pairs,
    merge,
    score_affinities,
)
from lidarseg.bench_oracles import bfs_edge_components
from lidarseg.model import ClassInfo, ClassConfig, PointCloud, ProposalSet


def proposals_of(xyz, instance, semantic):
    xyz = np.asarray(xyz, dtype=float)
    return PointCloud.from_xyz(xyz), ProposalSet.from_labels(np.asarray(instance), xyz, np.asarray(semantic))


def gap_config(g_max=2.0, **kw):
    table = {1: ClassInfo(1, "a", True, 1.0, g_max), 2: ClassInfo(2, "b", True, 1.0, g_max)}
    kw.setdefault("extent", ((-100, 100),) * 3)
    return ClassConfig(table, **kw)


class Fixed:
    """Scorer returning preset scores keyed by unordered pair."""

    def __init__(self, scores):
        self.scores = scores

    def score(self, i, j, proposals, cloud):
        return self.scores.get((min(i, j), max(i, j)), 0.0)


def test_single_proposal_gives_empty_graph():
    cloud, props = proposals_of([[0, 0, 0]], [1], [1])
    assert len(score_affinities(props, cloud, GeometricAffinity(gap_config()))) == 0


def test_coincident_proposals_score_one():
    cloud, props = proposals_of([[1, 1, 1], [1, 1, 1]], [1, 2], [1, 1])
    g = score_affinities(props, cloud, GeometricAffinity(gap_config()))
    assert g.pairs() == [(0, 1, 1.0)]


@pytest.mark.parametrize("gap, expected", [(0.0, 1.0), (1.0, 0.5), (2.0, 0.0), (7.0, 0.0)])
def test_gap_formula(gap, expected):
    cloud, props = proposals_of([[0, 0, 0], [-1, 0, 0], [gap, 0, 0], [gap + 1, 0, 0]], [1, 1, 2, 2], [1] * 4)
    scorer = GeometricAffinity(gap_config(g_max=2.0))
    assert scorer.gap(0, 1, props, cloud) == (gap if gap < 2.0 else np.inf)
    assert scorer.score(0, 1, props, cloud) == pytest.approx(expected)


def test_gap_defaults_to_radius():
    cfg = small_config(radius=1.5)
    cloud, props = proposals_of([[0, 0, 0], [0.75, 0, 0]], [1, 2], [1, 1])
    assert GeometricAffinity(cfg).score(0, 1, props, cloud) == pytest.approx(0.5)


def test_cross_class_pairs_are_not_candidates():
    _, props = proposals_of([[0, 0, 0], [0.1, 0, 0]], [1, 2], [1, 2])
    i, j = candidate_pairs(props)
    assert i.size == 0 and j.size == 0


def test_candidates_are_knn_by_centroid():
    xyz = np.array([[x, 0, 0] for x in range(10)], dtype=float)
    _, props = proposals_of(xyz, np.arange(1, 11), np.ones(10))
    i, j = candidate_pairs(props, k=1)
    assert set(zip(i.tolist(), j.tolist())) == {(a, a + 1) for a in range(9)}


def test_unreachable_threshold_is_identity():
    cfg = gap_config(merge_threshold={1: 1.1})
    cloud, props = proposals_of([[0, 0, 0], [0, 0, 0], [0.1, 0, 0]], [1, 2, 3], [1, 1, 1])
    out = aggregate(props, cloud, cfg)
    assert out.instance_of_point.tolist() == props.instance_of_point.tolist()
    assert len(out) == 3


def test_chain_merges_transitively():
    cloud, props = proposals_of([[0, 0, 0], [5, 0, 0], [10, 0, 0]], [1, 2, 3], [1, 1, 1])
    graph = AffinityGraph(np.array([0, 1]), np.array([1, 2]), np.array([0.9, 0.8]))
    out = merge(props, graph, gap_config())
    assert len(out) == 1 and out.instance_of_point.tolist() == [1, 1, 1]
    assert np.allclose(out.proposals[0].centroid, [5, 0, 0])


def test_threshold_is_strict():
    cloud, props = proposals_of([[0, 0, 0], [5, 0, 0]], [1, 2], [1, 1])
    graph = AffinityGraph(np.array([0]), np.array([1]), np.array([0.5]))
    assert len(merge(props, graph, gap_config())) == 2


def test_merge_refuses_cross_class_edges():
    cloud, props = proposals_of([[0, 0, 0], [5, 0, 0]], [1, 2], [1, 2])
    graph = AffinityGraph(np.array([0]), np.array([1]), np.array([1.0]))
    assert len(merge(props, graph, gap_config())) == 2


def test_out_of_range_scores_rejected():
    cloud, props = proposals_of([[0, 0, 0], [5, 0, 0]], [1, 2], [1, 1])
    with pytest.raises(ValueError):
        score_affinities(props, cloud, Fixed({(0, 1): 1.5}))


@given(st.integers(0, 2**32 - 1))
def test_merge_matches_bfs_oracle(seed):
    rng = np.random.default_rng(seed)
    o = int(rng.integers(1, 40))
    n = o + int(rng.integers(0, 100))
    instance = np.concatenate([np.arange(1, o + 1), rng.integers(0, o + 1, n - o)])
    rng.shuffle(instance)
    xyz = rng.uniform(0, 10, (n, 3))
    proposal_class = rng.integers(1, 3, o + 1)
    semantic = proposal_class[instance]
    cloud, props = proposals_of(xyz, instance, semantic)
    m = int(rng.integers(0, 3 * o))
    a, b = rng.integers(0, o, m), rng.integers(0, o, m)
    keep = a != b
    lo, hi = np.minimum(a, b)[keep], np.maximum(a, b)[keep]
    if lo.size:
        pairs = np.unique(np.column_stack([lo, hi]), axis=0)
        lo, hi = pairs[:, 0], pairs[:, 1]
    score = rng.uniform(0, 1, lo.size)
    cfg = gap_config(merge_threshold={1: 0.3, 2: 0.6})
    out = merge(props, AffinityGraph(lo, hi, score), cfg)

    cls = np.array([p.class_id for p in props.proposals])
    edges = [
        (int(u), int(v))
        for u, v, s in zip(lo, hi, score)
        if cls[u] == cls[v] and s > cfg.threshold(int(cls[u]))
    ]
    comp = bfs_edge_components(o, edges)
    expected = np.concatenate([[0], comp + 1])[instance]
    assert out.instance_of_point.tolist() == expected.tolist()
    # conservation: disjoint, same coverage, one class per merged proposal
    covered = np.concatenate([p.indices for p in out.proposals])
    assert sorted(covered.tolist()) == np.flatnonzero(instance > 0).tolist()
    for p in out.proposals:
        assert len(set(semantic[p.indices].tolist())) == 1
        assert np.allclose(p.centroid, xyz[p.indices].mean(axis=0))


@given(st.integers(0, 2**32 - 1))
def test_geometric_gap_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 80))
    xyz = rng.uniform(0, 4, (n, 3))
    instance = np.concatenate([[1, 2], rng.integers(1, 3, n - 2)])
    cloud, props = proposals_of(xyz, instance, np.ones(n))
    stored = cloud.xyz  # float32 storage
    a, b = stored[instance == 1], stored[instance == 2]
    d = np.sqrt(((a[:, None] - b[None]) ** 2).sum(-1)).min()
    cfg = gap_config(g_max=1.0)
    got = GeometricAffinity(cfg).score(0, 1, props, cloud)
    assert got == pytest.approx(max(0.0, 1.0 - d), abs=1e-12)
