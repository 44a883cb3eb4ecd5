"""Instance aggregation: score proposal pairs, keep confident edges, merge components.

Candidate pairs are the K nearest same-class proposals by centroid. The
scorer is pluggable; the default scores the closest-point gap between two
proposals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.spatial import cKDTree

from .model import ClassConfig, PointCloud, Proposal, ProposalSet
from .neighbors import SpatialHash, component_labels

DEFAULT_K = 5


@dataclass(frozen=True, eq=False)
class AffinityGraph:
    """Scored unordered proposal pairs, ``i < j`` (0-based proposal positions), sorted by (i, j)."""

    i: np.ndarray
    j: np.ndarray
    score: np.ndarray

    def __len__(self) -> int:
        return len(self.i)

    def pairs(self):
        return list(zip(self.i.tolist(), self.j.tolist(), self.score.tolist()))


class AffinityScorer(Protocol):
    def score(self, i: int, j: int, proposals: ProposalSet, cloud: PointCloud) -> float:
        """Affinity in [0, 1] for the same-class proposals at positions i and j."""


class GeometricAffinity:
    """s = max(0, 1 - gap / g_max), gap being the closest point-to-point distance.

    Spatial hashes are cached per proposal, so one instance should be used
    for one (proposals, cloud) pair.
    """

    def __init__(self, cfg: ClassConfig):
        self.cfg = cfg
        self._hashes: dict[int, SpatialHash] = {}

    def gap(self, i: int, j: int, proposals: ProposalSet, cloud: PointCloud) -> float:
        a, b = proposals.proposals[i], proposals.proposals[j]
        g_max = self.cfg.gap_max(a.class_id)
        # Hash the larger set, query with the smaller one.
        if len(a) > len(b):
            i, a, j, b = j, b, i, a
        if j not in self._hashes:
            self._hashes[j] = SpatialHash(cloud.points[b.indices, :3], g_max)
        _, dist = self._hashes[j].nearest(cloud.points[a.indices, :3], g_max)
        return float(dist.min(initial=np.inf))

    def score(self, i: int, j: int, proposals: ProposalSet, cloud: PointCloud) -> float:
        g_max = self.cfg.gap_max(proposals.proposals[i].class_id)
        return max(0.0, 1.0 - self.gap(i, j, proposals, cloud) / g_max)


def candidate_pairs(proposals: ProposalSet, k: int = DEFAULT_K):
    """Unordered same-class pairs where one is among the other's k nearest centroids."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    props = proposals.proposals
    if len(props) < 2:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    classes = np.array([p.class_id for p in props])
    centroids = np.array([p.centroid for p in props])
    pairs = []
    for c in np.unique(classes):
        members = np.flatnonzero(classes == c)
        if len(members) < 2:
            continue
        kk = min(k + 1, len(members))
        _, nn = cKDTree(centroids[members]).query(centroids[members], k=kk)
        src = np.repeat(np.arange(len(members)), kk)
        dst = nn.ravel()
        keep = src != dst
        a, b = members[src[keep]], members[dst[keep]]
        pairs.append(np.column_stack([np.minimum(a, b), np.maximum(a, b)]))
    if not pairs:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    uniq = np.unique(np.concatenate(pairs), axis=0)
    return uniq[:, 0], uniq[:, 1]


def score_affinities(
    proposals: ProposalSet, cloud: PointCloud, scorer: AffinityScorer, k: int = DEFAULT_K
) -> AffinityGraph:
    """Score each candidate pair once. Cross-class pairs are never candidates."""
    i, j = candidate_pairs(proposals, k)
    scores = np.array([scorer.score(int(a), int(b), proposals, cloud) for a, b in zip(i, j)], dtype=np.float64)
    if len(scores) and not ((scores >= 0) & (scores <= 1)).all():
        raise ValueError("affinity scorer returned a value outside [0, 1]")
    return AffinityGraph(i, j, scores)


def merge(proposals: ProposalSet, graph: AffinityGraph, cfg: ClassConfig) -> ProposalSet:
    """Merge proposals joined by edges with score > their class threshold.

    Merged proposals are numbered 1..O' by their smallest original ID.
    """
    props = proposals.proposals
    o = len(props)
    if o == 0:
        return proposals
    classes = np.array([p.class_id for p in props])
    if len(graph):
        same = classes[graph.i] == classes[graph.j]
        limit = np.array([cfg.threshold(int(c)) for c in classes[graph.i]])
        keep = same & (graph.score > limit)
        comp = component_labels(o, graph.i[keep], graph.j[keep])
    else:
        comp = np.arange(o)
    # proposal k has ID k + 1, so labels by smallest vertex are labels by smallest ID
    remap = np.concatenate([[0], comp + 1])
    instance = remap[proposals.instance_of_point]
    merged = []
    for new_id in range(int(comp.max()) + 1):
        members = np.flatnonzero(comp == new_id)
        sizes = np.array([len(props[m]) for m in members], dtype=np.float64)
        centroid = (np.array([props[m].centroid for m in members]) * sizes[:, None]).sum(axis=0) / sizes.sum()
        indices = np.sort(np.concatenate([props[m].indices for m in members]))
        merged.append(Proposal(new_id + 1, int(classes[members[0]]), indices, centroid))
    return ProposalSet(instance, tuple(merged))


def aggregate(
    proposals: ProposalSet,
    cloud: PointCloud,
    cfg: ClassConfig,
    scorer: AffinityScorer | None = None,
    k: int = DEFAULT_K,
) -> ProposalSet:
    """Score then merge; the geometric scorer is used when none is given."""
    scorer = scorer if scorer is not None else GeometricAffinity(cfg)
    return merge(proposals, score_affinities(proposals, cloud, scorer, k), cfg)
