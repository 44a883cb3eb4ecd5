"""Sparse instance proposal: voxel seed sampling, bubble shrinking, grouping.

All stages are pure functions of their inputs. Per-voxel and per-bubble sums
are accumulated in ascending index order so results are bit-reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix

from .model import ClassConfig, PointCloud, Proposal, ProposalSet, SeedSet, SemanticMap, majority_per_group
from .neighbors import SpatialHash, csr_row_means, scatter_rows


@dataclass(frozen=True, eq=False)
class BubbleGraph:
    """Fixed seed adjacency in CSR form (self-loops included) and per-seed degree."""

    indptr: np.ndarray
    indices: np.ndarray
    degree: np.ndarray

    def __len__(self) -> int:
        return len(self.degree)

    @property
    def adjacency(self) -> csr_matrix:
        m = len(self.degree)
        return csr_matrix((np.ones(len(self.indices)), self.indices, self.indptr), shape=(m, m))

    def neighbors(self, seed: int) -> np.ndarray:
        return self.indices[self.indptr[seed] : self.indptr[seed + 1]]

    def step(self, positions: np.ndarray) -> np.ndarray:
        """One shrink iteration: every seed moves to the mean of its bubble."""
        return csr_row_means(self.indptr, self.indices, np.ascontiguousarray(positions, dtype=np.float64))


@dataclass
class SipResult:
    proposals: ProposalSet
    seeds: SeedSet
    shifted: SeedSet
    timings: dict[str, float] = field(default_factory=dict)


@njit(cache=True)
def _voxelize(points, thing, origin, upper, size, dims):
    """Voxel key per point, or -1 for non-thing points and points outside the extent."""
    n = points.shape[0]
    keys = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if not thing[i]:
            continue
        key = 0
        inside = True
        for k in range(3):
            v = np.float64(points[i, k])
            # written so that NaN fails the test
            if not (v >= origin[k] and v < upper[k]):
                inside = False
                break
            j = min(np.int64(np.floor((v - origin[k]) / size[k])), dims[k] - 1)
            key = key * dims[k] + j
        if inside:
            keys[i] = key
    return keys


def voxel_keys(cloud: PointCloud, labels: SemanticMap, cfg: ClassConfig) -> np.ndarray:
    """Linear voxel index of every participating point; -1 elsewhere.

    Participating points are thing points inside the voxel extent.
    """
    size = np.asarray(cfg.voxel_size)
    dims = np.ceil((cfg.upper - cfg.origin) / size).astype(np.int64)
    return _voxelize(cloud.points, cfg.thing_mask(labels.semantic), cfg.origin, cfg.upper, size, dims)


def participating(cloud: PointCloud, labels: SemanticMap, cfg: ClassConfig) -> np.ndarray:
    """Indices of thing points that lie inside the voxel extent."""
    return np.flatnonzero(voxel_keys(cloud, labels, cfg) >= 0)


def group_means(xyz: np.ndarray, group: np.ndarray, n_groups: int) -> np.ndarray:
    counts = np.bincount(group, minlength=n_groups).astype(np.float64)
    sums = np.column_stack([np.bincount(group, weights=xyz[:, k], minlength=n_groups) for k in range(3)])
    return sums / counts[:, None]


def balanced_sample(cloud: PointCloud, labels: SemanticMap, cfg: ClassConfig) -> SeedSet:
    """One seed per occupied voxel, placed at the mean of the voxel's thing points.

    Seeds are numbered in ascending voxel index order.
    """
    n = len(cloud)
    assignment = np.full(n, -1, dtype=np.int64)
    keys = voxel_keys(cloud, labels, cfg)
    idx = np.flatnonzero(keys >= 0)
    if idx.size == 0:
        return SeedSet(np.empty((0, 3)), np.empty(0, dtype=np.int64), assignment)
    xyz = cloud.points[idx, :3].astype(np.float64)
    _, seed_of = np.unique(keys[idx], return_inverse=True)
    seed_of = seed_of.ravel()
    m = int(seed_of.max()) + 1
    positions = group_means(xyz, seed_of, m)
    seed_class = majority_per_group(seed_of, labels.semantic[idx].astype(np.int64), m)
    assignment[idx] = seed_of
    return SeedSet(positions, seed_class, assignment)


def build_bubble_graph(seeds: SeedSet, cfg: ClassConfig) -> BubbleGraph:
    """Adjacency of same-class seeds closer than r_c, at the current positions.

    Every row includes the seed itself. The order within a row is fixed by
    the inputs, so row sums are reproducible.
    """
    m = len(seeds)
    counts = np.zeros(m, dtype=np.int64)
    parts = []
    for c in np.unique(seeds.seed_class):
        members = np.flatnonzero(seeds.seed_class == c)
        r = cfg.radius(int(c))
        local_ptr, local_idx = SpatialHash.for_radius(seeds.positions[members], r).neighbor_lists(r)
        parts.append((members, local_ptr, local_idx))
        counts[members] = np.diff(local_ptr)
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int32)
    for members, local_ptr, local_idx in parts:
        scatter_rows(indptr, members, local_ptr, local_idx, indices)
    return BubbleGraph(indptr, indices, counts.astype(np.float64))


def bubble_shrink(seeds: SeedSet, cfg: ClassConfig, graph: BubbleGraph | None = None) -> SeedSet:
    """Move each seed to the mean of its bubble, L times, over a fixed graph."""
    if len(seeds) == 0:
        return seeds
    if graph is None:
        graph = build_bubble_graph(seeds, cfg)
    x = np.array(seeds.positions)
    for _ in range(cfg.shift_iterations):
        x = graph.step(x)
    return seeds.moved_to(x)


def shrink_iterates(seeds: SeedSet, cfg: ClassConfig):
    """Yield the graph-fixed positions after each of the L iterations."""
    graph = build_bubble_graph(seeds, cfg)
    x = np.array(seeds.positions)
    for _ in range(cfg.shift_iterations):
        x = graph.step(x)
        yield x


def seed_components(shifted: SeedSet, cfg: ClassConfig) -> np.ndarray:
    """Component label of each seed under the r_c / 2 same-class linkage.

    Labels are 0-based and numbered by each component's smallest seed index.
    """
    m = len(shifted)
    first = np.full(m, -1, dtype=np.int64)
    for c in np.unique(shifted.seed_class):
        members = np.flatnonzero(shifted.seed_class == c)
        r = cfg.radius(int(c)) / 2.0
        lab = SpatialHash.for_radius(shifted.positions[members], r).components(r)
        # Tag each seed with the smallest seed index of its component.
        mins = np.full(lab.max() + 1, m, dtype=np.int64)
        np.minimum.at(mins, lab, members)
        first[members] = mins[lab]
    uniq, inverse = np.unique(first, return_inverse=True)
    return inverse.ravel().astype(np.int64)


def group_proposals(
    shifted: SeedSet, cfg: ClassConfig, cloud: PointCloud | None = None, labels: SemanticMap | None = None
) -> ProposalSet:
    """Connected seeds form one instance; points inherit their seed's instance.

    ``cloud`` and ``labels`` fill in proposal centroids and classes from the
    member points. Without them, the seed positions and seed classes are used.
    """
    n = len(shifted.assignment)
    comp = seed_components(shifted, cfg)
    instance = np.zeros(n, dtype=np.int64)
    member = shifted.assignment >= 0
    if len(shifted):
        instance[member] = comp[shifted.assignment[member]] + 1
    if cloud is not None and labels is not None:
        return ProposalSet.from_labels(instance, cloud.xyz, labels.semantic)
    return _proposals_from_seeds(instance, shifted, comp)


def _proposals_from_seeds(instance, shifted, comp):
    proposals = []
    order = np.argsort(instance, kind="stable")
    bounds = np.searchsorted(instance[order], np.arange(1, int(instance.max(initial=0)) + 2))
    for k in range(len(bounds) - 1):
        idx = order[bounds[k] : bounds[k + 1]]
        seeds_k = np.flatnonzero(comp == k)
        proposals.append(
            Proposal(
                instance_id=k + 1,
                class_id=int(shifted.seed_class[seeds_k[0]]),
                indices=idx,
                centroid=shifted.positions[seeds_k].mean(axis=0),
            )
        )
    return ProposalSet(instance, tuple(proposals))


def run_sip(
    cloud: PointCloud, labels: SemanticMap, cfg: ClassConfig, shift: bool = True
) -> SipResult:
    """Sample, shrink (unless ``shift`` is False) and group; records stage timings in ms."""
    timings = {}
    t0 = time.perf_counter()
    seeds = balanced_sample(cloud, labels, cfg)
    t1 = time.perf_counter()
    timings["sample"] = (t1 - t0) * 1e3
    shifted = bubble_shrink(seeds, cfg) if shift and len(seeds) else seeds
    t2 = time.perf_counter()
    timings["shrink"] = (t2 - t1) * 1e3
    proposals = group_proposals(shifted, cfg, cloud, labels)
    t3 = time.perf_counter()
    timings["group"] = (t3 - t2) * 1e3
    timings["total"] = (t3 - t0) * 1e3
    return SipResult(proposals, seeds, shifted, timings)
