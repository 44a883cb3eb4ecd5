"""Reference clusterers over raw thing points: flat-kernel mean shift and DBSCAN.

Both run per class on the same participating points as SIP (thing points
inside the voxel extent). Instance IDs are 1..O ordered by each cluster's
smallest point index.
"""

from __future__ import annotations

import time

import numpy as np

from .model import ClassConfig, PointCloud, ProposalSet, SemanticMap, dense_relabel
from .neighbors import SpatialHash
from .sip import participating

MEAN_SHIFT_TOL = 1e-3
MEAN_SHIFT_MAX_ITER = 50
# Points per window-mean call between deadline checks.
_CHUNK = 4096


class Timeout(Exception):
    """Raised when a run passes its deadline."""


def _per_class(cloud: PointCloud, labels: SemanticMap, cfg: ClassConfig):
    idx = participating(cloud, labels, cfg)
    sem = labels.semantic[idx].astype(np.int64)
    xyz = cloud.xyz
    for c in np.unique(sem):
        members = idx[sem == c]
        yield int(c), members, xyz[members]


def _finish(component: np.ndarray, cloud: PointCloud, labels: SemanticMap) -> ProposalSet:
    instance = dense_relabel(component)
    return ProposalSet.from_labels(instance, cloud.xyz, labels.semantic)


def shift_modes(
    points: np.ndarray,
    bandwidth: float,
    tol: float = MEAN_SHIFT_TOL,
    max_iter: int = MEAN_SHIFT_MAX_ITER,
    deadline: float | None = None,
):
    """Flat-kernel mean shift of every point over the fixed data ``points``.

    A point stops once its own step is below ``tol``. Returns (modes, iterations run).
    ``deadline`` is a ``time.perf_counter()`` value; passing it raises Timeout.
    """
    index = SpatialHash(points, bandwidth)
    modes = points.copy()
    active = np.arange(len(points))
    it = 0
    while active.size and it < max_iter:
        it += 1
        moved = np.empty((active.size, 3))
        for lo in range(0, active.size, _CHUNK):
            if deadline is not None and time.perf_counter() > deadline:
                raise Timeout("mean shift passed its deadline")
            moved[lo : lo + _CHUNK], _ = index.window_means(modes[active[lo : lo + _CHUNK]], bandwidth)
        step = np.sqrt(((moved - modes[active]) ** 2).sum(axis=1))
        modes[active] = moved
        active = active[step >= tol]
    return modes, it


def mean_shift(
    cloud: PointCloud,
    labels: SemanticMap,
    cfg: ClassConfig,
    tol: float = MEAN_SHIFT_TOL,
    max_iter: int = MEAN_SHIFT_MAX_ITER,
    deadline: float | None = None,
) -> ProposalSet:
    """Per-class mean shift with bandwidth r_c; modes closer than r_c / 2 join one cluster."""
    component = np.full(len(cloud), -1, dtype=np.int64)
    for c, members, pts in _per_class(cloud, labels, cfg):
        bw = cfg.radius(c)
        modes, _ = shift_modes(pts, bw, tol, max_iter, deadline)
        lab = SpatialHash(modes, bw / 2.0).components(bw / 2.0)
        # each point carries its own mode, so it belongs to that mode's cluster
        component[members] = _tag_min(lab, members)
    return _finish(component, cloud, labels)


def _tag_min(lab: np.ndarray, members: np.ndarray) -> np.ndarray:
    # Globally unique tag per cluster: its smallest point index.
    mins = np.full(lab.max() + 1, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(mins, lab, members)
    return mins[lab]


def dbscan(
    cloud: PointCloud, labels: SemanticMap, cfg: ClassConfig, eps: float, min_pts: int
) -> ProposalSet:
    """Per-class DBSCAN; neighbors are points at distance < eps, a point counting itself.

    Core points (>= min_pts neighbors) linked within eps form clusters. A
    border point joins the cluster of its nearest core point (ties to the
    lower index). Everything else is noise with instance 0.
    """
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts}")
    component = np.full(len(cloud), -1, dtype=np.int64)
    for _, members, pts in _per_class(cloud, labels, cfg):
        core = SpatialHash(pts, eps).count_within(eps) >= min_pts
        core_idx = np.flatnonzero(core)
        if core_idx.size == 0:
            continue
        core_hash = SpatialHash(pts[core_idx], eps)
        lab = core_hash.components(eps)
        local = np.full(len(pts), -1, dtype=np.int64)
        local[core_idx] = lab
        border = np.flatnonzero(~core)
        if border.size:
            near, _ = core_hash.nearest(pts[border], eps)
            hit = near >= 0
            local[border[hit]] = lab[near[hit]]
        assigned = local >= 0
        component[members[assigned]] = _tag_min(local[assigned], members[assigned])
    return _finish(component, cloud, labels)
