"""Slow, obviously-correct reference implementations used by the tests.

Nothing here calls into the production modules; inputs are plain arrays (or
the immutable model types, read field by field).
"""

from __future__ import annotations

from collections import deque

import numpy as np

DENSE_LIMIT = 2000


def dense_shift_oracle(positions: np.ndarray, adjacency: np.ndarray, iterations: int) -> np.ndarray:
    """Apply X <- D^-1 K X ``iterations`` times with a dense M x M adjacency K."""
    x = np.array(positions, dtype=np.float64)
    k = np.asarray(adjacency, dtype=np.float64)
    m = len(x)
    if m > DENSE_LIMIT:
        raise ValueError(f"dense oracle refuses M={m} (limit {DENSE_LIMIT})")
    if k.shape != (m, m):
        raise ValueError(f"adjacency shape {k.shape} does not match {m} positions")
    p = k / k.sum(axis=1, keepdims=True)
    for _ in range(iterations):
        x = p @ x
    return x


def dense_adjacency(positions: np.ndarray, classes: np.ndarray, radius_of) -> np.ndarray:
    """K[u, v] = same class and distance < radius_of(class), self-loops included."""
    pos = np.asarray(positions, dtype=np.float64)
    cls = np.asarray(classes)
    m = len(pos)
    k = np.zeros((m, m), dtype=bool)
    for u in range(m):
        r = radius_of(int(cls[u]))
        d2 = ((pos - pos[u]) ** 2).sum(axis=1)
        k[u] = (cls == cls[u]) & (d2 < r * r)
    return k


def bfs_components(n: int, connected) -> np.ndarray:
    """Components of the graph whose edges are given by ``connected(u) -> bool mask``.

    Labels are 0..C-1 in order of each component's smallest vertex.
    """
    label = np.full(n, -1, dtype=np.int64)
    next_label = 0
    for start in range(n):
        if label[start] >= 0:
            continue
        label[start] = next_label
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(connected(u)):
                if label[v] < 0:
                    label[v] = next_label
                    queue.append(v)
        next_label += 1
    return label


def bfs_seed_groups(positions: np.ndarray, classes: np.ndarray, radius_of) -> np.ndarray:
    """Grouping oracle: same class and distance < radius_of(class) / 2."""
    pos = np.asarray(positions, dtype=np.float64)
    cls = np.asarray(classes)

    def connected(u):
        r = radius_of(int(cls[u])) / 2.0
        return (cls == cls[u]) & (((pos - pos[u]) ** 2).sum(axis=1) < r * r)

    return bfs_components(len(pos), connected)


def bfs_edge_components(n: int, edges) -> np.ndarray:
    """Components of an undirected edge list ``[(i, j), ...]`` over n vertices."""
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)

    def connected(u):
        mask = np.zeros(n, dtype=bool)
        mask[adj[u]] = True
        return mask

    return bfs_components(n, connected)


def brute_force_panoptic(scans, cfg) -> dict:
    """Panoptic scores by enumerating every prediction x ground-truth segment pair.

    ``scans`` is a sequence of (pred, gt) SemanticMap pairs. Returns
    {"classes": {id: {...}}, "aggregates": {...}} with the same conventions as
    the production evaluator, using Python sets and loops throughout.
    """
    ignore = set(int(c) for c in cfg.ignore)
    things = {c for c, info in cfg.classes.items() if info.thing}
    known = set(cfg.classes) | ignore
    counts = {c: {"tp": 0, "fp": 0, "fn": 0, "iou_sum": 0.0, "inter": 0, "union": 0} for c in cfg.classes}

    def segments(sem, inst, keep):
        segs = {}
        for p in range(len(sem)):
            if not keep[p]:
                continue
            c = int(sem[p])
            if c in ignore:
                continue
            if c in things:
                if inst[p] == 0:
                    continue
                key = (c, int(inst[p]))
            else:
                key = (c, 0)
            segs.setdefault(key, set()).add(p)
        return segs

    for pred, gt in scans:
        gsem = [int(v) for v in gt.semantic]
        psem = [int(v) for v in pred.semantic]
        for c in set(gsem) | set(psem):
            if c not in known:
                raise ValueError(f"class {c} not in config")
        keep = [c not in ignore for c in gsem]
        for c in cfg.classes:
            g = {p for p in range(len(gsem)) if keep[p] and gsem[p] == c}
            q = {p for p in range(len(psem)) if keep[p] and psem[p] == c}
            counts[c]["inter"] += len(g & q)
            counts[c]["union"] += len(g | q)
        gseg = segments(gsem, gt.instance, keep)
        pseg = segments(psem, pred.instance, keep)
        scan_iou = {c: 0.0 for c in cfg.classes}
        matched_p = set()
        for gk in sorted(gseg):
            best = None
            for pk in sorted(pseg):
                if pk[0] != gk[0]:
                    continue
                inter = len(gseg[gk] & pseg[pk])
                iou = inter / len(gseg[gk] | pseg[pk])
                if iou > 0.5:
                    best = (pk, iou)
            c = gk[0]
            if best is None:
                counts[c]["fn"] += 1
            else:
                counts[c]["tp"] += 1
                scan_iou[c] += best[1]
                matched_p.add(best[0])
        for pk in pseg:
            if pk not in matched_p:
                counts[pk[0]]["fp"] += 1
        for c in cfg.classes:
            counts[c]["iou_sum"] += scan_iou[c]

    classes, th, st, ious, dagger = {}, [], [], [], []
    for c in sorted(cfg.classes):
        k = counts[c]
        iou = k["inter"] / k["union"] if k["union"] else 0.0
        if k["union"]:
            ious.append(iou)
        if k["tp"] + k["fp"] + k["fn"] == 0:
            continue
        sq = k["iou_sum"] / k["tp"] if k["tp"] else 0.0
        rq = k["tp"] / (k["tp"] + 0.5 * k["fp"] + 0.5 * k["fn"])
        row = {"pq": sq * rq, "sq": sq, "rq": rq, "iou": iou, "tp": k["tp"], "fp": k["fp"], "fn": k["fn"]}
        classes[c] = row
        (th if c in things else st).append(row)
        dagger.append(row["pq"] if c in things else iou)

    def mean(xs):
        return sum(xs) / len(xs) if xs else 0.0

    allrows = th + st
    aggregates = {
        "pq": mean([r["pq"] for r in allrows]),
        "sq": mean([r["sq"] for r in allrows]),
        "rq": mean([r["rq"] for r in allrows]),
        "pq_th": mean([r["pq"] for r in th]),
        "sq_th": mean([r["sq"] for r in th]),
        "rq_th": mean([r["rq"] for r in th]),
        "pq_st": mean([r["pq"] for r in st]),
        "sq_st": mean([r["sq"] for r in st]),
        "rq_st": mean([r["rq"] for r in st]),
        "pq_dagger": mean(dagger),
        "miou": mean(ious),
    }
    return {"classes": classes, "aggregates": aggregates}
