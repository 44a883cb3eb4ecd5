"""Latency harness: per-stage wall-clock over generated scenes.

Besides the segmentation methods it times two alternative samplers for the
seed stage. Farthest point sampling and uniform random sampling both pick as
many seeds as voxel sampling would, then assign every participating point to
its nearest seed. They exist only for comparison.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .aggregation import aggregate
from .baselines import Timeout, dbscan, mean_shift
from .model import ClassConfig, PointCloud, SeedSet, SemanticMap, majority_per_group
from .sip import balanced_sample, participating, run_sip
from .synth import SceneSpec, generate_scene

METHODS = ("sip", "sip-noshift", "sip+ia", "meanshift", "dbscan", "bps", "fps", "random")
DEFAULT_METHODS = ("sip", "meanshift", "bps", "fps", "random")
DBSCAN_EPS = 0.5
DBSCAN_MIN_PTS = 5


@njit(cache=True)
def _fps_kernel(xyz, m):
    n = xyz.shape[0]
    chosen = np.empty(m, dtype=np.int64)
    dist = np.full(n, np.inf)
    cur = 0
    for k in range(m):
        chosen[k] = cur
        best, best_d = 0, -1.0
        for i in range(n):
            d0 = xyz[i, 0] - xyz[cur, 0]
            d1 = xyz[i, 1] - xyz[cur, 1]
            d2 = xyz[i, 2] - xyz[cur, 2]
            d = d0 * d0 + d1 * d1 + d2 * d2
            if d < dist[i]:
                dist[i] = d
            if dist[i] > best_d:
                best_d = dist[i]
                best = i
        cur = best
    return chosen


def _assign(cloud, labels, idx, picks) -> SeedSet:
    xyz = cloud.xyz[idx]
    assignment = np.full(len(cloud), -1, dtype=np.int64)
    if len(picks) == 0:
        return SeedSet(np.empty((0, 3)), np.empty(0, dtype=np.int64), assignment)
    _, nearest = cKDTree(xyz[picks]).query(xyz, k=1)
    assignment[idx] = nearest
    seed_class = majority_per_group(nearest, labels.semantic[idx].astype(np.int64), len(picks))
    return SeedSet(xyz[picks], seed_class, assignment)


def fps_sample(cloud: PointCloud, labels: SemanticMap, cfg: ClassConfig, m: int) -> SeedSet:
    """Farthest point sampling of m seeds from the participating points, starting at the first."""
    idx = participating(cloud, labels, cfg)
    m = min(m, len(idx))
    picks = _fps_kernel(cloud.xyz[idx], m) if m else np.empty(0, dtype=np.int64)
    return _assign(cloud, labels, idx, picks)


def random_sample(cloud: PointCloud, labels: SemanticMap, cfg: ClassConfig, m: int, seed: int = 0) -> SeedSet:
    """m seeds drawn uniformly without replacement from the participating points."""
    idx = participating(cloud, labels, cfg)
    m = min(m, len(idx))
    picks = np.sort(np.random.default_rng(seed).choice(len(idx), size=m, replace=False))
    return _assign(cloud, labels, idx, picks)


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, (time.perf_counter() - t0) * 1e3


def run_method(
    method: str,
    cloud: PointCloud,
    labels: SemanticMap,
    cfg: ClassConfig,
    n_seeds: int,
    budget_ms: float | None = None,
) -> dict[str, float]:
    """One timed run; returns stage -> milliseconds (always including "total").

    With ``budget_ms``, a mean-shift run is stopped once it exceeds the budget
    and the result carries ``"censored": 1.0``; its total is then a lower bound.
    """
    if method in ("sip", "sip-noshift"):
        return dict(run_sip(cloud, labels, cfg, shift=method == "sip").timings)
    if method == "sip+ia":
        res, _ = timed(lambda: run_sip(cloud, labels, cfg))
        _, ia = timed(lambda: aggregate(res.proposals, cloud, cfg))
        stages = dict(res.timings)
        stages["aggregate"] = ia
        stages["total"] += ia
        return stages
    if method == "meanshift":
        t0 = time.perf_counter()
        deadline = None if budget_ms is None else t0 + budget_ms / 1e3
        try:
            mean_shift(cloud, labels, cfg, deadline=deadline)
        except Timeout:
            return {"total": (time.perf_counter() - t0) * 1e3, "censored": 1.0}
        return {"total": (time.perf_counter() - t0) * 1e3}
    if method == "dbscan":
        return {"total": timed(lambda: dbscan(cloud, labels, cfg, DBSCAN_EPS, DBSCAN_MIN_PTS))[1]}
    if method == "bps":
        return {"total": timed(lambda: balanced_sample(cloud, labels, cfg))[1]}
    if method == "fps":
        return {"total": timed(lambda: fps_sample(cloud, labels, cfg, n_seeds))[1]}
    if method == "random":
        return {"total": timed(lambda: random_sample(cloud, labels, cfg, n_seeds))[1]}
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


@dataclass
class BenchReport:
    """Raw samples: method -> stage -> list of milliseconds."""

    samples: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    # method -> number of runs stopped at the budget (their times are lower bounds)
    censored: dict[str, int] = field(default_factory=dict)

    def add(self, method: str, stages: dict[str, float]) -> None:
        stages = dict(stages)
        if stages.pop("censored", 0.0):
            self.censored[method] = self.censored.get(method, 0) + 1
        per = self.samples.setdefault(method, {})
        for stage, ms in stages.items():
            per.setdefault(stage, []).append(ms)

    def median(self, method: str, stage: str = "total") -> float:
        return float(np.median(self.samples[method][stage]))

    def p95(self, method: str, stage: str = "total") -> float:
        return float(np.percentile(self.samples[method][stage], 95))

    def to_dict(self) -> dict:
        return {
            m: {
                s: {
                    "runs": len(v),
                    "censored": self.censored.get(m, 0),
                    "median_ms": float(np.median(v)),
                    "p95_ms": float(np.percentile(v, 95)),
                }
                for s, v in stages.items()
            }
            for m, stages in self.samples.items()
        }

    def table(self) -> str:
        lines = [f"{'method':<14}{'stage':<12}{'runs':>6}{'median ms':>12}{'p95 ms':>12}"]
        for m, stages in self.samples.items():
            mark = ">=" if self.censored.get(m) else "  "
            for s, v in stages.items():
                lines.append(
                    f"{m:<14}{s:<12}{len(v):6d}{mark}{np.median(v):10.2f}{mark}{np.percentile(v, 95):10.2f}"
                )
        if self.censored:
            lines.append(">= : some runs were stopped at the time budget; values are lower bounds")
        return "\n".join(lines)


def run_bench(
    spec: SceneSpec,
    cfg: ClassConfig,
    methods=DEFAULT_METHODS,
    scenes: int = 1,
    repeat: int = 20,
    first_seed: int = 0,
    repeat_for: dict[str, int] | None = None,
    budget_ms: float | None = None,
) -> BenchReport:
    """Time each method ``repeat`` times on each of ``scenes`` generated scenes.

    ``repeat_for`` overrides the repeat count per method. One untimed warm-up
    run per method comes first so JIT compilation is not measured.
    ``budget_ms`` caps each mean-shift run (see ``run_method``).
    """
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    repeat_for = repeat_for or {}
    report = BenchReport()
    warmed = set()
    for k in range(scenes):
        cloud, labels = generate_scene(spec, first_seed + k)
        n_seeds = len(balanced_sample(cloud, labels, cfg))
        for m in methods:
            if m not in warmed:
                run_method(m, cloud, labels, cfg, n_seeds, budget_ms)
                warmed.add(m)
            for _ in range(repeat_for.get(m, repeat)):
                report.add(m, run_method(m, cloud, labels, cfg, n_seeds, budget_ms))
    return report
