"""Core domain types shared across the package.

Arrays held by these types are flagged read-only on construction so that a
scan can be handed to several workers without copying.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

DEFAULT_SHIFT_ITERATIONS = 4
DEFAULT_VOXEL_SIZE = (0.2, 0.2, 0.1)
DEFAULT_EXTENT = ((-48.0, 48.0), (-48.0, 48.0), (-3.0, 1.8))
DEFAULT_MERGE_THRESHOLD = 0.5


class LidarSegError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(LidarSegError):
    pass


class ConfigError(LidarSegError):
    pass


class EvaluationError(LidarSegError):
    pass


class GenerationError(LidarSegError):
    pass


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Raw scan: an (N, 4) float32 array of x, y, z, intensity."""

    points: np.ndarray
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] != 4:
            if pts.size == 0:
                pts = pts.reshape(0, 4)
            else:
                raise ValueError(f"points must have shape (N, 4), got {pts.shape}")
        object.__setattr__(self, "points", _frozen(pts))

    @classmethod
    def from_xyz(cls, xyz, intensity=None) -> "PointCloud":
        xyz = np.asarray(xyz, dtype=np.float32).reshape(-1, 3)
        if intensity is None:
            intensity = np.zeros(len(xyz), dtype=np.float32)
        pts = np.column_stack([xyz, np.asarray(intensity, dtype=np.float32)])
        return cls(pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        """Coordinates promoted to float64; all geometry runs in double precision."""
        return self.points[:, :3].astype(np.float64)

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]


@dataclass(frozen=True, eq=False)
class SemanticMap:
    """Per-point class IDs and instance IDs (0 means no instance)."""

    semantic: np.ndarray
    instance: np.ndarray

    def __post_init__(self):
        sem = np.ascontiguousarray(self.semantic, dtype=np.uint16).ravel()
        inst = np.ascontiguousarray(self.instance, dtype=np.uint16).ravel()
        object.__setattr__(self, "semantic", _frozen(sem))
        object.__setattr__(self, "instance", _frozen(inst))

    def __len__(self) -> int:
        return self.semantic.shape[0]

    def with_instances(self, instance) -> "SemanticMap":
        return SemanticMap(self.semantic, instance)


@dataclass(frozen=True)
class ClassInfo:
    id: int
    name: str
    thing: bool
    radius: float | None = None
    gap_max: float | None = None


@dataclass(frozen=True, eq=False)
class ClassConfig:
    """Class table plus voxel grid geometry and pipeline knobs.

    ``extent`` is ((xmin, xmax), (ymin, ymax), (zmin, zmax)); the voxel grid is
    anchored at the minimum corner.
    """

    classes: Mapping[int, ClassInfo]
    shift_iterations: int = DEFAULT_SHIFT_ITERATIONS
    voxel_size: tuple[float, float, float] = DEFAULT_VOXEL_SIZE
    extent: tuple[tuple[float, float], ...] = DEFAULT_EXTENT
    merge_threshold: Mapping[int, float] = field(default_factory=dict)
    ignore: tuple[int, ...] = (0,)

    def __post_init__(self):
        classes = dict(self.classes)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "voxel_size", tuple(float(v) for v in self.voxel_size))
        object.__setattr__(
            self, "extent", tuple((float(lo), float(hi)) for lo, hi in self.extent)
        )
        object.__setattr__(self, "ignore", tuple(int(c) for c in self.ignore))
        object.__setattr__(
            self, "merge_threshold", {int(k): float(v) for k, v in dict(self.merge_threshold).items()}
        )
        for cid, info in classes.items():
            if cid != info.id:
                raise ConfigError(f"classes[{cid}]: id mismatch ({info.id})")
            if cid in self.ignore:
                raise ConfigError(f"classes[{cid}]: class {cid} is also an ignore label")
            if info.thing and not (info.radius is not None and info.radius > 0):
                raise ConfigError(f"classes[{cid}].r_c: thing class {info.name!r} needs r_c > 0")
            if info.gap_max is not None and info.gap_max <= 0:
                raise ConfigError(f"classes[{cid}].g_max: must be > 0")
        if self.shift_iterations < 1:
            raise ConfigError(f"L: must be >= 1, got {self.shift_iterations}")
        if len(self.voxel_size) != 3 or any(not v > 0 for v in self.voxel_size):
            raise ConfigError(f"voxel_size: components must be > 0, got {self.voxel_size}")
        if len(self.extent) != 3 or any(not hi > lo for lo, hi in self.extent):
            raise ConfigError(f"extent: each axis needs max > min, got {self.extent}")
        for cid, thr in self.merge_threshold.items():
            if not 0.0 <= thr or not np.isfinite(thr):
                raise ConfigError(f"merge_threshold[{cid}]: must be a finite value >= 0")

    @property
    def thing_ids(self) -> list[int]:
        return sorted(c for c, info in self.classes.items() if info.thing)

    @property
    def stuff_ids(self) -> list[int]:
        return sorted(c for c, info in self.classes.items() if not info.thing)

    @property
    def origin(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.extent])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.extent])

    def is_thing(self, class_id: int) -> bool:
        info = self.classes.get(int(class_id))
        return bool(info and info.thing)

    def radius(self, class_id: int) -> float:
        return float(self.classes[int(class_id)].radius)

    def gap_max(self, class_id: int) -> float:
        info = self.classes[int(class_id)]
        return float(info.gap_max if info.gap_max is not None else info.radius)

    def threshold(self, class_id: int) -> float:
        return self.merge_threshold.get(int(class_id), DEFAULT_MERGE_THRESHOLD)

    def thing_mask(self, semantic: np.ndarray) -> np.ndarray:
        """Boolean mask of points whose class is a thing class."""
        lookup = np.zeros(65536, dtype=bool)
        lookup[self.thing_ids] = True
        return lookup[np.asarray(semantic, dtype=np.int64)]

    def radius_table(self) -> np.ndarray:
        """r_c indexed by class ID, NaN for stuff and unknown classes."""
        table = np.full(65536, np.nan)
        for cid in self.thing_ids:
            table[cid] = self.classes[cid].radius
        return table

    def inside_extent(self, xyz: np.ndarray) -> np.ndarray:
        xyz = np.asarray(xyz, dtype=np.float64)
        return np.all((xyz >= self.origin) & (xyz < self.upper), axis=1)


@dataclass(frozen=True, eq=False)
class SeedSet:
    """Sparse seeds and the point-to-seed assignment.

    ``assignment`` has one entry per point of the scan; points that did not take
    part in sampling hold -1.
    """

    positions: np.ndarray
    seed_class: np.ndarray
    assignment: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(
            self, "seed_class", _frozen(np.ascontiguousarray(self.seed_class, dtype=np.int64))
        )
        object.__setattr__(
            self, "assignment", _frozen(np.ascontiguousarray(self.assignment, dtype=np.int64))
        )

    def __len__(self) -> int:
        return self.positions.shape[0]

    def moved_to(self, positions: np.ndarray) -> "SeedSet":
        return SeedSet(positions, self.seed_class, self.assignment)


@dataclass(frozen=True, eq=False)
class Proposal:
    instance_id: int
    class_id: int
    indices: np.ndarray
    centroid: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class ProposalSet:
    """Instance proposals; ``instance_of_point`` is 0 for points not in any proposal."""

    instance_of_point: np.ndarray
    proposals: tuple[Proposal, ...]

    def __post_init__(self):
        inst = np.ascontiguousarray(self.instance_of_point, dtype=np.int64)
        object.__setattr__(self, "instance_of_point", _frozen(inst))
        object.__setattr__(self, "proposals", tuple(self.proposals))

    def __len__(self) -> int:
        return len(self.proposals)

    @classmethod
    def from_labels(
        cls, instance_of_point: np.ndarray, xyz: np.ndarray, semantic: np.ndarray
    ) -> "ProposalSet":
        """Build summaries from a dense 1..O labeling (0 = unassigned)."""
        inst = np.asarray(instance_of_point, dtype=np.int64)
        n_inst = int(inst.max(initial=0))
        if n_inst == 0:
            return cls(inst, ())
        counts = np.bincount(inst, minlength=n_inst + 1)
        if not (counts[1:] > 0).all():
            raise ValueError("instance IDs must form a contiguous range 1..O")
        xyz = np.asarray(xyz, dtype=np.float64)
        semantic = np.asarray(semantic, dtype=np.int64)
        order = np.argsort(inst, kind="stable")[counts[0] :]
        bounds = np.cumsum(counts[1:])
        member_inst = inst[order]
        sums = np.column_stack(
            [np.bincount(member_inst, weights=xyz[order, k], minlength=n_inst + 1)[1:] for k in range(3)]
        )
        centroids = sums / counts[1:, None]
        classes = majority_per_group(member_inst - 1, semantic[order], n_inst)
        proposals = []
        start = 0
        for k in range(n_inst):
            idx = order[start : bounds[k]]
            start = bounds[k]
            proposals.append(
                Proposal(
                    instance_id=k + 1,
                    class_id=int(classes[k]),
                    indices=_frozen(idx),
                    centroid=_frozen(centroids[k]),
                )
            )
        return cls(inst, tuple(proposals))

    def to_semantic_map(self, semantic: np.ndarray) -> SemanticMap:
        return SemanticMap(semantic, self.instance_of_point.astype(np.uint16))


def majority_per_group(group: np.ndarray, classes: np.ndarray, n_groups: int) -> np.ndarray:
    """Majority class per group ID (0..n_groups-1); ties go to the lowest class ID."""
    pair = np.asarray(group, dtype=np.int64) * 65536 + np.asarray(classes, dtype=np.int64)
    keys, counts = np.unique(pair, return_counts=True)
    g, c = keys // 65536, keys % 65536
    order = np.lexsort((c, -counts, g))
    g_sorted = g[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = g_sorted[1:] != g_sorted[:-1]
    out = np.full(n_groups, -1, dtype=np.int64)
    out[g_sorted[first]] = c[order][first]
    return out


def majority_class(classes: np.ndarray) -> int:
    """Most frequent class; ties go to the lowest class ID."""
    values, counts = np.unique(np.asarray(classes, dtype=np.int64), return_counts=True)
    return int(values[np.argmax(counts)])


def dense_relabel(labels: np.ndarray) -> np.ndarray:
    """Map arbitrary component labels to 1..O ordered by first occurrence.

    Entries < 0 are treated as unassigned and become 0.
    """
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros(len(labels), dtype=np.int64)
    valid = labels >= 0
    if not valid.any():
        return out
    vals = labels[valid]
    uniq, first = np.unique(vals, return_index=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(1, len(uniq) + 1)
    out[valid] = rank[np.searchsorted(uniq, vals)]
    return out


@dataclass(frozen=True)
class Issue:
    kind: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def kinds(self) -> set[str]:
        return {issue.kind for issue in self.issues}

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(f"{i.kind}: {i.detail}" for i in self.issues)


def validate_scan(cloud: PointCloud, labels: SemanticMap, cfg: ClassConfig) -> ValidationReport:
    issues = []
    n = len(cloud)
    if len(labels.semantic) != n or len(labels.instance) != n:
        issues.append(
            Issue(
                "length_mismatch",
                f"cloud has {n} points, labels have {len(labels.semantic)} semantic / "
                f"{len(labels.instance)} instance entries",
            )
        )
    bad = ~np.isfinite(cloud.points[:, :3]).all(axis=1)
    if bad.any():
        issues.append(
            Issue("non_finite", f"{int(bad.sum())} points with non-finite coordinates, first at index {int(np.argmax(bad))}")
        )
    m = min(n, len(labels.semantic), len(labels.instance))
    sem = labels.semantic[:m].astype(np.int64)
    inst = labels.instance[:m]
    known = set(cfg.classes) | set(cfg.ignore)
    present = np.unique(sem)
    unknown = [int(c) for c in present if int(c) not in known]
    if unknown:
        issues.append(Issue("unknown_class", f"class IDs not in config: {unknown}"))
    on_stuff = (inst != 0) & ~cfg.thing_mask(sem)
    if on_stuff.any():
        classes = sorted({int(c) for c in np.unique(sem[on_stuff])})
        issues.append(
            Issue(
                "instance_on_stuff",
                f"{int(on_stuff.sum())} points carry an instance ID on non-thing classes {classes}",
            )
        )
    return ValidationReport(tuple(issues))
