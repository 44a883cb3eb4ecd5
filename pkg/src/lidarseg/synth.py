"""Synthetic LiDAR-like scenes with known instances, plus a brute-force clusterer.

Instances are axis-aligned boxes or ellipsoids. By default points are spread
uniformly over the surfaces that face the sensor; ``surface=False`` fills the
volume instead. The number of points an instance receives falls off as 1/d**falloff with
its distance d from the sensor at the origin, so near objects are dense and
far objects sparse.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .model import GenerationError, PointCloud, ProposalSet, SemanticMap

ORACLE_MAX_POINTS = 50_000


@dataclass(frozen=True)
class SceneSpec:
    instances: tuple[int, int] = (10, 20)
    class_mix: dict[int, float] = field(default_factory=lambda: {1: 0.6, 4: 0.1, 6: 0.3})
    # (length, width, height) in meters per thing class
    sizes: dict[int, tuple[float, float, float]] = field(
        default_factory=lambda: {1: (4.0, 1.8, 1.5), 4: (8.0, 2.5, 3.0), 6: (0.6, 0.6, 1.7)}
    )
    distance: tuple[float, float] = (5.0, 40.0)
    min_gap: float = 3.0
    thing_points: int = 20_000
    min_instance_points: int = 50
    falloff: float = 2.0
    shape: str = "box"
    # True: only the sensor-facing surfaces are sampled, like a real scan
    surface: bool = True
    ground_class: int | None = 9
    ground_points: int = 5_000
    ground_z: float = -1.7
    # class -> gap (m); such instances are generated as two halves with this gap
    split_gap: dict[int, float] = field(default_factory=dict)
    max_tries: int = 2_000

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise GenerationError(f"scene: unknown keys {sorted(unknown)}")
        kw = dict(data)
        if "instances" in kw:
            v = kw["instances"]
            kw["instances"] = (int(v), int(v)) if isinstance(v, int) else tuple(int(x) for x in v)
        if "class_mix" in kw:
            kw["class_mix"] = {int(k): float(v) for k, v in kw["class_mix"].items()}
        if "sizes" in kw:
            kw["sizes"] = {int(k): tuple(float(x) for x in v) for k, v in kw["sizes"].items()}
        if "split_gap" in kw:
            kw["split_gap"] = {int(k): float(v) for k, v in kw["split_gap"].items()}
        if "distance" in kw:
            kw["distance"] = tuple(float(x) for x in kw["distance"])
        return cls(**kw)


def _radius_xy(size) -> float:
    return 0.5 * float(np.hypot(size[0], size[1]))


def _place(spec: SceneSpec, rng: np.random.Generator, count: int, classes: np.ndarray):
    """Rejection-sample instance centers on the ground ring with the required gaps.

    Gaps are checked between circumscribed circles, which bounds the gap
    between the actual point sets from below.
    """
    lo, hi = spec.distance
    centers, radii = [], []
    for k in range(count):
        size = spec.sizes[int(classes[k])]
        r = _radius_xy(size)
        for _ in range(spec.max_tries):
            d = np.sqrt(rng.uniform(lo * lo, hi * hi))
            phi = rng.uniform(-np.pi, np.pi)
            c = np.array([d * np.cos(phi), d * np.sin(phi)])
            if all(np.hypot(*(c - o)) - r - ro >= spec.min_gap for o, ro in zip(centers, radii)):
                centers.append(c)
                radii.append(r)
                break
        else:
            raise GenerationError(
                f"cannot place instance {k + 1} of {count} with gap {spec.min_gap} m "
                f"inside distance range {list(spec.distance)}"
            )
    return np.array(centers).reshape(-1, 2)


def _allocate(total: int, weights: np.ndarray, floor: int) -> np.ndarray:
    """Split ``total`` points proportionally to ``weights`` with a per-item floor."""
    k = len(weights)
    if total < floor * k:
        raise GenerationError(f"thing_points={total} cannot give {k} instances {floor} points each")
    spare = total - floor * k
    share = spare * weights / weights.sum()
    base = np.floor(share).astype(np.int64)
    rest = spare - int(base.sum())
    # Largest remainder, ties by instance order.
    order = np.lexsort((np.arange(k), -(share - base)))
    base[order[:rest]] += 1
    return base + floor


def _sample_surface(rng, n, size, center, shape):
    """Points on the parts of the shape's surface that face the sensor."""
    half = np.asarray(size, dtype=np.float64) / 2.0
    view = -np.asarray(center, dtype=np.float64)
    if shape == "ellipsoid":
        out = np.empty((0, 3))
        while len(out) < n:
            v = rng.normal(size=(2 * (n - len(out)) + 8, 3))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            # outward normal of the ellipsoid at v * half is v / half
            facing = (v / half) @ view > 0
            out = np.concatenate([out, v[facing] * half])
        return out[:n]
    if shape != "box":
        raise GenerationError(f"scene.shape: unknown shape {shape!r}")
    faces = []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            if sign * view[axis] > half[axis]:
                others = [a for a in range(3) if a != axis]
                faces.append((axis, sign, others, 4 * half[others[0]] * half[others[1]]))
    if not faces:
        raise GenerationError("sensor lies inside an object")
    areas = np.array([f[3] for f in faces])
    which = rng.choice(len(faces), size=n, p=areas / areas.sum())
    pts = rng.uniform(-half, half, size=(n, 3))
    for k, (axis, sign, _, _) in enumerate(faces):
        pts[which == k, axis] = sign * half[axis]
    return pts


def _sample_shape(rng, n, size, shape, center=None):
    half = np.asarray(size) / 2.0
    if center is not None:
        return _sample_surface(rng, n, size, center, shape)
    if shape == "box":
        return rng.uniform(-half, half, size=(n, 3))
    if shape == "ellipsoid":
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        v *= rng.uniform(0, 1, size=(n, 1)) ** (1 / 3)
        return v * half
    raise GenerationError(f"scene.shape: unknown shape {shape!r}")


def _sample_instance(rng, n, size, shape, split, center=None):
    if split is None:
        return _sample_shape(rng, n, size, shape, center)
    # Two halves along the long axis with a gap between them.
    half_len = (size[0] - split) / 2.0
    if half_len <= 0:
        raise GenerationError(f"split gap {split} m exceeds object length {size[0]} m")
    n_a = n // 2
    part = (half_len, size[1], size[2])
    shift = (half_len + split) / 2.0
    if center is not None:
        offset = np.array([shift, 0.0, 0.0])
        a = _sample_shape(rng, n_a, part, shape, center - offset)
        b = _sample_shape(rng, n - n_a, part, shape, center + offset)
    else:
        a = _sample_shape(rng, n_a, part, shape)
        b = _sample_shape(rng, n - n_a, part, shape)
    a[:, 0] -= shift
    b[:, 0] += shift
    return np.concatenate([a, b])


def generate_scene(spec: SceneSpec, seed: int) -> tuple[PointCloud, SemanticMap]:
    """Deterministic scene for ``seed``; instance IDs run 1..K in placement order."""
    rng = np.random.default_rng(seed)
    lo, hi = spec.instances
    if lo < 0 or hi < lo:
        raise GenerationError(f"scene.instances: invalid range {[lo, hi]}")
    missing = [c for c in spec.class_mix if c not in spec.sizes]
    if missing:
        raise GenerationError(f"scene.sizes: no object size for classes {missing}")
    count = int(rng.integers(lo, hi + 1))
    ids = np.array(sorted(spec.class_mix))
    probs = np.array([spec.class_mix[c] for c in ids], dtype=np.float64)
    classes = rng.choice(ids, size=count, p=probs / probs.sum()) if count else np.empty(0, dtype=np.int64)
    centers = _place(spec, rng, count, classes)

    chunks, sem, inst = [], [], []
    if count:
        dist = np.hypot(centers[:, 0], centers[:, 1])
        volume = np.array([np.prod(spec.sizes[int(c)]) for c in classes])
        weights = volume ** (2.0 / 3.0) / np.maximum(dist, 1.0) ** spec.falloff
        per_instance = _allocate(spec.thing_points, weights, spec.min_instance_points)
        for k in range(count):
            c = int(classes[k])
            size = spec.sizes[c]
            z0 = spec.ground_z + size[2] / 2.0 + 0.05
            center = np.array([centers[k, 0], centers[k, 1], z0]) if spec.surface else None
            local = _sample_instance(
                rng, int(per_instance[k]), size, spec.shape, spec.split_gap.get(c), center
            )
            local += np.array([centers[k, 0], centers[k, 1], z0])
            chunks.append(local)
            sem.append(np.full(len(local), c))
            inst.append(np.full(len(local), k + 1))
    if spec.ground_class is not None and spec.ground_points > 0:
        d = np.sqrt(rng.uniform(0, (hi_d := spec.distance[1]) * hi_d, size=spec.ground_points))
        phi = rng.uniform(-np.pi, np.pi, size=spec.ground_points)
        z = spec.ground_z + rng.normal(0, 0.02, size=spec.ground_points)
        chunks.append(np.column_stack([d * np.cos(phi), d * np.sin(phi), z]))
        sem.append(np.full(spec.ground_points, spec.ground_class))
        inst.append(np.zeros(spec.ground_points, dtype=np.int64))
    if not chunks:
        return PointCloud(np.empty((0, 4), dtype=np.float32)), SemanticMap(np.empty(0), np.empty(0))
    xyz = np.concatenate(chunks)
    intensity = rng.uniform(0, 1, size=len(xyz))
    cloud = PointCloud.from_xyz(xyz, intensity)
    labels = SemanticMap(np.concatenate(sem), np.concatenate(inst))
    return cloud, labels


def oracle_cluster(cloud: PointCloud, labels: SemanticMap, radius_per_class: dict[int, float]) -> ProposalSet:
    """Single-linkage components (distance < radius) of all points of each listed class.

    Plain breadth-first search with a full distance scan per visited point.
    Components are numbered by their smallest point index.
    """
    sem = labels.semantic.astype(np.int64)
    eligible = np.flatnonzero(np.isin(sem, list(radius_per_class)))
    if eligible.size > ORACLE_MAX_POINTS:
        raise ValueError(f"oracle_cluster refuses {eligible.size} points (limit {ORACLE_MAX_POINTS})")
    xyz = cloud.points[:, :3].astype(np.float64)
    comp = np.full(len(sem), -1, dtype=np.int64)
    next_label = 0
    for c, r in sorted(radius_per_class.items()):
        members = eligible[sem[eligible] == c]
        pts = xyz[members]
        seen = np.zeros(len(members), dtype=bool)
        for start in range(len(members)):
            if seen[start]:
                continue
            seen[start] = True
            queue = deque([start])
            while queue:
                u = queue.popleft()
                near = np.flatnonzero(~seen & (((pts - pts[u]) ** 2).sum(axis=1) < r * r))
                seen[near] = True
                comp[members[near]] = next_label
                queue.extend(near.tolist())
            comp[members[start]] = next_label
            next_label += 1
    # Renumber 1..O by smallest member index.
    instance = np.zeros(len(sem), dtype=np.int64)
    labelled = np.flatnonzero(comp >= 0)
    mapping = {}
    for p in labelled:
        mapping.setdefault(comp[p], len(mapping) + 1)
        instance[p] = mapping[comp[p]]
    return ProposalSet.from_labels(instance, xyz, sem)
