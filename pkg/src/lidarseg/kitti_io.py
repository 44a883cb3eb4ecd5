"""SemanticKITTI ``.bin`` / ``.label`` codecs and YAML config loading."""

from __future__ import annotations

import os
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .model import (
    DEFAULT_EXTENT,
    DEFAULT_SHIFT_ITERATIONS,
    DEFAULT_VOXEL_SIZE,
    ClassConfig,
    ClassInfo,
    ConfigError,
    FormatError,
    PointCloud,
    SemanticMap,
)

SCAN_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("<u4")
RECORD_BYTES = 16


def read_scan(path) -> PointCloud:
    path = Path(path)
    size = os.path.getsize(path)
    if size % RECORD_BYTES:
        raise FormatError(f"{path}: length {size} is not a multiple of {RECORD_BYTES} bytes")
    raw = np.fromfile(path, dtype=SCAN_DTYPE).reshape(-1, 4)
    warnings = ()
    bad = ~np.isfinite(raw[:, :3]).all(axis=1)
    if bad.any():
        warnings = (f"{int(bad.sum())} points with non-finite coordinates",)
    return PointCloud(raw, warnings)


def write_scan(cloud: PointCloud, path) -> None:
    try:
        Path(path).write_bytes(cloud.points.astype(SCAN_DTYPE, copy=False).tobytes())
    except OSError as exc:
        raise OSError(f"cannot write scan {path}: {exc}") from exc


def read_labels(path, expected_n: int | None = None) -> SemanticMap:
    path = Path(path)
    size = os.path.getsize(path)
    if size % LABEL_DTYPE.itemsize:
        raise FormatError(f"{path}: length {size} is not a multiple of 4 bytes")
    if expected_n is not None and size != LABEL_DTYPE.itemsize * expected_n:
        raise FormatError(
            f"{path}: expected {expected_n} labels ({4 * expected_n} bytes), file has {size} bytes"
        )
    words = np.fromfile(path, dtype=LABEL_DTYPE)
    return SemanticMap(words & 0xFFFF, words >> 16)


def encode_labels(labels: SemanticMap) -> bytes:
    words = (labels.instance.astype(np.uint32) << 16) | labels.semantic.astype(np.uint32)
    return words.astype(LABEL_DTYPE, copy=False).tobytes()


def write_labels(labels: SemanticMap, path) -> None:
    try:
        Path(path).write_bytes(encode_labels(labels))
    except OSError as exc:
        raise OSError(f"cannot write labels {path}: {exc}") from exc


def _floats(value, key, length):
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {length} numbers, got {value!r}") from None
    if len(out) != length:
        raise ConfigError(f"{key}: expected {length} numbers, got {value!r}")
    return out


def config_from_dict(data: dict) -> ClassConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    if "classes" not in data:
        raise ConfigError("classes: required key missing")
    entries = data["classes"]
    if not isinstance(entries, list) or not entries:
        raise ConfigError("classes: must be a non-empty list")

    classes = {}
    for pos, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"classes[{pos}]: must be a mapping")
        for key in ("id", "name"):
            if key not in entry:
                raise ConfigError(f"classes[{pos}].{key}: required key missing")
        cid = int(entry["id"])
        thing = bool(entry.get("thing", False))
        radius = entry.get("r_c")
        if thing and radius is None:
            raise ConfigError(f"classes[{pos}].r_c: required for thing class {entry['name']!r}")
        if radius is not None and not float(radius) > 0:
            raise ConfigError(f"classes[{pos}].r_c: must be > 0, got {radius}")
        gap = entry.get("g_max")
        if gap is not None and not float(gap) > 0:
            raise ConfigError(f"classes[{pos}].g_max: must be > 0, got {gap}")
        if cid in classes:
            raise ConfigError(f"classes[{pos}].id: duplicate class ID {cid}")
        classes[cid] = ClassInfo(
            id=cid,
            name=str(entry["name"]),
            thing=thing,
            radius=None if radius is None else float(radius),
            gap_max=None if gap is None else float(gap),
        )

    shift = data.get("L", DEFAULT_SHIFT_ITERATIONS)
    if not isinstance(shift, int) or isinstance(shift, bool) or shift < 1:
        raise ConfigError(f"L: must be an integer >= 1, got {shift!r}")

    voxel = _floats(data.get("voxel_size", DEFAULT_VOXEL_SIZE), "voxel_size", 3)
    if any(v <= 0 for v in voxel):
        raise ConfigError(f"voxel_size: components must be > 0, got {list(voxel)}")

    raw_extent = data.get("extent", DEFAULT_EXTENT)
    if not isinstance(raw_extent, (list, tuple)) or len(raw_extent) != 3:
        raise ConfigError(f"extent: expected three [min, max] pairs, got {raw_extent!r}")
    extent = tuple(_floats(axis, f"extent[{i}]", 2) for i, axis in enumerate(raw_extent))
    for i, (lo, hi) in enumerate(extent):
        if not hi > lo:
            raise ConfigError(f"extent[{i}]: max must exceed min, got {[lo, hi]}")

    thresholds = data.get("merge_threshold", {})
    if isinstance(thresholds, (int, float)) and not isinstance(thresholds, bool):
        thresholds = {cid: float(thresholds) for cid in classes}
    elif isinstance(thresholds, dict):
        thresholds = {int(k): float(v) for k, v in thresholds.items()}
    else:
        raise ConfigError(f"merge_threshold: expected a number or a class->number map")
    for cid, thr in thresholds.items():
        if thr < 0:
            raise ConfigError(f"merge_threshold[{cid}]: must be >= 0, got {thr}")

    ignore = data.get("ignore", [0])
    return ClassConfig(
        classes=classes,
        shift_iterations=shift,
        voxel_size=voxel,
        extent=extent,
        merge_threshold=thresholds,
        ignore=tuple(int(c) for c in ignore),
    )


def load_yaml(path) -> dict:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    return data if data is not None else {}


def read_config(path) -> ClassConfig:
    try:
        return config_from_dict(load_yaml(path))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def default_config_text() -> str:
    return resources.files("lidarseg").joinpath("default_config.yaml").read_text(encoding="utf-8")


def default_config() -> ClassConfig:
    """SemanticKITTI 19-class table with the bundled package-default radii."""
    return config_from_dict(yaml.safe_load(default_config_text()))
