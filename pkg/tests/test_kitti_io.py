import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lidarseg.kitti_io import (
    config_from_dict,
    default_config,
    read_config,
    read_labels,
    read_scan,
    write_labels,
    write_scan,
)
from lidarseg.model import ConfigError, FormatError


def test_single_record(tmp_path):
    path = tmp_path / "a.bin"
    path.write_bytes(struct.pack("<4f", 1.0, 2.0, 3.0, 0.5))
    cloud = read_scan(path)
    assert len(cloud) == 1
    assert cloud.points.tolist() == [[1.0, 2.0, 3.0, 0.5]]


def test_empty_scan(tmp_path):
    path = tmp_path / "a.bin"
    path.write_bytes(b"")
    assert len(read_scan(path)) == 0


def test_bad_scan_length(tmp_path):
    path = tmp_path / "a.bin"
    path.write_bytes(b"\0" * 17)
    with pytest.raises(FormatError, match="multiple of 16"):
        read_scan(path)


def test_non_finite_scan_warns(tmp_path):
    path = tmp_path / "a.bin"
    path.write_bytes(struct.pack("<8f", 0, 0, 0, 0, float("nan"), 1, 1, 1))
    assert read_scan(path).warnings


@pytest.mark.parametrize("word,sem,inst", [(0x00050001, 1, 5), (0, 0, 0), (0xFFFFFFFF, 0xFFFF, 0xFFFF)])
def test_label_bit_fields(tmp_path, word, sem, inst):
    path = tmp_path / "a.label"
    path.write_bytes(struct.pack("<I", word))
    labels = read_labels(path, expected_n=1)
    assert (int(labels.semantic[0]), int(labels.instance[0])) == (sem, inst)


def test_label_length_mismatch(tmp_path):
    path = tmp_path / "a.label"
    path.write_bytes(b"\0" * 8)
    with pytest.raises(FormatError, match="expected 3"):
        read_labels(path, expected_n=3)


@given(st.binary(max_size=16 * 64).map(lambda b: b[: len(b) - len(b) % 16]))
def test_scan_round_trip_is_byte_exact(tmp_path_factory, raw):
    d = tmp_path_factory.mktemp("scan")
    src, dst = d / "in.bin", d / "out.bin"
    src.write_bytes(raw)
    write_scan(read_scan(src), dst)
    assert dst.read_bytes() == raw


@given(st.binary(max_size=4 * 64).map(lambda b: b[: len(b) - len(b) % 4]))
def test_label_round_trip_is_byte_exact(tmp_path_factory, raw):
    d = tmp_path_factory.mktemp("label")
    src, dst = d / "in.label", d / "out.label"
    src.write_bytes(raw)
    write_labels(read_labels(src, expected_n=len(raw) // 4), dst)
    assert dst.read_bytes() == raw


MINIMAL = {"classes": [{"id": 1, "name": "car", "thing": True, "r_c": 1.0}]}


def test_config_defaults():
    cfg = config_from_dict(MINIMAL)
    assert cfg.shift_iterations == 4
    assert cfg.voxel_size == (0.2, 0.2, 0.1)
    assert cfg.extent == ((-48.0, 48.0), (-48.0, 48.0), (-3.0, 1.8))
    assert cfg.ignore == (0,)
    assert cfg.gap_max(1) == 1.0


def test_config_merge_threshold_forms():
    assert config_from_dict({**MINIMAL, "merge_threshold": 0.7}).threshold(1) == 0.7
    assert config_from_dict({**MINIMAL, "merge_threshold": {1: 0.3}}).threshold(1) == 0.3


@pytest.mark.parametrize(
    "data,key",
    [
        ({}, "classes"),
        ({"classes": [{"id": 1, "name": "car", "thing": True}]}, "r_c"),
        ({"classes": [{"id": 1, "name": "car", "thing": True, "r_c": -1}]}, "r_c"),
        ({**MINIMAL, "voxel_size": [0.2, 0, 0.1]}, "voxel_size"),
        ({**MINIMAL, "L": 0}, "L"),
        ({**MINIMAL, "extent": [[1, 0], [0, 1], [0, 1]]}, "extent"),
    ],
)
def test_config_errors_name_the_key(data, key):
    with pytest.raises(ConfigError, match=key):
        config_from_dict(data)


def test_read_config_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("classes:\n  - {id: 1, name: car, thing: true, r_c: 1.5}\nL: 2\n")
    cfg = read_config(path)
    assert cfg.radius(1) == 1.5 and cfg.shift_iterations == 2
    with pytest.raises(ConfigError, match="cannot read"):
        read_config(tmp_path / "missing.yaml")


def test_bundled_config():
    cfg = default_config()
    assert cfg.thing_ids == [1, 2, 3, 4, 5, 6, 7, 8]
    assert len(cfg.stuff_ids) == 11
