from __future__ import annotations

import json

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from semcanvas.config import CONFIG_ENV, SECTIONS, config_from_dict, config_to_dict, load_config
from semcanvas.errors import ConfigError, SourceError
from semcanvas.pnm import read_pnm, write_pgm, write_ppm
from semcanvas.sequence import DiskScene, export_scene
from semcanvas.synth import SyntheticScene, mover_scene


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(st.sampled_from([np.uint8, np.uint16]), hnp.array_shapes(min_dims=2, max_dims=2, max_side=9)))
def test_pgm_roundtrip(tmp_path_factory, img):
    p = tmp_path_factory.mktemp("pgm") / "x.pgm"
    write_pgm(p, img)
    back = read_pnm(p)
    assert back.dtype == img.dtype
    np.testing.assert_array_equal(back, img)


def test_ppm_roundtrip_and_16bit_is_big_endian(tmp_path):
    img = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    write_ppm(tmp_path / "a.ppm", img)
    np.testing.assert_array_equal(read_pnm(tmp_path / "a.ppm"), img)
    write_pgm(tmp_path / "l.pgm", np.array([[0x0102]], np.uint16))
    raw = (tmp_path / "l.pgm").read_bytes()
    assert raw.startswith(b"P5\n1 1\n65535\n") and raw.endswith(b"\x01\x02")


def test_read_pnm_rejects_truncated(tmp_path):
    (tmp_path / "bad.pgm").write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(ValueError):
        read_pnm(tmp_path / "bad.pgm")


@pytest.fixture(scope="module")
def scene():
    return SyntheticScene(mover_scene(seed=2, viewport_w=64, viewport_h=48, frame_count=6, enter=2))


@pytest.mark.parametrize("color", [True, False])
def test_disk_roundtrip(tmp_path, scene, color):
    export_scene(scene, tmp_path, color=color)
    disk = DiskScene(tmp_path)
    assert disk.frame_count == 6 and (disk.width, disk.height) == (64, 48)
    for t, raw in enumerate(disk.frames()):
        expected = scene.color_frame(t) if color else scene.gray_frame(t)
        np.testing.assert_array_equal(raw, expected)
        np.testing.assert_array_equal(disk.gray_frame(t), scene.gray_frame(t))
        np.testing.assert_array_equal(disk.truth_labels(t), scene.truth_labels(t))
        assert disk.truth_transform(t) == scene.truth_transform(t)
    assert disk.class_ids() == scene.class_ids()


def test_disk_missing_frame(tmp_path, scene):
    export_scene(scene, tmp_path)
    (tmp_path / "frame_000003.ppm").unlink()
    with pytest.raises(SourceError):
        DiskScene(tmp_path)


def test_disk_bad_dimensions(tmp_path, scene):
    export_scene(scene, tmp_path)
    index = json.loads((tmp_path / "index.json").read_text())
    index["width"] = 65
    (tmp_path / "index.json").write_text(json.dumps(index))
    with pytest.raises(SourceError):
        DiskScene(tmp_path).raw_frame(0)


def test_config_defaults_and_overrides(tmp_path, monkeypatch):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    assert load_config() == config_from_dict({})
    doc = {
        "pipeline": {"mode": "naive", "target_fps": 15},
        "gate": {"tau_s": 3, "min_spacing": 4},
        "taxonomy": {1: "static", 7: "dynamic"},
        "palette": {7: [1, 2, 3]},
        "backend": {"kind": "mock", "mock_latency_ms": 200},
    }
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(doc))
    monkeypatch.setenv(CONFIG_ENV, str(path))
    cfg = load_config()
    p = cfg.pipeline
    assert p.mode == "naive" and p.target_fps == 15.0 and p.gate.tau_s == 3.0 and p.gate.min_spacing == 4
    assert p.gate.tau_a == 0.01  # untouched default
    assert p.taxonomy.is_dynamic(7) and p.palette[7] == (1, 2, 3)
    assert cfg.backend.mock_latency_ms == 200.0
    assert config_from_dict(yaml.safe_load(yaml.safe_dump(config_to_dict(cfg)))) == cfg


@pytest.mark.parametrize("doc", [
    {"gate": {"tau_s": "high"}},
    {"gate": {"min_spacing": 1.5}},
    {"pipeline": {"realtime": 1}},
    {"pipeline": {"prebuffer": 9}},
    {"gate": {"tau_a": 2.0}},
    {"taxonomy": {1: "moving"}},
    {"palette": {1: [300, 0, 0]}},
    {"backend": {"kind": "external"}},
    ["not", "a", "mapping"],
])
def test_config_invalid_values(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


full_doc = config_to_dict(config_from_dict({}))
paths = [(s, k) for s in SECTIONS if isinstance(full_doc.get(s), dict) for k in full_doc[s]
         if s not in ("taxonomy", "palette")]


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(paths), st.sampled_from(["prefix", "suffix", "swap", "case"]))
def test_config_rejects_mutated_keys(path, how):
    section, key = path
    bad = {"prefix": "x" + key, "suffix": key + "_", "swap": key[::-1], "case": key.upper()}[how]
    if bad == key or bad in full_doc[section]:
        return
    doc = json.loads(json.dumps(full_doc))
    doc[section][bad] = doc[section].pop(key)
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_config_rejects_unknown_section():
    with pytest.raises(ConfigError):
        config_from_dict({"gating": {"tau_s": 1}})


def test_config_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.yaml")
