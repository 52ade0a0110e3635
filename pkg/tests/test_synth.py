from __future__ import annotations

import math

import numpy as np
import pytest

from semcanvas.canvas import CLASS_SHIFT, STATIC
from semcanvas.gating import motion_score
from semcanvas.imgproc import psnr, warp_affine
from semcanvas.motion_model import Affine
from semcanvas.synth import (
    MoverSpec,
    SceneSpec,
    SyntheticScene,
    benchmark_scene,
    mover_scene,
    render_frame,
    static_scene,
)


@pytest.fixture(scope="module")
def bench():
    return SyntheticScene(benchmark_scene(7))


def test_frame0_identity_and_world_viewport():
    scene = SyntheticScene(static_scene(seed=4, viewport_w=64, viewport_h=48, frame_count=3))
    gray, color, labels, g0 = render_frame(scene, 0)
    assert g0 == Affine.identity()
    world_color, world_labels = scene.world(0)
    np.testing.assert_array_equal(color, world_color[24:72, 32:96])
    np.testing.assert_array_equal(labels, world_labels[24:72, 32:96])


def test_static_scene_frames_identical():
    scene = SyntheticScene(static_scene(seed=4, viewport_w=64, viewport_h=48, frame_count=4))
    a, b = scene.gray_frame(1), scene.gray_frame(2)
    np.testing.assert_array_equal(a, b)
    assert motion_score(b, a, np.ones_like(a, bool)) == 0.0


def test_mover_enters_at_k():
    scene = SyntheticScene(mover_scene(seed=0, frame_count=12, enter=5))
    classes = lambda t: set(np.unique(scene.truth_labels(t) >> CLASS_SHIFT))
    assert 10 in classes(5) and 10 not in classes(4)


def test_index_out_of_range():
    scene = SyntheticScene(static_scene(frame_count=2))
    with pytest.raises(IndexError):
        scene.gray_frame(2)


def test_spec_validation():
    with pytest.raises(ValueError):
        SceneSpec(32, 32, 2, 0, (Affine.identity(),))
    with pytest.raises(ValueError):
        SceneSpec(32, 32, 1, 0, (Affine.translation(1, 0),))
    with pytest.raises(ValueError):
        MoverSpec(10, "rect", (4, 4), ((0, 0),), (0, 1))


def test_benchmark_spec(bench):
    spec = bench.spec
    assert spec.frame_count == 600 and (spec.viewport_w, spec.viewport_h) == (640, 360)
    active = [t for t in range(600) if any(m.active(t) for m in spec.movers)]
    assert len(active) / 600 == 0.2
    (a0, a1), (b0, b1) = sorted(m.active_range for m in spec.movers)
    assert a1 - a0 + 1 == 60 and b1 - b0 + 1 == 60 and b0 - a1 - 1 >= 150
    cx, cy = 320.0, 180.0
    for g in spec.camera_path:
        x, y = g.apply(cx, cy)
        assert math.hypot(x - cx, y - cy) <= 6.0 + 1e-9
        assert abs(math.degrees(math.atan2(g.a21, g.a11))) <= 1.0 + 1e-9
    assert all(bench.taxonomy.is_dynamic(m.class_id) for m in spec.movers)


def test_benchmark_deterministic(bench):
    other = SyntheticScene(benchmark_scene(7))
    for t in (0, 120, 333):
        np.testing.assert_array_equal(bench.color_frame(t), other.color_frame(t))
        np.testing.assert_array_equal(bench.truth_labels(t), other.truth_labels(t))


def test_truth_transform_self_consistency(bench):
    base = bench.gray_frame(0)
    interior = np.zeros_like(base, bool)
    interior[20:-20, 20:-20] = True
    for t in (17, 45, 250, 480):
        back = warp_affine(bench.gray_frame(t), bench.truth_transform(t), 640, 360)
        assert psnr(base, back, interior) >= 35.0


def test_truth_labels_respect_taxonomy(bench):
    tax = bench.taxonomy
    band_ids = {b.class_id for b in bench.spec.background.bands}
    assert all(tax.mapping[c] == STATIC for c in band_ids)
    for t in (0, 130, 340):
        lab = bench.truth_labels(t)
        cls = lab >> CLASS_SHIFT
        kinds = tax.kinds(lab)
        assert np.all(kinds[np.isin(cls, list(band_ids))] == 1)
        assert np.all(kinds[~np.isin(cls, list(band_ids))] == 2)
        active = {m.class_id for m in bench.spec.movers if m.active(t)}
        assert set(np.unique(cls)) - band_ids == active
