from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semcanvas.errors import DegenerateConfiguration, EmptyInput, EstimationFailed, SingularTransform
from semcanvas.motion_model import (
    Affine,
    apply,
    compose,
    estimate_affine_ransac,
    fit_affine_lsq,
    invert,
    median_reprojection_error,
)

from conftest import ransac_trial

I = Affine.identity()


def close(a: Affine, b: Affine, tol: float) -> bool:
    return a.max_abs_diff(b) <= tol


def test_apply_examples():
    assert apply(I, 7, 9) == (7, 9)
    assert apply(Affine.translation(5, -2), 0, 0) == (5, -2)
    x, y = apply(Affine.rotation(90), 1, 0)
    assert x == pytest.approx(0, abs=1e-12) and y == pytest.approx(1)


def test_compose_examples():
    t = Affine(1.5, 0.2, 3, -0.1, 0.9, 4)
    assert compose(I, t) == t
    assert compose(Affine.translation(3, 0), Affine.translation(4, 0)) == Affine.translation(7, 0)
    assert apply(compose(Affine.scaling(2), Affine.translation(1, 0)), 0, 0) == (2, 0)


def test_invert_examples():
    assert invert(I) == I
    assert close(invert(Affine.translation(5, 3)), Affine.translation(-5, -3), 1e-12)
    assert close(invert(Affine.scaling(2)), Affine.scaling(0.5), 1e-12)
    with pytest.raises(SingularTransform):
        invert(Affine(1, 2, 0, 2, 4, 0))


affines = st.builds(
    lambda d, s, r, tx, ty: Affine.translation(tx, ty) @ Affine.rotation(r) @ Affine(s, d, 0, -d, 1 / s, 0),
    st.floats(-0.3, 0.3), st.floats(0.5, 2.0), st.floats(-180, 180), st.floats(-100, 100), st.floats(-100, 100),
)


@settings(max_examples=100, deadline=None)
@given(affines, affines, affines)
def test_compose_associative(f, g, h):
    assert close(compose(compose(f, g), h), compose(f, compose(g, h)), 1e-9)


@settings(max_examples=100, deadline=None)
@given(affines, affines, st.floats(-500, 500), st.floats(-500, 500))
def test_compose_apply(f, g, x, y):
    a = apply(compose(f, g), x, y)
    b = apply(f, *apply(g, x, y))
    assert a == pytest.approx(b, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(affines)
def test_invert_roundtrip(t):
    assert close(compose(t, invert(t)), I, 1e-9)


def test_fit_three_exact():
    truth = Affine(1.1, -0.2, 5, 0.3, 0.95, -4)
    src = np.array([[0, 0], [10, 1], [3, 12]], float)
    assert close(fit_affine_lsq((src, truth.apply_points(src))), truth, 1e-9)


def test_fit_fifty_translation():
    rng = np.random.default_rng(0)
    src = rng.uniform(0, 100, (50, 2))
    t = fit_affine_lsq((src, src + [2, -7]))
    assert close(t, Affine.translation(2, -7), 1e-9)


def test_fit_collinear_degenerate():
    src = np.array([[0, 0], [1, 1], [2, 2]], float)
    with pytest.raises(DegenerateConfiguration):
        fit_affine_lsq((src, src))


def test_fit_accepts_pair_list():
    pairs = [((0, 0), (1, 1)), ((1, 0), (2, 1)), ((0, 1), (1, 2))]
    assert close(fit_affine_lsq(pairs), Affine.translation(1, 1), 1e-12)


def test_median_examples():
    src = np.zeros((3, 2))
    assert median_reprojection_error(I, (src, src)) == 0
    assert median_reprojection_error(I, (src, np.array([[1, 0], [0, 3], [5, 0]], float))) == 3
    assert median_reprojection_error(I, (src[:2], np.array([[1, 0], [0, 3]], float))) == 2
    with pytest.raises(EmptyInput):
        median_reprojection_error(I, (np.zeros((0, 2)), np.zeros((0, 2))))


def test_ransac_noiseless():
    rng = np.random.default_rng(4)
    truth = Affine.translation(12, -5) @ Affine.rotation(10)
    src = rng.uniform(0, 300, (100, 2))
    rep = estimate_affine_ransac((src, truth.apply_points(src)), 3.0, 2000, seed=1)
    assert close(rep.transform, truth, 1e-6)
    assert rep.inlier_ratio == 1.0 and rep.inlier_count == rep.total_count == 100


def test_ransac_minimal_case():
    truth = Affine(0.9, 0.1, 3, -0.2, 1.1, 7)
    src = np.array([[0, 0], [50, 5], [10, 40]], float)
    rep = estimate_affine_ransac((src, truth.apply_points(src)), 3.0, 100, seed=0)
    assert rep.inlier_ratio == 1.0
    assert close(rep.transform, fit_affine_lsq((src, truth.apply_points(src))), 1e-12)


def test_ransac_fails_without_consensus():
    src = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], float)
    with pytest.raises(EstimationFailed):
        estimate_affine_ransac((src, src), 3.0, 50, seed=0)


def test_ransac_report_invariants():
    _, src, dst = ransac_trial(3)
    rep = estimate_affine_ransac((src, dst), 3.0, 2000, seed=3)
    assert 0 <= rep.inlier_count <= rep.total_count == 100
    assert rep.inlier_ratio == rep.inlier_count / rep.total_count
    assert rep.median_reproj_error == median_reprojection_error(rep.transform, (src, dst))


def test_ransac_deterministic_and_permutation_invariant():
    _, src, dst = ransac_trial(8)
    a = estimate_affine_ransac((src, dst), seed=5)
    assert estimate_affine_ransac((src, dst), seed=5) == a
    perm = np.random.default_rng(0).permutation(len(src))
    assert estimate_affine_ransac((src[perm], dst[perm]), seed=5) == a


def test_ransac_monte_carlo_linear_part_and_translation_bound():
    # Diagnostic companion of the acceptance check. The linear entries meet
    # 1e-2; the translation entries are limited by the noise floor, so they
    # are held to a statistical bound instead (sigma / sqrt(n) scaled by the
    # lever arm of frame-sized coordinates).
    ok_linear = ok_translation = 0
    for seed in range(100):
        truth, src, dst = ransac_trial(seed)
        t = estimate_affine_ransac((src, dst), 3.0, 2000, seed=seed).transform
        d = np.abs(np.array(t.as_tuple()) - np.array(truth.as_tuple()))
        ok_linear += d[[0, 1, 3, 4]].max() <= 1e-2
        ok_translation += d[[2, 5]].max() <= 0.3
    assert ok_linear >= 99
    assert ok_translation >= 99
