from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semcanvas.errors import DimensionMismatch, EmptyMask
from semcanvas.gating import GateConfig, decide, motion_area_ratio, motion_score, motion_stats, run_gate

CFG = GateConfig(tau_s=2.0, tau_a=0.01, pixel_threshold=25.0, min_spacing=10)


def test_motion_score_examples():
    a = np.full((10, 10), 40, np.uint8)
    ones = np.ones_like(a, bool)
    assert motion_score(a, a, ones) == 0.0
    assert motion_score(a + 10, a, ones) == 10.0
    b = a.copy()
    b[:, :5] += 100
    assert motion_score(b, a, ones) == 50.0


def test_motion_score_divides_by_valid_count():
    a = np.zeros((4, 4), np.uint8)
    b = a.copy()
    b[0, :] = 80
    valid = np.zeros_like(a, bool)
    valid[:2] = True
    assert motion_score(b, a, valid) == 40.0


def test_motion_area_examples():
    a = np.zeros((10, 10), np.uint8)
    ones = np.ones_like(a, bool)
    assert motion_area_ratio(a, a, ones, 25) == 0.0
    assert motion_area_ratio(a + 255, a, ones, 25) == 1.0
    b = a.copy()
    b[0, :] = 50
    assert motion_area_ratio(b, a, ones, 25) == pytest.approx(0.10)


def test_errors():
    a = np.zeros((3, 3), np.uint8)
    with pytest.raises(EmptyMask):
        motion_score(a, a, np.zeros_like(a, bool))
    with pytest.raises(EmptyMask):
        motion_area_ratio(a, a, np.zeros_like(a, bool))
    with pytest.raises(DimensionMismatch):
        motion_score(a, np.zeros((3, 4), np.uint8), np.ones((3, 3), bool))


def test_decide_examples():
    assert not decide(CFG, 0, 0, 100).triggered
    assert decide(CFG, 2 * CFG.tau_s, 2 * CFG.tau_a, CFG.min_spacing).triggered
    d = decide(CFG, 2 * CFG.tau_s, 2 * CFG.tau_a, CFG.min_spacing - 1)
    assert not d.triggered and d.suppressed_by_spacing


def test_strict_inequalities():
    assert not decide(CFG, CFG.tau_s, 1.0, 99).triggered
    assert not decide(CFG, 99.0, CFG.tau_a, 99).triggered
    assert not decide(CFG, CFG.tau_s, CFG.tau_a, 99).suppressed_by_spacing


def test_config_invariants():
    for bad in (dict(tau_s=0), dict(tau_a=0), dict(tau_a=1), dict(min_spacing=-1)):
        with pytest.raises(ValueError):
            GateConfig(**bad)


pairs = st.tuples(st.floats(0, 10), st.floats(0, 0.1))


@settings(max_examples=200, deadline=None)
@given(st.lists(pairs, max_size=80), st.integers(0, 12))
def test_spacing_between_triggers(trace, spacing):
    cfg = GateConfig(1.0, 0.02, 25, spacing)
    fired = [i for i, d in enumerate(run_gate(cfg, trace)) if d.triggered]
    assert all(b - a >= spacing for a, b in zip(fired, fired[1:]))
    for d in run_gate(cfg, trace):
        if d.triggered:
            assert d.score > cfg.tau_s and d.area_ratio > cfg.tau_a and d.frames_since_last_call >= spacing


@settings(max_examples=200, deadline=None)
@given(st.lists(pairs, max_size=80), st.floats(0.1, 9), st.floats(0.1, 9), st.floats(0.001, 0.09),
       st.floats(0.001, 0.09), st.integers(0, 12))
def test_threshold_monotonicity(trace, s1, s2, a1, a2, spacing):
    lo_s, hi_s = sorted((s1, s2))
    lo_a, hi_a = sorted((a1, a2))

    def count(ts, ta):
        return sum(d.triggered for d in run_gate(GateConfig(ts, ta, 25, spacing), trace))

    assert count(hi_s, lo_a) <= count(lo_s, lo_a)
    assert count(lo_s, hi_a) <= count(lo_s, lo_a)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**32 - 1), st.integers(0, 255))
def test_all_true_mask_matches_brute_force(h, w, seed, thr):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (h, w), dtype=np.uint8)
    b = rng.integers(0, 256, (h, w), dtype=np.uint8)
    ones = np.ones((h, w), bool)
    diffs = [abs(int(x) - int(y)) for x, y in zip(a.ravel(), b.ravel())]
    assert motion_score(a, b, ones) == sum(diffs) / len(diffs)
    assert motion_area_ratio(a, b, ones, thr) == sum(d > thr for d in diffs) / len(diffs)
    assert motion_stats(a, b, ones, thr) == (motion_score(a, b, ones), motion_area_ratio(a, b, ones, thr))
