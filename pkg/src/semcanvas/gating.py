"""Frame-differencing motion gate for segmentation requests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DimensionMismatch, EmptyMask


@dataclass(frozen=True)
class GateConfig:
    tau_s: float = 2.0
    tau_a: float = 0.01
    pixel_threshold: float = 25.0
    min_spacing: int = 10

    def __post_init__(self):
        if self.tau_s <= 0 or not (0 < self.tau_a < 1) or self.min_spacing < 0:
            raise ValueError(f"invalid gate config {self}")


@dataclass(frozen=True)
class GateDecision:
    score: float
    area_ratio: float
    triggered: bool
    suppressed_by_spacing: bool
    frames_since_last_call: int


def _masked_diff(curr: np.ndarray, prev: np.ndarray, valid: np.ndarray) -> np.ndarray:
    if curr.shape != prev.shape or valid.shape != curr.shape:
        raise DimensionMismatch(f"{curr.shape}, {prev.shape}, {valid.shape}")
    n = int(np.count_nonzero(valid))
    if n == 0:
        raise EmptyMask("validity mask has no true pixels")
    # int16 keeps the subtraction exact without a float round trip
    return np.abs(curr.astype(np.int16) - prev.astype(np.int16))[valid]


def motion_score(curr: np.ndarray, prev: np.ndarray, valid: np.ndarray) -> float:
    """Mean absolute difference over valid pixels."""
    d = _masked_diff(curr, prev, valid)
    return float(d.sum(dtype=np.int64)) / d.size


def motion_area_ratio(curr: np.ndarray, prev: np.ndarray, valid: np.ndarray,
                      pixel_threshold: float = 25.0) -> float:
    d = _masked_diff(curr, prev, valid)
    return int(np.count_nonzero(d > pixel_threshold)) / d.size


def motion_stats(curr: np.ndarray, prev: np.ndarray, valid: np.ndarray,
                 pixel_threshold: float = 25.0) -> tuple[float, float]:
    """``(score, area_ratio)`` from a single differencing pass."""
    d = _masked_diff(curr, prev, valid)
    return float(d.sum(dtype=np.int64)) / d.size, int(np.count_nonzero(d > pixel_threshold)) / d.size


def decide(cfg: GateConfig, s: float, a: float, frames_since_last_call: int) -> GateDecision:
    motion = s > cfg.tau_s and a > cfg.tau_a
    spaced = frames_since_last_call >= cfg.min_spacing
    return GateDecision(
        score=s,
        area_ratio=a,
        triggered=motion and spaced,
        suppressed_by_spacing=motion and not spaced,
        frames_since_last_call=frames_since_last_call,
    )


def run_gate(cfg: GateConfig, stats: Iterable[tuple[float, float]]) -> list[GateDecision]:
    """Replay ``(score, area)`` pairs through the gate with an always-idle worker.

    Frame 0 starts with the spacing already satisfied.
    """
    out = []
    last_call = -cfg.min_spacing
    for i, (s, a) in enumerate(stats):
        d = decide(cfg, s, a, i - last_call)
        if d.triggered:
            last_call = i
        out.append(d)
    return out
