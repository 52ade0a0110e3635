"""Baseline-anchored stabilization with trust gating and transform hold."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EstimationFailed, InsufficientFeatures
from .features import Corner, DetectParams, LKParams, LKTemplate, detect_with_params
from .motion_model import IDENTITY, Affine, EstimateReport, estimate_affine_ransac


@dataclass(frozen=True)
class TrustConfig:
    min_tracked: int = 25
    min_inlier_ratio: float = 0.5
    max_median_error: float = 2.0

    def __post_init__(self):
        if self.min_tracked < 3 or not (0 < self.min_inlier_ratio <= 1) or self.max_median_error <= 0:
            raise ValueError(f"invalid trust config {self}")


@dataclass(frozen=True)
class RansacParams:
    inlier_threshold: float = 3.0
    max_iters: int = 2000
    confidence: float = 0.999
    seed: int = 0


@dataclass
class StabilizerState:
    baseline: np.ndarray
    baseline_corners: list[Corner]
    last_accepted: Affine = IDENTITY
    frames_since_accept: int = 0
    lk: LKParams = field(default_factory=LKParams)
    _template: LKTemplate | None = field(default=None, repr=False)

    def template(self) -> LKTemplate:
        if self._template is None:
            self._template = LKTemplate(
                self.baseline, self.baseline_corners, self.lk.levels, self.lk.window
            )
        return self._template


@dataclass(frozen=True)
class StabilizationOutcome:
    transform: Affine
    accepted: bool
    report: EstimateReport | None
    tracked_count: int
    score: float


def init_baseline(
    frame: np.ndarray,
    detect: DetectParams = DetectParams(),
    trust: TrustConfig = TrustConfig(),
    lk: LKParams = LKParams(),
) -> StabilizerState:
    corners = detect_with_params(frame, detect)
    if len(corners) < trust.min_tracked:
        raise InsufficientFeatures(
            f"baseline has {len(corners)} corners, need at least {trust.min_tracked}"
        )
    return StabilizerState(baseline=frame.copy(), baseline_corners=corners, lk=lk)


def trust_score(tracked_count: int, inlier_ratio: float, median_error: float, cfg: TrustConfig) -> float:
    """Minimum of three saturating components; a frame is trusted at 1.0."""
    def clamp01(v: float) -> float:
        return min(max(v, 0.0), 1.0)

    return min(
        clamp01(tracked_count / cfg.min_tracked),
        clamp01(inlier_ratio / cfg.min_inlier_ratio),
        clamp01(cfg.max_median_error / max(median_error, 1e-9)),
    )


def stabilize_frame(
    state: StabilizerState,
    frame: np.ndarray,
    ransac: RansacParams = RansacParams(),
    trust: TrustConfig = TrustConfig(),
) -> tuple[StabilizationOutcome, StabilizerState]:
    """Register ``frame`` against the baseline.

    The returned state is ``state`` updated in place (and returned for
    convenience); rejected frames leave ``last_accepted`` untouched.
    """
    if frame.shape != state.baseline.shape:
        raise DimensionMismatch(f"frame {frame.shape} vs baseline {state.baseline.shape}")
    lk = state.lk
    dst, ok, _ = state.template().track(frame, lk.max_iters, lk.epsilon, lk.max_residual)
    tracked = int(ok.sum())
    report = None
    score = 0.0
    if tracked >= 3:
        # fit frame -> baseline: tracked positions are the sources
        base_pts = state.template().points[ok]
        try:
            report = estimate_affine_ransac(
                (dst[ok], base_pts),
                ransac.inlier_threshold,
                ransac.max_iters,
                ransac.seed,
                ransac.confidence,
            )
        except EstimationFailed:
            report = None
    if report is not None and report.transform.is_finite() and abs(report.transform.det) > 1e-12:
        score = trust_score(tracked, report.inlier_ratio, report.median_reproj_error, trust)
    if score >= 1.0:
        state.last_accepted = report.transform
        state.frames_since_accept = 0
        accepted = True
    else:
        state.frames_since_accept += 1
        accepted = False
    outcome = StabilizationOutcome(
        transform=state.last_accepted,
        accepted=accepted,
        report=report,
        tracked_count=tracked,
        score=score,
    )
    return outcome, state
