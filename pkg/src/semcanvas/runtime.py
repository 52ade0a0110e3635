"""Pipeline main loop: stabilize, warp, gate, submit, write canvases.

NAIVE and GATED differ only in the ``SubmitPolicy`` they run with.
"""

from __future__ import annotations

import json
import logging
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Mapping, TextIO

import numpy as np

from .canvas import (
    DEFAULT_PALETTE,
    DYNAMIC,
    STATIC,
    CanvasState,
    Taxonomy,
    labels_to_viewport,
    new_canvas,
    render_overlay,
    warp_to_viewport,
    write_dynamic,
    write_static,
)
from .errors import BaselineInitFailure, InsufficientFeatures, SourceError, UnmappedClass
from .features import DetectParams, LKParams, edge_strength_mask
from .gating import GateConfig, GateDecision, decide, motion_stats
from .imgproc import gray_to_rgb, resize_nearest, to_gray
from .metrics import RunSummary, summarize
from .pnm import write_ppm
from .segmentation import Backend, Delivery, SegmentationRequest, SegmentationWorker
from .stabilizer import RansacParams, StabilizerState, TrustConfig, init_baseline, stabilize_frame
from .synth import SYNTH_TAXONOMY

log = logging.getLogger(__name__)

NAIVE = "naive"
GATED = "gated"


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = GATED
    target_fps: float = 30.0
    buffer_capacity: int = 8
    prebuffer: int = 4
    realtime: bool = False
    lockstep: bool = False
    debug_every: int = 30
    iou_threshold: float = 0.3
    ttl_frames: int = 30
    overlay_alpha: float = 0.5
    gate: GateConfig = field(default_factory=GateConfig)
    trust: TrustConfig = field(default_factory=TrustConfig)
    detect: DetectParams = field(default_factory=DetectParams)
    lk: LKParams = field(default_factory=LKParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    taxonomy: Taxonomy = SYNTH_TAXONOMY
    palette: Mapping[int, tuple[int, int, int]] = field(default_factory=lambda: dict(DEFAULT_PALETTE))

    def __post_init__(self):
        if self.mode not in (NAIVE, GATED):
            raise ValueError(f"mode must be {NAIVE!r} or {GATED!r}, got {self.mode!r}")
        if self.target_fps <= 0 or self.buffer_capacity < 1 or not 0 <= self.prebuffer <= self.buffer_capacity:
            raise ValueError("need target_fps > 0, buffer_capacity >= 1, 0 <= prebuffer <= buffer_capacity")


@dataclass(frozen=True)
class SubmitPolicy:
    """Whether a frame wants segmentation, and whether a busy worker is waited for."""

    name: str
    wants: Callable[[int, GateDecision], bool]
    blocking: bool


NAIVE_POLICY = SubmitPolicy(NAIVE, lambda idx, d: True, blocking=True)
GATED_POLICY = SubmitPolicy(GATED, lambda idx, d: d.triggered, blocking=False)


def policy_for(mode: str) -> SubmitPolicy:
    return NAIVE_POLICY if mode == NAIVE else GATED_POLICY


@dataclass
class TimingRecord:
    frame_index: int
    t_total: float
    t_stabilize: float
    t_warp: float
    t_gate: float
    t_canvas_write: float
    seg_submitted: int
    seg_arrived: int
    gate: GateDecision
    stab_accepted: bool
    dropped_before: int = 0

    def to_json(self) -> dict[str, Any]:
        return {
            "frame_index": self.frame_index,
            "t_total_ms": self.t_total,
            "t_stabilize_ms": self.t_stabilize,
            "t_warp_ms": self.t_warp,
            "t_gate_ms": self.t_gate,
            "t_canvas_ms": self.t_canvas_write,
            "seg_submitted": self.seg_submitted,
            "seg_arrived": self.seg_arrived,
            "gate_score": self.gate.score,
            "gate_area": self.gate.area_ratio,
            "gate_triggered": self.gate.triggered,
            "gate_suppressed": self.gate.suppressed_by_spacing,
            "stab_accepted": self.stab_accepted,
            "dropped_before": self.dropped_before,
        }


TIMING_FIELDS = ("t_total_ms", "t_stabilize_ms", "t_warp_ms", "t_gate_ms", "t_canvas_ms")


class FrameBuffer:
    """Bounded FIFO that evicts the oldest entries on overflow."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.entries: deque[tuple[int, Any]] = deque()

    def __len__(self) -> int:
        return len(self.entries)

    def push(self, index: int, frame: Any) -> int:
        if self.entries and index <= self.entries[-1][0]:
            raise ValueError("arrival indices must increase")
        self.entries.append((index, frame))
        dropped = 0
        while len(self.entries) > self.capacity:
            self.entries.popleft()
            dropped += 1
        return dropped

    def pop_oldest(self) -> tuple[int, Any]:
        return self.entries.popleft()

    def pop_newest(self) -> tuple[int, Any]:
        return self.entries.pop()


def push_frame(buf: FrameBuffer, index: int, frame: Any) -> tuple[FrameBuffer, int]:
    dropped = buf.push(index, frame)
    return buf, dropped


def pace(target_fps: float, last_display: float, now: float | None = None) -> float:
    """Seconds to wait so displays are at least one period apart."""
    if target_fps <= 0:
        raise ValueError("target_fps must be > 0")
    now = time.perf_counter() if now is None else now
    return max(0.0, last_display + 1.0 / target_fps - now)


@dataclass
class PipelineRun:
    summary: RunSummary
    records: list[TimingRecord]
    canvas: CanvasState
    stabilizer: StabilizerState
    failures: int = 0


def _ms(a: float, b: float) -> float:
    return (b - a) * 1000.0


def _split(frame: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    frame = np.asarray(frame)
    if frame.ndim == 3:
        return to_gray(frame), frame
    if frame.ndim != 2:
        raise SourceError(f"unexpected frame shape {frame.shape}")
    return frame.astype(np.uint8, copy=False), None


def _clocked(source: Iterator, cfg: PipelineConfig, drops: list[int]) -> Iterator[tuple[int, Any]]:
    """Replay ``source`` as a camera at ``target_fps`` through a bounded buffer.

    Frames wait in the buffer until the loop is free; when the loop falls
    behind, the oldest frames are evicted. ``drops`` accumulates evictions.
    """
    period = 1.0 / cfg.target_fps
    buf = FrameBuffer(cfg.buffer_capacity)
    start = time.perf_counter()
    produced = 0
    exhausted = False

    def ingest(now: float) -> None:
        nonlocal produced, exhausted
        while not exhausted and start + produced * period <= now:
            try:
                frame = next(source)
            except StopIteration:
                exhausted = True
                return
            drops[0] += buf.push(produced, frame)
            produced += 1

    # prebuffer: let the first frames accumulate before the display loop starts
    while not exhausted and len(buf) < max(cfg.prebuffer, 1):
        time.sleep(max(0.0, start + produced * period - time.perf_counter()))
        ingest(time.perf_counter())
    last_display = time.perf_counter() - period
    while True:
        ingest(time.perf_counter())
        if not buf:
            if exhausted:
                return
            time.sleep(max(0.0, start + produced * period - time.perf_counter()))
            continue
        time.sleep(pace(cfg.target_fps, last_display))
        last_display = time.perf_counter()
        yield buf.pop_oldest()


class Pipeline:
    """One run of the main loop over a frame source."""

    def __init__(self, cfg: PipelineConfig, backend: Backend, policy: SubmitPolicy | None = None,
                 log_sink: TextIO | None = None, debug_dir: str | Path | None = None):
        self.cfg = cfg
        self.policy = policy or policy_for(cfg.mode)
        self.worker = SegmentationWorker(backend)
        self.log_sink = log_sink
        self.debug_dir = Path(debug_dir) if debug_dir else None
        self.records: list[TimingRecord] = []
        self.failures = 0
        self.canvas: CanvasState | None = None
        self.stab: StabilizerState | None = None

    def _apply(self, d: Delivery) -> None:
        if d.error is not None:
            self.failures += 1
            log.warning("segmentation for frame %d failed: %s", d.request.frame_index, d.error)
            return
        res = d.result
        labels = res.encoded_labels()
        labels = resize_nearest(labels, self.canvas.viewport_w, self.canvas.viewport_h)
        view_labels = labels_to_viewport(self.canvas, labels, res.transform_at_submit)
        try:
            write_static(self.canvas, view_labels, self.cfg.taxonomy)
            write_dynamic(self.canvas, view_labels, self.cfg.taxonomy, res.frame_index,
                          self.cfg.iou_threshold, self.cfg.ttl_frames)
        except UnmappedClass as exc:
            self.failures += 1
            log.warning("segmentation for frame %d has unmapped classes: %s", res.frame_index, exc)

    def _emit(self, rec: TimingRecord) -> None:
        self.records.append(rec)
        if self.log_sink is not None:
            self.log_sink.write(json.dumps(rec.to_json()) + "\n")

    def run(self, source: Iterable[np.ndarray]) -> PipelineRun:
        cfg = self.cfg
        it = iter(source)
        drops = [0]
        frames: Iterator[tuple[int, Any]] = _clocked(it, cfg, drops) if cfg.realtime else enumerate(it)
        prev_view = prev_valid = None
        last_call = -cfg.gate.min_spacing
        reported_drops = 0
        try:
            for idx, raw in frames:
                gray, color = _split(raw)
                t0 = time.perf_counter()
                if self.stab is None:
                    try:
                        self.stab = init_baseline(gray, cfg.detect, cfg.trust, cfg.lk)
                    except InsufficientFeatures as exc:
                        raise BaselineInitFailure(str(exc)) from exc
                    self.canvas = new_canvas(gray.shape[1], gray.shape[0])
                outcome, _ = stabilize_frame(self.stab, gray, cfg.ransac, cfg.trust)
                t1 = time.perf_counter()
                view, valid = warp_to_viewport(self.canvas, gray, outcome.transform)
                t2 = time.perf_counter()
                if prev_view is None:
                    score, area = 0.0, 0.0
                else:
                    both = valid & prev_valid
                    score, area = motion_stats(view, prev_view, both, cfg.gate.pixel_threshold) if both.any() else (0.0, 0.0)
                decision = decide(cfg.gate, score, area, idx - last_call)
                t3 = time.perf_counter()

                arrived = 0
                t_canvas = 0.0
                d = self.worker.poll(block=cfg.lockstep)
                if d is not None:
                    c0 = time.perf_counter()
                    self._apply(d)
                    t_canvas += _ms(c0, time.perf_counter())
                    arrived = 1

                submitted = 0
                if self.policy.wants(idx, decision):
                    if self.worker.in_flight and self.policy.blocking:
                        d = self.worker.poll(block=True)
                        c0 = time.perf_counter()
                        self._apply(d)
                        t_canvas += _ms(c0, time.perf_counter())
                        arrived = 1
                    if self.worker.in_flight:
                        # busy worker counts as spacing suppression
                        decision = replace(decision, triggered=False, suppressed_by_spacing=True)
                    else:
                        self.worker.submit(SegmentationRequest(idx, gray, outcome.transform, color))
                        submitted = 1
                        last_call = idx
                elif decision.triggered:
                    decision = replace(decision, triggered=False)
                t4 = time.perf_counter()

                rec = TimingRecord(
                    frame_index=idx,
                    t_total=_ms(t0, t4),
                    t_stabilize=_ms(t0, t1),
                    t_warp=_ms(t1, t2),
                    t_gate=_ms(t2, t3),
                    t_canvas_write=t_canvas,
                    seg_submitted=submitted,
                    seg_arrived=arrived,
                    gate=decision,
                    stab_accepted=outcome.accepted,
                    dropped_before=drops[0] - reported_drops,
                )
                reported_drops = drops[0]
                self._emit(rec)
                if self.debug_dir is not None and cfg.debug_every > 0 and idx % cfg.debug_every == 0:
                    self._debug_tile(idx, gray, view)
                prev_view, prev_valid = view, valid
            if self.worker.in_flight:
                self._apply(self.worker.poll(block=True))
        finally:
            self.worker.close()
        if not self.records:
            raise SourceError("source produced no frames")
        summary = summarize(self.records)
        if self.log_sink is not None:
            self.log_sink.write(json.dumps({"summary": True, **summary.to_dict()}) + "\n")
        return PipelineRun(summary, self.records, self.canvas, self.stab, self.failures)

    def _debug_tile(self, idx: int, frame: np.ndarray, view: np.ndarray) -> None:
        self.debug_dir.mkdir(parents=True, exist_ok=True)
        edges = edge_strength_mask(frame, self.cfg.detect.grad_threshold, 0).astype(np.uint8) * 255
        a = self.cfg.overlay_alpha
        tiles = [
            gray_to_rgb(frame),
            gray_to_rgb(edges),
            gray_to_rgb(self.stab.baseline),
            gray_to_rgb(view),
            render_overlay(self.canvas, view, self.cfg.palette, a, layers=(STATIC,)),
            render_overlay(self.canvas, view, self.cfg.palette, a, layers=(DYNAMIC,)),
        ]
        grid = np.concatenate(
            [np.concatenate(tiles[0:3], axis=1), np.concatenate(tiles[3:6], axis=1)], axis=0
        )
        write_ppm(self.debug_dir / f"tiles_{idx:06d}.ppm", grid)


def run_pipeline(cfg: PipelineConfig, source: Iterable[np.ndarray], backend: Backend,
                 log_sink: TextIO | None = None, debug_dir: str | Path | None = None,
                 policy: SubmitPolicy | None = None) -> PipelineRun:
    return Pipeline(cfg, backend, policy, log_sink, debug_dir).run(source)
