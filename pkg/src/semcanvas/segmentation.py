"""Pluggable panoptic segmentation backends and the single worker thread.

Two backends ship: ``MockBackend`` answers from synthetic ground truth,
``ExternalBackend`` talks line-delimited JSON to a child process. Results
are label maps of backend-local segment ids plus per-segment metadata.
"""

from __future__ import annotations

import json
import logging
import queue
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .canvas import CLASS_SHIFT, INSTANCE_MASK, MAX_CLASS
from .errors import BackendFailure, UnknownFrame
from .imgproc import gray_to_rgb
from .motion_model import Affine
from .pnm import read_pnm, write_ppm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentMeta:
    segment_id: int
    class_id: int
    score: float = 1.0


@dataclass
class SegmentationRequest:
    frame_index: int
    frame: np.ndarray  # gray, frame coordinates
    transform_at_submit: Affine
    color: np.ndarray | None = None


@dataclass
class SegmentationResult:
    frame_index: int
    label_map: np.ndarray  # uint16 segment ids, 0 = void
    segments: list[SegmentMeta]
    latency_ms: float = 0.0
    transform_at_submit: Affine | None = None

    def validate(self) -> None:
        ids = [s.segment_id for s in self.segments]
        if len(ids) != len(set(ids)):
            raise BackendFailure(f"frame {self.frame_index}: duplicate segment ids")
        if any(i < 1 for i in ids):
            raise BackendFailure(f"frame {self.frame_index}: segment ids must be >= 1")
        present = set(int(v) for v in np.unique(self.label_map)) - {0}
        missing = present - set(ids)
        if missing:
            raise BackendFailure(
                f"frame {self.frame_index}: label map uses undeclared segments {sorted(missing)}"
            )

    def encoded_labels(self) -> np.ndarray:
        """Label map re-expressed as packed ``class << 10 | segment_id`` values."""
        lut = np.zeros(int(self.label_map.max(initial=0)) + 1, dtype=np.uint16)
        for s in self.segments:
            if s.segment_id > INSTANCE_MASK or not (1 <= s.class_id <= MAX_CLASS):
                raise BackendFailure(f"segment {s} does not fit the 16-bit label packing")
            if s.segment_id < len(lut):
                lut[s.segment_id] = (s.class_id << CLASS_SHIFT) | s.segment_id
        return lut[self.label_map]


def result_from_labels(frame_index: int, packed: np.ndarray) -> SegmentationResult:
    """Turn a packed truth label image into a result with canonical segment ids."""
    values = [int(v) for v in np.unique(packed) if v != 0]
    lut = np.zeros(int(packed.max(initial=0)) + 1, dtype=np.uint16)
    segments = []
    for k, v in enumerate(values, start=1):
        lut[v] = k
        segments.append(SegmentMeta(k, v >> CLASS_SHIFT, 1.0))
    return SegmentationResult(frame_index, lut[packed], segments)


class Backend(Protocol):
    def segment(self, req: SegmentationRequest) -> SegmentationResult: ...

    def close(self) -> None: ...


class TruthSource(Protocol):
    frame_count: int

    def truth_labels(self, t: int) -> np.ndarray: ...


class MockBackend:
    """Oracle segmenter reading ground-truth labels, with optional latency and class noise."""

    def __init__(self, scene: TruthSource, simulated_latency_ms: float = 0.0, label_noise: float = 0.0,
                 seed: int = 0, class_ids: Sequence[int] | None = None):
        if simulated_latency_ms < 0 or not (0.0 <= label_noise < 1.0):
            raise ValueError("latency must be >= 0 and 0 <= label_noise < 1")
        self.scene = scene
        self.latency_ms = float(simulated_latency_ms)
        self.label_noise = float(label_noise)
        self.seed = seed
        if class_ids is None and hasattr(scene, "class_ids"):
            class_ids = scene.class_ids()
        self.class_ids = sorted(class_ids or [])

    def segment(self, req: SegmentationRequest) -> SegmentationResult:
        start = time.perf_counter()
        if not 0 <= req.frame_index < self.scene.frame_count:
            raise UnknownFrame(f"frame {req.frame_index} outside scene")
        result = result_from_labels(req.frame_index, self.scene.truth_labels(req.frame_index))
        if self.label_noise > 0 and len(self.class_ids) > 1:
            # seeded per frame so results do not depend on call order
            rng = np.random.default_rng([self.seed, req.frame_index])
            noisy = []
            for s in result.segments:
                cid = s.class_id
                if rng.random() < self.label_noise:
                    others = [c for c in self.class_ids if c != cid]
                    cid = others[int(rng.integers(len(others)))]
                noisy.append(SegmentMeta(s.segment_id, cid, s.score))
            result.segments = noisy
        remaining = self.latency_ms / 1000.0 - (time.perf_counter() - start)
        if remaining > 0:
            time.sleep(remaining)
        result.latency_ms = (time.perf_counter() - start) * 1000.0
        return result

    def close(self) -> None:
        pass


def mock_backend(scene: TruthSource, simulated_latency_ms: float = 0.0, label_noise: float = 0.0,
                 seed: int = 0) -> MockBackend:
    return MockBackend(scene, simulated_latency_ms, label_noise, seed)


class ExternalBackend:
    """Child-process segmenter speaking one JSON line per request and reply.

    Request:  ``{"frame_index", "width", "height", "frame_path"}`` (P6 PPM)
    Reply:    ``{"frame_index", "label_map_path", "segments": [{"id", "class_id", "score"}]}``
    with the label map stored as a 16-bit big-endian PGM.
    """

    def __init__(self, command: str, args: Sequence[str] = (), timeout_ms: float = 5000.0,
                 workdir: str | Path | None = None):
        self.timeout_s = timeout_ms / 1000.0
        self._tmp = None
        if workdir is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="semcanvas-ext-")
            workdir = self._tmp.name
        self.workdir = Path(workdir)
        try:
            self.proc = subprocess.Popen(
                [command, *args],
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendFailure(f"cannot start {command!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def segment(self, req: SegmentationRequest) -> SegmentationResult:
        start = time.perf_counter()
        h, w = req.frame.shape[:2]
        frame_path = self.workdir / f"request_{req.frame_index:06d}.ppm"
        write_ppm(frame_path, req.color if req.color is not None else gray_to_rgb(req.frame))
        msg = {"frame_index": req.frame_index, "width": w, "height": h, "frame_path": str(frame_path)}
        try:
            try:
                self.proc.stdin.write(json.dumps(msg) + "\n")
                self.proc.stdin.flush()
            except (BrokenPipeError, OSError, ValueError) as exc:
                raise BackendFailure(f"backend process is gone: {exc}") from exc
            try:
                line = self._lines.get(timeout=self.timeout_s)
            except queue.Empty:
                raise BackendFailure(
                    f"no reply for frame {req.frame_index} within {self.timeout_s * 1000:.0f} ms"
                ) from None
            if line is None:
                raise BackendFailure(f"backend exited (code {self.proc.poll()})")
            result = self._parse(line, req)
        finally:
            frame_path.unlink(missing_ok=True)
        result.latency_ms = (time.perf_counter() - start) * 1000.0
        return result

    def _parse(self, line: str, req: SegmentationRequest) -> SegmentationResult:
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BackendFailure(f"malformed reply: {line!r}") from exc
        if not isinstance(reply, dict):
            raise BackendFailure(f"reply is not an object: {line!r}")
        if reply.get("frame_index") != req.frame_index:
            raise BackendFailure(
                f"reply frame_index {reply.get('frame_index')!r} != request {req.frame_index}"
            )
        segs = reply.get("segments")
        path = reply.get("label_map_path")
        if not isinstance(segs, list) or not isinstance(path, str):
            raise BackendFailure("reply needs a 'segments' list and a 'label_map_path' string")
        try:
            metas = [
                SegmentMeta(int(s["id"]), int(s["class_id"]), float(s.get("score", 1.0)))
                for s in segs
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendFailure(f"bad segment entry: {exc}") from exc
        try:
            label_map = read_pnm(path)
        except (OSError, ValueError) as exc:
            raise BackendFailure(f"cannot read label map {path!r}: {exc}") from exc
        finally:
            Path(path).unlink(missing_ok=True)
        if label_map.ndim != 2:
            raise BackendFailure("label map must be a single-channel PGM")
        result = SegmentationResult(req.frame_index, label_map.astype(np.uint16), metas)
        result.validate()
        return result

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        if self._tmp is not None:
            self._tmp.cleanup()
            self._tmp = None


def external_backend(command: str, args: Sequence[str] = (), timeout_ms: float = 5000.0) -> ExternalBackend:
    return ExternalBackend(command, args, timeout_ms)


@dataclass
class Delivery:
    """What the worker hands back: a result, or the failure that replaced it."""

    request: SegmentationRequest
    result: SegmentationResult | None = None
    error: Exception | None = None


class SegmentationWorker:
    """Owns the backend on one thread; request and result channels hold one item each."""

    def __init__(self, backend: Backend):
        self.backend = backend
        self._requests: queue.Queue[SegmentationRequest | None] = queue.Queue(maxsize=1)
        self._results: queue.Queue[Delivery] = queue.Queue(maxsize=1)
        self.in_flight = False
        self._thread = threading.Thread(target=self._run, name="segmentation-worker", daemon=True)
        self._thread.start()

    def _run(self) -> None:
        while True:
            req = self._requests.get()
            if req is None:
                return
            try:
                res = self.backend.segment(req)
                res.transform_at_submit = req.transform_at_submit
                res.validate()
                self._results.put(Delivery(req, result=res))
            except Exception as exc:  # surfaced to the main loop, never fatal here
                self._results.put(Delivery(req, error=exc))

    def submit(self, req: SegmentationRequest) -> None:
        if self.in_flight:
            raise RuntimeError("a request is already in flight")
        self.in_flight = True
        self._requests.put(req)

    def poll(self, block: bool = False, timeout: float | None = None) -> Delivery | None:
        """Collect the in-flight delivery if it has arrived (or wait for it)."""
        if not self.in_flight:
            return None
        try:
            d = self._results.get(block=block, timeout=timeout)
        except queue.Empty:
            return None
        self.in_flight = False
        return d

    def close(self) -> None:
        if self.in_flight:
            self.poll(block=True)
        self._requests.put(None)
        self._thread.join(timeout=5.0)
        self.backend.close()
