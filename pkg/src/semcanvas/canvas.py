"""Latent semantic canvases in a 2x baseline-anchored coordinate frame.

Label values pack class and instance into 16 bits: the high 6 bits hold
the class id, the low 10 bits an instance index. Zero means empty.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import DegenerateRect, UnmappedClass
from .imgproc import gray_to_rgb, warp_affine
from .motion_model import Affine, compose

CLASS_SHIFT = 10
INSTANCE_MASK = (1 << CLASS_SHIFT) - 1
MAX_CLASS = (1 << (16 - CLASS_SHIFT)) - 1

STATIC = "static"
DYNAMIC = "dynamic"


def encode_label(class_id: int, instance: int) -> int:
    if not (0 <= class_id <= MAX_CLASS) or not (0 <= instance <= INSTANCE_MASK):
        raise ValueError(f"class {class_id} / instance {instance} out of range")
    return (class_id << CLASS_SHIFT) | instance


def label_class(labels):
    """Class id of a label value or label array."""
    return labels >> CLASS_SHIFT


class Rect(NamedTuple):
    x: float
    y: float
    w: float
    h: float


def bbox_iou(a: Rect, b: Rect) -> float:
    if a[2] <= 0 or a[3] <= 0 or b[2] <= 0 or b[3] <= 0:
        raise DegenerateRect(f"degenerate rectangle in {a}, {b}")
    ix = max(0.0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = a[2] * a[3] + b[2] * b[3] - inter
    # rounding in the edge differences can push the ratio a hair past 1
    return min(inter / union, 1.0)


class Taxonomy:
    """Maps backend class ids to ``"static"`` or ``"dynamic"``."""

    def __init__(self, mapping: Mapping[int, str]):
        self.mapping = {}
        for cid, kind in mapping.items():
            cid = int(cid)
            if kind not in (STATIC, DYNAMIC):
                raise ValueError(f"class {cid}: kind must be static|dynamic, got {kind!r}")
            if not (1 <= cid <= MAX_CLASS):
                raise ValueError(f"class id {cid} outside 1..{MAX_CLASS}")
            self.mapping[cid] = kind
        # 0 = unmapped, 1 = static, 2 = dynamic; index is the packed label's class
        self._lut = np.zeros(MAX_CLASS + 1, dtype=np.uint8)
        for cid, kind in self.mapping.items():
            self._lut[cid] = 1 if kind == STATIC else 2

    def __eq__(self, other) -> bool:
        return isinstance(other, Taxonomy) and self.mapping == other.mapping

    def __hash__(self) -> int:
        return hash(tuple(sorted(self.mapping.items())))

    def __repr__(self) -> str:
        return f"Taxonomy({self.mapping!r})"

    def is_dynamic(self, class_id: int) -> bool:
        try:
            return self.mapping[int(class_id)] == DYNAMIC
        except KeyError:
            raise UnmappedClass(class_id) from None

    def kinds(self, labels: np.ndarray) -> np.ndarray:
        """Per-pixel kind codes (0 empty, 1 static, 2 dynamic)."""
        cls = labels >> CLASS_SHIFT
        kind = self._lut[cls]
        unmapped = (labels != 0) & (kind == 0)
        if unmapped.any():
            bad = sorted(set(int(c) for c in np.unique(cls[unmapped])))
            raise UnmappedClass(f"labels use unmapped classes {bad}")
        return np.where(labels != 0, kind, 0)


DEFAULT_TAXONOMY = Taxonomy({1: STATIC, 2: STATIC, 3: STATIC, 10: DYNAMIC, 11: DYNAMIC})

DEFAULT_PALETTE: dict[int, tuple[int, int, int]] = {
    1: (128, 64, 128),   # ground
    2: (70, 70, 200),    # structure
    3: (70, 130, 180),   # sky
    10: (220, 20, 60),   # person
    11: (0, 0, 142),     # vehicle
}


def palette_color(palette: Mapping[int, tuple[int, int, int]], class_id: int) -> tuple[int, int, int]:
    if class_id in palette:
        return tuple(palette[class_id])
    h = zlib.crc32(str(class_id).encode())
    return (h & 0xFF, (h >> 8) & 0xFF, (h >> 16) & 0xFF)


@dataclass
class InstanceTrack:
    track_id: int
    class_id: int
    last_mask_bbox: Rect
    last_seen_frame: int
    ttl: int


def associate_tracks(
    tracks: list[InstanceTrack],
    new_segments: Iterable[tuple[Rect, int]],
    frame_index: int,
    iou_threshold: float = 0.3,
    ttl_frames: int = 30,
    next_id: int | None = None,
) -> list[InstanceTrack]:
    """Greedy same-class IoU matching; unmatched tracks age and expire."""
    if not (0 < iou_threshold < 1) or ttl_frames < 1:
        raise ValueError("iou_threshold must be in (0, 1) and ttl_frames >= 1")
    segs = list(new_segments)
    if next_id is None:
        next_id = max((t.track_id for t in tracks), default=0) + 1

    candidates = []
    for ti, tr in enumerate(tracks):
        for si, (box, cid) in enumerate(segs):
            if cid != tr.class_id:
                continue
            iou = bbox_iou(tr.last_mask_bbox, box)
            if iou >= iou_threshold:
                candidates.append((-iou, ti, si))
    candidates.sort()

    matched_t: dict[int, int] = {}
    matched_s: set[int] = set()
    for _, ti, si in candidates:
        if ti in matched_t or si in matched_s:
            continue
        matched_t[ti] = si
        matched_s.add(si)

    out: list[InstanceTrack] = []
    for ti, tr in enumerate(tracks):
        if ti in matched_t:
            box, _ = segs[matched_t[ti]]
            out.append(InstanceTrack(tr.track_id, tr.class_id, Rect(*box), frame_index, ttl_frames))
        else:
            ttl = tr.ttl - 1
            if ttl > 0:
                out.append(InstanceTrack(tr.track_id, tr.class_id, tr.last_mask_bbox,
                                         tr.last_seen_frame, ttl))
    for si, (box, cid) in enumerate(segs):
        if si not in matched_s:
            out.append(InstanceTrack(next_id, cid, Rect(*box), frame_index, ttl_frames))
            next_id += 1
    return out


@dataclass
class CanvasState:
    viewport_w: int
    viewport_h: int
    static_layer: np.ndarray
    dynamic_layer: np.ndarray
    tracks: list[InstanceTrack] = field(default_factory=list)
    next_track_id: int = 1

    @property
    def canvas_w(self) -> int:
        return 2 * self.viewport_w

    @property
    def canvas_h(self) -> int:
        return 2 * self.viewport_h

    @property
    def viewport(self) -> tuple[int, int, int, int]:
        return (self.viewport_w // 2, self.viewport_h // 2, self.viewport_w, self.viewport_h)

    @property
    def centering(self) -> Affine:
        x0, y0, _, _ = self.viewport
        return Affine.translation(x0, y0)

    def viewport_slice(self) -> tuple[slice, slice]:
        x0, y0, w, h = self.viewport
        return slice(y0, y0 + h), slice(x0, x0 + w)


def new_canvas(viewport_w: int, viewport_h: int) -> CanvasState:
    if viewport_w < 16 or viewport_h < 16:
        raise ValueError("viewport must be at least 16x16")
    shape = (2 * viewport_h, 2 * viewport_w)
    return CanvasState(
        viewport_w=viewport_w,
        viewport_h=viewport_h,
        static_layer=np.zeros(shape, dtype=np.uint16),
        dynamic_layer=np.zeros(shape, dtype=np.uint16),
    )


def canvas_transform(state: CanvasState, t: Affine) -> Affine:
    return compose(state.centering, t)


def _viewport_warp(state: CanvasState, t: Affine) -> Affine:
    # canvas warp followed by the viewport crop, folded into one transform
    x0, y0, _, _ = state.viewport
    return compose(Affine.translation(-x0, -y0), canvas_transform(state, t))


def warp_to_viewport(state: CanvasState, frame: np.ndarray, t: Affine) -> tuple[np.ndarray, np.ndarray]:
    """Stabilized viewport ``V_t`` and validity mask ``m_t`` for a frame."""
    if frame.shape[:2] != (state.viewport_h, state.viewport_w):
        raise ValueError(f"frame {frame.shape[:2]} does not match viewport")
    m = _viewport_warp(state, t)
    view = warp_affine(frame, m, state.viewport_w, state.viewport_h)
    valid = warp_affine(np.ones(frame.shape[:2], dtype=bool), m, state.viewport_w, state.viewport_h)
    return view, valid


def labels_to_viewport(state: CanvasState, labels: np.ndarray, t: Affine) -> np.ndarray:
    """Nearest-neighbour warp of a frame-space label image into the canvas viewport."""
    return warp_affine(labels.astype(np.uint16), _viewport_warp(state, t), state.viewport_w,
                       state.viewport_h)


def _check_viewport_labels(state: CanvasState, labels: np.ndarray) -> None:
    if labels.shape != (state.viewport_h, state.viewport_w):
        raise ValueError(f"labels {labels.shape} do not match viewport")


def write_static(state: CanvasState, labels: np.ndarray, taxonomy: Taxonomy) -> CanvasState:
    """Fill empty static pixels in the viewport with static-class labels."""
    _check_viewport_labels(state, labels)
    kinds = taxonomy.kinds(labels)
    region = state.static_layer[state.viewport_slice()]
    fill = (kinds == 1) & (region == 0)
    region[fill] = labels[fill]
    return state


def dynamic_segments(labels: np.ndarray, kinds: np.ndarray, offset: tuple[int, int]) -> list[tuple[Rect, int]]:
    """Bounding box (in canvas coordinates) and class of each dynamic label value."""
    out = []
    vals = np.unique(labels[kinds == 2])
    for v in vals:
        ys, xs = np.nonzero(labels == v)
        box = Rect(float(xs.min() + offset[0]), float(ys.min() + offset[1]),
                   float(xs.max() - xs.min() + 1), float(ys.max() - ys.min() + 1))
        out.append((box, int(v) >> CLASS_SHIFT))
    return out


def write_dynamic(
    state: CanvasState,
    labels: np.ndarray,
    taxonomy: Taxonomy,
    frame_index: int,
    iou_threshold: float = 0.3,
    ttl_frames: int = 30,
) -> CanvasState:
    """Clear the viewport region of the dynamic layer and write dynamic labels."""
    _check_viewport_labels(state, labels)
    kinds = taxonomy.kinds(labels)
    region = state.dynamic_layer[state.viewport_slice()]
    region[:] = 0
    dyn = kinds == 2
    region[dyn] = labels[dyn]
    x0, y0, _, _ = state.viewport
    segs = dynamic_segments(labels, kinds, (x0, y0))
    state.tracks = associate_tracks(state.tracks, segs, frame_index, iou_threshold, ttl_frames,
                                    next_id=state.next_track_id)
    state.next_track_id = max([state.next_track_id - 1] + [t.track_id for t in state.tracks]) + 1
    return state


def colorize(labels: np.ndarray, palette: Mapping[int, tuple[int, int, int]]) -> np.ndarray:
    lut = np.zeros((MAX_CLASS + 1, 3), dtype=np.float64)
    for cid in range(1, MAX_CLASS + 1):
        lut[cid] = palette_color(palette, cid)
    return lut[labels >> CLASS_SHIFT]


def render_overlay(
    state: CanvasState,
    viewport_frame: np.ndarray,
    palette: Mapping[int, tuple[int, int, int]] = DEFAULT_PALETTE,
    alpha: float = 0.5,
    layers: tuple[str, ...] = (STATIC, DYNAMIC),
) -> np.ndarray:
    """Alpha-blend class colours over the gray viewport; dynamic drawn last."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    out = gray_to_rgb(viewport_frame).astype(np.float64)
    sl = state.viewport_slice()
    lab = np.zeros((state.viewport_h, state.viewport_w), dtype=np.uint16)
    if STATIC in layers:
        lab = state.static_layer[sl].copy()
    if DYNAMIC in layers:
        dyn = state.dynamic_layer[sl]
        lab[dyn != 0] = dyn[dyn != 0]
    on = lab != 0
    if on.any():
        color = colorize(lab, palette)
        out[on] = (1.0 - alpha) * out[on] + alpha * color[on]
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
