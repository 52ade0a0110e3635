"""Deterministic synthetic scenes with ground-truth motion and labels.

The world is rendered at twice the viewport size. Frame ``t`` is the world
seen through camera transform ``G_t``, which maps frame pixel coordinates
to baseline (frame 0) coordinates; ``G_0`` is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .canvas import DYNAMIC, STATIC, Taxonomy, encode_label
from .imgproc import to_gray, warp_affine
from .motion_model import IDENTITY, Affine, compose, invert


@dataclass(frozen=True)
class Band:
    """Static class region: world rows from the previous band's edge down to ``bottom``."""

    class_id: int
    bottom: float  # fraction of world height
    base: float
    tint: tuple[float, float, float]
    wave_amp: float = 0.0  # px
    wave_period: float = 200.0  # px


DEFAULT_BANDS = (
    Band(3, 0.42, 175.0, (0.85, 0.95, 1.10), wave_amp=12.0, wave_period=260.0),   # sky
    Band(2, 0.60, 120.0, (1.05, 0.95, 0.90), wave_amp=18.0, wave_period=150.0),   # structure
    Band(1, 1.00, 85.0, (1.00, 1.00, 1.00)),                                       # ground
)


@dataclass(frozen=True)
class Background:
    octave_cells: tuple[int, ...] = (32, 16, 8)
    amplitude: float = 130.0
    bands: tuple[Band, ...] = DEFAULT_BANDS


@dataclass(frozen=True)
class MoverSpec:
    class_id: int
    shape: str  # "rect" | "disk"
    size: tuple[int, int]  # (w, h); a disk uses w as its diameter
    trajectory: tuple[tuple[float, float], ...]  # world-space centre per active frame
    active_range: tuple[int, int]  # inclusive
    base: float = 220.0

    def __post_init__(self):
        first, last = self.active_range
        if len(self.trajectory) != last - first + 1:
            raise ValueError("trajectory must cover the active range")
        if self.shape not in ("rect", "disk"):
            raise ValueError(f"unknown mover shape {self.shape!r}")

    def active(self, t: int) -> bool:
        return self.active_range[0] <= t <= self.active_range[1]


@dataclass(frozen=True)
class SceneSpec:
    viewport_w: int
    viewport_h: int
    frame_count: int
    seed: int
    camera_path: tuple[Affine, ...]
    movers: tuple[MoverSpec, ...] = ()
    background: Background = field(default_factory=Background)

    def __post_init__(self):
        if len(self.camera_path) != self.frame_count:
            raise ValueError("camera_path length must equal frame_count")
        if self.frame_count and self.camera_path[0].max_abs_diff(IDENTITY) > 0:
            raise ValueError("camera_path[0] must be the identity")


SYNTH_TAXONOMY = Taxonomy({1: STATIC, 2: STATIC, 3: STATIC, 10: DYNAMIC, 11: DYNAMIC})


def value_noise(h: int, w: int, cell: int, rng: np.random.Generator) -> np.ndarray:
    """Smoothstep-interpolated lattice noise in [0, 1]."""
    gh, gw = h // cell + 2, w // cell + 2
    grid = rng.random((gh, gw))
    ys = np.arange(h) / cell
    xs = np.arange(w) / cell
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = ys - y0
    fx = xs - x0
    fy = fy * fy * (3 - 2 * fy)
    fx = fx * fx * (3 - 2 * fx)
    a = grid[y0][:, x0]
    b = grid[y0][:, x0 + 1]
    c = grid[y0 + 1][:, x0]
    d = grid[y0 + 1][:, x0 + 1]
    top = a + (b - a) * fx[None, :]
    bot = c + (d - c) * fx[None, :]
    return top + (bot - top) * fy[:, None]


def fractal_noise(h: int, w: int, cells, rng: np.random.Generator) -> np.ndarray:
    out = np.zeros((h, w))
    amp, total = 1.0, 0.0
    for cell in cells:
        out += amp * value_noise(h, w, cell, rng)
        total += amp
        amp *= 0.5
    return out / total


class SyntheticScene:
    """Renders frames, truth labels, and truth transforms for a ``SceneSpec``."""

    def __init__(self, spec: SceneSpec):
        self.spec = spec
        self.world_w = 2 * spec.viewport_w
        self.world_h = 2 * spec.viewport_h
        self.origin = Affine.translation(spec.viewport_w // 2, spec.viewport_h // 2)
        self._world_color, self._world_labels = self._render_world()
        self._mover_patches = [self._mover_patch(i, m) for i, m in enumerate(spec.movers)]

    @property
    def frame_count(self) -> int:
        return self.spec.frame_count

    @property
    def taxonomy(self) -> Taxonomy:
        return SYNTH_TAXONOMY

    def class_ids(self) -> list[int]:
        ids = {b.class_id for b in self.spec.background.bands} | {m.class_id for m in self.spec.movers}
        return sorted(ids)

    def _render_world(self) -> tuple[np.ndarray, np.ndarray]:
        bg = self.spec.background
        h, w = self.world_h, self.world_w
        rng = np.random.default_rng(self.spec.seed)
        tex = fractal_noise(h, w, bg.octave_cells, rng) - 0.5
        rows = np.arange(h)[:, None].astype(float)
        cols = np.arange(w)[None, :].astype(float)
        color = np.zeros((h, w, 3))
        labels = np.zeros((h, w), dtype=np.uint16)
        upper = np.full((1, w), -np.inf)
        for band in bg.bands:
            edge = band.bottom * h + band.wave_amp * np.sin(2 * math.pi * cols / band.wave_period)
            region = (rows >= upper) & (rows < edge) if band.bottom < 1.0 else rows >= upper
            gray = band.base + bg.amplitude * tex
            for c in range(3):
                color[..., c] = np.where(region, gray * band.tint[c], color[..., c])
            labels[region] = encode_label(band.class_id, 1)
            upper = edge
        return np.clip(np.floor(color + 0.5), 0, 255).astype(np.uint8), labels

    def _mover_patch(self, index: int, m: MoverSpec) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng([self.spec.seed, 1000 + index])
        pw, ph = m.size
        tex = fractal_noise(ph, pw, (8, 4), rng) - 0.5
        gray = np.clip(np.floor(m.base + 200.0 * tex + 0.5), 0, 255)
        if m.shape == "disk":
            yy, xx = np.mgrid[0:ph, 0:pw]
            r = pw / 2.0
            inside = (xx + 0.5 - r) ** 2 + (yy + 0.5 - ph / 2.0) ** 2 <= r * r
        else:
            inside = np.ones((ph, pw), dtype=bool)
        return np.repeat(gray[:, :, None], 3, axis=2).astype(np.uint8), inside

    def world(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """World color image and labels at time ``t`` with active movers composited."""
        active = [(i, m) for i, m in enumerate(self.spec.movers) if m.active(t)]
        if not active:
            return self._world_color, self._world_labels
        color = self._world_color.copy()
        labels = self._world_labels.copy()
        for i, m in active:
            patch, inside = self._mover_patches[i]
            ph, pw = inside.shape
            cx, cy = m.trajectory[t - m.active_range[0]]
            x0 = int(math.floor(cx - pw / 2.0 + 0.5))
            y0 = int(math.floor(cy - ph / 2.0 + 0.5))
            # clip to world
            sx0, sy0 = max(0, -x0), max(0, -y0)
            ex, ey = min(pw, self.world_w - x0), min(ph, self.world_h - y0)
            if ex <= sx0 or ey <= sy0:
                continue
            sub_in = inside[sy0:ey, sx0:ex]
            dst = (slice(y0 + sy0, y0 + ey), slice(x0 + sx0, x0 + ex))
            color[dst][sub_in] = patch[sy0:ey, sx0:ex][sub_in]
            labels[dst][sub_in] = encode_label(m.class_id, i + 1)
        return color, labels

    def _camera_warp(self, t: int) -> Affine:
        # frame pixel p samples world at origin . G_t . p
        return invert(compose(self.origin, self.spec.camera_path[t]))

    def _check(self, t: int) -> None:
        if not 0 <= t < self.spec.frame_count:
            raise IndexError(f"frame {t} outside 0..{self.spec.frame_count - 1}")

    def color_frame(self, t: int) -> np.ndarray:
        self._check(t)
        color, _ = self.world(t)
        return warp_affine(color, self._camera_warp(t), self.spec.viewport_w, self.spec.viewport_h)

    def gray_frame(self, t: int) -> np.ndarray:
        return to_gray(self.color_frame(t))

    def truth_labels(self, t: int) -> np.ndarray:
        self._check(t)
        _, labels = self.world(t)
        return warp_affine(labels, self._camera_warp(t), self.spec.viewport_w, self.spec.viewport_h)

    def truth_transform(self, t: int) -> Affine:
        self._check(t)
        return self.spec.camera_path[t]

    def render_frame(self, t: int):
        """``(gray, color, truth_labels, truth_transform)`` for frame ``t``."""
        color = self.color_frame(t)
        return to_gray(color), color, self.truth_labels(t), self.truth_transform(t)

    def gray_frames(self):
        for t in range(self.frame_count):
            yield self.gray_frame(t)


def render_frame(scene: SceneSpec | SyntheticScene, t: int):
    if isinstance(scene, SceneSpec):
        scene = SyntheticScene(scene)
    return scene.render_frame(t)


def shake_transform(tx: float, ty: float, degrees: float, w: int, h: int) -> Affine:
    """Rotation about the viewport centre followed by a translation."""
    return Affine.translation(tx, ty) @ Affine.rotation(degrees, w / 2.0, h / 2.0)


def _smooth_jitter(rng: np.random.Generator, n: int, step: float, decay: float = 0.9) -> np.ndarray:
    out = np.zeros(n)
    for i in range(1, n):
        out[i] = decay * out[i - 1] + rng.normal(0.0, step)
    return out


def benchmark_camera_path(n: int, w: int, h: int, rng: np.random.Generator,
                          max_shift: float = 6.0, max_rot: float = 1.0) -> tuple[Affine, ...]:
    t = np.arange(n, dtype=float)
    tx = 3.5 * np.sin(2 * math.pi * t / 90.0) + _smooth_jitter(rng, n, 0.35)
    ty = 2.5 * np.sin(2 * math.pi * t / 70.0) + _smooth_jitter(rng, n, 0.35)
    rot = 0.6 * np.sin(2 * math.pi * t / 110.0) + _smooth_jitter(rng, n, 0.05)
    norm = np.hypot(tx, ty)
    scale = np.where(norm > max_shift, max_shift / np.maximum(norm, 1e-12), 1.0)
    tx, ty = tx * scale, ty * scale
    rot = np.clip(rot, -max_rot, max_rot)
    path = [IDENTITY]
    path += [shake_transform(tx[i], ty[i], rot[i], w, h) for i in range(1, n)]
    return tuple(path)


def _linear_track(start: tuple[float, float], velocity: tuple[float, float], n: int):
    return tuple((start[0] + velocity[0] * k, start[1] + velocity[1] * k) for k in range(n))


def benchmark_scene(seed: int = 7, viewport_w: int = 640, viewport_h: int = 360,
                    frame_count: int = 600) -> SceneSpec:
    """Mostly static shaky-camera scene with two movers active for 60 frames each.

    Mover windows start at 1/6 and ~1/2 of the clip and are separated by at
    least 150 mover-free frames at the default length.
    """
    rng = np.random.default_rng(seed)
    path = benchmark_camera_path(frame_count, viewport_w, viewport_h, rng)
    ox, oy = viewport_w // 2, viewport_h // 2
    window = 60
    a0 = frame_count // 6
    b0 = a0 + window + 150
    movers = (
        MoverSpec(10, "rect", (90, 170), _linear_track((ox + 60, oy + 0.62 * viewport_h), (5.0, 0.0), window),
                  (a0, a0 + window - 1), base=225.0),
        MoverSpec(11, "rect", (200, 100), _linear_track((ox + viewport_w - 100, oy + 0.8 * viewport_h), (-6.0, 0.0), window),
                  (b0, b0 + window - 1), base=35.0),
    )
    return SceneSpec(viewport_w, viewport_h, frame_count, seed, path, movers)


def static_scene(seed: int = 0, viewport_w: int = 160, viewport_h: int = 120,
                 frame_count: int = 30, shake: bool = False) -> SceneSpec:
    """No movers; either a fixed camera or the benchmark shake."""
    if shake:
        path = benchmark_camera_path(frame_count, viewport_w, viewport_h, np.random.default_rng(seed))
    else:
        path = (IDENTITY,) * frame_count
    return SceneSpec(viewport_w, viewport_h, frame_count, seed, path)


def panning_scene(seed: int = 0, viewport_w: int = 160, viewport_h: int = 120, frame_count: int = 20,
                  step: tuple[float, float] = (1.0, 0.5), rotation_step: float = 0.0) -> SceneSpec:
    """Camera drifts by ``step`` px (and ``rotation_step`` degrees) per frame."""
    path = tuple(
        shake_transform(step[0] * t, step[1] * t, rotation_step * t, viewport_w, viewport_h)
        if t else IDENTITY
        for t in range(frame_count)
    )
    return SceneSpec(viewport_w, viewport_h, frame_count, seed, path)


def mover_scene(seed: int = 0, viewport_w: int = 160, viewport_h: int = 120, frame_count: int = 20,
                enter: int = 5, size: tuple[int, int] = (24, 40), class_id: int = 10) -> SceneSpec:
    """Fixed camera with one rectangle mover entering at frame ``enter``."""
    ox, oy = viewport_w // 2, viewport_h // 2
    n = frame_count - enter
    traj = _linear_track((ox + 30, oy + viewport_h * 0.6), (2.0, 0.0), n)
    mover = MoverSpec(class_id, "rect", size, traj, (enter, frame_count - 1))
    return SceneSpec(viewport_w, viewport_h, frame_count, seed, (IDENTITY,) * frame_count, (mover,))


PRESETS = {
    "benchmark": benchmark_scene,
    "static": static_scene,
    "panning": panning_scene,
    "mover": mover_scene,
}
