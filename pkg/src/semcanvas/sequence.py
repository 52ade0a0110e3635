"""Frame sequences on disk.

Layout::

    index.json            {"width", "height", "frame_count", "color", ["class_ids"]}
    frame_000000.ppm      P6 when color, otherwise frame_000000.pgm (P5)
    truth_labels/         optional 16-bit PGMs of packed labels, same numbering
    truth.json            optional list of per-frame frame->baseline transforms (six floats)
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import SourceError, UnknownFrame
from .imgproc import to_gray
from .motion_model import Affine
from .pnm import read_pnm, write_pgm, write_ppm
from .synth import SyntheticScene


def frame_name(t: int, color: bool) -> str:
    return f"frame_{t:06d}.{'ppm' if color else 'pgm'}"


def export_scene(scene: SyntheticScene, out_dir: str | Path, color: bool = True) -> Path:
    """Write every frame, truth label map and truth transform of ``scene``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "truth_labels").mkdir(exist_ok=True)
    transforms = []
    for t in range(scene.frame_count):
        if color:
            write_ppm(out / frame_name(t, True), scene.color_frame(t))
        else:
            write_pgm(out / frame_name(t, False), scene.gray_frame(t))
        write_pgm(out / "truth_labels" / f"frame_{t:06d}.pgm", scene.truth_labels(t))
        transforms.append(list(scene.truth_transform(t).as_tuple()))
    (out / "truth.json").write_text(json.dumps(transforms) + "\n", encoding="utf-8")
    index = {
        "width": scene.spec.viewport_w,
        "height": scene.spec.viewport_h,
        "frame_count": scene.frame_count,
        "color": color,
        "class_ids": scene.class_ids(),
    }
    # index last: its presence marks a complete export
    (out / "index.json").write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    return out


class DiskScene:
    """Read side of the layout; also serves truth labels to the mock backend."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        try:
            index = json.loads((self.root / "index.json").read_text(encoding="utf-8"))
            self.width = int(index["width"])
            self.height = int(index["height"])
            self.frame_count = int(index["frame_count"])
            self.color = bool(index.get("color", False))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise SourceError(f"{self.root}: unreadable index.json ({exc})") from exc
        if self.frame_count < 1 or self.width < 1 or self.height < 1:
            raise SourceError(f"{self.root}: index.json declares an empty sequence")
        self._class_ids = index.get("class_ids")
        missing = [t for t in range(self.frame_count) if not (self.root / frame_name(t, self.color)).is_file()]
        if missing:
            raise SourceError(f"{self.root}: missing frame files, first is {frame_name(missing[0], self.color)}")
        self._truth: list[Affine] | None = None
        tpath = self.root / "truth.json"
        if tpath.is_file():
            try:
                rows = json.loads(tpath.read_text(encoding="utf-8"))
                self._truth = [Affine(*map(float, r)) for r in rows]
            except (ValueError, TypeError) as exc:
                raise SourceError(f"{tpath}: {exc}") from exc
            if len(self._truth) != self.frame_count:
                raise SourceError(f"{tpath}: {len(self._truth)} transforms for {self.frame_count} frames")

    def _check(self, t: int) -> None:
        if not 0 <= t < self.frame_count:
            raise UnknownFrame(f"frame {t} outside 0..{self.frame_count - 1}")

    def raw_frame(self, t: int) -> np.ndarray:
        self._check(t)
        path = self.root / frame_name(t, self.color)
        try:
            img = read_pnm(path)
        except (OSError, ValueError) as exc:
            raise SourceError(str(exc)) from exc
        expected = (self.height, self.width, 3) if self.color else (self.height, self.width)
        if img.shape != expected or img.dtype != np.uint8:
            raise SourceError(f"{path}: shape {img.shape} {img.dtype}, expected {expected} uint8")
        return img

    def gray_frame(self, t: int) -> np.ndarray:
        img = self.raw_frame(t)
        return to_gray(img) if self.color else img

    def frames(self) -> Iterator[np.ndarray]:
        for t in range(self.frame_count):
            yield self.raw_frame(t)

    @property
    def has_truth(self) -> bool:
        return (self.root / "truth_labels").is_dir()

    def truth_labels(self, t: int) -> np.ndarray:
        self._check(t)
        path = self.root / "truth_labels" / f"frame_{t:06d}.pgm"
        try:
            labels = read_pnm(path)
        except (OSError, ValueError) as exc:
            raise SourceError(f"no truth labels for frame {t}: {exc}") from exc
        return labels.astype(np.uint16)

    def truth_transform(self, t: int) -> Affine:
        self._check(t)
        if self._truth is None:
            raise SourceError(f"{self.root}: no truth.json")
        return self._truth[t]

    def class_ids(self) -> list[int]:
        return list(self._class_ids or [])
