"""Shi-Tomasi corner detection and pyramidal Lucas-Kanade point tracking."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatch
from .imgproc import build_pyramid, sobel_gradients

STRUCTURE_WINDOW = 7


@dataclass(frozen=True)
class Corner:
    x: float
    y: float
    response: float


@dataclass(frozen=True)
class TrackResult:
    src: tuple[float, float]
    dst: tuple[float, float] | None
    tracked: bool
    residual: float


@dataclass(frozen=True)
class DetectParams:
    max_corners: int = 400
    quality_level: float = 0.01
    min_distance: float = 8.0
    use_edge_mask: bool = False
    grad_threshold: float = 100.0
    dilate_radius: int = 3


@dataclass(frozen=True)
class LKParams:
    levels: int = 3
    window: int = 21
    max_iters: int = 30
    epsilon: float = 0.01
    max_residual: float = 20.0


def _box_sum(img: np.ndarray, k: int) -> np.ndarray:
    """Sum over a centred k x k window with replicated borders."""
    r = k // 2
    p = np.pad(img.astype(np.float64), r, mode="edge")
    c = np.zeros((p.shape[0] + 1, p.shape[1] + 1))
    c[1:, 1:] = p.cumsum(0).cumsum(1)
    h, w = img.shape
    return c[k : k + h, k : k + w] - c[0:h, k : k + w] - c[k : k + h, 0:w] + c[0:h, 0:w]


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return mask.copy()
    k = 2 * radius + 1
    return _box_sum(mask.astype(np.float64), k) > 0.5


def edge_strength_mask(img: np.ndarray, grad_threshold: float, dilate_radius: int) -> np.ndarray:
    """Gradient-magnitude edge mask dilated by a ``(2r+1)`` square."""
    if grad_threshold <= 0 or dilate_radius < 0:
        raise ValueError("grad_threshold must be > 0 and dilate_radius >= 0")
    gx, gy = sobel_gradients(img)
    edges = np.hypot(gx, gy) > grad_threshold
    return _dilate(edges, dilate_radius)


def min_eigen_response(img: np.ndarray, window: int = STRUCTURE_WINDOW) -> np.ndarray:
    """Smallest eigenvalue of the windowed structure tensor at every pixel."""
    gx, gy = sobel_gradients(img)
    gx = gx.astype(np.float64) / 8.0
    gy = gy.astype(np.float64) / 8.0
    a = _box_sum(gx * gx, window)
    b = _box_sum(gx * gy, window)
    c = _box_sum(gy * gy, window)
    half_tr = 0.5 * (a + c)
    disc = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    return np.maximum(half_tr - disc, 0.0)


def select_corners(
    response: np.ndarray,
    max_corners: int,
    quality_level: float,
    min_distance: float,
    mask: np.ndarray | None = None,
) -> list[Corner]:
    """Greedy strongest-first selection with Euclidean suppression."""
    if max_corners < 1 or not (0 < quality_level <= 1) or min_distance < 0:
        raise ValueError("invalid corner selection parameters")
    peak = float(response.max()) if response.size else 0.0
    if peak <= 0.0:
        return []
    keep = response >= quality_level * peak
    if mask is not None:
        keep &= mask
    ys, xs = np.nonzero(keep)
    vals = response[ys, xs]
    # descending response; ties resolved by raster order for determinism
    order = np.lexsort((xs, ys, -vals))

    cell = max(min_distance, 1.0)
    grid: dict[tuple[int, int], list[tuple[float, float]]] = {}
    md2 = min_distance * min_distance
    out: list[Corner] = []
    for i in order:
        x, y = float(xs[i]), float(ys[i])
        gx, gy = int(x // cell), int(y // cell)
        ok = True
        if min_distance > 0:
            for cx in (gx - 1, gx, gx + 1):
                for cy in (gy - 1, gy, gy + 1):
                    for ax, ay in grid.get((cx, cy), ()):
                        if (ax - x) ** 2 + (ay - y) ** 2 < md2:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    break
        if not ok:
            continue
        grid.setdefault((gx, gy), []).append((x, y))
        out.append(Corner(x, y, float(vals[i])))
        if len(out) >= max_corners:
            break
    return out


def detect_corners(
    img: np.ndarray,
    max_corners: int = 400,
    quality_level: float = 0.01,
    min_distance: float = 8.0,
    mask: np.ndarray | None = None,
) -> list[Corner]:
    return select_corners(min_eigen_response(img), max_corners, quality_level, min_distance, mask)


def detect_with_params(img: np.ndarray, p: DetectParams) -> list[Corner]:
    mask = edge_strength_mask(img, p.grad_threshold, p.dilate_radius) if p.use_edge_mask else None
    return detect_corners(img, p.max_corners, p.quality_level, p.min_distance, mask)


# -- Lucas-Kanade -----------------------------------------------------------

# status codes
_OK = 0
_OUT_OF_BOUNDS = 1
_SINGULAR = 2
_RESIDUAL = 3


@njit(cache=True)
def _bilin(img, x, y):
    h, w = img.shape
    if x < 0.0:
        x = 0.0
    elif x > w - 1:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1:
        y = h - 1.0
    x0 = int(x)
    y0 = int(y)
    x1 = x0 + 1 if x0 < w - 1 else x0
    y1 = y0 + 1 if y0 < h - 1 else y0
    fx = x - x0
    fy = y - y0
    return (
        (1.0 - fx) * (1.0 - fy) * img[y0, x0]
        + fx * (1.0 - fy) * img[y0, x1]
        + (1.0 - fx) * fy * img[y1, x0]
        + fx * fy * img[y1, x1]
    )


@njit(cache=True)
def _window_inside(x, y, half, h, w):
    return x - half >= 0.0 and y - half >= 0.0 and x + half <= w - 1 and y + half <= h - 1


@njit(cache=True)
def _lk_template(prev, gxi, gyi, pts, half, strict, min_eig, tmpl, tx, ty, ginv, status):
    h, w = prev.shape
    n = pts.shape[0]
    side = 2 * half + 1
    for i in range(n):
        if status[i] != _OK:
            continue
        px = pts[i, 0]
        py = pts[i, 1]
        if strict and not _window_inside(px, py, half, h, w):
            status[i] = _OUT_OF_BOUNDS
            continue
        a = 0.0
        b = 0.0
        c = 0.0
        k = 0
        for dy in range(-half, half + 1):
            for dx in range(-half, half + 1):
                x = px + dx
                y = py + dy
                ix = _bilin(gxi, x, y)
                iy = _bilin(gyi, x, y)
                tmpl[i, k] = _bilin(prev, x, y)
                tx[i, k] = ix
                ty[i, k] = iy
                a += ix * ix
                b += ix * iy
                c += iy * iy
                k += 1
        ht = 0.5 * (a + c)
        ev = ht - math.sqrt(max(0.25 * (a - c) * (a - c) + b * b, 0.0))
        if ev < min_eig * side * side:
            status[i] = _SINGULAR
            continue
        det = a * c - b * b
        ginv[i, 0] = c / det
        ginv[i, 1] = -b / det
        ginv[i, 2] = a / det


@njit(cache=True, fastmath=True)
def _lk_iterate(nxt, pts, half, strict, tmpl, tx, ty, ginv, guess, max_iters, eps, status, flow):
    h, w = nxt.shape
    n = pts.shape[0]
    for i in range(n):
        if status[i] != _OK:
            continue
        px = pts[i, 0]
        py = pts[i, 1]
        gx = guess[i, 0]
        gy = guess[i, 1]
        dxs = 0.0
        dys = 0.0
        for _ in range(max_iters):
            cx = px + gx + dxs
            cy = py + gy + dys
            if strict and not _window_inside(cx, cy, half, h, w):
                status[i] = _OUT_OF_BOUNDS
                break
            bx = 0.0
            by = 0.0
            k = 0
            x0 = int(math.floor(cx))
            y0 = int(math.floor(cy))
            if x0 - half >= 0 and y0 - half >= 0 and x0 + half + 1 <= w - 1 and y0 + half + 1 <= h - 1:
                # integer window offsets share one set of bilinear weights
                fx = cx - x0
                fy = cy - y0
                w00 = (1.0 - fx) * (1.0 - fy)
                w01 = fx * (1.0 - fy)
                w10 = (1.0 - fx) * fy
                w11 = fx * fy
                for oy in range(-half, half + 1):
                    r0 = y0 + oy
                    for ox in range(-half, half + 1):
                        c0 = x0 + ox
                        v = (w00 * nxt[r0, c0] + w01 * nxt[r0, c0 + 1]
                             + w10 * nxt[r0 + 1, c0] + w11 * nxt[r0 + 1, c0 + 1])
                        e = tmpl[i, k] - v
                        bx += e * tx[i, k]
                        by += e * ty[i, k]
                        k += 1
            else:
                for oy in range(-half, half + 1):
                    for ox in range(-half, half + 1):
                        e = tmpl[i, k] - _bilin(nxt, cx + ox, cy + oy)
                        bx += e * tx[i, k]
                        by += e * ty[i, k]
                        k += 1
            ux = ginv[i, 0] * bx + ginv[i, 1] * by
            uy = ginv[i, 1] * bx + ginv[i, 2] * by
            dxs += ux
            dys += uy
            if ux * ux + uy * uy < eps * eps:
                break
        if strict and status[i] == _OK:
            if not _window_inside(px + gx + dxs, py + gy + dys, half, h, w):
                status[i] = _OUT_OF_BOUNDS
        flow[i, 0] = gx + dxs
        flow[i, 1] = gy + dys


@njit(cache=True)
def _lk_residual(nxt, pts, half, tmpl, flow, status, out):
    n = pts.shape[0]
    area = (2 * half + 1) * (2 * half + 1)
    for i in range(n):
        if status[i] != _OK:
            continue
        cx = pts[i, 0] + flow[i, 0]
        cy = pts[i, 1] + flow[i, 1]
        s = 0.0
        k = 0
        for oy in range(-half, half + 1):
            for ox in range(-half, half + 1):
                s += abs(tmpl[i, k] - _bilin(nxt, cx + ox, cy + oy))
                k += 1
        out[i] = s / area


def _level_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx, gy = sobel_gradients(img)
    return (gx / 8.0).astype(np.float64), (gy / 8.0).astype(np.float64)


class LKTemplate:
    """Per-level template patches for a fixed source image and point set.

    Tracking the same baseline corners into many frames only needs the
    template side computed once.
    """

    def __init__(self, prev: np.ndarray, points, levels: int = 3, window: int = 21):
        if window < 5 or window % 2 == 0:
            raise ValueError("window must be odd and >= 5")
        if levels < 1:
            raise ValueError("levels must be >= 1")
        self.shape = prev.shape
        self.levels = levels
        self.half = window // 2
        pts = np.array([(p.x, p.y) if isinstance(p, Corner) else tuple(p) for p in points],
                       dtype=np.float64).reshape(-1, 2)
        self.points = pts
        n = len(pts)
        area = window * window
        pyr = build_pyramid(prev, levels)
        self.status = np.zeros(n, dtype=np.int8)
        self._levels = []
        for lvl in range(levels - 1, -1, -1):
            img = pyr[lvl].astype(np.float64)
            gx, gy = _level_gradients(pyr[lvl])
            lp = np.ascontiguousarray(pts / (1 << lvl))
            tmpl = np.zeros((n, area))
            tx = np.zeros((n, area))
            ty = np.zeros((n, area))
            ginv = np.zeros((n, 3))
            _lk_template(img, gx, gy, lp, self.half, lvl == 0, 1e-4, tmpl, tx, ty, ginv, self.status)
            self._levels.append((lvl, lp, tmpl, tx, ty, ginv))

    def track(self, nxt: np.ndarray, max_iters: int = 30, epsilon: float = 0.01,
              max_residual: float = 20.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns ``(dst (n, 2), tracked (n,) bool, residual (n,))``."""
        if nxt.shape != self.shape:
            raise DimensionMismatch(f"{nxt.shape} vs {self.shape}")
        n = len(self.points)
        status = self.status.copy()
        pyr = build_pyramid(nxt, self.levels)
        guess = np.zeros((n, 2))
        flow = np.zeros((n, 2))
        for lvl, lp, tmpl, tx, ty, ginv in self._levels:
            if lvl != self.levels - 1:
                guess = 2.0 * flow
            flow = np.zeros((n, 2))
            _lk_iterate(pyr[lvl].astype(np.float64), lp, self.half, lvl == 0, tmpl, tx, ty,
                        ginv, guess, max_iters, epsilon, status, flow)
        residual = np.zeros(n)
        lp0, tmpl0 = self._levels[-1][1], self._levels[-1][2]
        _lk_residual(pyr[0].astype(np.float64), lp0, self.half, tmpl0, flow, status, residual)
        status[(status == _OK) & (residual > max_residual)] = _RESIDUAL
        tracked = status == _OK
        return self.points + flow, tracked, residual


def track_lk(
    prev: np.ndarray,
    nxt: np.ndarray,
    points,
    levels: int = 3,
    window: int = 21,
    max_iters: int = 30,
    epsilon: float = 0.01,
    max_residual: float = 20.0,
) -> list[TrackResult]:
    if prev.shape != nxt.shape:
        raise DimensionMismatch(f"{prev.shape} vs {nxt.shape}")
    tpl = LKTemplate(prev, points, levels, window)
    dst, ok, res = tpl.track(nxt, max_iters, epsilon, max_residual)
    return [
        TrackResult(
            src=(float(p[0]), float(p[1])),
            dst=(float(d[0]), float(d[1])) if t else None,
            tracked=bool(t),
            residual=float(r) if t else math.nan,
        )
        for p, d, t, r in zip(tpl.points, dst, ok, res)
    ]
