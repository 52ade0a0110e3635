"""Image primitives on numpy arrays.

Pixel kinds are carried by dtype:

* gray   -- ``uint8`` of shape ``(h, w)``
* color  -- ``uint8`` of shape ``(h, w, 3)``, RGB
* label  -- ``uint16`` of shape ``(h, w)``, 0 = empty
* mask   -- ``bool`` of shape ``(h, w)``
* float  -- ``float32`` of shape ``(h, w)``
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import DimensionMismatch, ImageTooSmall, OutOfBounds, TooManyLevels
from .motion_model import Affine, invert

_LUMA = np.array([0.299, 0.587, 0.114])


def to_gray(img: np.ndarray) -> np.ndarray:
    """BT.601 luma, rounded half-up and clamped to 8 bits."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) color image, got shape {img.shape}")
    luma = img.astype(np.float64) @ _LUMA
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def gray_to_rgb(img: np.ndarray) -> np.ndarray:
    return np.repeat(np.asarray(img, dtype=np.uint8)[:, :, None], 3, axis=2)


def sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel responses with replicated borders (unnormalised)."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    if h < 3 or w < 3:
        raise ImageTooSmall(f"sobel needs at least 3x3, got {w}x{h}")
    p = np.pad(img.astype(np.float32), 1, mode="edge")
    # p[1+dy : 1+dy+h, 1+dx : 1+dx+w] is the neighbour at offset (dx, dy)
    def nb(dx: int, dy: int) -> np.ndarray:
        return p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    gx = (nb(1, -1) + 2 * nb(1, 0) + nb(1, 1)) - (nb(-1, -1) + 2 * nb(-1, 0) + nb(-1, 1))
    gy = (nb(-1, 1) + 2 * nb(0, 1) + nb(1, 1)) - (nb(-1, -1) + 2 * nb(0, -1) + nb(1, -1))
    return gx.astype(np.float32), gy.astype(np.float32)


def downsample2(img: np.ndarray) -> np.ndarray:
    """2x2 box average, odd trailing row/column dropped, rounded half-up."""
    h2, w2 = img.shape[0] // 2, img.shape[1] // 2
    a = img[: 2 * h2, : 2 * w2].astype(np.uint32)
    s = a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2]
    return ((s + 2) // 4).astype(np.uint8)


def build_pyramid(img: np.ndarray, levels: int, min_size: int = 8) -> list[np.ndarray]:
    """Level 0 is ``img``; each further level halves both dimensions."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h, w = img.shape[:2]
    ch, cw = h, w
    for _ in range(levels - 1):
        ch, cw = ch // 2, cw // 2
    if ch < min_size or cw < min_size:
        raise TooManyLevels(
            f"{levels} levels on {w}x{h} gives a {cw}x{ch} coarsest level (< {min_size})"
        )
    pyr = [np.asarray(img, dtype=np.uint8)]
    for _ in range(levels - 1):
        pyr.append(downsample2(pyr[-1]))
    return pyr


def sample_bilinear(img: np.ndarray, x: float, y: float) -> float:
    h, w = img.shape[:2]
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        raise OutOfBounds(f"({x}, {y}) outside [0, {w - 1}] x [0, {h - 1}]")
    x0, y0 = int(math.floor(x)), int(math.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    v = (
        (1 - fx) * (1 - fy) * float(img[y0, x0])
        + fx * (1 - fy) * float(img[y0, x1])
        + (1 - fx) * fy * float(img[y1, x0])
        + fx * fy * float(img[y1, x1])
    )
    return v


@njit(cache=True)
def _warp_bilinear_u8(src, m, out_h, out_w, out):
    h, w = src.shape
    for oy in range(out_h):
        for ox in range(out_w):
            sx = m[0] * ox + m[1] * oy + m[2]
            sy = m[3] * ox + m[4] * oy + m[5]
            # same inside test as the nearest-neighbour path so warped
            # validity masks line up exactly with zero-filled gray pixels
            if sx < -0.5 or sy < -0.5 or sx >= w - 0.5 or sy >= h - 0.5:
                out[oy, ox] = 0
                continue
            if sx < 0.0:
                sx = 0.0
            if sy < 0.0:
                sy = 0.0
            if sx > w - 1:
                sx = w - 1.0
            if sy > h - 1:
                sy = h - 1.0
            x0 = int(sx)
            y0 = int(sy)
            x1 = min(x0 + 1, w - 1)
            y1 = min(y0 + 1, h - 1)
            fx = sx - x0
            fy = sy - y0
            v = (
                (1.0 - fx) * (1.0 - fy) * src[y0, x0]
                + fx * (1.0 - fy) * src[y0, x1]
                + (1.0 - fx) * fy * src[y1, x0]
                + fx * fy * src[y1, x1]
            )
            iv = int(v + 0.5)
            out[oy, ox] = 255 if iv > 255 else (0 if iv < 0 else iv)


@njit(cache=True)
def _warp_nearest(src, m, out_h, out_w, out):
    h, w = src.shape
    for oy in range(out_h):
        for ox in range(out_w):
            sx = m[0] * ox + m[1] * oy + m[2]
            sy = m[3] * ox + m[4] * oy + m[5]
            ix = int(np.floor(sx + 0.5))
            iy = int(np.floor(sy + 0.5))
            if ix < 0 or iy < 0 or ix > w - 1 or iy > h - 1:
                continue
            out[oy, ox] = src[iy, ix]


def _inverse_coeffs(m: Affine) -> np.ndarray:
    return np.array(invert(m).as_tuple(), dtype=np.float64)


def warp_affine(src: np.ndarray, m: Affine, out_w: int, out_h: int) -> np.ndarray:
    """Inverse-mapping warp: ``out[p] = src[m^-1 p]``.

    Gray images (uint8, 2-D or 3-channel) are sampled bilinearly; labels and
    masks use nearest neighbour. A pixel is outside the source when its
    nearest source pixel does not exist; those get 0 / False. Bilinear
    samples within half a pixel of the border replicate the edge.
    """
    coeffs = _inverse_coeffs(m)
    src = np.asarray(src)
    if src.dtype == np.bool_:
        out = np.zeros((out_h, out_w), dtype=np.uint8)
        _warp_nearest(np.ascontiguousarray(src.view(np.uint8)), coeffs, out_h, out_w, out)
        return out.astype(bool)
    if src.dtype == np.uint16:
        out = np.zeros((out_h, out_w), dtype=np.uint16)
        _warp_nearest(np.ascontiguousarray(src), coeffs, out_h, out_w, out)
        return out
    if src.dtype == np.uint8:
        if src.ndim == 3:
            return np.stack(
                [warp_affine(src[:, :, c], m, out_w, out_h) for c in range(src.shape[2])], axis=2
            )
        out = np.zeros((out_h, out_w), dtype=np.uint8)
        _warp_bilinear_u8(np.ascontiguousarray(src), coeffs, out_h, out_w, out)
        return out
    raise TypeError(f"unsupported pixel dtype {src.dtype}")


def resize_nearest(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img
    ys = np.minimum((np.arange(out_h) + 0.5) * h / out_h, h - 1).astype(np.intp)
    xs = np.minimum((np.arange(out_w) + 0.5) * w / out_w, w - 1).astype(np.intp)
    return img[ys[:, None], xs[None, :]]


def abs_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    return np.abs(a.astype(np.float32) - b.astype(np.float32))


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    d = a.astype(np.float64) - b.astype(np.float64)
    if mask is not None:
        d = d[mask]
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)
