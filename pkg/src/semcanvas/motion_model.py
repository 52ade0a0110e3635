"""Affine transform algebra and robust estimation from point correspondences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateConfiguration,
    EmptyInput,
    EstimationFailed,
    SingularTransform,
)

DET_EPS = 1e-12


@dataclass(frozen=True)
class Affine:
    """Row-major 2x3 affine matrix ``[[a11 a12 a13], [a21 a22 a23]]``."""

    a11: float = 1.0
    a12: float = 0.0
    a13: float = 0.0
    a21: float = 0.0
    a22: float = 1.0
    a23: float = 0.0

    @classmethod
    def identity(cls) -> Affine:
        return cls()

    @classmethod
    def translation(cls, tx: float, ty: float) -> Affine:
        return cls(1.0, 0.0, float(tx), 0.0, 1.0, float(ty))

    @classmethod
    def scaling(cls, sx: float, sy: float | None = None) -> Affine:
        sy = sx if sy is None else sy
        return cls(float(sx), 0.0, 0.0, 0.0, float(sy), 0.0)

    @classmethod
    def rotation(cls, degrees: float, cx: float = 0.0, cy: float = 0.0) -> Affine:
        """Counter-clockwise rotation (in a y-up sense) about ``(cx, cy)``."""
        th = math.radians(degrees)
        c, s = math.cos(th), math.sin(th)
        rot = cls(c, -s, 0.0, s, c, 0.0)
        return cls.translation(cx, cy) @ rot @ cls.translation(-cx, -cy)

    @classmethod
    def from_matrix(cls, m) -> Affine:
        m = np.asarray(m, dtype=np.float64)
        if m.shape not in ((2, 3), (3, 3)):
            raise ValueError(f"expected 2x3 or 3x3 matrix, got {m.shape}")
        return cls(*(float(v) for v in m[:2].ravel()))

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.a11, self.a12, self.a13, self.a21, self.a22, self.a23)

    def matrix(self) -> np.ndarray:
        """3x3 homogeneous embedding."""
        return np.array(
            [[self.a11, self.a12, self.a13], [self.a21, self.a22, self.a23], [0.0, 0.0, 1.0]]
        )

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.as_tuple())

    def apply(self, x: float, y: float) -> tuple[float, float]:
        return (
            self.a11 * x + self.a12 * y + self.a13,
            self.a21 * x + self.a22 * y + self.a23,
        )

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        x, y = pts[..., 0], pts[..., 1]
        return np.stack(
            [self.a11 * x + self.a12 * y + self.a13, self.a21 * x + self.a22 * y + self.a23],
            axis=-1,
        )

    def __matmul__(self, inner: Affine) -> Affine:
        return compose(self, inner)

    def inverse(self) -> Affine:
        return invert(self)

    def max_abs_diff(self, other: Affine) -> float:
        return max(abs(a - b) for a, b in zip(self.as_tuple(), other.as_tuple()))


IDENTITY = Affine()


def apply(t: Affine, x: float, y: float) -> tuple[float, float]:
    return t.apply(x, y)


def compose(outer: Affine, inner: Affine) -> Affine:
    """Transform that applies ``inner`` first, then ``outer``."""
    o, i = outer, inner
    return Affine(
        o.a11 * i.a11 + o.a12 * i.a21,
        o.a11 * i.a12 + o.a12 * i.a22,
        o.a11 * i.a13 + o.a12 * i.a23 + o.a13,
        o.a21 * i.a11 + o.a22 * i.a21,
        o.a21 * i.a12 + o.a22 * i.a22,
        o.a21 * i.a13 + o.a22 * i.a23 + o.a23,
    )


def invert(t: Affine) -> Affine:
    det = t.det
    if not abs(det) > DET_EPS:
        raise SingularTransform(f"affine linear part is singular (det={det!r})")
    b11 = t.a22 / det
    b12 = -t.a12 / det
    b21 = -t.a21 / det
    b22 = t.a11 / det
    return Affine(
        b11, b12, -(b11 * t.a13 + b12 * t.a23),
        b21, b22, -(b21 * t.a13 + b22 * t.a23),
    )


@dataclass(frozen=True)
class EstimateReport:
    transform: Affine
    inlier_count: int
    total_count: int
    inlier_ratio: float
    median_reproj_error: float


def _as_pairs(pairs) -> tuple[np.ndarray, np.ndarray]:
    """Normalise correspondences to two ``(n, 2)`` float arrays."""
    if isinstance(pairs, tuple) and len(pairs) == 2 and np.ndim(pairs[0]) == 2:
        src, dst = pairs
    else:
        arr = np.asarray(pairs, dtype=np.float64)
        if arr.size == 0:
            return np.zeros((0, 2)), np.zeros((0, 2))
        arr = arr.reshape(-1, 2, 2)
        src, dst = arr[:, 0], arr[:, 1]
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if src.shape != dst.shape:
        raise ValueError("src and dst point counts differ")
    return src, dst


def _solve_pivoted(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting; ``rhs`` may have several columns."""
    n = a.shape[0]
    m = np.concatenate([a.astype(np.float64), rhs.astype(np.float64)], axis=1)
    pivots = []
    for col in range(n):
        p = col + int(np.argmax(np.abs(m[col:, col])))
        if p != col:
            m[[col, p]] = m[[p, col]]
        pivots.append(abs(m[col, col]))
        if m[col, col] == 0.0:
            raise DegenerateConfiguration("normal equations are singular")
        m[col + 1 :] -= np.outer(m[col + 1 :, col] / m[col, col], m[col])
    largest = max(pivots)
    if min(pivots) < 1e-9 * largest:
        raise DegenerateConfiguration("normal equations are near-singular")
    x = np.zeros((n, rhs.shape[1]))
    for row in range(n - 1, -1, -1):
        x[row] = (m[row, n:] - m[row, row + 1 : n] @ x[row + 1 :]) / m[row, row]
    return x


def fit_affine_lsq(pairs) -> Affine:
    """Least-squares affine fit ``dst ~ A @ src`` via the normal equations.

    Source points are centred before forming the 3x3 normal matrix so the
    pivot test measures geometry rather than coordinate magnitude.
    """
    src, dst = _as_pairs(pairs)
    if len(src) < 3:
        raise DegenerateConfiguration(f"need at least 3 pairs, got {len(src)}")
    centroid = src.mean(axis=0)
    design = np.column_stack([src - centroid, np.ones(len(src))])
    normal = design.T @ design
    rhs = design.T @ dst
    sol = _solve_pivoted(normal, rhs)  # columns: x-row coefficients, y-row coefficients
    a11, a12, c1 = sol[:, 0]
    a21, a22, c2 = sol[:, 1]
    # undo centring: dst = L (src - c) + k  =>  offset = k - L c
    a13 = c1 - (a11 * centroid[0] + a12 * centroid[1])
    a23 = c2 - (a21 * centroid[0] + a22 * centroid[1])
    return Affine(float(a11), float(a12), float(a13), float(a21), float(a22), float(a23))


def reprojection_errors(t: Affine, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    return np.hypot(*(t.apply_points(src) - dst).T)


def _median(values: np.ndarray) -> float:
    s = np.sort(np.asarray(values, dtype=np.float64))
    n = len(s)
    mid = n // 2
    if n % 2:
        return float(s[mid])
    return float((s[mid - 1] + s[mid]) / 2.0)


def median_reprojection_error(t: Affine, pairs) -> float:
    src, dst = _as_pairs(pairs)
    if len(src) == 0:
        raise EmptyInput("median_reprojection_error needs at least one pair")
    return _median(reprojection_errors(t, src, dst))


def _exact_fit3(s: np.ndarray, d: np.ndarray) -> Affine | None:
    """Affine through three correspondences, or None when the sources are collinear."""
    area2 = (s[1, 0] - s[0, 0]) * (s[2, 1] - s[0, 1]) - (s[2, 0] - s[0, 0]) * (s[1, 1] - s[0, 1])
    if abs(area2) < 1e-6:
        return None
    design = np.column_stack([s, np.ones(3)])
    sol = np.linalg.solve(design, d)
    return Affine(sol[0, 0], sol[1, 0], sol[2, 0], sol[0, 1], sol[1, 1], sol[2, 1])


def estimate_affine_ransac(
    pairs,
    inlier_threshold: float = 3.0,
    max_iters: int = 2000,
    seed: int = 0,
    confidence: float = 0.999,
) -> EstimateReport:
    """RANSAC over minimal 3-point samples followed by a least-squares refit.

    Pairs are canonically sorted before sampling so the result does not
    depend on input order. Ties on inlier count are broken by the lower
    median reprojection error over the candidate's inliers.
    """
    src, dst = _as_pairs(pairs)
    n = len(src)
    if n < 3:
        raise EstimationFailed(f"need at least 3 pairs, got {n}")
    if inlier_threshold <= 0 or max_iters < 1:
        raise ValueError("inlier_threshold must be > 0 and max_iters >= 1")

    order = np.lexsort((dst[:, 1], dst[:, 0], src[:, 1], src[:, 0]))
    src, dst = src[order], dst[order]

    rng = np.random.default_rng(seed)
    best_mask = None
    best_count = 0
    best_med = math.inf
    needed = max_iters
    it = 0
    while it < min(max_iters, needed):
        it += 1
        idx = rng.choice(n, size=3, replace=False)
        cand = _exact_fit3(src[idx], dst[idx])
        if cand is None:
            continue
        err = reprojection_errors(cand, src, dst)
        mask = err <= inlier_threshold
        count = int(mask.sum())
        if count < best_count or count < 3:
            continue
        med = _median(err[mask])
        if count > best_count or med < best_med:
            best_mask, best_count, best_med = mask, count, med
            w = best_count / n
            if w >= 1.0:
                needed = 0
            else:
                denom = math.log(max(1.0 - w**3, 1e-300))
                needed = int(math.ceil(math.log(1.0 - confidence) / denom)) if denom < 0 else max_iters

    if best_mask is None:
        raise EstimationFailed("no RANSAC sample produced 3 or more inliers")

    try:
        final = fit_affine_lsq((src[best_mask], dst[best_mask]))
    except DegenerateConfiguration as exc:
        raise EstimationFailed(str(exc)) from exc
    err = reprojection_errors(final, src, dst)
    inliers = int((err <= inlier_threshold).sum())
    return EstimateReport(
        transform=final,
        inlier_count=inliers,
        total_count=n,
        inlier_ratio=inliers / n,
        median_reproj_error=_median(err),
    )
