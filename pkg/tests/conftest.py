from __future__ import annotations

import numpy as np
import pytest

from semcanvas.synth import fractal_noise


def smooth_texture(h: int, w: int, seed: int = 0) -> np.ndarray:
    """Trackable value-noise texture, uint8."""
    rng = np.random.default_rng(seed)
    n = fractal_noise(h, w, (16, 8, 4), rng)
    n = (n - n.min()) / (n.max() - n.min())
    return np.floor(20 + 215 * n + 0.5).astype(np.uint8)


def shifted(img: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Content moved by (+dx, +dy): out(x, y) = img(x - dx, y - dy), bilinear."""
    from semcanvas.imgproc import warp_affine
    from semcanvas.motion_model import Affine

    return warp_affine(img, Affine.translation(dx, dy), img.shape[1], img.shape[0])


@pytest.fixture
def texture() -> np.ndarray:
    return smooth_texture(160, 200, seed=3)


def ransac_trial(seed: int, n_in: int = 70, n_out: int = 30, sigma: float = 0.3):
    """70% noisy inliers + 30% uniform outliers under a known affine (frame-sized coords)."""
    from semcanvas.motion_model import Affine

    rng = np.random.default_rng(seed)
    truth = Affine.translation(4.0, -3.0) @ Affine.rotation(3.0, 320, 180) @ Affine.scaling(1.02)
    src = rng.uniform((0, 0), (640, 360), size=(n_in + n_out, 2))
    dst = truth.apply_points(src)
    dst[:n_in] += rng.normal(0.0, sigma, size=(n_in, 2))
    dst[n_in:] = rng.uniform((0, 0), (640, 360), size=(n_out, 2))
    return truth, src, dst


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
