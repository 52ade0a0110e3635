"""Baseline-anchored semantic canvases for shaky video with motion-gated segmentation."""

from __future__ import annotations

from .motion_model import Affine
from .runtime import GATED, NAIVE, PipelineConfig, run_pipeline
from .synth import SyntheticScene, benchmark_scene

__all__ = ["Affine", "GATED", "NAIVE", "PipelineConfig", "SyntheticScene", "benchmark_scene", "run_pipeline"]
__version__ = "0.1.0"
