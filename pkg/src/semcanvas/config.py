"""YAML configuration file: one section per parameter block, unknown keys rejected.

Example::

    pipeline: {mode: gated, target_fps: 30}
    gate: {tau_s: 2.0, tau_a: 0.01, min_spacing: 10}
    taxonomy: {1: static, 10: dynamic}
    palette: {1: [128, 64, 128]}
    backend: {kind: mock, mock_latency_ms: 200}

Every key is optional; omitted keys keep the dataclass defaults.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .canvas import DEFAULT_PALETTE, Taxonomy
from .errors import ConfigError
from .features import DetectParams, LKParams
from .gating import GateConfig
from .runtime import PipelineConfig
from .stabilizer import RansacParams, TrustConfig
from .synth import SYNTH_TAXONOMY

CONFIG_ENV = "SEMCANVAS_CONFIG"


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "mock"
    mock_latency_ms: float = 0.0
    label_noise: float = 0.0
    seed: int = 0
    command: str = ""
    args: tuple[str, ...] = ()
    timeout_ms: float = 5000.0

    def __post_init__(self):
        if self.kind not in ("mock", "external"):
            raise ValueError(f"backend kind must be mock|external, got {self.kind!r}")
        if self.kind == "external" and not self.command:
            raise ValueError("external backend needs a command")


@dataclass(frozen=True)
class Config:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    backend: BackendSpec = field(default_factory=BackendSpec)


_PIPELINE_KEYS = ("mode", "target_fps", "buffer_capacity", "prebuffer", "realtime", "lockstep", "debug_every")
_CANVAS_KEYS = ("iou_threshold", "ttl_frames", "overlay_alpha")
_BLOCKS = {"gate": GateConfig, "trust": TrustConfig, "detect": DetectParams, "lk": LKParams,
           "ransac": RansacParams}
SECTIONS = ("pipeline", "canvas", *_BLOCKS, "taxonomy", "palette", "backend")


def _coerce(section: str, key: str, value: Any, default: Any) -> Any:
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{where}: expected a list of strings, got {value!r}")
        return tuple(value)
    return value


def _section(doc: Mapping, name: str, keys: tuple[str, ...], defaults: Any) -> dict[str, Any]:
    raw = doc.get(name) or {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"section {name!r} must be a mapping")
    unknown = sorted(str(k) for k in raw if k not in keys)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")
    return {k: _coerce(name, k, v, getattr(defaults, k)) for k, v in raw.items()}


def _block(doc: Mapping, name: str, cls: type) -> Any:
    defaults = cls()
    keys = tuple(f.name for f in dataclasses.fields(cls) if not f.name.startswith("_"))
    try:
        return cls(**_section(doc, name, keys, defaults))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{name}: {exc}") from exc


def _taxonomy(doc: Mapping) -> Taxonomy:
    raw = doc.get("taxonomy")
    if raw is None:
        return SYNTH_TAXONOMY
    if not isinstance(raw, Mapping):
        raise ConfigError("taxonomy must map class ids to static|dynamic")
    try:
        return Taxonomy({int(k): v for k, v in raw.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"taxonomy: {exc}") from exc


def _palette(doc: Mapping) -> dict[int, tuple[int, int, int]]:
    raw = doc.get("palette")
    pal = dict(DEFAULT_PALETTE)
    if raw is None:
        return pal
    if not isinstance(raw, Mapping):
        raise ConfigError("palette must map class ids to [r, g, b]")
    for k, v in raw.items():
        ok = isinstance(v, list) and len(v) == 3 and all(isinstance(c, int) and 0 <= c <= 255 for c in v)
        if not ok:
            raise ConfigError(f"palette {k}: expected [r, g, b] with 0..255 integers, got {v!r}")
        try:
            pal[int(k)] = tuple(v)
        except ValueError as exc:
            raise ConfigError(f"palette key {k!r} is not a class id") from exc
    return pal


def config_from_dict(doc: Mapping | None) -> Config:
    doc = doc or {}
    if not isinstance(doc, Mapping):
        raise ConfigError("config document must be a mapping")
    unknown = sorted(str(k) for k in doc if k not in SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    base = PipelineConfig()
    top = _section(doc, "pipeline", _PIPELINE_KEYS, base)
    top.update(_section(doc, "canvas", _CANVAS_KEYS, base))
    blocks = {name: _block(doc, name, cls) for name, cls in _BLOCKS.items()}
    try:
        pipeline = PipelineConfig(**top, **blocks, taxonomy=_taxonomy(doc), palette=_palette(doc))
    except ValueError as exc:
        raise ConfigError(f"pipeline: {exc}") from exc
    return Config(pipeline, _block(doc, "backend", BackendSpec))


def load_config(path: str | Path | None = None) -> Config:
    """Read a config file; ``None`` falls back to $SEMCANVAS_CONFIG, then defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return Config()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc)


def config_to_dict(cfg: Config) -> dict[str, Any]:
    p = cfg.pipeline
    doc: dict[str, Any] = {
        "pipeline": {k: getattr(p, k) for k in _PIPELINE_KEYS},
        "canvas": {k: getattr(p, k) for k in _CANVAS_KEYS},
    }
    for name in _BLOCKS:
        doc[name] = dataclasses.asdict(getattr(p, name))
    doc["taxonomy"] = dict(p.taxonomy.mapping)
    doc["palette"] = {k: list(v) for k, v in p.palette.items()}
    b = dataclasses.asdict(cfg.backend)
    b["args"] = list(b["args"])
    doc["backend"] = b
    return doc
