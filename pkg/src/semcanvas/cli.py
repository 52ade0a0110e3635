"""Command-line entry point.

Exit codes: 0 ok, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .canvas import label_class
from .config import CONFIG_ENV, BackendSpec, Config, load_config
from .errors import ConfigError, SemCanvasError
from .metrics import RunSummary, compare, format_comparison, format_table, read_log, summarize
from .runtime import GATED, NAIVE, run_pipeline
from .segmentation import ExternalBackend, MockBackend
from .sequence import DiskScene, export_scene
from .synth import PRESETS, SyntheticScene

log = logging.getLogger("semcanvas")

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="semcanvas", description="Semantic canvases with motion-gated segmentation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic scene on disk")
    s.add_argument("-o", "--out", required=True, type=Path)
    s.add_argument("--preset", choices=sorted(PRESETS), default="benchmark")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--width", type=int)
    s.add_argument("--height", type=int)
    s.add_argument("--frames", type=int)
    s.add_argument("--gray", action="store_true", help="store P5 gray frames instead of P6")

    def add_pipeline_flags(q, with_mode=True):
        q.add_argument("scene", type=Path)
        if with_mode:
            q.add_argument("--mode", choices=(NAIVE, GATED), help="overrides pipeline.mode")
        q.add_argument("--config", type=Path, help=f"YAML config (default: ${CONFIG_ENV})")
        q.add_argument("--backend", choices=("mock", "external"))
        q.add_argument("--mock-latency-ms", type=float)
        q.add_argument("--label-noise", type=float)
        q.add_argument("--backend-seed", type=int)
        q.add_argument("--backend-cmd", help="external backend executable")
        q.add_argument("--backend-arg", action="append", default=[], help="repeatable")
        q.add_argument("--backend-timeout-ms", type=float)
        q.add_argument("--lockstep", action="store_true", help="collect each result on the next frame")
        q.add_argument("--realtime", action="store_true", help="pace the source at target_fps")

    r = sub.add_parser("run", help="run the pipeline over a scene directory")
    add_pipeline_flags(r)
    r.add_argument("--log", type=Path, help="JSONL run log")
    r.add_argument("--debug-tiles", type=Path, help="directory for 6-tile debug PPMs")
    r.add_argument("--debug-every", type=int)
    r.add_argument("--tau-s", type=float)
    r.add_argument("--tau-a", type=float)
    r.add_argument("--min-spacing", type=int)

    c = sub.add_parser("compare", help="compare a NAIVE and a GATED run log")
    c.add_argument("naive_log", type=Path)
    c.add_argument("gated_log", type=Path)
    c.add_argument("--out", type=Path, help="JSON comparison report")
    c.add_argument("--timeseries", type=Path, help="directory for per-run CSV time series")

    w = sub.add_parser("sweep", help="GATED runs over a threshold grid")
    add_pipeline_flags(w, with_mode=False)
    w.add_argument("--tau-s", type=_float_list, required=True)
    w.add_argument("--tau-a", type=_float_list, required=True)
    w.add_argument("--min-spacing", type=_int_list, required=True)
    w.add_argument("--out", type=Path, required=True)
    return p


def _resolve_config(args) -> Config:
    cfg = load_config(args.config)
    p, b = cfg.pipeline, cfg.backend
    pipe_over = {}
    if getattr(args, "mode", None):
        pipe_over["mode"] = args.mode
    if args.lockstep:
        pipe_over["lockstep"] = True
    if args.realtime:
        pipe_over["realtime"] = True
    if getattr(args, "debug_every", None) is not None:
        pipe_over["debug_every"] = args.debug_every
    gate_over = {k: v for k, v in (("tau_s", getattr(args, "tau_s", None)),
                                   ("tau_a", getattr(args, "tau_a", None)),
                                   ("min_spacing", getattr(args, "min_spacing", None)))
                 if v is not None and not isinstance(v, list)}
    back_over = {k: v for k, v in (("kind", args.backend), ("mock_latency_ms", args.mock_latency_ms),
                                   ("label_noise", args.label_noise), ("seed", args.backend_seed),
                                   ("command", args.backend_cmd), ("timeout_ms", args.backend_timeout_ms))
                 if v is not None}
    if args.backend_arg:
        back_over["args"] = tuple(args.backend_arg)
    try:
        gate = dataclasses.replace(p.gate, **gate_over)
        p = dataclasses.replace(p, gate=gate, **pipe_over)
        b = dataclasses.replace(b, **back_over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Config(p, b)


def _make_backend(spec: BackendSpec, scene: DiskScene):
    if spec.kind == "mock":
        if not scene.has_truth:
            raise SemCanvasError(f"{scene.root}: mock backend needs truth_labels/")
        return MockBackend(scene, spec.mock_latency_ms, spec.label_noise, spec.seed)
    return ExternalBackend(spec.command, spec.args, spec.timeout_ms)


def cmd_synth(args) -> int:
    factory = PRESETS[args.preset]
    kw = {"seed": args.seed}
    for flag, key in (("width", "viewport_w"), ("height", "viewport_h"), ("frames", "frame_count")):
        v = getattr(args, flag)
        if v is not None:
            if v < 1:
                raise UsageError(f"--{flag} must be >= 1")
            kw[key] = v
    scene = SyntheticScene(factory(**kw))
    export_scene(scene, args.out, color=not args.gray)
    print(f"wrote {scene.frame_count} frames to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    scene = DiskScene(args.scene)
    backend = _make_backend(cfg.backend, scene)
    sink = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        run = run_pipeline(cfg.pipeline, scene.frames(), backend, log_sink=sink, debug_dir=args.debug_tiles)
    finally:
        if sink is not None:
            sink.close()
    print(format_table([(cfg.pipeline.mode.upper(), run.summary)]))
    if run.failures:
        print(f"{run.failures} segmentation failure(s) logged", file=sys.stderr)
    return EXIT_OK


def _load_summary(path: Path) -> tuple[RunSummary, list[dict]]:
    records, summary = read_log(path)
    if summary is not None:
        return RunSummary.from_dict(summary), records
    return summarize(records), records


def cmd_compare(args) -> int:
    naive, naive_recs = _load_summary(args.naive_log)
    gated, gated_recs = _load_summary(args.gated_log)
    comp = compare(naive, gated)
    print(format_comparison(comp))
    if args.out:
        args.out.write_text(json.dumps(comp.to_dict(), indent=2) + "\n", encoding="utf-8")
    if args.timeseries:
        from .metrics import export_timeseries_csv

        args.timeseries.mkdir(parents=True, exist_ok=True)
        export_timeseries_csv(naive_recs, args.timeseries / "naive.csv")
        export_timeseries_csv(gated_recs, args.timeseries / "gated.csv")
    return EXIT_OK


def mover_onsets(scene: DiskScene, taxonomy) -> list[int]:
    """Frames where a dynamic instance appears in the truth labels (absent on the previous frame)."""
    dynamic = np.array([taxonomy.mapping.get(c) == "dynamic" for c in range(64)])
    onsets, prev = [], set()
    for t in range(scene.frame_count):
        labels = scene.truth_labels(t)
        vals = np.unique(labels)
        vals = vals[vals != 0]
        cur = {int(v) for v in vals if dynamic[int(label_class(v))]}
        if cur - prev:
            onsets.append(t)
        prev = cur
    return onsets


def staleness(onsets: Sequence[int], submits: Sequence[int], frame_count: int) -> float:
    """Mean frames from each onset to the first submit at or after it.

    An onset never followed by a submit counts as the frames left in the run.
    """
    if not onsets:
        return math.nan
    subs = sorted(submits)
    gaps = []
    for k in onsets:
        nxt = next((s for s in subs if s >= k), None)
        gaps.append((nxt if nxt is not None else frame_count) - k)
    return sum(gaps) / len(gaps)


SWEEP_COLUMNS = ("tau_s", "tau_a", "min_spacing", "call_rate", "mean_ms", "staleness")


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    for v in args.tau_s:
        if v <= 0:
            raise UsageError("--tau-s values must be > 0")
    for v in args.tau_a:
        if not 0 < v < 1:
            raise UsageError("--tau-a values must be in (0, 1)")
    for v in args.min_spacing:
        if v < 0:
            raise UsageError("--min-spacing values must be >= 0")
    scene = DiskScene(args.scene)
    onsets = mover_onsets(scene, cfg.pipeline.taxonomy)
    rows = []
    for tau_s, tau_a, spacing in itertools.product(sorted(args.tau_s), sorted(args.tau_a), sorted(args.min_spacing)):
        gate = dataclasses.replace(cfg.pipeline.gate, tau_s=tau_s, tau_a=tau_a, min_spacing=spacing)
        pipe = dataclasses.replace(cfg.pipeline, mode=GATED, gate=gate)
        run = run_pipeline(pipe, scene.frames(), _make_backend(cfg.backend, scene))
        submits = [r.frame_index for r in run.records if r.seg_submitted]
        rows.append((tau_s, tau_a, spacing, run.summary.call_rate, run.summary.mean_ms,
                     staleness(onsets, submits, scene.frame_count)))
        log.info("tau_s=%g tau_a=%g spacing=%d -> %d calls", tau_s, tau_a, spacing, len(submits))
    with open(args.out, "w", newline="", encoding="utf-8") as f:
        out = csv.writer(f)
        out.writerow(SWEEP_COLUMNS)
        out.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"semcanvas {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SemCanvasError, OSError, ValueError, ZeroDivisionError) as exc:
        print(f"semcanvas {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
