"""Run statistics, NAIVE-vs-GATED comparison, and report emission."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import EmptyInput


@dataclass(frozen=True)
class RunSummary:
    frames: int
    seg_calls: int
    call_rate: float
    mean_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    eff_fps: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RunSummary:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class Comparison:
    naive: RunSummary
    gated: RunSummary
    speedup_mean: float
    speedup_calls: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "naive": self.naive.to_dict(),
            "gated": self.gated.to_dict(),
            "speedup_mean": self.speedup_mean,
            "speedup_calls": self.speedup_calls,
        }


def percentile(values: Sequence[float], q: float) -> float:
    """Linear interpolation between closest ranks on an ``n - 1`` basis."""
    if len(values) == 0:
        raise EmptyInput("percentile of an empty sequence")
    if not 0 <= q <= 100:
        raise ValueError("q must be in [0, 100]")
    s = sorted(float(v) for v in values)
    rank = q / 100.0 * (len(s) - 1)
    lo = math.floor(rank)
    hi = min(lo + 1, len(s) - 1)
    frac = rank - lo
    return s[lo] + (s[hi] - s[lo]) * frac


def _field(rec: Any, *names: str):
    for n in names:
        if isinstance(rec, Mapping):
            if n in rec:
                return rec[n]
        elif hasattr(rec, n):
            return getattr(rec, n)
    raise KeyError(names[0])


def summarize(log: Iterable[Any]) -> RunSummary:
    """Summary over timing records (dataclasses or parsed JSON dicts)."""
    times: list[float] = []
    calls = 0
    for rec in log:
        times.append(float(_field(rec, "t_total_ms", "t_total")))
        calls += int(_field(rec, "seg_submitted"))
    if not times:
        raise EmptyInput("no timing records")
    n = len(times)
    mean = math.fsum(times) / n
    return RunSummary(
        frames=n,
        seg_calls=calls,
        call_rate=calls / n,
        mean_ms=mean,
        p50_ms=percentile(times, 50),
        p95_ms=percentile(times, 95),
        p99_ms=percentile(times, 99),
        eff_fps=1000.0 / mean if mean > 0 else math.inf,
    )


def compare(naive: RunSummary, gated: RunSummary) -> Comparison:
    if gated.mean_ms <= 0 or gated.seg_calls <= 0:
        raise ZeroDivisionError("gated mean time and call count must be positive")
    return Comparison(
        naive=naive,
        gated=gated,
        speedup_mean=naive.mean_ms / gated.mean_ms,
        speedup_calls=naive.seg_calls / gated.seg_calls,
    )


TABLE_COLUMNS = ("Scenario", "Frames", "SegCalls", "CallRate", "Mean(ms)", "Median", "P95", "P99", "Eff.FPS")


def table_row(name: str, s: RunSummary) -> list[str]:
    return [
        name,
        str(s.frames),
        str(s.seg_calls),
        f"{s.call_rate:.3f}",
        f"{s.mean_ms:.1f}",
        f"{s.p50_ms:.1f}",
        f"{s.p95_ms:.1f}",
        f"{s.p99_ms:.1f}",
        f"{s.eff_fps:.2f}",
    ]


def format_table(rows: Sequence[tuple[str, RunSummary]]) -> str:
    cells = [list(TABLE_COLUMNS)] + [table_row(n, s) for n, s in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for k, r in enumerate(cells):
        lines.append("  ".join(c.ljust(widths[i]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(r)))
        if k == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines)


def format_comparison(c: Comparison) -> str:
    return "\n".join([
        format_table([("NAIVE", c.naive), ("GATED", c.gated)]),
        "",
        f"speedup_calls: {c.speedup_calls:.2f}",
        f"speedup_mean:  {c.speedup_mean:.2f}",
    ])


def read_log(path: str | Path) -> tuple[list[dict[str, Any]], dict[str, Any] | None]:
    """Frame records and the trailing summary line (if any) of a JSONL run log."""
    records, summary = [], None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if obj.get("summary") is True:
                summary = obj
            else:
                records.append(obj)
    return records, summary


def export_timeseries_csv(records: Iterable[Any], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["frame_index", "t_total_ms", "seg_submitted"])
        for r in records:
            w.writerow([_field(r, "frame_index"), _field(r, "t_total_ms", "t_total"),
                        _field(r, "seg_submitted")])
