"""Result rows and the files a run leaves behind."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

HEADER = ("method", "realization", "round", "train_loss", "test_loss", "test_accuracy",
          "selected_count", "r_value", "max_gain")
TRACE_HEADER = ("outer_iter", "inner_iter", "aug_lagrangian", "residual_inf", "kappa", "r_value")


@dataclass(frozen=True)
class ResultRow:
    method: str
    realization: int
    round: int
    train_loss: float
    test_loss: float
    test_accuracy: float
    selected_count: int
    r_value: float
    max_gain: float

    @property
    def key(self) -> tuple:
        return (self.method, self.realization, self.round)


def fmt_float(x: float) -> str:
    """Nine significant digits; repr-style names for the non-finite values."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".9g")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return fmt_float(value)
    return str(value)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for row in sorted(rows, key=lambda r: r.key):
        writer.writerow([_fmt(v) for v in astuple(row)])
    return buf.getvalue()


def parse_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != HEADER:
        raise ValueError(f"unexpected header {header}")
    types = [f.type for f in fields(ResultRow)]
    conv = {"str": str, "int": int, "float": float}
    return [ResultRow(*(conv[t](v) for t, v in zip(types, rec))) for rec in reader]


def check_contiguous(rows) -> None:
    """Rounds must run 0..T-1 without gaps for every (method, realization)."""
    seen: dict[tuple, list[int]] = {}
    for r in rows:
        seen.setdefault((r.method, r.realization), []).append(r.round)
    for cell, rounds in seen.items():
        if sorted(rounds) != list(range(len(rounds))):
            raise ValueError(f"rounds of {cell} are not contiguous from 0")


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_results(rows, path, summary: dict | None = None, traces: dict | None = None) -> Path:
    """Write ``results.csv``, ``summary.json`` and ``traces/<method>_r<k>.csv``
    under the directory ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc}") from exc
    _write(out / "results.csv", rows_to_csv(rows))
    if summary is not None:
        _write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if traces:
        tdir = out / "traces"
        try:
            tdir.mkdir(exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create {tdir}: {exc}") from exc
        for (method, realization), trace in sorted(traces.items()):
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for rec in trace:
                writer.writerow([_fmt(rec[k]) for k in TRACE_HEADER])
            _write(tdir / f"{method}_r{realization}.csv", buf.getvalue())
    return out
