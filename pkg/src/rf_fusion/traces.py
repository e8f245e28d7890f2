"""JSON-lines trace files and CSV ground truth.

Every line of a trace is one record, either
``{"type": "rss", "t": ..., "link": [i, j], "channel": c, "dbm": r}`` or
``{"type": "cir", "t": ..., "energies": [...]}``. Floats are written with 9
significant digits, so writing a parsed canonical line reproduces it byte for
byte.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .rti import RssSample
from .uwb import CirFrame

SIG_DIGITS = 9


class TraceError(ValueError):
    """A trace line that does not parse or breaks time ordering."""


def format_float(v: float) -> str:
    v = float(v)
    if not math.isfinite(v):
        return "null"
    s = format(v, f".{SIG_DIGITS}g")
    return "0" if s == "-0" else s


def dumps(obj) -> str:
    """Compact JSON with canonical float formatting."""
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def rss_record(s: RssSample) -> dict:
    return {"type": "rss", "t": s.t, "link": list(s.link), "channel": s.channel, "dbm": s.rss}


def cir_record(f: CirFrame) -> dict:
    return {"type": "cir", "t": f.t, "energies": f.energies}


def parse_record(line: str):
    """One trace line to an ``RssSample`` or ``CirFrame``."""
    try:
        d = json.loads(line)
        kind = d["type"]
        if kind == "rss":
            i, j = d["link"]
            return RssSample(float(d["t"]), (int(i), int(j)), int(d["channel"]), float(d["dbm"]))
        if kind == "cir":
            return CirFrame(float(d["t"]), np.asarray(d["energies"], dtype=float))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise TraceError(f"bad trace record: {exc}") from exc
    raise TraceError(f"unknown record type {kind!r}")


def serialize_record(rec) -> str:
    if isinstance(rec, RssSample):
        return dumps(rss_record(rec))
    if isinstance(rec, CirFrame):
        return dumps(cir_record(rec))
    raise TypeError(f"not a trace record: {type(rec).__name__}")


def write_jsonl(path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w") as fh:
        for r in records:
            fh.write(dumps(r) + "\n")
            n += 1
    return n


def write_trace(path, records: Iterable) -> int:
    n = 0
    with open(path, "w") as fh:
        for r in records:
            fh.write(serialize_record(r) + "\n")
            n += 1
    return n


def read_trace(path) -> tuple[list[RssSample], list[CirFrame]]:
    """Read one trace file; records of each kind must be time-ordered."""
    rss, cir = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = parse_record(line)
            except TraceError as exc:
                raise TraceError(f"{path}:{lineno}: {exc}") from None
            out = rss if isinstance(rec, RssSample) else cir
            if out and rec.t < out[-1].t:
                raise TraceError(f"{path}:{lineno}: timestamp goes backwards")
            out.append(rec)
    return rss, cir


def read_traces(paths) -> tuple[list[RssSample], list[CirFrame]]:
    rss, cir = [], []
    for p in paths:
        r, c = read_trace(p)
        rss.extend(r)
        cir.extend(c)
    # files are read whole; a stable sort keeps per-file order on equal stamps
    rss.sort(key=lambda s: s.t)
    cir.sort(key=lambda f: f.t)
    return rss, cir


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        try:
            return [json.loads(line) for line in fh if line.strip()]
        except json.JSONDecodeError as exc:
            raise TraceError(f"{path}: {exc}") from exc


TRUTH_COLUMNS = ("t", "x", "y", "k_star")


def write_truth(path, t, xy, k_star) -> None:
    """Ground truth CSV; absent-target rows have empty x/y and k_star 0."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_COLUMNS)
        for ti, (x, y), k in zip(t, xy, k_star):
            absent = math.isnan(x)
            w.writerow([format_float(ti), "" if absent else format_float(x),
                        "" if absent else format_float(y), int(k)])


def read_truth(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t, xy, ks = [], [], []
    try:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                t.append(float(row["t"]))
                xy.append((float(row["x"]) if row["x"] else math.nan,
                           float(row["y"]) if row["y"] else math.nan))
                ks.append(int(row["k_star"]))
    except (KeyError, ValueError) as exc:
        raise TraceError(f"{path}: bad truth file: {exc}") from exc
    return np.array(t), np.array(xy, dtype=float).reshape(-1, 2), np.array(ks, dtype=int)


def write_csv(path, rows: list[dict]) -> None:
    """Flat CSV export of JSON-lines style records (for plotting)."""
    if not rows:
        Path(path).write_text("")
        return
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow(["" if r[c] is None else format_float(r[c]) if isinstance(r[c], float) else r[c]
                        for c in cols])
