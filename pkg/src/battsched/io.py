"""CSV ingestion and export for prices, loads, schedules and traces.

Floats are written with ``repr`` so a file read back gives the same
numbers bit for bit.
"""

from __future__ import annotations

import csv
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import CurrentSchedule, PowerSchedule, PriceSeries, TimeGrid, Trace, ValidationError


def _parse_time(text: str, where: str) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError:
        raise ValidationError(f"{where}: bad ISO-8601 timestamp {text!r}") from None


def _read_series(path: str | Path, value_column: str) -> tuple[TimeGrid, np.ndarray]:
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header != ["timestamp", value_column]:
            raise ValidationError(f"{path}:1: expected header 'timestamp,{value_column}', got {','.join(header)!r}")
        times, values = [], []
        seen = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            where = f"{path}:{lineno}"
            if len(row) != 2:
                raise ValidationError(f"{where}: expected 2 columns, got {len(row)}")
            t = _parse_time(row[0], where)
            if t in seen:
                raise ValidationError(f"{where}: duplicate timestamp {row[0].strip()} (first on line {seen[t]})")
            seen[t] = lineno
            try:
                v = float(row[1])
            except ValueError:
                raise ValidationError(f"{where}: non-numeric {value_column} {row[1]!r}") from None
            if not np.isfinite(v):
                raise ValidationError(f"{where}: {value_column} must be finite")
            times.append((t, lineno))
            values.append(v)
    if not values:
        raise ValidationError(f"{path}: no data rows")
    if len(times) == 1:
        raise ValidationError(f"{path}: need at least two rows to infer the interval length")
    tau = (times[1][0] - times[0][0]).total_seconds()
    if tau <= 0:
        raise ValidationError(f"{path}:{times[1][1]}: timestamps must increase")
    for (a, _), (b, line) in zip(times, times[1:]):
        if (b - a).total_seconds() != tau:
            raise ValidationError(f"{path}:{line}: non-uniform spacing ({(b - a).total_seconds():g} s, expected {tau:g} s)")
    return TimeGrid(times[0][0], tau, len(values)), np.array(values)


def ingest_prices(path: str | Path) -> PriceSeries:
    """Read a ``timestamp,price`` CSV ($/MWh) into a price series on an inferred grid."""
    grid, prices = _read_series(path, "price")
    return PriceSeries(grid, prices)


def ingest_load(path: str | Path, grid: TimeGrid | None = None) -> np.ndarray:
    """Read a ``timestamp,load_mw`` CSV; when ``grid`` is given it must match."""
    g, load = _read_series(path, "load_mw")
    if grid is not None and (g.t0 != grid.t0 or g.tau != grid.tau or g.steps != grid.steps):
        raise ValidationError(f"{path}: load timestamps do not match the price grid")
    return load


def write_schedule_csv(path: str | Path, schedule) -> None:
    times = [t.isoformat() for t in schedule.grid.times]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if isinstance(schedule, PowerSchedule):
            w.writerow(["timestamp", "ch_mw", "dis_mw"])
            for t, c, d in zip(times, schedule.ch, schedule.dis):
                w.writerow([t, repr(float(c)), repr(float(d))])
        else:
            w.writerow(["timestamp", "current_a"])
            for t, i in zip(times, schedule.current):
                w.writerow([t, repr(float(i))])


def read_schedule_csv(path: str | Path):
    """Power schedule (``timestamp,ch_mw,dis_mw``) or current schedule (``timestamp,current_a``)."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None
    if len(rows) < 2:
        raise ValidationError(f"{path}: need a header and at least one row")
    header = [h.strip() for h in rows[0]]
    if header not in (["timestamp", "ch_mw", "dis_mw"], ["timestamp", "current_a"]):
        raise ValidationError(f"{path}:1: unrecognised schedule header {','.join(header)!r}")
    times, cols = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValidationError(f"{path}:{lineno}: expected {len(header)} columns")
        times.append(_parse_time(row[0], f"{path}:{lineno}"))
        try:
            cols.append([float(c) for c in row[1:]])
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: non-numeric value") from None
    tau = (times[1] - times[0]).total_seconds() if len(times) > 1 else 3600.0
    for a, b in zip(times, times[1:]):
        if (b - a).total_seconds() != tau:
            raise ValidationError(f"{path}: non-uniform spacing")
    grid = TimeGrid(times[0], tau, len(times))
    arr = np.array(cols)
    if header[1] == "ch_mw":
        return PowerSchedule(grid, arr[:, 0], arr[:, 1])
    return CurrentSchedule(grid, arr[:, 0])


TRACE_COLUMNS = ["step", "timestamp", "price", "soc_fraction", "voltage_v", "current_a",
                 "ch_mw", "dis_mw", "pack_power_mw", "throughput_mwh", "capacity_loss"]


def write_trace_csv(path: str | Path, trace: Trace, prices: Sequence[float] | None = None,
                    load: Sequence[float] | None = None) -> None:
    """One row per record; row 0 is the initial state (no price)."""
    cols = list(TRACE_COLUMNS)
    if load is not None:
        cols += ["load_mw", "net_load_mw"]
    g = trace.grid
    # record k is the state at the end of interval k-1
    stamps = [(g.t0 + timedelta(seconds=k * g.tau)).isoformat() for k in range(g.steps + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k, rec in enumerate(trace.records):
            price = "" if k == 0 or prices is None else repr(float(prices[k - 1]))
            row = [k, stamps[k], price, repr(float(rec.soc_fraction)), repr(float(rec.voltage)),
                   repr(float(rec.current)), repr(float(rec.ch)), repr(float(rec.dis)),
                   repr(float(rec.pack_power_mw)), repr(float(rec.throughput_mwh)),
                   repr(float(rec.capacity_loss))]
            if load is not None:
                if k == 0:
                    row += ["", ""]
                else:
                    row += [repr(float(load[k - 1])), repr(float(load[k - 1] - rec.pack_power_mw))]
            w.writerow(row)


def read_trace_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of a trace CSV as float arrays (blank cells become nan)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        fields = reader.fieldnames or []
    out = {}
    for name in fields:
        if name == "timestamp":
            out[name] = np.array([r[name] for r in rows])
            continue
        out[name] = np.array([float(r[name]) if r[name] != "" else np.nan for r in rows])
    return out
