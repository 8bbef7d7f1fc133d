"""Trace rows, budgets and the CSV format shared by all algorithms.

CSV columns, in order::

    algorithm,run_id,iteration,elapsed_s,f_value,wolfe_gap,active_set_size,
    restart,epoch,lmo_calls,foo_calls

Floats are written with ``repr`` (shortest string that round-trips), so
parsing a written file gives back the exact same values.  Counter columns are
cumulative per run.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Iterator, TextIO

COLUMNS = (
    "algorithm",
    "run_id",
    "iteration",
    "elapsed_s",
    "f_value",
    "wolfe_gap",
    "active_set_size",
    "restart",
    "epoch",
    "lmo_calls",
    "foo_calls",
)


@dataclass(frozen=True)
class RunRecord:
    algorithm: str
    run_id: str
    iteration: int
    elapsed_s: float
    f_value: float
    wolfe_gap: float
    active_set_size: int
    restart: int
    epoch: int
    lmo_calls: int
    foo_calls: int

    def to_row(self) -> list[str]:
        out = []
        for v in astuple(self):
            out.append(repr(float(v)) if isinstance(v, float) else str(v))
        return out

    @classmethod
    def from_row(cls, row) -> "RunRecord":
        if len(row) != len(COLUMNS):
            raise ValueError(f"expected {len(COLUMNS)} fields, got {len(row)}")
        vals = []
        for f, raw in zip(fields(cls), row):
            if f.type in ("int", int):
                vals.append(int(raw))
            elif f.type in ("float", float):
                vals.append(float(raw))
            else:
                vals.append(raw)
        return cls(*vals)


def write_records(records: Iterable[RunRecord], fh: TextIO, header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(COLUMNS)
    for r in records:
        w.writerow(r.to_row())


def records_to_csv(records: Iterable[RunRecord]) -> str:
    buf = io.StringIO()
    write_records(records, buf)
    return buf.getvalue()


def read_records(fh: TextIO) -> list[RunRecord]:
    """Parse a trace CSV; raises ``ValueError`` on a malformed file."""
    rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("empty file")
    if tuple(rows[0]) != COLUMNS:
        raise ValueError("unexpected header")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            out.append(RunRecord.from_row(row))
        except ValueError as exc:
            raise ValueError(f"line {i}: {exc}") from exc
    return out


def read_records_path(path: str | Path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        return read_records(fh)


@dataclass
class Budget:
    """Hard caps on iterations and wall-clock time; ``None`` means no cap."""

    max_iters: int | None = 10_000
    max_seconds: float | None = None

    def start(self) -> "BudgetClock":
        return BudgetClock(self)


class BudgetClock:
    def __init__(self, budget: Budget):
        self.budget = budget
        self.t0 = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def exhausted(self, iterations: int) -> bool:
        b = self.budget
        if b.max_iters is not None and iterations >= b.max_iters:
            return True
        return b.max_seconds is not None and self.elapsed() >= b.max_seconds


class TraceRecorder:
    """Accumulates :class:`RunRecord` rows for one run."""

    def __init__(self, algorithm: str, run_id: str, clock: BudgetClock | None = None):
        self.algorithm = algorithm
        self.run_id = run_id
        self.clock = clock
        self.rows: list[RunRecord] = []

    def add(
        self,
        iteration: int,
        f_value: float,
        wolfe_gap: float,
        active_set_size: int,
        lmo_calls: int,
        foo_calls: int,
        restart: bool = False,
        epoch: int = 0,
    ) -> RunRecord:
        elapsed = self.clock.elapsed() if self.clock is not None else 0.0
        if self.rows and elapsed < self.rows[-1].elapsed_s:
            elapsed = self.rows[-1].elapsed_s
        rec = RunRecord(
            self.algorithm,
            self.run_id,
            int(iteration),
            float(elapsed),
            float(f_value),
            float(wolfe_gap),
            int(active_set_size),
            int(bool(restart)),
            int(epoch),
            int(lmo_calls),
            int(foo_calls),
        )
        self.rows.append(rec)
        return rec

    def __iter__(self) -> Iterator[RunRecord]:
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

