"""T0 bounds from coherence (upper) and localization (lower) lengths.

Record file: one record per line, comma separated,

    label, mass_kg, length_m, direction[, quoted_t0_J]

with direction ``upper`` (an observed coherence length: lambda0 must exceed
it, so T0 is bounded above) or ``lower`` (an observed localization: T0 is
bounded below). ``#`` starts a comment. The optional last field is a
previously quoted figure to compare against.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

from .wavepacket import HBAR_SI, t0_from_lambda

TAU0_NOTE_S = 1e-2
DISCREPANCY_FACTOR = 2.0


class RecordError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentRecord:
    label: str
    mass_kg: float
    length_m: float
    direction: str
    quoted_t0_J: float | None = None

    def __post_init__(self):
        if self.direction not in ("upper", "lower"):
            raise RecordError(f"{self.label}: direction must be 'upper' or 'lower'")
        if not (self.mass_kg > 0 and self.length_m > 0):
            raise RecordError(f"{self.label}: mass and length must be positive")


@dataclass(frozen=True)
class BoundRow:
    label: str
    mass_kg: float
    lambda0_m: float
    direction: str
    t0_J: float
    quoted_t0_J: float | None
    power_W: float  # T0 / tau0 at the reference tau0

    @property
    def relation(self) -> str:
        return "<" if self.direction == "upper" else ">~"

    @property
    def discrepancy(self) -> bool:
        if self.quoted_t0_J is None:
            return False
        r = self.t0_J / self.quoted_t0_J
        return not (1 / DISCREPANCY_FACTOR <= r <= DISCREPANCY_FACTOR)


@dataclass(frozen=True)
class BoundsTable:
    rows: tuple
    tau0_s: float

    @property
    def note(self) -> str:
        return (f"tau0 <~ {self.tau0_s:g} s assumed; power column is T0/tau0 at that tau0 "
                "and grows as tau0 shrinks")

    @property
    def window(self) -> tuple:
        """(largest lower bound, smallest upper bound) on T0."""
        lo = max((r.t0_J for r in self.rows if r.direction == "lower"), default=0.0)
        hi = min((r.t0_J for r in self.rows if r.direction == "upper"), default=math.inf)
        return lo, hi

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["label", "mass_kg", "lambda0_m", "direction", "relation", "t0_J",
                     "quoted_t0_J", "discrepancy", "power_W"])
        for r in self.rows:
            wr.writerow([r.label, f"{r.mass_kg:.17g}", f"{r.lambda0_m:.17g}", r.direction,
                         r.relation, f"{r.t0_J:.17g}",
                         "" if r.quoted_t0_J is None else f"{r.quoted_t0_J:.17g}",
                         int(r.discrepancy), f"{r.power_W:.17g}"])
        return buf.getvalue()


def parse_records(text: str) -> list:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (4, 5):
            raise RecordError(f"line {lineno}: expected 4 or 5 fields, got {len(parts)}")
        try:
            mass, length = float(parts[1]), float(parts[2])
            quoted = float(parts[4]) if len(parts) == 5 and parts[4] else None
        except ValueError as exc:
            raise RecordError(f"line {lineno}: {exc}") from None
        try:
            out.append(ExperimentRecord(parts[0], mass, length, parts[3].lower(), quoted))
        except RecordError as exc:
            raise RecordError(f"line {lineno}: {exc}") from None
    return out


def load_records(path) -> list:
    return parse_records(Path(path).read_text())


def bounds_report(records, tau0_s: float = TAU0_NOTE_S, hbar: float = HBAR_SI) -> BoundsTable:
    rows = []
    for rec in records:
        t0 = t0_from_lambda(rec.mass_kg, rec.length_m, hbar)
        rows.append(BoundRow(rec.label, rec.mass_kg, rec.length_m, rec.direction, t0,
                             rec.quoted_t0_J, t0 / tau0_s))
    return BoundsTable(tuple(rows), tau0_s)
