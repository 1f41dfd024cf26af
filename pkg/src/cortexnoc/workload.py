"""Synthetic polynomial series, the learned criterion, and CSV ingestion."""

from __future__ import annotations

import csv
import logging
import math
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .cla_ref import EpochResult
from .errors import UsageError
from .sdr import Sdr, SdrParams, encode, quantize

log = logging.getLogger(__name__)

SERIES_LENGTH = 20
MAX_DEGREE = 4
CONST_RANGE = (0, 999)   # a0
COEF_RANGE = (1, 9)      # a1..a4; the leading one is never 0
VALUE_MAX = (1 << 20) - 1


@dataclass(frozen=True)
class PolySeries:
    seed: int
    coefficients: tuple[int, ...]  # a0..a4
    points: tuple[int, ...]

    @property
    def degree(self) -> int:
        nz = [i for i, a in enumerate(self.coefficients) if a]
        return nz[-1] if nz else 0

    def evaluate(self, x: int) -> int:
        v = sum(a * x ** i for i, a in enumerate(self.coefficients))
        return min(VALUE_MAX, max(0, v))


def gen_poly_series(seed: int, length: int = SERIES_LENGTH) -> PolySeries:
    """Random polynomial of degree 0..4 sampled at x = 0..length-1.

    Degree is uniform; a0 is uniform in ``CONST_RANGE``; a1..a_degree are
    uniform in ``COEF_RANGE`` and higher coefficients are zero.  Values are
    clamped to ``[0, VALUE_MAX]``.
    """
    rng = random.Random(seed)
    degree = rng.randint(0, MAX_DEGREE)
    coefs = [rng.randint(*CONST_RANGE)]
    coefs += [rng.randint(*COEF_RANGE) if i <= degree else 0 for i in range(1, MAX_DEGREE + 1)]
    s = PolySeries(seed, tuple(coefs), ())
    return PolySeries(seed, s.coefficients, tuple(s.evaluate(x) for x in range(length)))


def encode_series(values: Iterable[int], params: SdrParams) -> list[Sdr]:
    return [encode(int(v), params) for v in values]


@dataclass
class LearnTracker:
    length: int
    hits: list[int] = field(default_factory=list)

    def record(self, results: Sequence[EpochResult]) -> bool:
        if len(results) != self.length:
            raise UsageError(f"expected {self.length} epochs, got {len(results)}")
        self.hits.append(sum(1 for r in results if r.bursting == 0))
        return self.learned

    @property
    def learned(self) -> bool:
        return bool(self.hits) and 2 * self.hits[-1] >= self.length


@dataclass
class LearnOutcome:
    reps: int
    learned: bool
    hits: list[int]


def run_until_learned(machine, series: PolySeries | Sequence[int], max_reps: int) -> LearnOutcome:
    """Replay the series until one pass has at least half its epochs burst-free.

    ``machine`` is anything with ``cfg`` and ``run(list[Sdr])``: the
    accelerator or the reference cortex.
    """
    points = series.points if isinstance(series, PolySeries) else tuple(series)
    sdrs = encode_series(points, machine.cfg.sdr)
    tracker = LearnTracker(len(sdrs))
    for rep in range(1, max_reps + 1):
        if tracker.record(machine.run(sdrs)):
            return LearnOutcome(rep, True, tracker.hits)
    return LearnOutcome(max_reps, False, tracker.hits)


@dataclass(frozen=True)
class RepStats:
    n: int
    mean: float
    ci95: tuple[float, float]
    learned_fraction: float


def rep_statistics(outcomes: Sequence[LearnOutcome]) -> RepStats:
    """Mean repetitions to learn with a normal-approximation 95% interval."""
    if not outcomes:
        raise UsageError("no outcomes")
    reps = [o.reps for o in outcomes]
    mean = statistics.fmean(reps)
    half = 1.96 * statistics.stdev(reps) / math.sqrt(len(reps)) if len(reps) > 1 else 0.0
    frac = sum(o.learned for o in outcomes) / len(outcomes)
    return RepStats(len(reps), mean, (mean - half, mean + half), frac)


# ------------------------------------------------------------------ CSV input


@dataclass
class IngestResult:
    values: list[int]
    skipped: int
    lo: float
    hi: float


def ingest_csv(path, column: str, levels: int = 130, probation: float = 0.1) -> IngestResult:
    """Read one numeric column and quantize it to ``levels`` integer levels.

    The quantizer range is the min/max of the first ``probation`` fraction of
    valid samples (at least one sample); later values outside it clamp.
    """
    if not 0 < probation <= 1:
        raise UsageError(f"probation must be in (0, 1], got {probation}")
    raw: list[float] = []
    skipped = 0
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise UsageError(f"{path}: empty file")
        if column not in reader.fieldnames:
            raise UsageError(f"{path}: no column {column!r}")
        for row in reader:
            try:
                v = float(row[column])
            except (TypeError, ValueError):
                skipped += 1
                continue
            if math.isnan(v) or math.isinf(v):
                skipped += 1
                continue
            raw.append(v)
    if skipped:
        log.warning("%s: skipped %d malformed rows", path, skipped)
    if not raw:
        raise UsageError(f"{path}: no numeric samples in column {column!r}")
    head = raw[:max(1, math.ceil(probation * len(raw)))]
    lo, hi = min(head), max(head)
    return IngestResult(quantize(raw, lo, hi, levels), skipped, lo, hi)


# ------------------------------------------------------------------ anomaly


@dataclass(frozen=True)
class AnomalyPoint:
    epoch: int
    zone: int
    score: float


def run_anomaly(machine, stream: Sequence[int | Sdr]) -> list[AnomalyPoint]:
    """Feed a stream and return one anomaly score per stream epoch.

    With zones, stream epoch ``s`` is handled by zone ``s % zones``; a tail
    that does not fill every zone is dropped.
    """
    zones = getattr(machine, "zones", 1)
    items = list(stream)
    usable = len(items) - len(items) % zones
    if usable < len(items):
        log.warning("dropping %d trailing samples that do not fill %d zones",
                    len(items) - usable, zones)
    sdrs = [s if isinstance(s, Sdr) else encode(int(s), machine.cfg.sdr) for s in items[:usable]]
    results = machine.run(sdrs)
    return [AnomalyPoint(i, i % zones, r.anomaly) for i, r in enumerate(results)]
