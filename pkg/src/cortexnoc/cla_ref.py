"""Sequential reference implementation of the cortical learning algorithm.

Spatial pooling (proximal overlap, global inhibition, proximal adaptation),
temporal memory (bursting, distal segments, predictions) and the anomaly
score, all on integer permanence levels.  This module never touches the
network; it is the oracle the accelerator model is checked against.

The column-level kernels (``adapt_proximal_row``, ``activate_column``,
``predictive_cells_of_column``) are plain functions so the accelerator's
columnar cores can run exactly the same per-column rules on the data the
network delivers to them.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, UsageError
from .sdr import MASK64, Sdr, SdrParams, Xorshift64Star, splitmix64

# purposes for the per-(epoch, column) learning streams
SP_STREAM = 1
TM_STREAM = 2


@dataclass(frozen=True)
class CortexConfig:
    num_columns: int = 512
    cells: int = 16
    density: float = 0.02
    rf_diameter: int = 32
    proximal_capacity: int = 128
    max_level: int = 15
    connected_level: int | None = None
    init_lo_frac: float = 6 / 15
    init_hi_frac: float = 9 / 15
    sp_inc: float = 0.08
    sp_dec: float = 0.003
    tm_inc: float = 0.1
    tm_dec: float = 0.1
    activation_threshold: int = 5
    match_threshold: int = 3
    max_segments: int = 128
    max_synapses: int = 40
    learning: bool = True
    seed: int = 1
    sdr: SdrParams = SdrParams()

    def __post_init__(self):
        if self.num_columns <= 0:
            raise ConfigError("num_columns must be positive", field="num_columns")
        if self.cells <= 0:
            raise ConfigError("cells must be positive", field="cells")
        if not 0 < self.density <= 1:
            raise ConfigError(f"density must be in (0, 1], got {self.density}", field="density")
        if not 0 < self.rf_diameter <= min(self.proximal_capacity, self.sdr.k):
            raise ConfigError("rf_diameter must fit the proximal capacity and input width", field="rf_diameter")
        if self.max_level < 1:
            raise ConfigError("max_level must be >= 1", field="max_level")
        if not 0 < self.connected <= self.max_level:
            raise ConfigError("connected_level out of range", field="connected_level")
        if self.activation_threshold < 1 or self.match_threshold < 1:
            raise ConfigError("segment thresholds must be >= 1", field="activation_threshold")
        if self.max_synapses < 1 or self.max_segments < 1:
            raise ConfigError("segment caps must be >= 1", field="max_synapses")

    @classmethod
    def desk(cls, **kw) -> "CortexConfig":
        return cls(**kw)

    @classmethod
    def paper(cls, **kw) -> "CortexConfig":
        base = dict(num_columns=2025, cells=32, activation_threshold=20, match_threshold=10)
        base.update(kw)
        return cls(**base)

    @property
    def connected(self) -> int:
        if self.connected_level is not None:
            return self.connected_level
        return (self.max_level + 1) // 2

    def n_win(self, columns: int | None = None) -> int:
        return math.floor(self.density * (self.num_columns if columns is None else columns))

    @property
    def init_range(self) -> tuple[int, int]:
        return round(self.init_lo_frac * self.max_level), round(self.init_hi_frac * self.max_level)

    def with_levels(self, max_level: int) -> "CortexConfig":
        """Same cortex with a different permanence resolution."""
        return replace(self, max_level=max_level, connected_level=None)


class LearnRng:
    """Per-(epoch, column, purpose) stream; independent of evaluation order."""

    __slots__ = ("_gen",)

    def __init__(self, seed: int, epoch: int, column: int, purpose: int):
        key = splitmix64(splitmix64(splitmix64(epoch & MASK64) ^ column) ^ purpose)
        self._gen = Xorshift64Star(seed, key)

    def random(self) -> float:
        return (self._gen.next() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        return self._gen.next() % n

    def sample(self, population: Sequence[int], n: int) -> list[int]:
        """``n`` distinct items, partial Fisher-Yates over ``population``."""
        pool = list(population)
        n = min(n, len(pool))
        for i in range(n):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return sorted(pool[:n])


def stochastic_step(step: float, u: float) -> int:
    whole = math.floor(step)
    return whole + (1 if u < step - whole else 0)


@dataclass
class Segment:
    presyn: np.ndarray  # encoded cell ids, column * cells + cell
    perm: np.ndarray
    last_used: int = 0

    def __len__(self):
        return len(self.presyn)


@dataclass
class EpochResult:
    epoch: int
    active_columns: tuple[int, ...]
    predicted_columns: tuple[int, ...]
    next_predicted: tuple[int, ...]
    anomaly: float
    bursting: int

    def key(self):
        return (self.active_columns, self.predicted_columns, self.anomaly)


def receptive_field(column: int, num_columns: int, k: int, diameter: int) -> np.ndarray:
    center = (column * k) // num_columns
    start = center - diameter // 2
    return (np.arange(start, start + diameter) % k).astype(np.int32)


@dataclass
class CortexState:
    cfg: CortexConfig
    rf: np.ndarray
    perm: np.ndarray
    distal: list  # distal[col][cell] -> list[Segment]
    epoch: int = 0
    active_cells: frozenset = frozenset()
    predictive_cells: frozenset = frozenset()

    @classmethod
    def boot(cls, cfg: CortexConfig) -> "CortexState":
        C = cfg.num_columns
        rf = np.stack([receptive_field(c, C, cfg.sdr.k, cfg.rf_diameter) for c in range(C)])
        lo, hi = cfg.init_range
        gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 0xB007])))
        perm = gen.integers(lo, hi + 1, size=rf.shape).astype(np.int16)
        distal = [[[] for _ in range(cfg.cells)] for _ in range(C)]
        return cls(cfg, rf, perm, distal)

    @property
    def predicted_columns(self) -> frozenset:
        t = self.cfg.cells
        return frozenset(c // t for c in self.predictive_cells)

    def clone(self) -> "CortexState":
        return copy.deepcopy(self)


# ---------------------------------------------------------------- spatial pool


def compute_overlaps(inp: Sdr, state: CortexState) -> np.ndarray:
    if inp.params.k != state.cfg.sdr.k:
        raise UsageError(f"input width {inp.params.k} != encoder width {state.cfg.sdr.k}")
    return block_overlaps(state.perm, state.rf, inp.dense(), state.cfg.connected)


def block_overlaps(perm: np.ndarray, rf: np.ndarray, dense: np.ndarray, connected: int) -> np.ndarray:
    return np.count_nonzero((perm >= connected) & dense[rf], axis=1)


def global_inhibition(overlaps: Sequence[int], density: float, ids: Sequence[int] | None = None,
                      n_win: int | None = None) -> tuple[int, ...]:
    """Top ``n_win`` columns by (overlap desc, id asc); returned sorted by id."""
    if not 0 < density <= 1:
        raise UsageError(f"density must be in (0, 1], got {density}")
    ov = np.asarray(overlaps)
    ids = np.arange(len(ov)) if ids is None else np.asarray(ids)
    if n_win is None:
        n_win = math.floor(density * len(ov))
    order = np.lexsort((ids, -ov))[:n_win]
    return tuple(sorted(int(ids[i]) for i in order))


def adapt_proximal_row(perm_row: np.ndarray, rf_row: np.ndarray, dense: np.ndarray,
                       cfg: CortexConfig, rng: LearnRng) -> None:
    inc = cfg.sp_inc * cfg.max_level
    dec = cfg.sp_dec * cfg.max_level
    on = dense[rf_row]
    for i in range(len(perm_row)):
        u = rng.random()
        if on[i]:
            v = int(perm_row[i]) + stochastic_step(inc, u)
        else:
            v = int(perm_row[i]) - stochastic_step(dec, u)
        perm_row[i] = min(cfg.max_level, max(0, v))


def adapt_proximal(state: CortexState, inp: Sdr, winners: Iterable[int]) -> None:
    if not state.cfg.learning:
        return
    dense = inp.dense()
    for c in winners:
        if not 0 <= c < state.cfg.num_columns:
            raise UsageError(f"winner {c} is not a column")
        rng = LearnRng(state.cfg.seed, state.epoch, c, SP_STREAM)
        adapt_proximal_row(state.perm[c], state.rf[c], dense, state.cfg, rng)


# ------------------------------------------------------------- temporal memory


def _connected_active(seg: Segment, active_dense: np.ndarray, connected: int) -> int:
    return int(np.count_nonzero(active_dense[seg.presyn] & (seg.perm >= connected)))


def _potential_active(seg: Segment, active_dense: np.ndarray) -> int:
    return int(np.count_nonzero(active_dense[seg.presyn] & (seg.perm > 0)))


def dense_cells(cells: Iterable[int], total: int) -> np.ndarray:
    out = np.zeros(total, dtype=bool)
    idx = list(cells)
    if idx:
        out[idx] = True
    return out


def _reinforce(seg: Segment, prev_dense: np.ndarray, cfg: CortexConfig, rng: LearnRng) -> None:
    inc = cfg.tm_inc * cfg.max_level
    dec = cfg.tm_dec * cfg.max_level
    on = prev_dense[seg.presyn]
    p = seg.perm.astype(np.int32)
    for i in range(len(p)):
        u = rng.random()
        p[i] += stochastic_step(inc, u) if on[i] else -stochastic_step(dec, u)
    np.clip(p, 0, cfg.max_level, out=p)
    keep = p > 0
    seg.presyn = seg.presyn[keep]
    seg.perm = p[keep].astype(np.int16)


def _grow(seg: Segment, prev_active: Sequence[int], cfg: CortexConfig, rng: LearnRng) -> None:
    room = cfg.max_synapses - len(seg)
    if room <= 0:
        return
    have = set(seg.presyn.tolist())
    cand = [c for c in prev_active if c not in have]
    new = rng.sample(cand, room)
    if not new:
        return
    presyn = np.concatenate([seg.presyn, np.asarray(new, dtype=np.int32)])
    perm = np.concatenate([seg.perm, np.full(len(new), cfg.connected, dtype=np.int16)])
    order = np.argsort(presyn, kind="stable")
    seg.presyn, seg.perm = presyn[order], perm[order]


def activate_column(cells: list, column: int, predictive: Sequence[int], prev_active: Sequence[int],
                    prev_dense: np.ndarray, cfg: CortexConfig, epoch: int) -> tuple[list[int], bool]:
    """Temporal step and distal learning for one active column.

    ``cells[i]`` is the segment list of cell ``i``; ``predictive`` are this
    column's cell indices predicted last epoch; ``prev_active`` the encoded
    cells active last epoch (sorted).  Returns (active cell indices, burst).
    """
    learn = cfg.learning and len(prev_active) > 0
    rng = LearnRng(cfg.seed, epoch, column, TM_STREAM) if learn else None
    if predictive:
        active = sorted(predictive)
        if learn:
            for i in active:
                for seg in cells[i]:
                    if _connected_active(seg, prev_dense, cfg.connected) >= cfg.activation_threshold:
                        _reinforce(seg, prev_dense, cfg, rng)
                        seg.last_used = epoch
        return active, False

    active = list(range(cfg.cells))
    if not learn:
        return active, True
    best = None
    best_score = cfg.match_threshold - 1
    for i in range(cfg.cells):
        for seg in cells[i]:
            s = _potential_active(seg, prev_dense)
            if s > best_score:
                best, best_score = seg, s
    if best is not None:
        _reinforce(best, prev_dense, cfg, rng)
        _grow(best, prev_active, cfg, rng)
        best.last_used = epoch
        return active, True
    cell = min(range(cfg.cells), key=lambda i: (len(cells[i]), i))
    segs = cells[cell]
    if len(segs) >= cfg.max_segments:
        victim = min(range(len(segs)), key=lambda j: (segs[j].last_used, j))
        del segs[victim]
    chosen = rng.sample(prev_active, cfg.max_synapses)
    segs.append(Segment(np.asarray(chosen, dtype=np.int32),
                        np.full(len(chosen), cfg.connected, dtype=np.int16), epoch))
    return active, True


def predictive_cells_of_column(cells: list, column: int, active_dense: np.ndarray,
                               cfg: CortexConfig) -> list[int]:
    out = []
    for i, segs in enumerate(cells):
        for seg in segs:
            if _connected_active(seg, active_dense, cfg.connected) >= cfg.activation_threshold:
                out.append(column * cfg.cells + i)
                break
    return out


def temporal_step(state: CortexState, active_columns: Sequence[int]) -> tuple[frozenset, tuple[int, ...]]:
    """Activate cells of the winning columns; runs distal learning as it goes."""
    cfg = state.cfg
    t = cfg.cells
    prev = sorted(state.active_cells)
    prev_dense = dense_cells(prev, cfg.num_columns * t)
    by_col: dict[int, list[int]] = {}
    for c in state.predictive_cells:
        by_col.setdefault(c // t, []).append(c % t)
    active: list[int] = []
    bursting = []
    for col in active_columns:
        cells, burst = activate_column(state.distal[col], col, by_col.get(col, ()), prev,
                                       prev_dense, cfg, state.epoch)
        active.extend(col * t + i for i in cells)
        if burst:
            bursting.append(col)
    return frozenset(active), tuple(bursting)


def compute_predictions(state: CortexState, active_cells: Iterable[int] | None = None) -> frozenset:
    cfg = state.cfg
    cells = state.active_cells if active_cells is None else active_cells
    dense = dense_cells(cells, cfg.num_columns * cfg.cells)
    out: list[int] = []
    for col in range(cfg.num_columns):
        out.extend(predictive_cells_of_column(state.distal[col], col, dense, cfg))
    return frozenset(out)


def anomaly_score(active_columns: Iterable[int], predicted_columns: Iterable[int]) -> float:
    act = set(active_columns)
    if not act:
        return 0.0
    return len(act - set(predicted_columns)) / len(act)


def epoch(state: CortexState, inp: Sdr) -> EpochResult:
    """One full input step; mutates ``state``."""
    cfg = state.cfg
    overlaps = compute_overlaps(inp, state)
    winners = global_inhibition(overlaps, cfg.density)
    predicted = tuple(sorted(state.predicted_columns))
    active_cells, bursting = temporal_step(state, winners)
    adapt_proximal(state, inp, winners)
    state.active_cells = active_cells
    state.predictive_cells = compute_predictions(state)
    res = EpochResult(state.epoch, winners, predicted, tuple(sorted(state.predicted_columns)),
                      anomaly_score(winners, predicted), len(bursting))
    state.epoch += 1
    return res


class ReferenceCortex:
    """Convenience wrapper: boot once, feed SDRs."""

    def __init__(self, cfg: CortexConfig, state: CortexState | None = None):
        self.cfg = cfg
        self.state = state if state is not None else CortexState.boot(cfg)

    def run(self, inputs: Iterable[Sdr]) -> list[EpochResult]:
        return [epoch(self.state, s) for s in inputs]

    def step(self, inp: Sdr) -> EpochResult:
        return epoch(self.state, inp)
