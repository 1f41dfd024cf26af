"""The accelerator: CLA columns spread over Columnar Cores on a torus.

Each core hosts a contiguous block of columns and only ever learns about the
rest of the cortex from packets it receives:

* proximal records (input bit) from the encoder, multicast to every core
  whose receptive fields contain the bit;
* inhibition records (overlap, column) for columns with a positive overlap,
  broadcast to the zone; columns without a record have overlap zero;
* distal records (column, cell) for every active cell, broadcast to the zone;
* prediction records (column) unicast to the classifier at node 0.

Sequential mode runs each input through three drain-separated phases
(proximal, inhibition, distal) and sends predictions with the next input.
Pipelined mode keeps three inputs in flight and uses a single drain per
input: when a core drains interval ``m`` it finishes predictions for input
``m-2``, activates cells for ``m-1``, computes overlaps for ``m`` and
injects all the resulting traffic tagged ``m+1``.

Cores process arriving proximal and distal records at one record per cycle.
Sequentially that work starts once the phase has drained; pipelined it
overlaps with the network and the drain waits for the core to go idle.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cla_ref import (SP_STREAM, CortexConfig, CortexState, EpochResult, LearnRng,
                      activate_column, adapt_proximal_row, anomaly_score, block_overlaps,
                      dense_cells, global_inhibition, predictive_cells_of_column)
from .errors import ConfigError, UsageError
from .noc import MINUS_WAVE, PLUS_WAVE, Kind, NetConfig, NetStats, Network, Packet, nodes_mask
from .sdr import Sdr

SEQUENTIAL = "sequential"
PIPELINED = "pipelined"
MODES = (SEQUENTIAL, PIPELINED)


def clog2(x: int) -> int:
    return max(1, (int(x) - 1).bit_length())


@dataclass(frozen=True)
class PacketFormats:
    proximal: int
    inhibition: int
    distal: int
    prediction: int

    @classmethod
    def for_config(cls, num_columns: int, k: int, cells: int) -> "PacketFormats":
        col = clog2(num_columns)
        return cls(proximal=clog2(k), inhibition=col + clog2(k), distal=col + clog2(cells),
                   prediction=col)

    @classmethod
    def of(cls, cfg: CortexConfig) -> "PacketFormats":
        return cls.for_config(cfg.num_columns, cfg.sdr.k, cfg.cells)

    def width(self, kind: Kind) -> int:
        return (self.proximal, self.inhibition, self.distal, self.prediction)[int(kind)]


def zone_grid(dims: tuple[int, int], zones: int) -> tuple[int, int]:
    """Split the grid into ``zones`` equal blocks: (blocks along X, along Y)."""
    X, Y = dims
    best = None
    for zx in range(1, zones + 1):
        if zones % zx:
            continue
        zy = zones // zx
        if X % zx or Y % zy:
            continue
        score = (abs(X // zx - Y // zy), -zx)
        if best is None or score < best[0]:
            best = (score, (zx, zy))
    if best is None:
        raise ConfigError(f"{zones} zones do not tile a {X}x{Y} grid", field="zones")
    return best[1]


@dataclass(frozen=True)
class Placement:
    dims: tuple[int, int]
    ranges: tuple[tuple[int, int], ...]  # node -> [lo, hi)
    zone_of: tuple[int, ...]
    zones: int

    @property
    def nodes(self) -> int:
        return len(self.ranges)

    def zone_nodes(self, zone: int) -> list[int]:
        return [n for n, z in enumerate(self.zone_of) if z == zone]

    def zone_columns(self, zone: int) -> list[int]:
        out = []
        for n in self.zone_nodes(zone):
            out.extend(range(*self.ranges[n]))
        return sorted(out)

    def column_nodes(self) -> np.ndarray:
        owner = np.empty(self.ranges[-1][1], dtype=np.int32)
        for n, (lo, hi) in enumerate(self.ranges):
            owner[lo:hi] = n
        return owner

    def encoder_node(self, zone: int) -> int:
        return min(self.zone_nodes(zone))


def map_cortex(cortex: CortexConfig, net: NetConfig, zones: int = 1) -> Placement:
    N = net.nodes
    C = cortex.num_columns
    if zones < 1:
        raise ConfigError("zones must be >= 1", field="zones")
    if C < N:
        raise ConfigError(f"{C} columns cannot cover {N} cores", field="num_columns")
    base, extra = divmod(C, N)
    ranges = []
    lo = 0
    for n in range(N):
        hi = lo + base + (1 if n < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    zx, zy = zone_grid(net.dims, zones)
    X, Y = net.dims
    bw, bh = X // zx, Y // zy
    zone_of = tuple((n // X // bh) * zx + (n % X) // bw for n in range(N))
    return Placement(net.dims, tuple(ranges), zone_of, zones)


@dataclass
class EpochStats:
    """Cycles between consecutive epoch boundaries; traffic of the epoch's tags."""

    epoch: int
    cycles: int
    drains: int
    flit_hops: dict
    energy: float
    injected: int  # packets handed to the injection queues, before coalescing


class _Core:
    def __init__(self, node: int, lo: int, hi: int, zone: int):
        self.node = node
        self.lo, self.hi = lo, hi
        self.zone = zone
        self.prox = defaultdict(list)
        self.inh = defaultdict(list)
        self.dist = defaultdict(list)
        self.preds = defaultdict(list)
        self.inputs = {}      # epoch -> dense input (bits this core has seen)
        self.overlaps = {}    # epoch -> overlaps of own columns
        self.prev_cells: list[int] = []
        self.predictive: dict[int, list[int]] = {}
        self.busy = 0

    @property
    def columns(self) -> range:
        return range(self.lo, self.hi)


class Machine:
    """Simulated accelerator holding (and mutating) a ``CortexState``."""

    def __init__(self, cortex: CortexConfig, net: NetConfig | None = None, mode: str = PIPELINED,
                 zones: int = 1, state: CortexState | None = None):
        if mode not in MODES:
            raise ConfigError(f"unknown schedule {mode!r}", field="mode")
        self.cfg = cortex
        self.net_cfg = net or NetConfig()
        self.mode = mode
        self.state = state if state is not None else CortexState.boot(cortex)
        if self.state.cfg != cortex:
            raise UsageError("state was built for a different cortex configuration")
        self.formats = PacketFormats.of(cortex)
        self.epoch_stats: list[EpochStats] = []
        self.cross_zone = 0
        self.prox_checks = 0
        self.prox_mismatch = 0
        self._build(zones)

    # ------------------------------------------------------------ layout

    def _build(self, zones: int):
        self.placement = map_cortex(self.cfg, self.net_cfg, zones)
        self.zones = zones
        self.net = Network(self.net_cfg, on_deliver=self._deliver, on_drained=self._drained)
        pl = self.placement
        t = self.cfg.cells
        self.cores = [_Core(n, lo, hi, pl.zone_of[n]) for n, (lo, hi) in enumerate(pl.ranges)]
        self.zone_cols = [np.asarray(pl.zone_columns(z)) for z in range(zones)]
        self.zone_masks = [nodes_mask(pl.zone_nodes(z)) for z in range(zones)]
        owner = pl.column_nodes()
        self.col_zone = np.asarray(pl.zone_of)[owner]
        # input bit -> cores covering it, per zone
        k = self.cfg.sdr.k
        cover = [[0] * k for _ in range(zones)]
        for c in range(self.cfg.num_columns):
            n = int(owner[c])
            z = pl.zone_of[n]
            for b in self.state.rf[c]:
                cover[z][int(b)] |= 1 << n
        self.bit_masks = cover
        act = sorted(self.state.active_cells)
        pred = self.state.predictive_cells
        for core in self.cores:
            core.prev_cells = [c for c in act if self.col_zone[c // t] == core.zone]
            for cell in pred:
                if core.lo <= cell // t < core.hi:
                    core.predictive.setdefault(cell // t, []).append(cell % t)
        self.last_pred = [tuple(sorted(c for c in self.state.predicted_columns
                                       if self.col_zone[c] == z)) for z in range(zones)]
        self.tag_base = 0

    def set_zones(self, n: int) -> "Machine":
        """Reconfigure into ``n`` zones; cortex state carries over."""
        self._build(n)
        return self

    # ------------------------------------------------------------ traffic

    def make_packets(self, kind: Kind, src: int, tag: int, records, dest_mask: int) -> list[Packet]:
        width = self.formats.width(kind)
        hb = self.net_cfg.header_bits
        return [Packet(kind, src, dest_mask, tag, [(kind, r)], hb + width) for r in records]

    def _send(self, kind: Kind, src: int, tag: int, records, dest_mask: int):
        for p in self.make_packets(kind, src, tag, records, dest_mask):
            self.net.inject(src, p)
            self._injected[tag] += 1

    def _deliver(self, node: int, pkt: Packet, now: int):
        core = self.cores[node]
        zsrc = self.placement.zone_of[pkt.src]
        work = 0
        for kind, rec in pkt.records:
            if kind == Kind.PROXIMAL:
                core.prox[pkt.epoch_tag].append(rec[0])
                work += 1
            elif kind == Kind.INHIBITION:
                core.inh[pkt.epoch_tag].append(rec)
                self.cross_zone += zsrc != core.zone
            elif kind == Kind.DISTAL:
                core.dist[pkt.epoch_tag].append(rec[0] * self.cfg.cells + rec[1])
                self.cross_zone += zsrc != core.zone
                work += 1
            elif kind == Kind.PREDICTION:
                core.preds[pkt.epoch_tag].append(rec[0])
        if work and self.mode == PIPELINED:
            core.busy = max(core.busy, now) + work
            self.net.set_compute_busy(node, core.busy)

    # ------------------------------------------------------------ core steps

    def _overlaps(self, core: _Core, tag: int, epoch: int):
        bits = core.prox.pop(tag, [])
        dense = np.zeros(self.cfg.sdr.k, dtype=bool)
        dense[bits] = True
        st = self.state
        lo, hi = core.lo, core.hi
        ov = block_overlaps(st.perm[lo:hi], st.rf[lo:hi], dense, self.cfg.connected)
        # every record addressed here must be inside one of this core's fields
        self.prox_checks += 1
        if len(bits) != len(set(bits)) or any(not (self.bit_masks[core.zone][b] >> core.node) & 1
                                              for b in bits):
            self.prox_mismatch += 1
        core.inputs[epoch] = dense
        core.overlaps[epoch] = ov
        return len(bits)

    def _inhibition_records(self, core: _Core, epoch: int):
        ov = core.overlaps[epoch]
        return [(int(v), core.lo + i) for i, v in enumerate(ov) if v > 0]

    def _activate(self, core: _Core, tag: int, epoch: int):
        """Winners from inhibition records, then cell activation and learning."""
        cfg = self.cfg
        cols = self.zone_cols[core.zone]
        ov = np.zeros(cfg.num_columns, dtype=np.int64)
        for v, c in core.inh.pop(tag, []):
            ov[c] = v
        winners = global_inhibition(ov[cols], cfg.density, ids=cols, n_win=cfg.n_win(len(cols)))
        rng_epoch = self.state.epoch + epoch
        prev = core.prev_cells
        prev_dense = dense_cells(prev, cfg.num_columns * cfg.cells)
        active = []
        bursting = 0
        dense_in = core.inputs.pop(epoch)
        core.overlaps.pop(epoch, None)
        for c in winners:
            if not core.lo <= c < core.hi:
                continue
            cells, burst = activate_column(self.state.distal[c], c, core.predictive.get(c, ()),
                                           prev, prev_dense, cfg, rng_epoch)
            active.extend((c, i) for i in cells)
            bursting += burst
        if cfg.learning:
            for c in winners:
                if core.lo <= c < core.hi:
                    rng = LearnRng(cfg.seed, rng_epoch, c, SP_STREAM)
                    adapt_proximal_row(self.state.perm[c], self.state.rf[c], dense_in, cfg, rng)
        key = (core.zone, epoch)
        self._winners.setdefault(key, winners)
        self._bursting[key] += bursting
        self._active_cells[key].extend(c * cfg.cells + i for c, i in active)
        return active

    def _predict(self, core: _Core, tag: int):
        cfg = self.cfg
        cells = sorted(core.dist.pop(tag, []))
        core.prev_cells = cells
        dense = dense_cells(cells, cfg.num_columns * cfg.cells)
        core.predictive = {}
        out = []
        for c in core.columns:
            pc = predictive_cells_of_column(self.state.distal[c], c, dense, cfg)
            if pc:
                core.predictive[c] = [x % cfg.cells for x in pc]
                out.append(c)
        return out, len(cells)

    def _classify(self, tag: int, epoch: int):
        cols = self.cores[0].preds.pop(tag, [])
        by_zone = [[] for _ in range(self.zones)]
        for c in cols:
            by_zone[int(self.col_zone[c])].append(c)
        for z in range(self.zones):
            self._preds[(z, epoch)] = tuple(sorted(by_zone[z]))

    # ------------------------------------------------------------ schedules

    def _drained(self, node: int, tag: int, now: int):
        self._drain_count[tag] += 1
        if self._drain_count[tag] == self.net.N:
            self._boundary(tag, now)
        if tag < self._last_tag:
            if node == 0:
                self.net.launch_broom(0, tag + 1, PLUS_WAVE)
            if node == self.net.N - 1:
                self.net.launch_broom(node, tag + 1, MINUS_WAVE)
        if self.mode == SEQUENTIAL:
            self._seq_step(node, tag, now)
        else:
            self._pipe_step(node, tag, now)

    def _proximal(self, node: int, tag: int, epoch: int):
        for z in range(self.zones):
            if self.placement.encoder_node(z) != node:
                continue
            sdr = self._inputs[epoch * self.zones + z]
            masks = self.bit_masks[z]
            for b in sdr.active:
                if masks[b]:
                    self._send(Kind.PROXIMAL, node, tag, [(b,)], masks[b])

    def _seq_step(self, node: int, tag: int, now: int):
        core = self.cores[node]
        rel = tag - self.tag_base
        L = self._epochs
        e, phase = divmod(rel, 3)
        if phase == 0:
            if node == 0 and e >= 1:
                self._classify(tag, e - 1)
            if e >= L:
                return
            work = self._overlaps(core, tag, e)
            recs = self._inhibition_records(core, e)

            def emit():
                self._send(Kind.INHIBITION, node, tag + 1, recs, self.zone_masks[core.zone])
                self.net.mark_produced(node, tag + 1)

            self._later(now + work, emit)
        elif phase == 1:
            active = self._activate(core, tag, e)
            self._send(Kind.DISTAL, node, tag + 1, active, self.zone_masks[core.zone])
            self.net.mark_produced(node, tag + 1)
        else:
            cols, work = self._predict(core, tag)

            def emit():
                if cols:
                    self._send(Kind.PREDICTION, node, tag + 1, [(c,) for c in cols], 1)
                if e + 1 < L:
                    self._proximal(node, tag + 1, e + 1)
                self.net.mark_produced(node, tag + 1)

            self._later(now + work, emit)

    def _pipe_step(self, node: int, tag: int, now: int):
        core = self.cores[node]
        m = tag - self.tag_base
        L = self._epochs
        nxt = tag + 1
        zmask = self.zone_masks[core.zone]
        if node == 0 and 0 <= m - 3 < L:
            self._classify(tag, m - 3)
        if 2 <= m <= L + 1:
            cols, _ = self._predict(core, tag)
            if cols:
                self._send(Kind.PREDICTION, node, nxt, [(c,) for c in cols], 1)
        if 1 <= m <= L:
            active = self._activate(core, tag, m - 1)
            self._send(Kind.DISTAL, node, nxt, active, zmask)
        if m < L:
            self._overlaps(core, tag, m)
            self._send(Kind.INHIBITION, node, nxt, self._inhibition_records(core, m), zmask)
        if m + 1 < L:
            self._proximal(node, nxt, m + 1)
        if nxt <= self._last_tag:
            self.net.mark_produced(node, nxt)

    def _later(self, t: int, fn):
        if t <= self.net.now:
            fn()
        else:
            self.net.at(t, fn)

    def _boundary(self, tag: int, now: int):
        snap = self.net.snapshot_stats()
        snap.cycles = now
        self._boundaries[tag] = snap

    # ------------------------------------------------------------ driver

    def run(self, inputs: Sequence[Sdr]) -> list[EpochResult]:
        """Process a stream; with zones, input ``s`` goes to zone ``s % zones``."""
        inputs = list(inputs)
        n = self.zones
        if len(inputs) % n:
            raise UsageError(f"stream length {len(inputs)} is not a multiple of {n} zones")
        if not inputs:
            return []
        for s in inputs:
            if s.params.k != self.cfg.sdr.k:
                raise UsageError(f"input width {s.params.k} != encoder width {self.cfg.sdr.k}")
        L = len(inputs) // n
        net = self.net
        self._inputs = inputs
        self._epochs = L
        B = self.tag_base
        self._last_tag = B + (3 * L if self.mode == SEQUENTIAL else L + 2)
        self._drain_count = Counter()
        self._injected = Counter()
        self._boundaries: dict[int, NetStats] = {}
        self._winners: dict = {}
        self._bursting = Counter()
        self._active_cells = defaultdict(list)
        self._preds: dict = {}
        start = net.snapshot_stats()
        start.cycles = net.now
        for node in sorted({self.placement.encoder_node(z) for z in range(n)}):
            self._proximal(node, B, 0)
        for node in range(net.N):
            net.mark_produced(node, B)
        net.launch_brooms(B)
        last = self._last_tag
        net.run(until=lambda: self._drain_count[last] == net.N and not net.in_flight())

        results = self._collect(L, n)
        self._record_stats(L, B, start)
        st = self.state
        st.epoch += L
        st.active_cells = frozenset(c for z in range(n) for c in self._active_cells[(z, L - 1)])
        st.predictive_cells = frozenset(self._predictive_now())
        self.tag_base = last + 1
        return results

    def _predictive_now(self):
        cells = []
        for core in self.cores:
            for c, idx in core.predictive.items():
                cells.extend(c * self.cfg.cells + i for i in idx)
        return cells

    def _collect(self, L: int, n: int) -> list[EpochResult]:
        out = []
        base = self.state.epoch
        for e in range(L):
            for z in range(n):
                active = self._winners[(z, e)]
                predicted = self.last_pred[z]
                nxt = self._preds.get((z, e), ())
                self.last_pred[z] = nxt
                out.append(EpochResult((base + e) * n + z if n > 1 else base + e, active, predicted,
                                       nxt, anomaly_score(active, predicted),
                                       self._bursting[(z, e)]))
        return out

    def _record_stats(self, L: int, B: int, start: NetStats):
        per = 3 if self.mode == SEQUENTIAL else 1
        prev = start.cycles
        base = self.state.epoch
        net = self.net
        for e in range(L):
            tags = range(B + per * e, B + per * (e + 1))
            cycles = self._boundaries[tags[-1]].cycles
            hops = {k: sum(net.tag_flit_hops.get((t, k), 0) for t in tags) for k in Kind}
            energy = sum(net.tag_energy.get(t, 0.0) for t in tags)
            injected = sum(self._injected.get(t, 0) for t in tags)
            self.epoch_stats.append(EpochStats(base + e, cycles - prev, per,
                                               {k: v for k, v in hops.items() if v}, energy,
                                               injected))
            prev = cycles
        self.flush_cycles = self._boundaries[self._last_tag].cycles - prev

    def step(self, inp: Sdr) -> EpochResult:
        return self.run([inp])[-1]

    @property
    def stats(self) -> NetStats:
        return self.net.snapshot_stats()


def run_sequential_epoch(machine: Machine, inp: Sdr):
    """One input through the nine-stage schedule: (result, epoch stats)."""
    if machine.mode != SEQUENTIAL:
        raise UsageError("machine is not in sequential mode")
    res = machine.step(inp)
    return res, machine.epoch_stats[-1]


def run_pipelined(machine: Machine, inputs: Sequence[Sdr]):
    if machine.mode != PIPELINED:
        raise UsageError("machine is not in pipelined mode")
    n0 = len(machine.epoch_stats)
    res = machine.run(inputs)
    return res, machine.epoch_stats[n0:]


@dataclass
class Divergence:
    epoch: int
    field: str
    accel: object
    reference: object


@dataclass
class VerifyReport:
    epochs: int
    divergences: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.divergences

    @property
    def first(self):
        return self.divergences[0] if self.divergences else None


def verify_against_reference(trace_accel: Sequence[EpochResult],
                             trace_ref: Sequence[EpochResult]) -> VerifyReport:
    """Epoch-by-epoch comparison of active/predicted columns and anomaly."""
    rep = VerifyReport(max(len(trace_accel), len(trace_ref)))
    for i in range(rep.epochs):
        if i >= len(trace_accel) or i >= len(trace_ref):
            rep.divergences.append(Divergence(i, "length", len(trace_accel), len(trace_ref)))
            break
        a, r = trace_accel[i], trace_ref[i]
        for name in ("active_columns", "predicted_columns", "anomaly"):
            va, vr = getattr(a, name), getattr(r, name)
            if tuple(va) != tuple(vr) if name != "anomaly" else va != vr:
                rep.divergences.append(Divergence(a.epoch, name, va, vr))
    return rep
