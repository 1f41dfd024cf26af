"""Packet-level, cycle-approximate 2-D torus network.

Routers have four network input buffers (one per direction of travel) plus an
injection queue, and four network outputs plus local ejection.  Routing is
dimension order (X then Y, shortest way round each ring, ties go +).  A
multicast copy is split at every router into one branch per output port, so
every destination gets exactly one copy and replication happens as late as
possible.

Timing: a branch allocated at cycle ``t`` holds its output port for
``flits`` cycles and becomes visible at the next router at
``t + router_pipeline + link_latency + flits``.  Virtual cut-through: a
branch needs the whole packet to fit in the downstream buffer, and bubble
flow control asks for ``2 * max_packet_bytes`` free bytes when the packet is
injected or turns from X to Y.

Drain barrier ("broom"): node 0 and node N-1 each launch a wave for a tag.
A wave owns ring markers: the node-0 wave sweeps every row ring in +X and
every column ring in +Y, the node-(N-1) wave sweeps -X and -Y.  A marker
leaves a router only when the router has produced all its packets for the
tag, holds none of that tag (or older) in any buffer, its cores are idle, and
(for Y markers) the X markers of that tag have already swept in.  A node is
drained once it has seen both waves, every incoming ring direction has been
swept, and it is itself clear.  Markers run ``D + D//2 - 1`` hops around a
ring of length ``D`` so that a sweep of every node also follows every path
that wraps past the marker's starting point.
"""

from __future__ import annotations

import csv
import heapq
import itertools
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import ConfigError, ProtocolError, SimulationFault, UsageError

PX, MX, PY, MY = 0, 1, 2, 3
LOCAL = 4
INJECT = 4
DIR_NAMES = ("+X", "-X", "+Y", "-Y")

PLUS_WAVE, MINUS_WAVE = 0, 1


class Kind(IntEnum):
    PROXIMAL = 0
    INHIBITION = 1
    DISTAL = 2
    PREDICTION = 3
    BROOM = 4


@dataclass(frozen=True)
class NetConfig:
    dims: tuple[int, int] = (4, 4)
    link_width: int = 16
    router_pipeline: int = 4
    link_latency: int = 1
    buffer_bytes: int = 160
    max_packet_bytes: int = 80
    clock_period_ns: float = 1.0
    header_bits: int = 16
    coalescing: bool = True
    watchdog_cycles: int = 200_000
    trace: bool = False
    cost_router: float = 2.0
    cost_link: float = 1.0
    cost_buffer_write: float = 1.0
    cost_buffer_read: float = 1.0

    def __post_init__(self):
        X, Y = self.dims
        if X <= 0 or Y <= 0:
            raise ConfigError(f"torus dimensions must be positive, got {self.dims}", field="dims")
        for name in ("link_width", "router_pipeline", "buffer_bytes", "max_packet_bytes", "header_bits"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive", field=name)
        if self.link_latency < 0:
            raise ConfigError("link_latency must be >= 0", field="link_latency")
        if 2 * self.max_packet_bytes > self.buffer_bytes:
            raise ConfigError("max_packet_bytes must be <= buffer_bytes / 2", field="max_packet_bytes")

    @property
    def nodes(self) -> int:
        return self.dims[0] * self.dims[1]

    @property
    def max_packet_bits(self) -> int:
        return 8 * self.max_packet_bytes

    def flits(self, size_bits: int) -> int:
        return -(-size_bits // (8 * self.link_width))

    def hop_latency(self, flits: int) -> int:
        return self.router_pipeline + self.link_latency + flits


_pids = itertools.count()


@dataclass
class Packet:
    kind: Kind
    src: int
    dest_mask: int
    epoch_tag: int
    records: list = field(default_factory=list)  # (Kind, payload tuple)
    size_bits: int = 0
    pid: int = field(default_factory=lambda: next(_pids))

    def __post_init__(self):
        if self.dest_mask <= 0:
            raise UsageError("packet destination mask is empty")

    @property
    def nbytes(self) -> int:
        return -(-self.size_bits // 8)

    def destinations(self) -> list[int]:
        return mask_nodes(self.dest_mask)


def mask_nodes(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def nodes_mask(nodes) -> int:
    m = 0
    for n in nodes:
        m |= 1 << n
    return m


@dataclass
class NetStats:
    cycles: int = 0
    injected: Counter = field(default_factory=Counter)
    delivered: Counter = field(default_factory=Counter)
    delivered_records: Counter = field(default_factory=Counter)
    flit_hops: Counter = field(default_factory=Counter)
    coalesced: int = 0
    expected_deliveries: int = 0
    router_traversals: int = 0
    link_flits: int = 0
    buffer_writes: int = 0
    buffer_reads: int = 0
    late_deliveries: int = 0
    drains: int = 0

    def copy(self) -> "NetStats":
        return NetStats(self.cycles, Counter(self.injected), Counter(self.delivered),
                        Counter(self.delivered_records), Counter(self.flit_hops), self.coalesced,
                        self.expected_deliveries, self.router_traversals, self.link_flits,
                        self.buffer_writes, self.buffer_reads, self.late_deliveries, self.drains)

    def __sub__(self, other: "NetStats") -> "NetStats":
        return NetStats(self.cycles - other.cycles, self.injected - other.injected,
                        self.delivered - other.delivered,
                        self.delivered_records - other.delivered_records,
                        self.flit_hops - other.flit_hops, self.coalesced - other.coalesced,
                        self.expected_deliveries - other.expected_deliveries,
                        self.router_traversals - other.router_traversals,
                        self.link_flits - other.link_flits, self.buffer_writes - other.buffer_writes,
                        self.buffer_reads - other.buffer_reads,
                        self.late_deliveries - other.late_deliveries, self.drains - other.drains)

    def energy(self, cfg: NetConfig) -> float:
        return (cfg.cost_router * self.router_traversals + cfg.cost_link * self.link_flits
                + cfg.cost_buffer_write * self.buffer_writes + cfg.cost_buffer_read * self.buffer_reads)

    def total_delivered(self) -> int:
        return sum(self.delivered.values())


class Flight:
    """One copy of a packet sitting in (or headed to) a router buffer."""

    __slots__ = ("packet", "mask", "ready", "inport", "pending")

    def __init__(self, packet, mask, ready, inport):
        self.packet = packet
        self.mask = mask
        self.ready = ready
        self.inport = inport
        self.pending = None  # port -> sub-mask, filled when first routed


class Router:
    __slots__ = ("node", "x", "y", "neighbors", "port_masks", "bufs", "used", "busy", "rr",
                 "waiters", "markers", "held")

    def __init__(self, node, x, y):
        self.node = node
        self.x = x
        self.y = y
        self.neighbors = [-1, -1, -1, -1]
        self.port_masks = [0] * 5
        self.bufs = [deque() for _ in range(5)]
        self.used = [0, 0, 0, 0]
        self.busy = [0, 0, 0, 0]
        self.rr = 0
        self.waiters = set()
        self.markers = []  # [tag, dir, hop]
        self.held = Counter()  # tag -> flights in this router's buffers

    def degree(self) -> int:
        return sum(1 for n in self.neighbors if n >= 0)


class _TagState:
    __slots__ = ("tokens", "valid")

    def __init__(self):
        self.tokens = set()
        self.valid = set()


def ring_dirs(size: int, plus: int, minus: int) -> tuple[int, ...]:
    if size >= 3:
        return (plus, minus)
    if size == 2:
        return (plus,)
    return ()


class Network:
    """A torus of routers plus an event-driven clock.

    ``on_deliver(node, packet, cycle)`` fires for every leaf delivery and
    ``on_drained(node, tag, cycle)`` when a node certifies a drain.
    """

    def __init__(self, cfg: NetConfig, on_deliver=None, on_drained=None):
        self.cfg = cfg
        X, Y = cfg.dims
        self.X, self.Y = X, Y
        self.N = X * Y
        self.routers = [Router(n, n % X, n // X) for n in range(self.N)]
        self.x_dirs = ring_dirs(X, PX, MX)
        self.y_dirs = ring_dirs(Y, PY, MY)
        self.dirs = self.x_dirs + self.y_dirs
        for r in self.routers:
            if PX in self.x_dirs:
                r.neighbors[PX] = self.node_at(r.x + 1, r.y)
            if MX in self.x_dirs:
                r.neighbors[MX] = self.node_at(r.x - 1, r.y)
            if PY in self.y_dirs:
                r.neighbors[PY] = self.node_at(r.x, r.y + 1)
            if MY in self.y_dirs:
                r.neighbors[MY] = self.node_at(r.x, r.y - 1)
            for d in range(self.N):
                r.port_masks[self.route_port(r.node, d)] |= 1 << d
        self._tracing = cfg.trace
        self._e_send = cfg.cost_router + cfg.cost_link + cfg.cost_buffer_write + cfg.cost_buffer_read
        self._e_eject = cfg.cost_router + cfg.cost_buffer_read
        self._e_marker = cfg.cost_router + cfg.cost_link
        # per epoch tag: (tag, kind) -> flit-hops, tag -> energy units
        self.tag_flit_hops: Counter = Counter()
        self.tag_energy: Counter = Counter()
        self._buffer_bytes = cfg.buffer_bytes
        self._bubble = 2 * cfg.max_packet_bytes
        self._flit_bits = 8 * cfg.link_width
        self._hop0 = cfg.router_pipeline + cfg.link_latency
        self.on_deliver = on_deliver
        self.on_drained = on_drained
        self.now = 0
        self.stats = NetStats()
        self.trace_lines: list[str] = []
        self._heap: list = []
        self._seq = itertools.count()
        self._scheduled: set = set()
        self._processed: set = set()
        self._last_progress = 0
        self._tagstate: list[dict] = [dict() for _ in range(self.N)]
        self.drained_tag = [-1] * self.N
        self.drained_at: dict = {}
        self.produced = [-1] * self.N
        self.compute_busy = [0] * self.N

    # ------------------------------------------------------------ geometry

    def node_at(self, x: int, y: int) -> int:
        return (y % self.Y) * self.X + (x % self.X)

    def coords(self, node: int) -> tuple[int, int]:
        return node % self.X, node // self.X

    def route_port(self, src: int, dst: int) -> int:
        sx, sy = self.coords(src)
        dx, dy = self.coords(dst)
        ox = (dx - sx) % self.X
        if ox:
            return PX if ox <= self.X - ox else MX
        oy = (dy - sy) % self.Y
        if oy:
            return PY if oy <= self.Y - oy else MY
        return LOCAL

    def hops(self, a: int, b: int) -> int:
        ax, ay = self.coords(a)
        bx, by = self.coords(b)
        ox = (bx - ax) % self.X
        oy = (by - ay) % self.Y
        return min(ox, self.X - ox) + min(oy, self.Y - oy)

    def links(self) -> set[tuple[int, int]]:
        """Directed links (u, v); collapsed where a ring has length < 3."""
        return {(r.node, v) for r in self.routers for v in r.neighbors if v >= 0}

    # ------------------------------------------------------------ scheduling

    def _push(self, t, prio, key, fn, *args):
        heapq.heappush(self._heap, (t, prio, key, next(self._seq), fn, args))

    def _wake(self, t: int, node: int):
        if t <= self.now:
            t = self.now + 1 if node in self._processed else self.now
        if (t, node) in self._scheduled:
            return
        self._scheduled.add((t, node))
        self._push(t, 2, node, self._process, node)

    def at(self, t: int, fn, *args):
        """Run ``fn(*args)`` at cycle ``t`` (before routers move that cycle)."""
        self._push(max(t, self.now), 0, 0, fn, *args)

    def _trace(self, msg: str):
        if self.cfg.trace:
            self.trace_lines.append(f"{self.now} {msg}")

    # ------------------------------------------------------------ injection

    def inject(self, node: int, packet: Packet) -> Packet:
        """Queue ``packet`` at ``node``; may coalesce into a waiting packet."""
        cfg = self.cfg
        if packet.size_bits > cfg.max_packet_bits:
            raise UsageError(f"packet of {packet.size_bits} bits exceeds {cfg.max_packet_bits}")
        if packet.dest_mask >> self.N:
            raise UsageError("destination mask names nodes outside the network")
        r = self.routers[node]
        if cfg.coalescing and packet.kind != Kind.BROOM:
            extra = packet.size_bits - cfg.header_bits
            for f in r.bufs[INJECT]:
                p = f.pending is None and f.packet
                if (p and p.dest_mask == packet.dest_mask and p.epoch_tag == packet.epoch_tag
                        and p.size_bits + extra <= cfg.max_packet_bits):
                    p.records.extend(packet.records)
                    p.size_bits += extra
                    self.stats.coalesced += 1
                    self._tracing and self._trace(f"coalesce node={node} into={p.pid} from={packet.pid}")
                    return p
        r.bufs[INJECT].append(Flight(packet, packet.dest_mask, self.now, INJECT))
        r.held[packet.epoch_tag] += 1
        self.stats.injected[packet.kind] += 1
        self.stats.expected_deliveries += bin(packet.dest_mask).count("1")
        self._tracing and self._trace(f"inject node={node} pid={packet.pid} kind={packet.kind.name} "
                    f"tag={packet.epoch_tag} bits={packet.size_bits} mask={packet.dest_mask:#x}")
        self._wake(self.now, node)
        return packet

    def queued_packets(self, node: int) -> list[Packet]:
        return [f.packet for f in self.routers[node].bufs[INJECT]]

    # ------------------------------------------------------------ router step

    def _process(self, n: int):
        self._scheduled.discard((self.now, n))
        self._processed.add(n)
        r = self.routers[n]
        t = self.now
        if r.markers:
            self._try_markers(r)
        first = -1
        for k in range(5):
            i = (r.rr + k) % 5
            q = r.bufs[i]
            if not q:
                continue
            f = q[0]
            if f.ready > t:
                self._wake(f.ready, n)
                continue
            if self._advance(r, f, i, t):
                if first < 0:
                    first = i
            if not f.pending:
                q.popleft()
                r.held[f.packet.epoch_tag] -= 1
                if not r.held[f.packet.epoch_tag]:
                    del r.held[f.packet.epoch_tag]
                if i != INJECT:
                    r.used[i] -= f.packet.nbytes
                    for w in r.waiters:
                        self._wake(t + 1, w)
                    r.waiters.clear()
                if q:
                    self._wake(t + 1, n)
        if first >= 0:
            r.rr = (first + 1) % 5
        if r.markers:
            self._try_markers(r)
        self._check_drained(n)

    def _advance(self, r: Router, f: Flight, inport: int, t: int) -> bool:
        pkt = f.packet
        flits = -(-pkt.size_bits // self._flit_bits)
        moved = False
        if f.pending is None:
            f.pending = {}
            for p in range(4):
                sub = f.mask & r.port_masks[p]
                if sub:
                    f.pending[p] = sub
            if f.mask & r.port_masks[LOCAL]:
                self._deliver(r.node, pkt, flits)
                moved = True
        for p in list(f.pending):
            if r.busy[p] > t:
                self._wake(r.busy[p], r.node)
                continue
            nb = r.neighbors[p]
            nbr = self.routers[nb]
            nbytes = (pkt.size_bits + 7) >> 3
            need = nbytes
            if inport == INJECT or (inport <= MX and p >= PY):
                need = max(need, self._bubble)
            if self._buffer_bytes - nbr.used[p] < need:
                nbr.waiters.add(r.node)
                continue
            sub = f.pending.pop(p)
            r.busy[p] = t + flits
            ready = t + self._hop0 + flits
            nbr.bufs[p].append(Flight(pkt, sub, ready, p))
            nbr.used[p] += nbytes
            nbr.held[pkt.epoch_tag] += 1
            self._wake(ready, nb)
            st = self.stats
            st.router_traversals += flits
            st.buffer_reads += flits
            st.buffer_writes += flits
            st.link_flits += flits
            st.flit_hops[pkt.kind] += flits
            self.tag_flit_hops[(pkt.epoch_tag, pkt.kind)] += flits
            self.tag_energy[pkt.epoch_tag] += self._e_send * flits
            moved = True
            self._tracing and self._trace(f"send node={r.node} port={DIR_NAMES[p]} pid={pkt.pid} to={nb} ready={ready}")
        if moved:
            self._last_progress = t
        return moved

    def _deliver(self, node: int, pkt: Packet, flits: int):
        st = self.stats
        st.delivered[pkt.kind] += 1
        for kind, _ in pkt.records:
            st.delivered_records[kind] += 1
        st.router_traversals += flits
        st.buffer_reads += flits
        self.tag_energy[pkt.epoch_tag] += self._e_eject * flits
        if self.drained_tag[node] >= pkt.epoch_tag:
            st.late_deliveries += 1
        self._tracing and self._trace(f"deliver node={node} pid={pkt.pid} kind={pkt.kind.name} tag={pkt.epoch_tag}")
        if self.on_deliver is not None:
            self.on_deliver(node, pkt, self.now)

    # ------------------------------------------------------------ drain barrier

    def _state(self, node: int, tag: int) -> _TagState:
        st = self._tagstate[node].get(tag)
        if st is None:
            st = self._tagstate[node][tag] = _TagState()
        return st

    def ring_size(self, d: int) -> int:
        return self.X if d in (PX, MX) else self.Y

    def marker_span(self, d: int) -> tuple[int, int]:
        """(first hop index that certifies, total hops) for a ring marker."""
        D = self.ring_size(d)
        return D // 2 - 1, D + D // 2 - 1

    def launch_brooms(self, tag: int, at: int | None = None):
        """Launch both drain waves for ``tag`` from node 0 and node N-1."""
        self.launch_broom(0, tag, PLUS_WAVE, at)
        self.launch_broom(self.N - 1, tag, MINUS_WAVE, at)

    def launch_broom(self, source: int, tag: int, wave: int | None = None, at: int | None = None):
        if wave is None:
            wave = PLUS_WAVE if source == 0 else MINUS_WAVE
        t0 = self.now if at is None else at
        lat = self.cfg.hop_latency(1)
        for m in range(self.N):
            self._push(t0 + lat * self.hops(source, m), 1, m, self._token_arrive, m, tag, wave)
        self.stats.flit_hops[Kind.BROOM] += self.N - 1
        self.stats.link_flits += self.N - 1
        self.tag_flit_hops[(tag, Kind.BROOM)] += self.N - 1
        self.tag_energy[tag] += self.cfg.cost_link * (self.N - 1)
        self._tracing and self._trace(f"broom-launch node={source} tag={tag} wave={wave}")

    def _token_arrive(self, n: int, tag: int, wave: int):
        if self.drained_tag[n] >= tag:
            raise ProtocolError(f"broom wave for stale tag {tag} reached node {n}")
        self._state(n, tag).tokens.add(wave)
        x, y = self.coords(n)
        r = self.routers[n]
        starts = []
        if wave == PLUS_WAVE:
            if PX in self.x_dirs and x == 0:
                starts.append(PX)
            if PY in self.y_dirs and y == 0:
                starts.append(PY)
        else:
            if MX in self.x_dirs and x == self.X - 1:
                starts.append(MX)
            if MY in self.y_dirs and y == self.Y - 1:
                starts.append(MY)
        for d in starts:
            r.markers.append([tag, d, 0])
        r.markers.sort()
        self._wake(self.now, n)

    def _clear(self, r: Router, tag: int) -> bool:
        for t in r.held:
            if t <= tag:
                return False
        return True

    def _try_markers(self, r: Router):
        n = r.node
        if self.produced[n] < r.markers[0][0]:
            return  # sorted by tag: nothing can move yet
        t = self.now
        keep = []
        for m in r.markers:
            tag, d, h = m
            if self.produced[n] < tag or not self._clear(r, tag):
                keep.append(m)
                continue
            if self.compute_busy[n] > t:
                self._wake(self.compute_busy[n], n)
                keep.append(m)
                continue
            if d in (PY, MY) and self.drained_tag[n] < tag:
                valid = self._state(n, tag).valid
                if any(x not in valid for x in self.x_dirs):
                    keep.append(m)
                    continue
            if r.busy[d] > t:
                self._wake(r.busy[d], n)
                keep.append(m)
                continue
            r.busy[d] = t + 1
            nb = r.neighbors[d]
            self._push(t + self.cfg.hop_latency(1), 1, nb, self._marker_arrive, nb, tag, d, h)
            self.stats.flit_hops[Kind.BROOM] += 1
            self.stats.link_flits += 1
            self.stats.router_traversals += 1
            self.tag_flit_hops[(tag, Kind.BROOM)] += 1
            self.tag_energy[tag] += self._e_marker
            self._last_progress = t
            self._tracing and self._trace(f"marker node={n} tag={tag} dir={DIR_NAMES[d]} hop={h} to={nb}")
        r.markers = keep

    def _marker_arrive(self, n: int, tag: int, d: int, h: int):
        if self.drained_tag[n] >= tag:
            raise ProtocolError(f"marker for stale tag {tag} reached node {n}")
        first, total = self.marker_span(d)
        if h >= first:
            self._state(n, tag).valid.add(d)
        if h + 1 < total:
            r = self.routers[n]
            r.markers.append([tag, d, h + 1])
            r.markers.sort()
        self._wake(self.now, n)

    def mark_produced(self, node: int, tag: int):
        """``node`` will inject nothing more with tags <= ``tag``."""
        if tag > self.produced[node]:
            self.produced[node] = tag
        self._wake(self.now, node)

    def set_compute_busy(self, node: int, until: int):
        # blocked markers and drain checks re-arm themselves at the busy time
        if until > self.compute_busy[node]:
            self.compute_busy[node] = until

    def is_drained(self, node: int, tag: int) -> bool:
        return self.drained_tag[node] >= tag

    def _check_drained(self, n: int):
        r = self.routers[n]
        while True:
            tag = self.drained_tag[n] + 1
            st = self._tagstate[n].get(tag)
            waves = {PLUS_WAVE, MINUS_WAVE}
            if st is None or st.tokens != waves:
                return
            if any(d not in st.valid for d in self.dirs):
                return
            if self.produced[n] < tag or not self._clear(r, tag):
                return
            if self.compute_busy[n] > self.now:
                self._wake(self.compute_busy[n], n)
                return
            self.drained_tag[n] = tag
            self.drained_at[(n, tag)] = self.now
            del self._tagstate[n][tag]
            if n == 0:
                self.stats.drains += 1
            self._tracing and self._trace(f"drained node={n} tag={tag}")
            if self.on_drained is not None:
                self.on_drained(n, tag, self.now)

    # ------------------------------------------------------------ clock

    def in_flight(self) -> int:
        return sum(len(q) for r in self.routers for q in r.bufs)

    def _run_cycle(self):
        t = self.now
        heap = self._heap
        while heap and heap[0][0] == t:
            _, _, _, _, fn, args = heapq.heappop(heap)
            fn(*args)
        self._processed.clear()
        self.now = t + 1
        self.stats.cycles = self.now

    def tick(self, cycles: int = 1):
        """Advance exactly ``cycles`` clock cycles."""
        for _ in range(cycles):
            while self._heap and self._heap[0][0] < self.now:
                # stale entries can only come from explicit past-time scheduling
                _, _, _, _, fn, args = heapq.heappop(self._heap)
                fn(*args)
            self._run_cycle()
        self._watchdog()

    def run(self, until=None, max_cycle: int | None = None):
        """Advance event by event until ``until()`` holds or nothing is left.

        Raises ``SimulationFault`` if packets are stranded or the watchdog
        expires.
        """
        while self._heap:
            if until is not None and until():
                return
            t = self._heap[0][0]
            if max_cycle is not None and t > max_cycle:
                self.now = max(self.now, max_cycle)
                return
            if t > self.now:
                self.now = t
            self._run_cycle()
            self._watchdog()
        if until is not None and until():
            return
        if self.in_flight():
            raise SimulationFault(f"network stalled at cycle {self.now} with "
                                  f"{self.in_flight()} packets buffered")
        if until is not None:
            raise SimulationFault(f"no pending events at cycle {self.now} but run condition unmet")

    def _watchdog(self):
        if self.now - self._last_progress > self.cfg.watchdog_cycles and self.in_flight():
            raise SimulationFault(f"watchdog: no progress for {self.cfg.watchdog_cycles} cycles "
                                  f"at cycle {self.now}")

    def snapshot_stats(self) -> NetStats:
        s = self.stats.copy()
        s.cycles = self.now
        return s

    def reset_stats(self):
        self.stats = NetStats(cycles=self.now)


def build_torus(cfg: NetConfig, **kw) -> Network:
    return Network(cfg, **kw)


def expand_multicast(packet: Packet, net: Network) -> list[tuple[int, int]]:
    """Edges (from, to) of the dimension-order replication tree of ``packet``."""
    edges = []
    frontier = [(packet.src, packet.dest_mask)]
    while frontier:
        node, mask = frontier.pop()
        r = net.routers[node]
        for p in range(4):
            sub = mask & r.port_masks[p]
            if sub:
                edges.append((node, r.neighbors[p]))
                frontier.append((r.neighbors[p], sub))
    return sorted(edges)


def make_packet(kind: Kind, src: int, dest_mask: int, tag: int, records, record_bits: int,
                cfg: NetConfig) -> Packet:
    records = list(records)
    return Packet(kind, src, dest_mask, tag, [(kind, r) for r in records],
                  cfg.header_bits + record_bits * len(records))


def packetize(kind: Kind, src: int, dest_mask: int, tag: int, records, record_bits: int,
              cfg: NetConfig) -> list[Packet]:
    """Split records into as few packets as the size cap allows."""
    per = (cfg.max_packet_bits - cfg.header_bits) // record_bits
    if per < 1:
        raise ConfigError(f"a {record_bits}-bit record does not fit a packet", field="max_packet_bytes")
    records = list(records)
    return [make_packet(kind, src, dest_mask, tag, records[i:i + per], record_bits, cfg)
            for i in range(0, len(records), per)]


KIND_NAMES = [k.name.lower() for k in Kind]
STATS_COLUMNS = (["cycles"] + [f"injected_{k}" for k in KIND_NAMES]
                 + [f"delivered_{k}" for k in KIND_NAMES] + [f"flit_hops_{k}" for k in KIND_NAMES]
                 + ["coalesced", "router_traversals", "link_flits", "buffer_writes", "buffer_reads",
                    "energy"])


def stats_row(s: NetStats, cfg: NetConfig) -> dict:
    """One CSV row; column order is ``STATS_COLUMNS``."""
    row = {"cycles": s.cycles}
    for k, name in zip(Kind, KIND_NAMES):
        row[f"injected_{name}"] = s.injected.get(k, 0)
        row[f"delivered_{name}"] = s.delivered.get(k, 0)
        row[f"flit_hops_{name}"] = s.flit_hops.get(k, 0)
    row.update(coalesced=s.coalesced, router_traversals=s.router_traversals,
               link_flits=s.link_flits, buffer_writes=s.buffer_writes,
               buffer_reads=s.buffer_reads, energy=s.energy(cfg))
    return row


def write_stats_csv(stats, cfg: NetConfig, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(STATS_COLUMNS)
    for s in stats:
        row = stats_row(s, cfg)
        w.writerow([row[c] for c in STATS_COLUMNS])
