"""End-to-end acceptance runs; each test is tagged with its criterion number.

The terminal summary prints one PASS/FAIL line per criterion (see conftest).
"""

import random
from collections import Counter
from functools import lru_cache

import numpy as np
import pytest

from cortexnoc.accel import PIPELINED, SEQUENTIAL, Machine, PacketFormats, verify_against_reference
from cortexnoc.cla_ref import CortexConfig, ReferenceCortex
from cortexnoc.noc import MINUS_WAVE, PLUS_WAVE, Kind, NetConfig, Network, make_packet
from cortexnoc.sdr import SdrParams, encode, overlap, unique_stream
from cortexnoc.workload import encode_series, gen_poly_series, rep_statistics, run_until_learned

DESK = CortexConfig.desk()
GRID = NetConfig(dims=(4, 4))
SEEDS = range(50)
# measured on the desk preset: every series learned, slowest took 11-12 passes
LEARN_REP_BOUND = 15


def poly_stream(cfg, seed, reps):
    return encode_series(list(gen_poly_series(seed).points) * reps, cfg.sdr)


@lru_cache(maxsize=None)
def reference_trace(seed):
    cfg = CortexConfig.desk(seed=seed)
    return tuple(ReferenceCortex(cfg).run(poly_stream(cfg, seed, 5)))


# ---------------------------------------------------------------- 1


@pytest.mark.criterion(1)
@pytest.mark.parametrize("mode", [SEQUENTIAL, PIPELINED])
def test_oracle_equivalence(mode, record_property):
    diverged = []
    epochs = 0
    for seed in SEEDS:
        cfg = CortexConfig.desk(seed=seed)
        res = Machine(cfg, GRID, mode=mode).run(poly_stream(cfg, seed, 5))
        rep = verify_against_reference(res, reference_trace(seed))
        epochs += rep.epochs
        if not rep.ok:
            diverged.append((seed, rep.first))
    record_property("detail", f"{mode}: {len(diverged)} diverging seeds over {epochs} epochs")
    assert epochs == 50 * 100
    assert not diverged, diverged[:3]


# ---------------------------------------------------------------- 2


class DrainHarness:
    """Random multicast traffic where each node opens epoch T+1 when it drains T."""

    def __init__(self, dims, epochs, seed):
        self.rng = random.Random(seed)
        self.cfg = NetConfig(dims=dims)
        self.net = Network(self.cfg, on_deliver=self.deliver, on_drained=self.drained)
        self.epochs = epochs
        self.done = set()  # (node, tag) pairs, tracked apart from the network
        self.violations = 0
        self.deliveries = 0

    def deliver(self, node, pkt, now):
        self.deliveries += 1
        if (node, pkt.epoch_tag) in self.done:
            self.violations += 1

    def drained(self, node, tag, now):
        self.done.add((node, tag))
        net = self.net
        if tag + 1 < self.epochs:
            if node == 0:
                net.launch_broom(0, tag + 1, PLUS_WAVE)
            if node == net.N - 1:
                net.launch_broom(node, tag + 1, MINUS_WAVE)
            self.produce(node, tag + 1, now)

    def produce(self, node, tag, now):
        rng, net = self.rng, self.net
        t = now
        for _ in range(rng.randrange(4)):
            t += rng.randrange(30)
            if rng.random() < 0.2:
                mask = (1 << net.N) - 1
            else:
                mask = sum(1 << d for d in rng.sample(range(net.N), rng.randrange(1, 5)))
            recs = [(rng.randrange(1000),) for _ in range(rng.randrange(1, 25))]
            net.at(t, net.inject, node, make_packet(Kind.DISTAL, node, mask, tag, recs, 22, self.cfg))
        if rng.random() < 0.1:
            net.set_compute_busy(node, t + rng.randrange(50))
        net.at(t, net.mark_produced, node, tag)

    def run(self):
        net = self.net
        for n in range(net.N):
            self.produce(n, 0, 0)
        net.launch_brooms(0)
        last = self.epochs - 1
        net.run(until=lambda: all(net.is_drained(n, last) for n in range(net.N)))
        return self


@pytest.mark.criterion(2)
def test_drain_safety(record_property):
    h = DrainHarness((4, 4), 10_000, seed=2024).run()
    st = h.net.stats
    record_property("detail", f"{h.epochs} epochs, {h.deliveries} deliveries, "
                              f"{h.violations} after drain (network count {st.late_deliveries})")
    assert st.drains == h.epochs
    assert h.deliveries == st.expected_deliveries and h.net.in_flight() == 0
    assert h.violations == 0 and st.late_deliveries == 0


# ---------------------------------------------------------------- 3 and 7 (full scale)


PAPER = CortexConfig.paper()
PAPER_EPOCHS = 10


@pytest.fixture(scope="module")
def paper_runs():
    inputs = poly_stream(PAPER, 3, 1)[:PAPER_EPOCHS]
    out = {}
    for coalescing in (False, True):
        m = Machine(PAPER, NetConfig(dims=(16, 16), coalescing=coalescing), mode=SEQUENTIAL)
        got = Counter()
        inner = m.net.on_deliver

        def spy(node, pkt, now, inner=inner, got=got):
            got.update((node, pkt.epoch_tag, kind, rec) for kind, rec in pkt.records)
            inner(node, pkt, now)

        m.net.on_deliver = spy
        res = m.run(inputs)
        out[coalescing] = (m, res, got)
    return out


@pytest.mark.criterion(3)
def test_coalescing_transparent_and_faster(paper_runs, record_property):
    base, _, got_base = paper_runs[False]
    coal, _, got_coal = paper_runs[True]
    cyc = lambda m: np.mean([e.cycles for e in m.epoch_stats])
    ratio = cyc(coal) / cyc(base)
    same = got_base == got_coal
    record_property("detail", f"full scale 16x16: {cyc(base):.0f} -> {cyc(coal):.0f} cycles/epoch, "
                              f"ratio {ratio:.3f} (<= 0.5); record multisets equal: {same}")
    assert same
    assert ratio <= 0.5


@pytest.mark.criterion(7)
def test_sparsity(paper_runs, record_property):
    counts = Counter()
    for _, res, _ in paper_runs.values():
        counts.update(len(r.active_columns) for r in res)
    desk = Machine(DESK, GRID).run(poly_stream(DESK, 9, 5))
    counts_desk = Counter(len(r.active_columns) for r in desk)
    zoned = Machine(DESK, NetConfig(dims=(8, 8)), zones=4).run(poly_stream(DESK, 9, 4))
    counts_zone = Counter(len(r.active_columns) for r in zoned)
    record_property("detail", f"full scale {dict(counts)}, desk {dict(counts_desk)}, "
                              f"4 zones {dict(counts_zone)}")
    assert set(counts) == {40}
    assert set(counts_desk) == {DESK.n_win()} == {10}
    assert set(counts_zone) == {DESK.n_win(DESK.num_columns // 4)}


# ---------------------------------------------------------------- 4


@pytest.mark.criterion(4)
def test_pipelining(record_property):
    inputs = [s for seed in range(5) for s in poly_stream(DESK, seed, 2)]
    coal = Machine(DESK, GRID, mode=SEQUENTIAL)
    res_c = coal.run(inputs)
    pipe = Machine(DESK, GRID, mode=PIPELINED)
    res_p = pipe.run(inputs)
    same = [(r.active_columns, r.predicted_columns, r.anomaly) for r in res_c] == \
           [(r.active_columns, r.predicted_columns, r.anomaly) for r in res_p]
    dc = {s.drains for s in coal.epoch_stats}
    dp = {s.drains for s in pipe.epoch_stats}
    cc = np.mean([s.cycles for s in coal.epoch_stats])
    cp = np.mean([s.cycles for s in pipe.epoch_stats])
    record_property("detail", f"drains/epoch {dp} vs {dc}; cycles/epoch {cp:.1f} vs "
                              f"{cc:.1f} (coalescing only); results identical: {same}")
    assert dp == {1} and dc == {3}
    assert same
    assert cp < cc


# ---------------------------------------------------------------- 5


@pytest.mark.criterion(5)
def test_scale_out_zones(record_property):
    cfg = CortexConfig.desk(num_columns=2048)
    grid = NetConfig(dims=(8, 8))
    inputs = [s for seed in range(8) for s in poly_stream(cfg, seed, 1)]
    one = Machine(cfg, grid)
    one.run(inputs[:40])
    four = Machine(cfg, grid, zones=4)
    four.run(inputs[:160])

    def per_epoch(m):
        return np.mean([s.flit_hops.get(Kind.INHIBITION, 0) + s.flit_hops.get(Kind.DISTAL, 0)
                        for s in m.epoch_stats])

    ratio = per_epoch(four) / per_epoch(one)
    record_property("detail", f"8x8, 4 zones: inhibition+distal flit-hops per machine epoch "
                              f"{ratio:.1%} of 1 zone; cross-zone deliveries {four.cross_zone}")
    assert len(four.epoch_stats) == 40
    assert 0.20 <= ratio <= 0.30
    assert four.cross_zone == 0


# ---------------------------------------------------------------- 6


@pytest.mark.criterion(6)
def test_packet_widths(record_property):
    f = PacketFormats.for_config(2048, 2048, 32)
    got = (f.inhibition, f.distal, f.prediction)
    record_property("detail", f"inhibition/distal/prediction = {got}")
    assert got == (22, 16, 11)


# ---------------------------------------------------------------- 8


@pytest.mark.criterion(8)
def test_encoder_properties(record_property):
    p = SdrParams()
    w, k = p.w, p.k
    card = {len(encode(v, p)) for v in range(0, 20_000, 7)}
    worst = 0
    for L in range(0, 50 * w):
        b, r = divmod(L, w)
        c = 0
        if r == w - 1:
            first = set(unique_stream(p, b, w))
            c = sum(1 for i in unique_stream(p, b + 1, w) if i in first)
        slack = overlap(encode(L, p), encode(L + 1, p)) - (w - 1 - c)
        worst = min(worst, slack)
    rng = np.random.default_rng(8)
    far = []
    for _ in range(1000):
        a = int(rng.integers(0, 10**6))
        far.append(overlap(encode(a, p), encode(a + int(rng.integers(2 * w, 10**5)), p)))
    mu = w * w / k
    var = w * (w / k) * ((k - w) / k) * ((k - w) / (k - 1))  # hypergeometric
    z = (np.mean(far) - mu) / np.sqrt(var / len(far))
    record_property("detail", f"cardinality {card}; neighbor bound slack >= {worst}; "
                              f"far overlap mean {np.mean(far):.3f} vs {mu:.3f} (z={z:+.2f})")
    assert card == {w}
    assert worst >= 0
    assert abs(z) <= 3


# ---------------------------------------------------------------- 9


@pytest.mark.criterion(9)
def test_learning(record_property):
    outcomes = [run_until_learned(Machine(DESK, GRID), gen_poly_series(s), LEARN_REP_BOUND)
                for s in SEEDS]
    stats = rep_statistics(outcomes)
    off = CortexConfig.desk(learning=False)
    control = [run_until_learned(ReferenceCortex(off), gen_poly_series(s), LEARN_REP_BOUND)
               for s in SEEDS]
    never = sum(not o.learned for o in control)
    lo, hi = stats.ci95
    record_property("detail", f"{stats.learned_fraction:.0%} of 50 learned within "
                              f"{LEARN_REP_BOUND} passes (mean {stats.mean:.2f}, 95% CI "
                              f"[{lo:.2f}, {hi:.2f}], max {max(o.reps for o in outcomes)}); "
                              f"control never learned: {never}/50")
    assert stats.learned_fraction >= 0.9
    assert never == 50


# ---------------------------------------------------------------- 10


@pytest.mark.criterion(10)
def test_quantized_permanence_fidelity(record_property):
    fine = DESK.with_levels(63)
    reps, tail = 15, 100
    diffs = []
    for s in range(20):
        coarse_res = Machine(DESK, GRID).run(poly_stream(DESK, s, reps))
        fine_res = ReferenceCortex(fine).run(poly_stream(fine, s, reps))
        a = np.mean([r.anomaly for r in coarse_res[-tail:]])
        b = np.mean([r.anomaly for r in fine_res[-tail:]])
        diffs.append(a - b)
    d = float(np.mean(diffs))
    record_property("detail", f"mean anomaly 4-bit minus 64-level over last {tail} epochs of "
                              f"20 series: {d:+.4f} (|d| <= 0.05)")
    assert abs(d) <= 0.05
