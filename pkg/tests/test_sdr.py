import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from cortexnoc.errors import ConfigError, UsageError
from cortexnoc.sdr import (Sdr, SdrParams, Xorshift64Star, encode, overlap, quantize, splitmix64,
                           union_sdr, unique_stream)

P = SdrParams()
M64 = (1 << 64) - 1


def ref_xorshift(master, stream):
    """Independent transcription of the documented generator."""
    def mix(z):
        z = (z + 0x9E3779B97F4A7C15) % (1 << 64)
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % (1 << 64)
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % (1 << 64)
        return z ^ (z >> 31)

    x = mix(master ^ mix(stream)) or 1
    while True:
        x ^= x >> 12
        x = (x ^ (x << 25)) & M64
        x ^= x >> 27
        yield (x * 0x2545F4914F6CDD1D) & M64


class TestGenerator:
    def test_splitmix_known_vector(self):
        assert splitmix64(0) == 0xE220A8397B1DCDAF

    @pytest.mark.parametrize("master,stream", [(0, 0), (0, 7), (12345, 99), (M64, 3)])
    def test_matches_documented_recurrence(self, master, stream):
        g = Xorshift64Star(master, stream)
        ref = ref_xorshift(master, stream)
        assert [g.next() for _ in range(50)] == [next(ref) for _ in range(50)]

    def test_unique_stream_rejects_duplicates_in_order(self):
        raw = ref_xorshift(P.master_seed, 5)
        expect = []
        while len(expect) < 40:
            i = next(raw) % P.k
            if i not in expect:
                expect.append(i)
        assert unique_stream(P, 5, 40) == expect


class TestEncode:
    @pytest.mark.parametrize("value", [0, 1, 39, 40, 41, 799, 10**6])
    def test_cardinality(self, value):
        s = encode(value, P)
        assert len(s) == P.w
        assert list(s.active) == sorted(set(s.active))

    def test_deterministic(self):
        assert encode(1234, P) == encode(1234, P)

    def test_master_seed_changes_code(self):
        assert encode(5, P) != encode(5, SdrParams(master_seed=1))

    def test_bucket_start_is_first_set(self):
        # at L = b*w the code is exactly R1 of bucket b
        assert set(encode(3 * P.w, P).active) == set(unique_stream(P, 3, P.w))

    def test_split_counts(self):
        L = 5 * P.w + 13
        r1 = unique_stream(P, 5, P.w)
        r2 = unique_stream(P, 6, P.w, frozenset(r1))
        assert set(encode(L, P).active) == set(r1[13:]) | set(r2[:13])

    def test_neighbor_overlap_against_collision_oracle(self):
        w = P.w
        for L in range(0, 10 * w + 1):
            b, r = divmod(L, w)
            if r == w - 1:
                # next value starts a fresh bucket; collisions are raw indices
                # of stream b+1 that the exclusion rule skipped
                r1 = set(unique_stream(P, b, w))
                c = sum(1 for i in unique_stream(P, b + 1, w) if i in r1)
            else:
                c = 0
            assert overlap(encode(L, P), encode(L + 1, P)) >= w - 1 - c

    def test_far_overlap_is_hypergeometric(self):
        rng = np.random.default_rng(7)
        w, k = P.w, P.k
        ov = []
        for _ in range(1000):
            a = int(rng.integers(0, 10**6))
            d = int(rng.integers(2 * w, 10**5))
            ov.append(overlap(encode(a, P), encode(a + d, P)))
        h = stats.hypergeom(k, w, w)
        assert abs(h.mean() - w * w / k) < 1e-9
        sigma = np.sqrt(h.var() / len(ov))
        assert abs(np.mean(ov) - h.mean()) <= 3 * sigma

    def test_negative_rejected(self):
        with pytest.raises(UsageError):
            encode(-1, P)

    @pytest.mark.parametrize("k,w", [(40, 40), (10, 20), (10, 0)])
    def test_invalid_params(self, k, w):
        with pytest.raises(ConfigError):
            SdrParams(k=k, w=w)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**7))
    def test_property_cardinality_and_range(self, value):
        s = encode(value, P)
        assert len(s) == P.w and 0 <= s.active[0] and s.active[-1] < P.k


class TestOverlapUnion:
    def test_examples(self):
        p = SdrParams(k=16, w=3)
        a = Sdr.from_indices(p, [1, 5, 9])
        b = Sdr.from_indices(p, [5, 9, 11])
        assert overlap(a, b) == 2
        assert overlap(a, a) == 3
        assert overlap(a, Sdr.from_indices(p, [0, 2, 3])) == 0

    def test_width_mismatch(self):
        with pytest.raises(UsageError):
            overlap(encode(1, P), encode(1, SdrParams(k=1000, w=20)))

    def test_union_identity_and_subset(self):
        members = [encode(v * 97, P) for v in range(20)]
        assert union_sdr(members[:1]) == members[0]
        u = union_sdr(members)
        assert len(u) <= sum(len(m) for m in members)
        assert all(overlap(m, u) == len(m) for m in members)

    def test_empty_union(self):
        assert len(union_sdr([], P)) == 0

    def test_union_false_positive_rate(self):
        members = [encode(v * 1000 + 17, P) for v in range(20)]
        u = union_sdr(members).dense()
        rng = np.random.default_rng(3)
        hits = 0
        probes = 100_000
        for _ in range(probes // 2000):
            idx = rng.random((2000, P.k)).argpartition(P.w, axis=1)[:, :P.w]
            hits += int(np.count_nonzero(u[idx].sum(axis=1) >= 30))
        assert hits / probes < 1e-6
        # analytic tail for the same union size agrees it is negligible
        assert stats.hypergeom(P.k, int(u.sum()), P.w).sf(29) < 1e-6

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6), st.integers(0, 10**6))
    def test_overlap_symmetric_and_bounded(self, a, b):
        x, y = encode(a, P), encode(b, P)
        assert overlap(x, y) == overlap(y, x) <= P.w


class TestQuantize:
    def test_identity_ramp(self):
        assert quantize(list(range(130)), 0, 129, 130) == list(range(130))

    def test_constant(self):
        assert quantize([3.0] * 5, 3.0, 3.0) == [0] * 5

    def test_clamps(self):
        assert quantize([-5, 200], 0, 129) == [0, 129]

    def test_subnormal_span(self):
        tiny = 1.1125369292536007e-308
        assert quantize([0.0, tiny, -1e300, 1e300], 0.0, tiny) == [0, 129, 0, 129]

    def test_levels_bound(self):
        with pytest.raises(ConfigError):
            quantize([1], 0, 1, 131)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40))
    def test_monotone(self, xs):
        xs = sorted(xs)
        q = quantize(xs, min(xs), max(xs), 130)
        assert q == sorted(q) and all(0 <= v < 130 for v in q)
