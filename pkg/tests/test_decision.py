import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsnn.decision import (
    DEFAULT_BANDS,
    HOLD,
    AwarenessClass,
    Band,
    ClassificationThresholds,
    InformationPacket,
    PacketEmitter,
    RunContext,
    classify,
    matching_bands,
    read_packets,
    write_packets,
)
from qsnn.errors import PacketIOError

FIELD_ORDER = ["id", "t_emit", "class", "level", "correlation", "q", "bloch", "theta", "directive"]


def random_thresholds(rng) -> ClassificationThresholds:
    edges = np.sort(rng.uniform(0, 50, 6))
    while np.any(np.diff(edges) <= 0):
        edges = np.sort(rng.uniform(0, 50, 6))
    classes = [AwarenessClass.REGULAR, AwarenessClass.ENHANCED, AwarenessClass.ELEVATED]
    bands = [Band(edges[2 * i], edges[2 * i + 1], rng.uniform(0.01, 2), rng.uniform(0.01, 0.99),
                  classes[i], f"act{i}") for i in range(3)]
    return ClassificationThresholds(tuple(bands))


class TestClassify:
    def test_regular_example(self):
        assert classify(5, 1.5, 0.90) == (AwarenessClass.REGULAR, "continue generation")

    def test_enhanced_example(self):
        assert classify(15, 0.22, 0.66) == (AwarenessClass.ENHANCED, "probe & read-out")

    @pytest.mark.parametrize("level", [0.0, 0.06, 1.0, 100.0])
    def test_upper_bound_excluded(self, level):
        assert classify(23, level, 0.99) == (AwarenessClass.UNCLASSIFIED, HOLD)

    def test_elevated_inside_band(self):
        assert classify(22.5, 0.06, 0.6) == (AwarenessClass.ELEVATED, "full route & reset")

    @pytest.mark.parametrize("q", [8, 9, 10, 12, 14, 20, 21, 22, 3, 0, 30])
    def test_gaps_and_edges(self, q):
        assert classify(q, 10.0, 0.99)[0] is AwarenessClass.UNCLASSIFIED

    def test_thresholds_strict(self):
        assert classify(5, 1.23, 0.9)[0] is AwarenessClass.UNCLASSIFIED
        assert classify(5, 1.5, 0.85)[0] is AwarenessClass.UNCLASSIFIED
        assert classify(5, 1.2300001, 0.8500001)[0] is AwarenessClass.REGULAR

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            classify(float("nan"), 1.0, 0.5)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0, 40), st.floats(0, 3), st.floats(0, 1), st.floats(1e-6, 1))
    def test_monotone_within_band(self, q, level, corr, delta):
        cls, _ = classify(q, level, corr)
        if cls is not AwarenessClass.UNCLASSIFIED:
            assert classify(q, level + delta, min(1.0, corr + delta))[0] is cls

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0, 40), st.floats(0, 3), st.floats(0, 1))
    def test_pure(self, q, level, corr):
        assert classify(q, level, corr) == classify(q, level, corr)

    def test_randomized_thresholds_disjoint(self, rng):
        for _ in range(200):
            th = random_thresholds(rng)
            for q, level, corr in zip(rng.uniform(0, 50, 50), rng.uniform(0, 3, 50), rng.uniform(0, 1, 50)):
                hits = matching_bands(q, level, corr, th)
                assert len(hits) <= 1
                cls, _ = classify(q, level, corr, th)
                assert cls is (hits[0].cls if hits else AwarenessClass.UNCLASSIFIED)


class TestThresholds:
    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            ClassificationThresholds((DEFAULT_BANDS[0], Band(7, 9, 1, 0.5, AwarenessClass.ENHANCED, "x")))

    def test_sorted(self):
        th = ClassificationThresholds(DEFAULT_BANDS[::-1])
        assert [b.q_low for b in th.bands] == [3, 14, 22]

    @pytest.mark.parametrize("kwargs", [
        dict(q_low=5, q_high=5), dict(level_min=0), dict(corr_min=1.0), dict(corr_min=0.0),
        dict(cls=AwarenessClass.UNCLASSIFIED),
    ])
    def test_band_invariants(self, kwargs):
        base = dict(q_low=1, q_high=2, level_min=0.5, corr_min=0.5, cls=AwarenessClass.REGULAR, action="a")
        with pytest.raises(ValueError):
            Band(**{**base, **kwargs})


def ctx(q=5, level=1.5, corr=0.9, t=1.0):
    return RunContext(t=t, q=q, level=level, correlation=corr, bloch=(0.1, 0.2, 0.3), theta=(1.0, 2.0))


class TestEmitter:
    def test_unclassified_no_packet(self):
        em = PacketEmitter()
        assert em.generate_packet(ctx(q=10)) is None
        assert em.next_id == 0 and em.packets == []

    def test_consecutive_ids(self):
        em = PacketEmitter(next_id=7)
        a = em.generate_packet(ctx())
        em.generate_packet(ctx(q=10))
        b = em.generate_packet(ctx(q=15, level=0.3, corr=0.7))
        assert (a.id, b.id) == (7, 8)
        assert [p.cls for p in em.packets] == [AwarenessClass.REGULAR, AwarenessClass.ENHANCED]

    def test_correlation_clamped(self):
        p = PacketEmitter().generate_packet(ctx(corr=1.04))
        assert p.correlation == 1.0

    def test_field_order(self):
        p = PacketEmitter().generate_packet(ctx())
        assert list(json.loads(p.to_json())) == FIELD_ORDER

    def test_integral_q_is_integer(self):
        assert '"q":5,' in PacketEmitter().generate_packet(ctx(q=5.0)).to_json()
        assert '"q":4.5,' in PacketEmitter().generate_packet(ctx(q=4.5)).to_json()


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@st.composite
def packets(draw):
    return InformationPacket(
        id=draw(st.integers(0, 2 ** 63)),
        t_emit=draw(finite),
        cls=draw(st.sampled_from([AwarenessClass.REGULAR, AwarenessClass.ENHANCED, AwarenessClass.ELEVATED])),
        level=draw(finite),
        correlation=draw(st.floats(0, 1)),
        q=draw(st.one_of(st.integers(0, 2 ** 32 - 1), st.integers(0, 200).map(lambda k: k + 0.5))),
        bloch=tuple(draw(st.lists(st.floats(-1, 1), min_size=3, max_size=3))),
        theta=tuple(draw(st.lists(st.floats(0, 7), max_size=10))),
        directive=draw(st.text(max_size=30)),
    )


class TestSerialization:
    @settings(max_examples=300, deadline=None)
    @given(packets())
    def test_json_round_trip(self, p):
        assert InformationPacket.from_json(p.to_json()) == p

    def test_ndjson_round_trip(self, tmp_path):
        em = PacketEmitter()
        for c in (ctx(), ctx(q=15, level=0.3, corr=0.7), ctx(q=22.5, level=0.1, corr=0.6)):
            em.generate_packet(c)
        path = write_packets(em.packets, tmp_path / "packets.ndjson")
        lines = path.read_text().splitlines()
        assert len(lines) == 3 and all(json.loads(line) for line in lines)
        assert read_packets(path) == em.packets

    def test_write_failure(self, tmp_path):
        with pytest.raises(PacketIOError):
            write_packets([], tmp_path / "missing" / "p.ndjson")

    def test_read_failure(self, tmp_path):
        with pytest.raises(PacketIOError):
            read_packets(tmp_path / "nope.ndjson")

    def test_non_finite_not_serialized(self, tmp_path):
        p = InformationPacket(0, float("nan"), AwarenessClass.REGULAR, 1, 1, 5, (0, 0, 0), (), "x")
        with pytest.raises(PacketIOError):
            write_packets([p], tmp_path / "p.ndjson")
