import pytest
from hypothesis import given, settings

from nonfifo.curves import SUB1, SUB2, PacketSequence, UnsupportedInputError, is_feasible
from nonfifo.energy_model import EnergyModel
from nonfifo.nonfifo import (Possibility, check_p1, check_p2, check_p3, detect_non_fifo, fifo_order,
                             merged_sequence, overtaken, overtaken_bits, overtaken_piece, rates_around,
                             remap_time, reserved_sequence, schedule_non_fifo, schedule_p4, split_and_reorder)
from nonfifo.oracle import grid_split_oracle
from nonfifo.taut_string import schedule_fifo

from strategies import nonfifo_sequences

UNIT = EnergyModel.unit_shannon()
GOLDEN = [(2, 0, 4), (1, 1, 2)]


def seq(*rows, **kw):
    return PacketSequence.from_tuples(rows, **kw)


def rows_of(s):
    return [(p.size_bits, p.arrival_s, p.deadline_s) for p in s]


def test_detect():
    assert detect_non_fifo(seq((1, 0, 1), (1, 1, 2), (1, 2, 3))) is None
    assert detect_non_fifo(seq(*GOLDEN)) == 2
    with pytest.raises(UnsupportedInputError):
        detect_non_fifo(PacketSequence.from_tuples([(1, 0, 5), (1, 1, 3), (1, 2, 6), (1, 3, 4)], strict=False))


def test_split_examples():
    s = seq(*GOLDEN)
    assert rows_of(split_and_reorder(s, 2, 0.0)) == [(1, 1, 2), (2, 1, 4)]
    assert rows_of(split_and_reorder(s, 2, 2.0)) == [(2, 0, 2), (1, 1, 2)]
    out = split_and_reorder(s, 2, 0.5)
    assert rows_of(out) == [(0.5, 0, 2), (1, 1, 2), (1.5, 1, 4)]
    assert [p.part for p in out] == [SUB1, 0, SUB2]
    with pytest.raises(ValueError):
        split_and_reorder(s, 2, 2.5)
    with pytest.raises(UnsupportedInputError):
        split_and_reorder(s, 1, 0.0)


def test_split_across_overtaken_run():
    s = seq((1, 0, 5), (2, 1, 6), (1, 2, 3), (1, 3, 7))
    assert overtaken(s, 3) == 2 and overtaken_bits(s, 3) == 3
    assert rows_of(split_and_reorder(s, 3, 0.0)) == [(1, 2, 3), (1, 2, 5), (2, 2, 6), (1, 3, 7)]
    assert rows_of(split_and_reorder(s, 3, 1.5)) == [(1, 0, 3), (0.5, 1, 3), (1, 2, 3), (1.5, 2, 6), (1, 3, 7)]
    assert rows_of(split_and_reorder(s, 3, 3.0)) == rows_of(fifo_order(s))
    piece, j, ahead = overtaken_piece(s, 3, 1)
    assert rows_of(piece) == [(1, 0, 3), (2, 1, 6), (1, 2, 3), (1, 3, 7)] and j == 3 and ahead == 1
    with pytest.raises(UnsupportedInputError):
        check_p1(s, 3)


def test_golden_rejected_by_p1_p2_and_causality():
    s = seq(*GOLDEN)
    assert check_p1(s, 2) is None
    assert check_p2(s, 2) is None
    # merged optimum: rate 0.75, S = 0.5, but 0.75 bits are gone by t=1 and only 0.5 had arrived
    assert schedule_fifo(merged_sequence(s, 2)).segments[0].rate == pytest.approx(0.75)
    assert check_p3(s, 2) is None


def test_golden_optimum_is_reservation():
    d = schedule_non_fifo(seq(*GOLDEN), UNIT)
    assert d.possibility is Possibility.P4
    assert d.split_bits == pytest.approx(2 / 3, abs=1e-12)
    assert flat(d.schedule.segments) == pytest.approx(flat([(0, 1, 2 / 3), (1, 2, 1.0), (2, 4, 2 / 3)]))
    assert d.energy_joules == pytest.approx(7.559526299369, rel=1e-12)
    g = grid_split_oracle(seq(*GOLDEN), 2, UNIT, n_grid=2001)
    assert d.energy_joules <= g.energy_joules * (1 + 1e-6)


def test_p3_fires_with_equal_rate():
    s = seq((2, 0, 4), (1, 1, 3))
    d = schedule_non_fifo(s, UNIT)
    assert d.possibility is Possibility.P3
    assert d.split_bits == pytest.approx(1.25)
    assert [tuple(x) for x in d.schedule.segments] == [(0, 4, 0.75)]
    assert d.energy_joules == pytest.approx(4 * (2 ** 1.5 - 1), rel=1e-12)


def test_p3_rejects_negative_split():
    s = seq((0.1, 0, 4), (2, 2, 2.5))
    assert check_p3(s, 2) is None


def test_p4_example():
    s = seq((0.1, 0, 4), (2, 2, 2.5))
    assert rows_of(reserved_sequence(s, 2)) == [(0.1, 0, 3.5)]
    sched, S = schedule_p4(s, 2)
    r = 0.1 / 3.5
    assert flat(sched.segments) == pytest.approx(flat([(0, 2, r), (2, 2.5, 4.0), (2.5, 4, r)]))
    assert S == pytest.approx(2 * r)
    assert is_feasible(sched, s).ok
    d = schedule_non_fifo(s, UNIT)
    assert d.possibility is Possibility.P4
    assert grid_split_oracle(s, 2, UNIT).possibility_class is Possibility.P3     # interior split


def test_remap():
    assert remap_time(1.0, 2, 3) == 1.0
    assert remap_time(2.5, 2, 3) == 2.0
    assert remap_time(3.0, 2, 3) == 2.0
    assert remap_time(5.0, 2, 3) == 4.0
    s = seq((1, 0, 2.2), (1, 1, 9), (1, 2, 3), (1, 4, 10))
    assert rows_of(reserved_sequence(s, 3)) == [(1, 0, 2), (1, 1, 8), (1, 3, 9)]


def test_p1_fires():
    s = seq((3, 0, 1), (1, 0.5, 4), (0.5, 1, 2))
    d = schedule_non_fifo(s, UNIT)
    assert d.possibility is Possibility.P1 and d.split_bits == 0
    assert [tuple(x) for x in d.schedule.segments] == [(0, 1, 3.0), (1, 4, 0.5)]
    assert grid_split_oracle(s, 3, UNIT).possibility_class is Possibility.P1


def test_p2_fires():
    s = seq((1, 0, 4), (0.5, 1, 2), (6, 2, 4.5))
    d = schedule_non_fifo(s, UNIT)
    assert d.possibility is Possibility.P2 and d.split_bits == 1
    assert [tuple(x) for x in d.schedule.segments] == [(0, 2, 0.75), (2, 4.5, 2.4)]
    assert grid_split_oracle(s, 2, UNIT).possibility_class is Possibility.P2


def test_tight_first_packet_follows_oracle():
    s = seq((1, 0, 1.2), (2, 1, 6), (1, 1.5, 2))
    d = schedule_non_fifo(s, UNIT)
    g = grid_split_oracle(s, 3, UNIT)
    assert d.energy_joules <= g.energy_joules * (1 + 1e-6)
    assert g.possibility_class is Possibility.P3 and d.possibility in (Possibility.P3, Possibility.P4)


def test_fifo_input_rejected():
    with pytest.raises(UnsupportedInputError):
        schedule_non_fifo(seq((1, 0, 1), (1, 1, 2)))


def test_fifo_order_tightens_overtaken():
    assert rows_of(fifo_order(seq(*GOLDEN))) == [(2, 0, 2), (1, 1, 2)]


def test_decision_json():
    d = schedule_non_fifo(seq(*GOLDEN), UNIT).to_dict()
    assert set(d) >= {"possibility", "split_bits", "j", "energy_joules", "schedule"}
    assert d["possibility"] == "P4" and d["j"] == 2


def flat(segments):
    return [x for seg in segments for x in seg]


def _check_decision(s, d):
    j = d.j
    B = overtaken_bits(s, j)
    S = d.split_bits
    assert -1e-12 <= S <= B + 1e-12
    if d.overtaken == 1:
        assert {Possibility.P1: S == 0, Possibility.P2: S == B, Possibility.P3: 0 < S < B,
                Possibility.P4: True}[d.possibility]
    assert is_feasible(d.schedule, s).ok


@given(nonfifo_sequences())
def test_cascade_invariants(s):
    d = schedule_non_fifo(s, UNIT)
    _check_decision(s, d)
    j = d.j
    sched = d.schedule
    if d.possibility is Possibility.P1:
        before, after = rates_around(sched, s[j - 1], s.horizon_s)
        assert before >= after * (1 - 1e-9)
    if d.possibility is Possibility.P2:
        before, after = rates_around(sched, s[j - 1], s.horizon_s)
        assert before <= after * (1 + 1e-9)
    if d.possibility is Possibility.P3:
        r1 = sched.packet_pieces(s[j - 2].id, SUB1)[-1].rate
        r2 = sched.packet_pieces(s[j - 2].id, SUB2)[0].rate
        assert abs(r1 - r2) <= 1e-9 * r1
    merged = schedule_fifo(merged_sequence(s, j)).energy(UNIT)
    assert d.energy_joules >= merged - 1e-9
    # the curve is continuous: the segments add up to every packet
    assert sched.total_bits == pytest.approx(s.total_bits, rel=1e-12)


@given(nonfifo_sequences())
def test_schedule_does_not_depend_on_model(s):
    a = schedule_non_fifo(s, UNIT)
    b = schedule_non_fifo(s, EnergyModel.monomial(3))
    assert a.possibility is b.possibility and a.split_bits == b.split_bits
    assert a.schedule.segments == b.schedule.segments


@settings(max_examples=25)
@given(nonfifo_sequences(max_packets=5))
def test_cascade_matches_grid(s):
    for model in (UNIT, EnergyModel.monomial(2)):
        d = schedule_non_fifo(s, model)
        g = grid_split_oracle(s, d.j, model, n_grid=201)
        assert d.energy_joules <= g.energy_joules * (1 + 1e-6)


@settings(max_examples=25)
@given(nonfifo_sequences(max_packets=6, max_overtake=4))
def test_overtaking_several_matches_grid(s):
    d = schedule_non_fifo(s, UNIT)
    _check_decision(s, d)
    g = grid_split_oracle(s, d.j, UNIT, n_grid=301)
    assert d.energy_joules <= g.energy_joules * (1 + 1e-6)
    assert d.energy_joules <= schedule_fifo(fifo_order(s)).energy(UNIT) * (1 + 1e-12)
