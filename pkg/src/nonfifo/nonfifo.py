"""Optimal offline schedule for a sequence with one non-FIFO packet.

Packet ``P_j`` (1-based position ``j``) is due before its predecessor
``P_{j-1}``.  Splitting ``P_{j-1}`` into ``S`` bits sent before ``P_j`` and
``B_{j-1} - S`` bits sent after it restores a FIFO order, so the problem
reduces to choosing the split factor ``S``.  Four candidates are tried in
order:

* P1, ``S = 0``: accepted when the rate just before ``P_j`` is at least the
  rate just after it;
* P2, ``S = B_{j-1}``: accepted when the rate just before ``P_j`` is at most
  the rate just after it;
* P3, merge ``P_{j-1}`` and ``P_j``: accepted when the merged optimum can be
  split causally with ``0 < S < B_{j-1}``;
* P4, otherwise: ``[t_a_j, t_d_j]`` is reserved for ``P_j`` alone and the
  remaining packets are scheduled with that interval cut out.

"Just before/after" means the rate on the interval adjacent to the first
and last bit of ``P_j``, taken as 0 if the link idles there.

``P_j`` may overtake a run of ``m`` predecessors.  The split factor is then
the number of bits of that run sent before ``P_j``, counted in arrival
order.  Energy is convex in it, and each stretch where it falls inside
one packet of the run is a one-predecessor problem of its own
(:func:`overtaken_piece`), so the cascade is run on those stretches in a
bisection steered by its P1/P2 verdicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .curves import (MERGED, SUB1, SUB2, PacketSequence, Schedule, UnsupportedInputError,
                     attribute_in_order, check_single_violation)
from .energy_model import EnergyModel
from .taut_string import schedule_fifo

RATE_RTOL = 1e-9


class Possibility(str, Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"


@dataclass
class NonFifoDecision:
    """Outcome of the cascade.

    ``split_bits`` counts the overtaken bits sent before ``P_j``;
    ``possibility`` refers to the packet of the overtaken run that holds
    the split point, which is ``P_{j-1}`` unless ``overtaken > 1``.
    """
    possibility: Possibility
    split_bits: float
    j: int
    schedule: Schedule
    sar: PacketSequence
    energy_joules: Optional[float] = None
    overtaken: int = 1

    def to_dict(self) -> dict:
        return {
            "possibility": self.possibility.value,
            "split_bits": self.split_bits,
            "j": self.j,
            "overtaken": self.overtaken,
            "energy_joules": self.energy_joules,
            "schedule": self.schedule.to_dict(),
        }


def detect_non_fifo(seq: PacketSequence) -> Optional[int]:
    """1-based position of the non-FIFO packet, or None for a FIFO sequence."""
    return check_single_violation(seq.packets)


def _require_j(seq: PacketSequence, j: int):
    if not 2 <= j <= len(seq) or seq[j - 1].deadline_s >= seq[j - 2].deadline_s:
        raise UnsupportedInputError(f"position {j} is not a non-FIFO packet of this sequence")


def overtaken(seq: PacketSequence, j: int) -> int:
    """How many immediate predecessors of ``P_j`` are due after it."""
    _require_j(seq, j)
    d = seq[j - 1].deadline_s
    m = 0
    while m < j - 1 and seq[j - 2 - m].deadline_s > d:
        m += 1
    return m


def _require_single(seq: PacketSequence, j: int):
    if overtaken(seq, j) != 1:
        raise UnsupportedInputError(f"packet at position {j} overtakes more than one packet; "
                                    "use schedule_non_fifo")


def overtaken_bits(seq: PacketSequence, j: int) -> float:
    m = overtaken(seq, j)
    return math.fsum(p.size_bits for p in seq.packets[j - 1 - m:j - 1])


def split_and_reorder(seq: PacketSequence, j: int, split_bits: float) -> PacketSequence:
    """Send ``split_bits`` of the overtaken packets before ``P_j`` and the rest after it.

    With one overtaken packet this returns ``P_1..P_{j-2}, sub1, P_j, sub2,
    P_{j+1}..P_N``, where ``sub1`` keeps ``P_{j-1}``'s arrival and takes
    ``P_j``'s deadline and ``sub2`` arrives with ``P_j``.  With several,
    the first ``split_bits`` of the run (in arrival order) are due with
    ``P_j`` and the remainder arrives with it.  Empty sub-packets are left out.
    """
    m = overtaken(seq, j)
    first = j - 1 - m
    run = seq.packets[first:j - 1]
    pj = seq[j - 1]
    total = math.fsum(p.size_bits for p in run)
    slack = 1e-12 * total
    if not -slack <= split_bits <= total + slack:
        raise ValueError(f"split factor {split_bits} outside [0, {total}]")
    S = min(max(split_bits, 0.0), total)
    before, after = [], []
    left = S
    for p in run:
        B = p.size_bits
        take = min(max(left, 0.0), B)
        if 0 < take < B or m == 1:
            if take > 0:
                before.append(p.replace(size_bits=take, deadline_s=pj.deadline_s, part=SUB1))
            if B - take > 0:
                after.append(p.replace(size_bits=B - take, arrival_s=pj.arrival_s, part=SUB2))
        elif take >= B:
            before.append(p.replace(deadline_s=pj.deadline_s))
        else:
            after.append(p.replace(arrival_s=pj.arrival_s))
        left -= take
    packets = seq.packets[:first] + tuple(before) + (pj,) + tuple(after) + seq.packets[j:]
    return PacketSequence(packets, origin=seq.origin, strict=False)


def overtaken_piece(seq: PacketSequence, j: int, k: int):
    """One-predecessor instance for split points inside the ``k``-th overtaken packet.

    Overtaken packets ahead of it are due with ``P_j``; those behind it
    arrive with ``P_j``.  Returns ``(sequence, position of P_j, bits ahead)``.
    """
    m = overtaken(seq, j)
    if not 0 <= k < m:
        raise ValueError(f"overtaken packet index {k} outside [0, {m})")
    first = j - 1 - m
    run = seq.packets[first:j - 1]
    pj = seq[j - 1]
    ahead = tuple(p.replace(deadline_s=pj.deadline_s) for p in run[:k])
    behind = tuple(p.replace(arrival_s=pj.arrival_s) for p in run[k + 1:])
    packets = seq.packets[:first] + ahead + (run[k], pj) + behind + seq.packets[j:]
    return (PacketSequence(packets, origin=seq.origin, strict=False), first + k + 2,
            math.fsum(p.size_bits for p in ahead))


def rates_around(schedule: Schedule, packet, horizon: float) -> tuple[float, float]:
    """Rates on the intervals adjacent to the first and last bit of ``packet``."""
    start, end = schedule.packet_span(packet.id, packet.part)
    return schedule.rate_before(start), schedule.rate_after(end, horizon)


def _endpoint(seq, j, S):
    _require_single(seq, j)
    sar = split_and_reorder(seq, j, S)
    sched = schedule_fifo(sar)
    before, after = rates_around(sched, seq[j - 1], seq.horizon_s)
    return sched, sar, before, after


def check_p1(seq: PacketSequence, j: int, model: Optional[EnergyModel] = None) -> Optional[Schedule]:
    """Schedule for ``S = 0`` if it is optimal, else None."""
    sched, _, before, after = _endpoint(seq, j, 0.0)
    return sched if before >= after * (1 - RATE_RTOL) else None


def check_p2(seq: PacketSequence, j: int, model: Optional[EnergyModel] = None) -> Optional[Schedule]:
    """Schedule for ``S = B_{j-1}`` if it is optimal, else None."""
    sched, _, before, after = _endpoint(seq, j, seq[j - 2].size_bits)
    return sched if before <= after * (1 + RATE_RTOL) else None


def merged_sequence(seq: PacketSequence, j: int) -> PacketSequence:
    """``P_{j-1}`` and ``P_j`` fused into one packet with ``P_{j-1}``'s window."""
    _require_single(seq, j)
    prev, pj = seq[j - 2], seq[j - 1]
    merged = prev.replace(size_bits=prev.size_bits + pj.size_bits, part=MERGED)
    return PacketSequence(seq.packets[:j - 2] + (merged,) + seq.packets[j:], origin=seq.origin, strict=False)


def _bits_before(seq: PacketSequence, j: int) -> float:
    return math.fsum(p.size_bits for p in seq.packets[:j - 2])


def check_p3(seq: PacketSequence, j: int, model: Optional[EnergyModel] = None):
    """``(schedule, S)`` from the merged optimum if it splits feasibly, else None."""
    prev, pj = seq[j - 2], seq[j - 1]
    merged = schedule_fifo(merged_sequence(seq, j))
    before = _bits_before(seq, j)
    S = merged.departed(pj.deadline_s) - before - pj.size_bits
    tol = RATE_RTOL * max(1.0, seq.total_bits)
    # bits sent by t_a_j can only come from P_1..P_{j-2} and the first S bits of P_{j-1}
    if not (0 < S < prev.size_bits and merged.departed(pj.arrival_s) <= before + S + tol):
        return None
    sar = split_and_reorder(seq, j, S)
    verts = merged.vertices()
    return Schedule(list(merged.segments), attribute_in_order(verts, sar.packets), seq.origin), S


def remap_time(t: float, start: float, stop: float) -> float:
    """Cut ``(start, stop]`` out of the time axis."""
    if t <= start:
        return t
    if t <= stop:
        return start
    return t - (stop - start)


def reserved_sequence(seq: PacketSequence, j: int) -> PacketSequence:
    """All packets but ``P_j`` on a time axis with ``[t_a_j, t_d_j]`` removed."""
    _require_j(seq, j)
    pj = seq[j - 1]
    a, d = pj.arrival_s, pj.deadline_s
    rest = [p.replace(arrival_s=remap_time(p.arrival_s, a, d), deadline_s=remap_time(p.deadline_s, a, d))
            for k, p in enumerate(seq.packets) if k != j - 1]
    return PacketSequence(tuple(rest), origin=seq.origin, strict=False)


def schedule_p4(seq: PacketSequence, j: int, model: Optional[EnergyModel] = None):
    """``(schedule, S)`` with ``P_j`` alone on ``[t_a_j, t_d_j]`` at rate ``B_j / (t_d_j - t_a_j)``."""
    _require_single(seq, j)
    prev, pj = seq[j - 2], seq[j - 1]
    a, d = pj.arrival_s, pj.deadline_s
    reduced = schedule_fifo(reserved_sequence(seq, j))
    y_a = reduced.departed(a)
    verts = [(t, y) for t, y in reduced.vertices() if t < a]
    verts += [(a, y_a), (d, y_a + pj.size_bits)]
    verts += [(t + (d - a), y + pj.size_bits) for t, y in reduced.vertices() if t > a]
    S = min(max(y_a - _bits_before(seq, j), 0.0), prev.size_bits)
    sar = split_and_reorder(seq, j, S)
    sched = Schedule.from_vertices(verts, origin=seq.origin)
    sched.pieces = attribute_in_order(verts, sar.packets)
    return sched, S


def _cascade(seq: PacketSequence, j: int) -> NonFifoDecision:
    B = seq[j - 2].size_bits
    sched = check_p1(seq, j)
    if sched is not None:
        return NonFifoDecision(Possibility.P1, 0.0, j, sched, split_and_reorder(seq, j, 0.0))
    sched = check_p2(seq, j)
    if sched is not None:
        return NonFifoDecision(Possibility.P2, B, j, sched, split_and_reorder(seq, j, B))
    found = check_p3(seq, j)
    poss = Possibility.P3
    if found is None:
        found = schedule_p4(seq, j)
        poss = Possibility.P4
    sched, S = found
    return NonFifoDecision(poss, S, j, sched, split_and_reorder(seq, j, S))


def schedule_non_fifo(seq: PacketSequence, model: Optional[EnergyModel] = None) -> NonFifoDecision:
    """Minimum-energy schedule of a sequence with one non-FIFO packet.

    The schedule does not depend on ``model``; it is only used to fill in
    ``energy_joules``.
    """
    j = detect_non_fifo(seq)
    if j is None:
        raise UnsupportedInputError("sequence is FIFO-consistent; use taut_string.schedule_fifo")
    m = overtaken(seq, j)
    if m == 1:
        decision = _cascade(seq, j)
    else:
        # energy is convex in the split factor: P1 on a stretch means the
        # optimum lies at or before it, P2 at or after it
        lo, hi = 0, m - 1
        while True:
            k = (lo + hi) // 2
            piece, jp, ahead = overtaken_piece(seq, j, k)
            found = _cascade(piece, jp)
            if found.possibility is Possibility.P1 and k > lo:
                hi = k - 1
            elif found.possibility is Possibility.P2 and k < hi:
                lo = k + 1
            else:
                break
        decision = NonFifoDecision(found.possibility, ahead + found.split_bits, j, found.schedule,
                                   found.sar, overtaken=m)
    if model is not None:
        decision.energy_joules = decision.schedule.energy(model)
    return decision


def fifo_order(seq: PacketSequence) -> PacketSequence:
    """Arrival-order service: every packet inherits the earliest deadline behind it.

    With one non-FIFO packet this is the split that sends every overtaken
    bit first, i.e. the schedule a plain FIFO scheduler is forced into.
    """
    packets = list(seq.packets)
    due = math.inf
    for k in range(len(packets) - 1, -1, -1):
        if packets[k].deadline_s > due:
            packets[k] = packets[k].replace(deadline_s=due)
        due = packets[k].deadline_s
    return PacketSequence(tuple(packets), origin=seq.origin, strict=False)


def schedule_fifo_baseline(seq: PacketSequence, model: Optional[EnergyModel] = None) -> Schedule:
    return schedule_fifo(fifo_order(seq))
