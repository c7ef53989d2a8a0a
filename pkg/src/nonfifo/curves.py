"""Packets, cumulative curves, schedules and feasibility checking.

A sequence is described by its arrival curve ``A(t)`` (bits arrived by ``t``)
and its minimum departure curve ``Dmin(t)`` (bits that must have left by
``t``).  Both are right-continuous staircases.  A schedule is a list of
constant-rate segments; its departure curve ``D(t)`` is continuous and
piecewise linear.  A schedule is feasible when ``Dmin <= D <= A`` and every
packet is sent inside its own ``[arrival, deadline]`` window.
"""

from __future__ import annotations

import bisect
import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .energy_model import EnergyModel, segments_energy


class InfeasibleError(ValueError):
    """No feasible departure curve exists (or a given one violates the constraints)."""

    def __init__(self, message: str, time: Optional[float] = None, packet_id: Optional[int] = None):
        super().__init__(message)
        self.time = time
        self.packet_id = packet_id


class UnsupportedInputError(ValueError):
    """Input outside the supported class, e.g. more than one non-FIFO packet."""


# ``part`` distinguishes pieces of a split packet: 0 whole, 1/2 the two
# sub-packets, 3 a merged packet.
WHOLE, SUB1, SUB2, MERGED = 0, 1, 2, 3


@dataclass(frozen=True)
class Packet:
    id: int
    size_bits: float
    arrival_s: float
    deadline_s: float
    part: int = WHOLE

    def __post_init__(self):
        if not self.size_bits > 0:
            raise ValueError(f"packet {self.id}: size must be positive, got {self.size_bits!r}")
        if not self.arrival_s >= 0:
            raise ValueError(f"packet {self.id}: arrival must be >= 0, got {self.arrival_s!r}")
        if not self.deadline_s > self.arrival_s:
            raise InfeasibleError(
                f"packet {self.id}: deadline {self.deadline_s} is not after arrival {self.arrival_s}",
                time=self.deadline_s, packet_id=self.id)

    def replace(self, **changes) -> "Packet":
        fields = dict(id=self.id, size_bits=self.size_bits, arrival_s=self.arrival_s,
                      deadline_s=self.deadline_s, part=self.part)
        fields.update(changes)
        return Packet(**fields)


def deadline_violations(packets: Sequence[Packet]) -> list[int]:
    """1-based positions ``k`` with ``deadline[k] < deadline[k-1]`` in list order."""
    return [k + 1 for k in range(1, len(packets)) if packets[k].deadline_s < packets[k - 1].deadline_s]


def check_single_violation(packets: Sequence[Packet]) -> Optional[int]:
    """Return the 1-based non-FIFO position ``j`` or None; raise if unsupported.

    Supported means one adjacent inversion whose removal leaves the deadlines
    ordered: ``d[j-1] <= d[j+1]``.  The packet may overtake several
    predecessors.
    """
    bad = deadline_violations(packets)
    if not bad:
        return None
    if len(bad) > 1:
        raise UnsupportedInputError(f"{len(bad)} deadline inversions at positions {bad}; "
                                    "only a single non-FIFO packet is supported")
    j = bad[0]
    d = [p.deadline_s for p in packets]
    if j < len(packets) and d[j - 2] > d[j]:
        raise UnsupportedInputError(f"removing position {j} does not leave deadlines ordered")
    return j


@dataclass(frozen=True)
class PacketSequence:
    """Packets in arrival order, observed from ``origin``.

    With ``strict`` (the default) arrivals must be strictly increasing from
    ``origin = 0`` and at most one non-FIFO packet may be present.  Derived
    sequences (split, merged, online backlogs) are built with ``strict=False``,
    which only requires nondecreasing arrivals no earlier than ``origin``.
    """

    packets: tuple
    origin: float = 0.0
    strict: bool = True

    def __post_init__(self):
        object.__setattr__(self, "packets", tuple(self.packets))
        pk = self.packets
        for a, b in zip(pk, pk[1:]):
            if b.arrival_s < a.arrival_s or (self.strict and b.arrival_s == a.arrival_s):
                raise ValueError(f"packets {a.id} and {b.id} are not in strictly increasing arrival order")
        if pk and pk[0].arrival_s < self.origin:
            raise ValueError(f"packet {pk[0].id} arrives before the origin {self.origin}")
        if self.strict:
            if pk and pk[0].arrival_s != self.origin:
                raise ValueError(f"first packet must arrive at the origin {self.origin}")
            check_single_violation(pk)

    def __len__(self):
        return len(self.packets)

    def __iter__(self):
        return iter(self.packets)

    def __getitem__(self, i):
        return self.packets[i]

    @property
    def horizon_s(self) -> float:
        return max((p.deadline_s for p in self.packets), default=self.origin)

    @property
    def total_bits(self) -> float:
        return math.fsum(p.size_bits for p in self.packets)

    def is_fifo(self) -> bool:
        return not deadline_violations(self.packets)

    @classmethod
    def from_tuples(cls, rows: Iterable, origin: float = 0.0, strict: bool = True) -> "PacketSequence":
        """``rows`` of ``(bits, arrival, deadline)``; ids are 1-based positions."""
        return cls(tuple(Packet(i + 1, float(b), float(a), float(d)) for i, (b, a, d) in enumerate(rows)),
                   origin=origin, strict=strict)


class CumulativeCurve:
    """Nondecreasing cumulative curve given by ``(time, bits)`` breakpoints.

    ``kind="staircase"``: right-continuous step function, value ``bits[k]``
    on ``[times[k], times[k+1])`` and 0 before ``times[0]``.
    ``kind="linear"``: linear interpolation between breakpoints, constant
    outside them.
    """

    def __init__(self, times, bits, kind: str = "staircase"):
        self.times = np.asarray(times, dtype=float)
        self.bits = np.asarray(bits, dtype=float)
        if self.times.shape != self.bits.shape or self.times.ndim != 1:
            raise ValueError("times and bits must be 1-d arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("breakpoint times must be strictly increasing")
        if np.any(np.diff(self.bits) < 0):
            raise ValueError("cumulative bits must be nondecreasing")
        if kind not in ("staircase", "linear"):
            raise ValueError(f"unknown curve kind {kind!r}")
        self.kind = kind

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.bits.tolist()))

    @property
    def final(self) -> float:
        return float(self.bits[-1]) if len(self.bits) else 0.0

    def __call__(self, t: float) -> float:
        if not len(self.times):
            return 0.0
        if self.kind == "linear":
            if t <= self.times[0]:
                return float(self.bits[0])
            return float(np.interp(t, self.times, self.bits))
        k = bisect.bisect_right(self.times.tolist(), t) - 1
        return float(self.bits[k]) if k >= 0 else 0.0

    def left(self, t: float) -> float:
        """Left limit ``lim_{s -> t-} curve(s)``."""
        if self.kind == "linear" or not len(self.times):
            return self(t)
        k = bisect.bisect_left(self.times.tolist(), t) - 1
        return float(self.bits[k]) if k >= 0 else 0.0

    def __repr__(self):
        return f"CumulativeCurve({self.kind}, {self.breakpoints})"


def _staircase(times: Iterable[float], sizes: Iterable[float]) -> CumulativeCurve:
    acc: dict[float, float] = {}
    for t, b in zip(times, sizes):
        acc[t] = acc.get(t, 0.0) + b
    ts = sorted(acc)
    return CumulativeCurve(ts, np.cumsum([acc[t] for t in ts]) if ts else [], "staircase")


def arrival_curve(seq: PacketSequence) -> CumulativeCurve:
    return _staircase((p.arrival_s for p in seq), (p.size_bits for p in seq))


def min_departure_curve(seq: PacketSequence) -> CumulativeCurve:
    """Bits that must have departed by ``t``: sizes of all packets due at or before ``t``."""
    return _staircase((p.deadline_s for p in seq), (p.size_bits for p in seq))


class Segment(NamedTuple):
    t0: float
    t1: float
    rate: float


class Piece(NamedTuple):
    """Bits of one packet sent at a constant rate over ``[t0, t1]``."""
    packet_id: int
    part: int
    t0: float
    t1: float
    bits: float

    @property
    def rate(self) -> float:
        return self.bits / (self.t1 - self.t0) if self.t1 > self.t0 else math.inf


def _time_eps(t: float) -> float:
    return 1e-12 * max(1.0, abs(t))


@dataclass
class Schedule:
    """Piecewise-constant-rate transmission plan with per-packet attribution."""

    segments: list = field(default_factory=list)
    pieces: list = field(default_factory=list)
    origin: float = 0.0

    @classmethod
    def from_vertices(cls, vertices: Sequence[tuple[float, float]], origin: Optional[float] = None) -> "Schedule":
        """Segments of a continuous departure curve given by its corner points; idle spans are dropped."""
        segs = []
        for (ta, ya), (tb, yb) in zip(vertices, vertices[1:]):
            if tb > ta and yb > ya:
                segs.append(Segment(ta, tb, (yb - ya) / (tb - ta)))
        o = vertices[0][0] if origin is None and len(vertices) else (origin or 0.0)
        return cls(segs, [], o)

    @property
    def total_bits(self) -> float:
        return math.fsum(s.rate * (s.t1 - s.t0) for s in self.segments)

    @property
    def end_time(self) -> float:
        return self.segments[-1].t1 if self.segments else self.origin

    def energy(self, model: EnergyModel) -> float:
        return segments_energy(model, self.segments)

    def vertices(self) -> list[tuple[float, float]]:
        pts = [(self.origin, 0.0)]
        y = 0.0
        for s in self.segments:
            if s.t0 > pts[-1][0]:
                pts.append((s.t0, y))
            y += s.rate * (s.t1 - s.t0)
            pts.append((s.t1, y))
        return pts

    def departure_curve(self) -> CumulativeCurve:
        pts = self.vertices()
        ts, ys = [], []
        for t, y in pts:
            if ts and t <= ts[-1]:
                ys[-1] = max(ys[-1], y)
                continue
            ts.append(t)
            ys.append(y)
        return CumulativeCurve(ts, ys, "linear")

    def departed(self, t: float) -> float:
        y = 0.0
        for s in self.segments:
            if t <= s.t0:
                break
            y += s.rate * (min(t, s.t1) - s.t0)
        return y

    def _snap(self, t: float) -> float:
        eps = _time_eps(t)
        for s in self.segments:
            if abs(s.t0 - t) <= eps:
                return s.t0
            if abs(s.t1 - t) <= eps:
                return s.t1
        return t

    def rate_before(self, t: float) -> float:
        """Rate on ``(t - dt, t)``; 0 when idle, +inf when ``t`` is the origin."""
        t = self._snap(t)
        if t <= self.origin + _time_eps(self.origin):
            return math.inf
        for s in self.segments:
            if s.t0 < t <= s.t1:
                return s.rate
        return 0.0

    def rate_after(self, t: float, horizon: float) -> float:
        """Rate on ``(t, t + dt)``; 0 when idle, +inf when ``t`` is the horizon."""
        t = self._snap(t)
        if t >= horizon - _time_eps(horizon):
            return math.inf
        for s in self.segments:
            if s.t0 <= t < s.t1:
                return s.rate
        return 0.0

    def packet_pieces(self, packet_id: int, part: Optional[int] = None) -> list:
        return [p for p in self.pieces if p.packet_id == packet_id and (part is None or p.part == part)]

    def packet_span(self, packet_id: int, part: Optional[int] = None) -> tuple[float, float]:
        """First and last instant carrying bits of the packet (or sub-packet)."""
        ps = self.packet_pieces(packet_id, part)
        if not ps:
            raise KeyError(f"no bits attributed to packet {packet_id} part {part}")
        return min(p.t0 for p in ps), max(p.t1 for p in ps)

    def completion_times(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for p in self.pieces:
            out[p.packet_id] = max(out.get(p.packet_id, -math.inf), p.t1)
        return out

    def bits_by_packet(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for p in self.pieces:
            out[p.packet_id] = out.get(p.packet_id, 0.0) + p.bits
        return out

    def to_dict(self) -> dict:
        return {
            "origin": self.origin,
            "segments": [{"t0": s.t0, "t1": s.t1, "rate": s.rate} for s in self.segments],
            "attribution": [{"packet_id": p.packet_id, "part": p.part, "t0": p.t0, "t1": p.t1, "bits": p.bits}
                            for p in self.pieces],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Schedule":
        segs = [Segment(float(s["t0"]), float(s["t1"]), float(s["rate"])) for s in data.get("segments", [])]
        pieces = [Piece(int(p["packet_id"]), int(p.get("part", 0)), float(p["t0"]), float(p["t1"]),
                        float(p["bits"])) for p in data.get("attribution", [])]
        return cls(segs, pieces, float(data.get("origin", 0.0)))


def attribute_in_order(vertices: Sequence[tuple[float, float]], packets: Sequence[Packet]) -> list:
    """Split a departure curve into pieces, serving ``packets`` strictly in list order.

    Correct for sequences whose list order is also the deadline order (FIFO
    sequences, split-and-reordered sequences).
    """
    pieces = []
    bounds = np.cumsum([p.size_bits for p in packets]).tolist()
    # rounding slivers below eps are folded into the neighbouring piece
    eps = 1e-12 * max(1.0, bounds[-1] if bounds else 0.0)
    k = 0
    lo = 0.0
    for (ta, ya), (tb, yb) in zip(vertices, vertices[1:]):
        if not (yb > ya and tb > ta):
            continue
        slope = (yb - ya) / (tb - ta)
        while k < len(packets):
            start = max(lo, ya)
            stop = min(bounds[k], yb)
            if stop > start + eps:
                t0 = ta + (start - ya) / slope
                t1 = tb if stop == yb else ta + (stop - ya) / slope
                pieces.append(Piece(packets[k].id, packets[k].part, t0, t1, stop - start))
            if bounds[k] <= yb + eps:
                lo = bounds[k]
                k += 1
            else:
                break
    return pieces


def attribute_edf(schedule: Schedule, packets: Sequence[Packet], tol: float = 1e-9):
    """Preemptive earliest-deadline-first attribution of a rate profile.

    Ties go to the earlier list position.  Returns ``(pieces, remaining,
    wasted)`` where ``remaining[i]`` is the unsent part of packet ``i`` and
    ``wasted`` lists ``(time, bits)`` sent while no packet was waiting.
    """
    order = sorted(range(len(packets)), key=lambda i: (packets[i].arrival_s, i))
    remaining = [p.size_bits for p in packets]
    pieces, wasted = [], []
    ready: list = []
    nxt = 0
    for seg in schedule.segments:
        if seg.rate <= 0:
            continue
        t = seg.t0
        while t < seg.t1:
            while nxt < len(order) and packets[order[nxt]].arrival_s <= t + _time_eps(t):
                i = order[nxt]
                heapq.heappush(ready, (packets[i].deadline_s, i))
                nxt += 1
            next_arrival = packets[order[nxt]].arrival_s if nxt < len(order) else math.inf
            if not ready:
                stop = min(seg.t1, next_arrival)
                wasted.append((t, seg.rate * (stop - t)))
                t = stop
                continue
            _, i = ready[0]
            t_done = t + remaining[i] / seg.rate
            stop = min(seg.t1, next_arrival, t_done)
            bits = remaining[i] if stop == t_done else seg.rate * (stop - t)
            if stop > t:
                pieces.append(Piece(packets[i].id, packets[i].part, t, stop, bits))
            remaining[i] -= bits
            if remaining[i] <= tol:
                remaining[i] = 0.0
                heapq.heappop(ready)
            t = stop
    return pieces, remaining, wasted


@dataclass
class FeasibilityReport:
    ok: bool
    violations: list = field(default_factory=list)
    first_violation_time: Optional[float] = None

    def __bool__(self):
        return self.ok

    def add(self, time: float, message: str):
        self.ok = False
        self.violations.append((time, message))
        if self.first_violation_time is None or time < self.first_violation_time:
            self.first_violation_time = time


def is_feasible(schedule: Schedule, seq: PacketSequence, tol: float = 1e-9) -> FeasibilityReport:
    """Check causality and deadlines of ``schedule`` for ``seq``.

    Three independent checks: the aggregate envelope ``Dmin <= D <= A`` at
    every breakpoint, an EDF re-attribution that must meet each packet's own
    window, and (if the schedule carries one) its own attribution.
    """
    report = FeasibilityReport(True)
    last = -math.inf
    for s in schedule.segments:
        if s.t1 < s.t0 or s.t0 < last or s.rate < 0:
            report.add(s.t0, f"malformed segment {tuple(s)}")
        last = max(last, s.t1)
    if not report.ok:
        return report

    A, Dmin = arrival_curve(seq), min_departure_curve(seq)
    D = schedule.departure_curve() if schedule.segments else None
    times = sorted(set(A.times.tolist()) | set(Dmin.times.tolist()) |
                   (set(D.times.tolist()) if D is not None else set()))
    for t in times:
        d = D(t) if D is not None else 0.0
        if d < Dmin(t) - tol:
            report.add(t, f"deadline: departed {d:.12g} < required {Dmin(t):.12g} at t={t:.12g}")
        # D is continuous, so it must stay below the level reached just before t
        if d > A.left(t) + tol:
            report.add(t, f"causality: departed {d:.12g} > arrived {A.left(t):.12g} before t={t:.12g}")
    total = seq.total_bits
    if abs(schedule.total_bits - total) > tol:
        report.add(schedule.end_time, f"schedule sends {schedule.total_bits:.12g} bits, sequence holds {total:.12g}")

    pieces, remaining, wasted = attribute_edf(schedule, seq.packets, tol)
    for t, bits in wasted:
        if bits > tol:
            report.add(t, f"causality: {bits:.12g} bits sent from t={t:.12g} with no packet waiting")
    late: dict[int, float] = {}
    deadline = {(q.id, q.part): q.deadline_s for q in seq.packets}
    for p in pieces:
        d = deadline[(p.packet_id, p.part)]
        if p.t1 > d:
            late[p.packet_id] = late.get(p.packet_id, 0.0) + p.bits * (p.t1 - max(p.t0, d)) / (p.t1 - p.t0)
    for q, rem in zip(seq.packets, remaining):
        missing = rem + late.get(q.id, 0.0)
        if missing > tol:
            report.add(q.deadline_s, f"packet {q.id} misses its deadline {q.deadline_s:.12g} by {missing:.12g} bits")

    if schedule.pieces:
        _check_pieces(schedule, seq, tol, report)
    return report


def _check_pieces(schedule: Schedule, seq: PacketSequence, tol: float, report: FeasibilityReport):
    window = {q.id: (q.arrival_s, q.deadline_s) for q in seq.packets}
    size = {q.id: q.size_bits for q in seq.packets}
    sent: dict[int, float] = {}
    seg_starts = [s.t0 for s in schedule.segments]
    for p in schedule.pieces:
        if p.packet_id not in window:
            report.add(p.t0, f"attribution names unknown packet {p.packet_id}")
            continue
        a, d = window[p.packet_id]
        eps = _time_eps(max(abs(a), abs(d)))
        if p.t0 < a - eps:
            report.add(p.t0, f"causality: packet {p.packet_id} sent at t={p.t0:.12g} before arrival {a:.12g}")
        if p.t1 > d + eps:
            report.add(d, f"deadline: packet {p.packet_id} still sent at t={p.t1:.12g} after deadline {d:.12g}")
        k = bisect.bisect_right(seg_starts, p.t0 + _time_eps(p.t0)) - 1
        seg = schedule.segments[k] if k >= 0 else None
        if seg is None or p.t1 > seg.t1 + _time_eps(seg.t1) or \
                abs(p.bits - seg.rate * (p.t1 - p.t0)) > tol + 1e-9 * p.bits:
            report.add(p.t0, f"attribution piece {tuple(p)} does not match the rate profile")
        sent[p.packet_id] = sent.get(p.packet_id, 0.0) + p.bits
    for pid, b in size.items():
        if abs(sent.get(pid, 0.0) - b) > tol:
            report.add(window[pid][1], f"attribution sends {sent.get(pid, 0.0):.12g} of packet {pid}'s {b:.12g} bits")


# JSON interchange

def sequence_from_dict(data: dict, strict: bool = True) -> PacketSequence:
    rows = data["packets"]
    packets = tuple(Packet(int(r["id"]), float(r["bits"]), float(r["arrival"]), float(r["deadline"]))
                    for r in rows)
    return PacketSequence(packets, origin=float(data.get("origin", 0.0)), strict=strict)


def sequence_to_dict(seq: PacketSequence) -> dict:
    return {"packets": [{"id": p.id, "bits": p.size_bits, "arrival": p.arrival_s, "deadline": p.deadline_s}
                        for p in seq]}


def load_workload(path) -> PacketSequence:
    with open(path) as fh:
        return sequence_from_dict(json.load(fh))


def load_schedule(path) -> Schedule:
    with open(path) as fh:
        return Schedule.from_dict(json.load(fh))
