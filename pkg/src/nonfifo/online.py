"""Causal rescheduling: rerun the offline optimum whenever a packet arrives.

At each arrival the plan adopted at the previous arrival is executed up to
now, whatever is left of each backlog packet is treated as a fresh packet
arriving now, and a new plan is computed for that backlog plus the new
packet.  Two planners are supported:

``nonfifo``
    the new packet may be due before backlog packets; the single-inversion
    case goes through :func:`schedule_non_fifo`, anything worse is EDF-sorted
    (and counted as a conflict);
``fifo``
    service stays in arrival order, so every packet inherits the earliest
    deadline queued behind it.

Because every pending bit is available at the replanning instant, the
arrival curve never binds and the FIFO optimum is the least concave
majorant of the deadline staircase.  That shortcut is used for the FIFO
replans; it coincides with :func:`schedule_fifo` on such sequences.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Optional

from .curves import (InfeasibleError, Packet, PacketSequence, Schedule, Segment, UnsupportedInputError,
                     attribute_in_order)
from .energy_model import EnergyModel
from .nonfifo import schedule_non_fifo

MODES = ("nonfifo", "fifo")


class Pending(NamedTuple):
    """A backlog entry: what is left of a packet and the window it is planned with."""
    id: int
    part: int
    size_bits: float
    deadline_s: float


@dataclass
class OnlineState:
    """Scheduler state at ``now_s``.

    ``backlog`` lists :class:`Pending` entries in planned service order and
    ``plan`` holds the corner points of the adopted departure curve, measured
    from ``now_s``.  With ``record`` off no per-packet attribution or event
    trace is kept, which is all the Monte-Carlo harness needs.
    """
    now_s: float = 0.0
    mode: str = "nonfifo"
    backlog: list = field(default_factory=list)
    plan: list = field(default_factory=list)
    executed: list = field(default_factory=list)
    executed_pieces: list = field(default_factory=list)
    conflicts: int = 0
    misses: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    record: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown online mode {self.mode!r}; expected one of {MODES}")

    @property
    def plan_schedule(self) -> Schedule:
        sched = Schedule.from_vertices(self.plan, origin=self.now_s) if self.plan else Schedule([], [], self.now_s)
        if self.plan:
            sched.pieces = attribute_in_order(self.plan, self.backlog)
        return sched


def concave_majorant(now: float, deadlines, sizes, until: float = math.inf) -> list:
    """Corner points of the minimum-energy curve when every bit is available at ``now``.

    ``deadlines`` must be nondecreasing and after ``now``.  With a finite
    ``until`` the scan stops at the first corner at or beyond it.
    """
    pts = []
    y = 0.0
    for d, b in zip(deadlines, sizes):
        y += b
        if pts and pts[-1][0] == d:
            pts[-1] = (d, y)
        else:
            pts.append((d, y))
    verts = [(now, 0.0)]
    t0, y0 = now, 0.0
    i, n = 0, len(pts)
    while i < n and t0 < until:
        best, kb = -math.inf, -1
        for k in range(i, n):
            s = (pts[k][1] - y0) / (pts[k][0] - t0)
            if s >= best:
                best, kb = s, k
        t0, y0 = pts[kb]
        verts.append((t0, y0))
        i = kb + 1
    return verts


def _departed(verts, t) -> float:
    if t <= verts[0][0]:
        return 0.0
    if t >= verts[-1][0]:
        return verts[-1][1]
    k = bisect.bisect_right([v[0] for v in verts], t)
    (ta, ya), (tb, yb) = verts[k - 1], verts[k]
    return ya + (yb - ya) * (t - ta) / (tb - ta)


def _clip(verts, t):
    """Corner points on ``[start, t]`` and on ``[t, end]``."""
    y = _departed(verts, t)
    head = [v for v in verts if v[0] < t] + [(t, y)]
    tail = [(t, y)] + [v for v in verts if v[0] > t]
    return head, tail


def advance(state: OnlineState, t: float) -> OnlineState:
    """Execute the current plan on ``[now, t]``."""
    return _advance(copy_state(state), t)


def _advance(state: OnlineState, t: float) -> OnlineState:
    if t < state.now_s:
        raise ValueError(f"cannot advance backwards from {state.now_s} to {t}")
    if not state.plan or t == state.now_s:
        state.now_s = t
        return state
    head, tail = _clip(state.plan, t)
    for (ta, ya), (tb, yb) in zip(head, head[1:]):
        if tb > ta and yb > ya:
            state.executed.append(Segment(ta, tb, (yb - ya) / (tb - ta)))
            if state.record:
                state.trace.append(("segment", ta, tb, (yb - ya) / (tb - ta)))
    if state.record:
        state.executed_pieces.extend(attribute_in_order(head, state.backlog))
    sent = head[-1][1]
    backlog = state.backlog
    k = 0
    while k < len(backlog) and sent > 0:
        p = backlog[k]
        if sent >= p.size_bits - 1e-9 * max(1.0, p.size_bits):
            sent -= p.size_bits
            k += 1
        else:
            backlog[k] = p._replace(size_bits=p.size_bits - sent)
            sent = 0.0
    del backlog[:k]
    y_t = tail[0][1]
    state.plan = [(tt, yy - y_t) for tt, yy in tail]
    state.now_s = t
    return state


def _as_packet(p: Pending, now: float) -> Packet:
    return Packet(p.id, p.size_bits, now, p.deadline_s, p.part)


def replan(state: OnlineState, new_packet: Optional[Packet] = None, until: float = math.inf) -> OnlineState:
    """Plan backlog plus ``new_packet`` from ``now``; no execution happens.

    ``until`` lets the planner stop once the curve is known up to that time
    (the next arrival).
    """
    return _replan(copy_state(state), new_packet, until)


def _replan(state: OnlineState, new_packet: Optional[Packet], until: float) -> OnlineState:
    now = state.now_s
    misses = state.misses
    pending = []
    for p in state.backlog:
        if p.deadline_s <= now:
            misses = misses + [(p.id, p.deadline_s, p.size_bits)]
            if state.record:
                state.trace.append(("miss", now, p.id, p.size_bits))
        else:
            pending.append(p)
    if new_packet is not None:
        if not new_packet.deadline_s > now:
            raise InfeasibleError(f"packet {new_packet.id} is due at {new_packet.deadline_s}, not after now={now}",
                                  time=now, packet_id=new_packet.id)
        pending.append(Pending(new_packet.id, new_packet.part, new_packet.size_bits, new_packet.deadline_s))
    conflicts = state.conflicts
    state.misses = misses
    if not pending:
        state.backlog, state.plan = [], []
        return state

    planner = "fifo"
    inverted = any(b.deadline_s < a.deadline_s for a, b in zip(pending, pending[1:]))
    if state.mode == "fifo" and inverted:
        due = math.inf
        for k in range(len(pending) - 1, -1, -1):
            if pending[k].deadline_s > due:
                pending[k] = pending[k]._replace(deadline_s=due)
            due = pending[k].deadline_s
    elif inverted:
        seq = PacketSequence(tuple(_as_packet(p, now) for p in pending), origin=now, strict=False)
        try:
            decision = schedule_non_fifo(seq)
            pending = [Pending(p.id, p.part, p.size_bits, p.deadline_s) for p in decision.sar]
            planner = f"nonfifo-{decision.possibility.value}"
            plan = decision.schedule.vertices()
        except UnsupportedInputError:
            conflicts += 1
            pending.sort(key=lambda p: p.deadline_s)
            planner = "edf"
    if not planner.startswith("nonfifo"):
        plan = concave_majorant(now, [p.deadline_s for p in pending], [p.size_bits for p in pending], until)
    if state.record:
        state.trace.append(("replan", now, planner, len(pending)))
    state.backlog, state.plan, state.conflicts = pending, plan, conflicts
    return state


def online_step(state: OnlineState, new_packet: Packet, model: Optional[EnergyModel] = None,
                until: float = math.inf) -> OnlineState:
    """Execute up to ``new_packet``'s arrival and replan with it included."""
    return _step(copy_state(state), new_packet, until)


def _step(state: OnlineState, new_packet: Packet, until: float) -> OnlineState:
    if new_packet.arrival_s < state.now_s:
        raise ValueError(f"packet {new_packet.id} arrives at {new_packet.arrival_s}, before now={state.now_s}")
    state = _advance(state, new_packet.arrival_s)
    if state.record:
        state.trace.append(("arrival", new_packet.arrival_s, new_packet.id, new_packet.size_bits))
    try:
        return _replan(state, new_packet, until)
    except InfeasibleError as exc:
        if state.record:
            state.trace.append(("miss", state.now_s, new_packet.id, new_packet.size_bits))
        state.misses = state.misses + [(new_packet.id, new_packet.deadline_s, str(exc))]
        return _replan(state, None, until)


def feed(packets: Iterable[Packet], mode: str = "nonfifo", origin: float = 0.0,
         state: Optional[OnlineState] = None, record: bool = True) -> OnlineState:
    """Run arrivals through the scheduler without draining; useful to share a common prefix."""
    packets = list(packets)
    if state is None:
        state = OnlineState(now_s=origin, mode=mode, record=record)
    else:
        state = copy_state(state)
        state.mode = mode
    for k, p in enumerate(packets):
        nxt = packets[k + 1].arrival_s if k + 1 < len(packets) else math.inf
        state = _step(state, p, nxt)
    return state


def finish(state: OnlineState) -> OnlineState:
    """Drain the backlog: plan to the end and execute it."""
    state = copy_state(state)
    if state.backlog and (not state.plan or state.plan[-1][1] < sum(p.size_bits for p in state.backlog) - 1e-9):
        state = _replan(state, None, math.inf)
    end = state.plan[-1][0] if state.plan else state.now_s
    return _advance(state, max(end, state.now_s))


def copy_state(state: OnlineState) -> OnlineState:
    return replace(state, backlog=list(state.backlog), plan=list(state.plan), executed=list(state.executed),
                   executed_pieces=list(state.executed_pieces), misses=list(state.misses),
                   trace=list(state.trace))


@dataclass
class OnlineResult:
    schedule: Schedule
    energy_joules: Optional[float]
    conflicts: int
    misses: list
    trace: list


def run_online(packets: Iterable[Packet], model: Optional[EnergyModel] = None, mode: str = "nonfifo",
               origin: float = 0.0, record: bool = True) -> OnlineResult:
    """Feed time-ordered ``packets`` to the online scheduler and drain the backlog."""
    state = finish(feed(packets, mode=mode, origin=origin, record=record))
    sched = Schedule(state.executed, state.executed_pieces, origin)
    energy = sched.energy(model) if model is not None else None
    return OnlineResult(sched, energy, state.conflicts, state.misses, state.trace)


def write_trace(trace: list, path) -> None:
    """Event trace as CSV with columns ``event,t0,t1,value,detail``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["event", "t0", "t1", "value", "detail"])
        for row in trace:
            kind = row[0]
            if kind == "segment":
                w.writerow([kind, repr(row[1]), repr(row[2]), repr(row[3]), ""])
            elif kind == "replan":
                w.writerow([kind, repr(row[1]), "", row[3], row[2]])
            else:
                w.writerow([kind, repr(row[1]), "", repr(row[3]), f"packet {row[2]}"])
