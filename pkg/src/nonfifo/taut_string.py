"""Minimum-energy departure curve for FIFO packet sequences ("string tautening").

The departure curve must stay between the arrival staircase ``A`` and the
minimum departure staircase ``Dmin``.  Because ``D`` is continuous and
nondecreasing, the constraints only bite at the staircase corners: at every
event time ``t`` the curve must pass through the gate
``[Dmin(t), A(t-)]``.  The taut string through these gates is the optimum for
every convex increasing rate/power function, so no energy model is needed.

The scan keeps, from the current anchor, the tightest admissible slope
interval ``[smin, smax]`` over the gates seen so far.  When a new gate
cannot be reached inside that interval the string bends on the gate corner
that set the violated bound, which becomes the next anchor.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from itertools import accumulate

from .curves import (CumulativeCurve, InfeasibleError, PacketSequence, Schedule,
                     UnsupportedInputError, attribute_in_order, deadline_violations)


@dataclass
class TautStringState:
    """Scan state from one anchor; exposed for tests and debugging."""
    anchor: tuple
    smin: float = -math.inf
    smax: float = math.inf
    lower_vertex: int = -1
    upper_vertex: int = -1


def taut_vertices(ts, lo, hi, start: tuple, until: float = math.inf) -> list:
    """Corner points of the taut string from ``start`` through gates ``(ts[k], [lo[k], hi[k]])``.

    ``ts`` must be increasing and all after ``start[0]``; the last gate must
    be a point (``lo[-1] == hi[-1]``) and is the end of the string.  With a
    finite ``until`` the scan stops once an anchor reaches that time, which
    is enough to execute the curve up to ``until``.
    """
    t0, y0 = start
    verts = [(t0, y0)]
    n = len(ts)
    i = 0
    while i < n:
        if t0 >= until:
            break
        smin, smax = -math.inf, math.inf
        kl = kh = -1
        bend = -1
        for k in range(i, n):
            dt = ts[k] - t0
            sl = (lo[k] - y0) / dt
            sh = (hi[k] - y0) / dt
            if sl > smax:
                bend, y_new = kh, hi[kh]
                break
            if sh < smin:
                bend, y_new = kl, lo[kl]
                break
            if sl >= smin:
                smin, kl = sl, k
            if sh <= smax:
                smax, kh = sh, k
        if bend < 0:
            verts.append((ts[-1], lo[-1]))
            break
        t0, y0 = ts[bend], y_new
        verts.append((t0, y0))
        i = bend + 1
    return verts


def _check_gates(ts, lo, hi, tol, packets=()):
    for t, a, b in zip(ts, lo, hi):
        if a > b + tol:
            due = [p.id for p in packets if p.deadline_s == t]
            who = f" (packet {due[-1]} due)" if due else ""
            raise InfeasibleError(f"envelope empty at t={t:.12g}{who}: need {a:.12g} bits, only {b:.12g} arrived",
                                  time=t, packet_id=due[-1] if due else None)


def string_tautening(arrival: CumulativeCurve, min_dep: CumulativeCurve, start: tuple, end: tuple,
                     tol: float = 1e-9) -> Schedule:
    """Taut string between ``min_dep`` and ``arrival`` from ``start`` to ``end`` (both ``(time, bits)``)."""
    t0, y0 = start
    t1, y1 = end
    if not t1 > t0:
        raise ValueError("end must come after start")
    if not (min_dep(t0) - tol <= y0 <= arrival(t0) + tol):
        raise InfeasibleError(f"start point {start} outside the envelope", time=t0)
    if abs(y1 - min_dep(t1)) > tol or y1 > arrival.left(t1) + tol:
        raise InfeasibleError(f"end point {end} must sit on the minimum departure curve", time=t1)
    times = sorted({t for t in arrival.times.tolist() + min_dep.times.tolist() if t0 < t < t1})
    lo = [min_dep(t) for t in times] + [y1]
    hi = [arrival.left(t) for t in times] + [y1]
    times.append(t1)
    _check_gates(times, lo, hi, tol)
    hi = [max(h, l) for h, l in zip(hi, lo)]
    return Schedule.from_vertices(taut_vertices(times, lo, hi, (t0, y0)), origin=t0)


def fifo_gates(seq: PacketSequence):
    """Gate times and bounds for a sequence, computed from prefix sums in list order."""
    origin = seq.origin
    pk = seq.packets
    sizes = [p.size_bits for p in pk]
    csum = list(accumulate(sizes))
    arr = [p.arrival_s for p in pk]
    dls = sorted(range(len(pk)), key=lambda i: (pk[i].deadline_s, i))
    dsum = list(accumulate(sizes[i] for i in dls))
    dtimes = [pk[i].deadline_s for i in dls]
    times = sorted({t for t in arr if t > origin} | set(dtimes))
    lo, hi = [], []
    for t in times:
        k = bisect.bisect_right(dtimes, t)
        lo.append(dsum[k - 1] if k else 0.0)
        k = bisect.bisect_left(arr, t)
        hi.append(csum[k - 1] if k else 0.0)
    return times, lo, hi


def schedule_fifo(seq: PacketSequence, model=None, until: float = math.inf, tol: float = 1e-9) -> Schedule:
    """Optimal schedule of a FIFO sequence, attributed to packets in list order.

    ``model`` is accepted for interface symmetry; the optimal curve does not
    depend on it.
    """
    if deadline_violations(seq.packets):
        raise UnsupportedInputError("sequence has a non-FIFO packet; use nonfifo.schedule_non_fifo")
    if not len(seq):
        return Schedule([], [], seq.origin)
    times, lo, hi = fifo_gates(seq)
    _check_gates(times, lo, hi, tol * max(1.0, lo[-1]), seq.packets)
    # the final gate is the end point D(T) = Dmin(T)
    hi[-1] = lo[-1]
    hi = [max(h, l) for h, l in zip(hi, lo)]
    verts = taut_vertices(times, lo, hi, (seq.origin, 0.0), until)
    sched = Schedule.from_vertices(verts, origin=seq.origin)
    sched.pieces = attribute_in_order(verts, seq.packets)
    return sched
