"""Brute-force cross-checks for the schedulers.

``grid_split_oracle`` searches the split factor exhaustively.
``discrete_convex_oracle`` solves the time-discretized energy problem
directly with a log-barrier Newton method, never touching the taut string.
Both are slow by design.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solveh_banded

from .curves import InfeasibleError, Packet, PacketSequence, UnsupportedInputError, arrival_curve, min_departure_curve
from .energy_model import EnergyModel
from .nonfifo import Possibility, detect_non_fifo, overtaken_bits, split_and_reorder
from .taut_string import schedule_fifo

TIE_RTOL = 1e-9


@dataclass
class GridSplitResult:
    split_bits: float
    energy_joules: float
    grid: np.ndarray
    energies: np.ndarray

    @property
    def possibility_class(self) -> Possibility:
        """Endpoint 0 -> P1, endpoint B -> P2, otherwise P3 (standing for P3 or P4).

        Endpoints whose energy ties the minimum win, in cascade order.
        """
        best = np.nanmin(self.energies)
        close = lambda e: e <= best * (1 + TIE_RTOL) + 1e-300
        if close(self.energies[0]):
            return Possibility.P1
        if close(self.energies[-1]):
            return Possibility.P2
        return Possibility.P3


def grid_split_oracle(seq: PacketSequence, j: Optional[int], model: EnergyModel, n_grid: int = 2001) -> GridSplitResult:
    """Minimize energy over ``S = k B / (n_grid - 1)`` by solving every split.

    ``B`` is the size of ``P_{j-1}``, or of the whole overtaken run.
    """
    if n_grid < 2:
        raise ValueError("n_grid must be at least 2")
    if j is None:
        j = detect_non_fifo(seq)
    if j is None or not 2 <= j <= len(seq) or seq[j - 1].deadline_s >= seq[j - 2].deadline_s:
        raise UnsupportedInputError(f"no non-FIFO packet at position {j}")
    B = overtaken_bits(seq, j)
    grid = np.linspace(0.0, B, n_grid)
    energies = np.full(n_grid, np.nan)
    for k, S in enumerate(grid):
        try:
            energies[k] = schedule_fifo(split_and_reorder(seq, j, float(S))).energy(model)
        except InfeasibleError:
            pass
    if np.all(np.isnan(energies)):
        raise InfeasibleError("every split factor on the grid is infeasible")
    k = int(np.nanargmin(energies))
    return GridSplitResult(float(grid[k]), float(energies[k]), grid, energies)


# discretized convex program

def _event_grid(seq: PacketSequence, n_steps: int):
    events = sorted({seq.origin} | {p.arrival_s for p in seq} | {p.deadline_s for p in seq})
    span = events[-1] - events[0]
    counts = [max(1, int(round(n_steps * (b - a) / span))) for a, b in zip(events, events[1:])]
    return events, counts


def _bounds(seq: PacketSequence, events, counts):
    """Grid times and the cumulative bounds every grid point must respect."""
    A, Dmin = arrival_curve(seq), min_departure_curve(seq)
    ts, lo, hi = [], [], []
    for (a, b), m in zip(zip(events, events[1:]), counts):
        cap = A(a)
        for i in range(1, m + 1):
            t = b if i == m else a + (b - a) * i / m
            ts.append(t)
            lo.append(Dmin(t) if i == m else Dmin(a))
            hi.append(cap)
    lo, hi = np.array(lo), np.array(hi)
    lo[-1] = hi[-1] = seq.total_bits
    if np.any(lo > hi + 1e-12):
        k = int(np.argmax(lo > hi + 1e-12))
        raise InfeasibleError(f"bounds cross at t={ts[k]:.12g}", time=ts[k])
    return np.array(ts), lo, np.maximum(hi, lo)


class _Barrier:
    """Log-barrier form of the discretized program.

    Variables are the cumulative departures ``y`` at the grid times; ``y``
    before the first step is 0.  Points whose bounds coincide are fixed.
    Energy, bound and monotonicity terms all couple neighbours only, so the
    Hessian is tridiagonal and a Newton step is one banded solve.
    """

    def __init__(self, t0, ts, lo, hi, model, fix_tol):
        self.dt = np.diff(np.concatenate(([t0], ts)))
        self.lo, self.hi, self.model = lo, hi, model
        self.free = hi - lo > fix_tol
        fixed_prev = np.concatenate(([True], ~self.free[:-1]))
        # an increment needs a barrier unless both of its ends are fixed
        self.moving = self.free | ~fixed_prev
        self.m = 2 * int(self.free.sum()) + int(self.moving.sum())

    def start(self) -> np.ndarray:
        """Strictly feasible point: ``lo + theta (hi - lo)`` with ``theta`` rising along each free run."""
        y = self.lo.copy()
        idx = np.flatnonzero(self.free)
        if idx.size:
            run = np.concatenate(([0], np.cumsum(np.diff(idx) > 1)))
            theta = np.empty(idx.size)
            for r in np.unique(run):
                k = run == r
                theta[k] = np.linspace(0.25, 0.75, int(k.sum()) + 2)[1:-1]
            y[idx] += theta * (self.hi[idx] - self.lo[idx])
        return y

    def increments(self, y):
        return np.diff(np.concatenate(([0.0], y)))

    def energy(self, y) -> float:
        inc = self.increments(y)
        with np.errstate(over="ignore"):
            return float(np.sum(self.model.power(np.maximum(inc, 0.0) / self.dt) * self.dt))

    def value(self, y, t) -> float:
        inc = self.increments(y)
        f = self.free
        if np.any(inc[self.moving] <= 0) or np.any(y[f] <= self.lo[f]) or np.any(y[f] >= self.hi[f]):
            return math.inf
        return (t * self.energy(y) - np.sum(np.log(inc[self.moving]))
                - np.sum(np.log(y[f] - self.lo[f])) - np.sum(np.log(self.hi[f] - y[f])))

    def newton(self, y, t):
        """Newton step and squared decrement of the barrier function at ``y``."""
        inc = self.increments(y)
        r = np.maximum(inc, 0.0) / self.dt
        mv = self.moving
        with np.errstate(over="ignore"):
            a = t * self.model.marginal_power(r)
            c = t * self.model.curvature(r) / self.dt
        a[mv] -= 1.0 / inc[mv]
        c[mv] += 1.0 / inc[mv] ** 2
        g = a.copy()
        g[:-1] -= a[1:]
        f = self.free
        dl, dh = y[f] - self.lo[f], self.hi[f] - y[f]
        g[f] += -1.0 / dl + 1.0 / dh
        e = np.zeros_like(y)
        e[f] = 1.0 / dl ** 2 + 1.0 / dh ** 2
        g[~f] = 0.0
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(g))):
            raise FloatingPointError("barrier derivatives overflowed")
        try:
            step = _banded_solve(c, e, f, -g)
        except np.linalg.LinAlgError:
            step = _path_solve(c, e, f, -g)
        return step, float(-g @ step)

    def max_step(self, y, dy) -> float:
        """Largest ``s <= 1`` keeping ``y + s dy`` strictly feasible, with a 1% margin."""
        f = self.free
        inc, dinc = self.increments(y), self.increments(dy)
        ratios = [1.0]
        for slack, rate in ((inc[self.moving], dinc[self.moving]), (y[f] - self.lo[f], dy[f]),
                            (self.hi[f] - y[f], -dy[f])):
            neg = rate < 0
            if np.any(neg):
                ratios.append(0.99 * float(np.min(slack[neg] / -rate[neg])))
        return min(ratios)


def _banded_solve(c, e, free, b) -> np.ndarray:
    """Same system as :func:`_path_solve` through a banded Cholesky factorization."""
    d = c + e
    d[:-1] += c[1:]
    off = -c[1:]
    off[~(free[:-1] & free[1:])] = 0.0
    d[~free] = 1.0
    if len(b) == 1:
        return np.where(free, b / d, 0.0)
    ab = np.zeros((2, len(b)))
    ab[0, 1:] = off
    ab[1] = d
    x = solveh_banded(ab, np.where(free, b, 0.0), check_finite=False)
    x[~free] = 0.0
    return x


def _path_solve(c, e, free, b) -> np.ndarray:
    """Solve ``H x = b`` for the Hessian of a weighted path grounded at fixed nodes.

    ``H`` has ``c[i] + c[i+1] + e[i]`` on the diagonal and ``-c[i+1]`` off it,
    restricted to free nodes (``x`` is 0 elsewhere).  Eliminating left to
    right, the part of a pivot that does not couple to the right is a series
    combination of positive weights, which avoids the cancellation a
    Cholesky factorization suffers when the weights span many decades.
    """
    n = len(b)
    c, e, free, b = c.tolist(), e.tolist(), free.tolist(), b.tolist()
    c.append(0.0)
    piv, rhs = [0.0] * n, [0.0] * n
    s_prev, b_prev, grounded = 0.0, 0.0, True
    for i in range(n):
        if not free[i]:
            grounded = True
            continue
        ci = c[i]
        if grounded:
            s, bi = e[i] + ci, b[i]
        else:
            s = e[i] + ci * s_prev / (s_prev + ci)
            bi = b[i] + ci / (s_prev + ci) * b_prev
        piv[i], rhs[i] = s + c[i + 1], bi
        s_prev, b_prev, grounded = s, bi, False
    x = [0.0] * n
    nxt = 0.0
    for i in range(n - 1, -1, -1):
        if not free[i]:
            nxt = 0.0
            continue
        nxt = x[i] = (rhs[i] + c[i + 1] * nxt) / piv[i]
    return np.array(x)


def _barrier_solve(prob: _Barrier, y, t, rtol: float, max_newton: int, mu: float = 20.0):
    """Path-following on ``t E(y) + barrier`` from the strictly feasible ``y``; returns ``(y, energy)``.

    Stops once the duality-gap bound ``m / t`` is below ``rtol`` times the energy.
    """
    if prob.m == 0:
        return y, prob.energy(y)
    newton = 0
    while True:
        while newton < max_newton:
            try:
                dy, lam2 = prob.newton(y, t)
            except FloatingPointError:
                break
            newton += 1
            if lam2 / 2 <= 1e-6:
                break
            s = prob.max_step(y, dy)
            phi = prob.value(y, t)
            while s > 1e-14 and not prob.value(y + s * dy, t) <= phi - 0.25 * s * lam2:
                s *= 0.5
            y_new = y + s * dy
            # rounding in phi can accept steps that no longer move anything
            if s <= 1e-14 or not prob.value(y_new, t) < phi:
                break
            y = y_new
        E = prob.energy(y)
        if prob.m / t <= rtol * E or newton >= max_newton:
            return y, E
        t *= mu


def discrete_convex_oracle(seq: PacketSequence, model: EnergyModel, n_steps: int = 4000,
                           rtol: float = 1e-10, max_newton: int = 2000) -> float:
    """Minimum energy over departure curves sampled on a grid that contains every event time.

    Solved with a log-barrier Newton method, first with one step per event
    interval and then on the full grid, warm-started from the coarse curve
    nudged into the interior.  The relative accuracy is about ``rtol``.
    """
    if not len(seq):
        return 0.0
    if not seq.is_fifo():
        raise UnsupportedInputError("discrete_convex_oracle expects a FIFO sequence")
    events, counts = _event_grid(seq, n_steps)
    if n_steps < 4 * len(events):
        raise ValueError(f"n_steps={n_steps} is below 4 per event time ({len(events)} events)")
    fix_tol = 1e-12 * max(1.0, seq.total_bits)

    ts, lo, hi = _bounds(seq, events, [1] * len(counts))
    coarse = _Barrier(events[0], ts, lo, hi, model, fix_tol)
    span = events[-1] - events[0]
    # constant rate over the whole span: a lower bound on the optimum
    E_low = span * float(model.power(seq.total_bits / span))
    y, E = _barrier_solve(coarse, coarse.start(), coarse.m / max(E_low, 1e-300), rtol, max_newton)

    t_c = np.concatenate(([events[0]], ts))
    ts, lo, hi = _bounds(seq, events, counts)
    fine = _Barrier(events[0], ts, lo, hi, model, fix_tol)
    w = 1e-5
    y0 = (1 - w) * np.interp(ts, t_c, np.concatenate(([0.0], y))) + w * fine.start()
    y0[~fine.free] = lo[~fine.free]
    E0 = fine.energy(y0)
    return _barrier_solve(fine, y0, fine.m / (w * max(E0, 1e-300)), rtol, max_newton)[1]


# random instances for property tests

def random_sequence(rng: np.random.Generator, n_packets: int, non_fifo: bool = False,
                    max_bits: float = 2.0, max_overtake: int = 1) -> PacketSequence:
    """Random sequence with arrivals from 0.

    With ``non_fifo`` exactly one packet is due before its predecessor and
    overtakes at most ``max_overtake`` of them.  Windows are at least 0.3 s.
    """
    if non_fifo and n_packets < 2:
        raise ValueError("a non-FIFO sequence needs at least two packets")
    while True:
        gaps = rng.exponential(1.0, n_packets - 1) + 0.05
        arr = np.concatenate(([0.0], np.cumsum(gaps)))
        dl = np.maximum.accumulate(arr + rng.uniform(0.3, 4.0, n_packets))
        bits = rng.uniform(0.1, max_bits, n_packets)
        if non_fifo:
            j = int(rng.integers(2, n_packets + 1))
            k = j - 2 - max_overtake
            low = max(arr[j - 1] + 0.3, dl[k] if k >= 0 else 0.0)
            high = dl[j - 2]
            if not high - low > 0.05:
                continue
            dl[j - 1] = rng.uniform(low + 0.02, high - 0.02)
        packets = tuple(Packet(i + 1, float(b), float(a), float(d)) for i, (b, a, d) in enumerate(zip(bits, arr, dl)))
        return PacketSequence(packets)
