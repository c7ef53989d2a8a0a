"""Monte-Carlo comparison on Poisson traffic with one injected non-FIFO packet.

FIFO packets of ``fifo_bits`` arrive as a Poisson stream on
``[0, horizon - guard]`` and are due ``fifo_deadline_s`` later (clamped to
the horizon).  The non-FIFO packet is the first arrival of a slow Poisson
stream; it is due halfway between its arrival and the deadline of the latest
FIFO packet that arrived before it.  Four schedulers are compared: the
non-FIFO and FIFO offline optima and their online counterparts.
"""

from __future__ import annotations

import io
import json
import math
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .curves import InfeasibleError, PacketSequence, UnsupportedInputError, check_single_violation
from .energy_model import EnergyModel, log_sum_exp, segments_log_energy
from .nonfifo import schedule_fifo_baseline, schedule_non_fifo
from .online import feed, finish


KB = 8192
SCHEDULERS = ("nonfifo_offline", "fifo_offline", "nonfifo_online", "fifo_online")
DEADLINE_NUDGE = 1e-6


class ConfigError(ValueError):
    """Missing or invalid experiment configuration field."""


def default_nonfifo_bits() -> tuple:
    return tuple(round(0.1 * k, 1) * KB for k in range(1, 21))


@dataclass(frozen=True)
class ExperimentConfig:
    lambda_fifo: tuple = (2.0, 3.0)
    horizon_s: float = 40.0
    guard_s: float = 2.0
    fifo_bits: float = KB
    nonfifo_bits: tuple = field(default_factory=default_nonfifo_bits)
    nonfifo_rate: float = 0.025
    fifo_deadline_s: float = 4.0
    trials: int = 1000
    seed: int = 0
    model: dict = field(default_factory=lambda: {"kind": "bandlimited_shannon", "W": 1000.0, "sigma2": 1.0, "h2": 2.0})
    max_redraws: int = 50

    def __post_init__(self):
        lam = self.lambda_fifo if isinstance(self.lambda_fifo, (list, tuple)) else (self.lambda_fifo,)
        object.__setattr__(self, "lambda_fifo", tuple(float(x) for x in lam))
        object.__setattr__(self, "nonfifo_bits", tuple(float(x) for x in self.nonfifo_bits))
        for name in ("horizon_s", "guard_s", "fifo_bits", "nonfifo_rate", "fifo_deadline_s"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.lambda_fifo or any(x <= 0 for x in self.lambda_fifo):
            raise ConfigError("lambda_fifo must hold positive rates")
        if not self.nonfifo_bits or any(b <= 0 for b in self.nonfifo_bits):
            raise ConfigError("nonfifo_bits must hold positive sizes")
        if not self.guard_s < self.horizon_s:
            raise ConfigError("guard_s must be shorter than horizon_s")
        if not (isinstance(self.trials, int) and self.trials > 0):
            raise ConfigError("trials must be a positive integer")
        EnergyModel.from_config(self.model)

    @property
    def energy_model(self) -> EnergyModel:
        return EnergyModel.from_config(self.model)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = asdict(self)
        data.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**data)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        optional = {"model", "max_redraws", "seed", "trials"}
        known = {f.name for f in fields(cls)}
        for name in sorted(known - optional):
            if name not in data:
                raise ConfigError(f"missing config field: {name}")
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field: {unknown[0]}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ImportError:          # Python < 3.11
                import tomli as tomllib
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
        return cls.from_dict(data)


@dataclass(frozen=True)
class WorkloadShape:
    """Everything about a trial except the non-FIFO packet's size."""
    fifo_arrivals: tuple
    fifo_deadlines: tuple
    nonfifo_arrival: float
    nonfifo_deadline: float
    insert_at: int
    redraws: int

    def sequence(self, fifo_bits: float, nonfifo_bits: float) -> PacketSequence:
        rows = [(fifo_bits, a, d) for a, d in zip(self.fifo_arrivals, self.fifo_deadlines)]
        rows.insert(self.insert_at, (nonfifo_bits, self.nonfifo_arrival, self.nonfifo_deadline))
        return PacketSequence.from_tuples(rows)


def _fifo_stream(rng: np.random.Generator, lam: float, cfg: ExperimentConfig):
    last = cfg.horizon_s - cfg.guard_s
    arrivals = [0.0]
    while True:
        t = arrivals[-1] + rng.exponential(1.0 / lam)
        if t > last:
            break
        arrivals.append(t)
    deadlines = [min(a + cfg.fifo_deadline_s, cfg.horizon_s) for a in arrivals]
    return arrivals, deadlines


def nonfifo_deadline(arrival: float, prev_deadline: float) -> float:
    """Halfway between the arrival and the deadline of the FIFO packet ahead of it."""
    return arrival + (prev_deadline - arrival) / 2.0


def _nonfifo_candidate(rng, arrivals, deadlines, cfg):
    """Draw the non-FIFO packet; ``None`` when it does not give exactly one supported inversion."""
    a = rng.exponential(1.0 / cfg.nonfifo_rate)
    if a > cfg.horizon_s - cfg.guard_s:
        return None
    k = int(np.searchsorted(arrivals, a, side="left"))   # packets before it: arrivals[:k]
    if k == 0 or arrivals[k - 1] == a or (k < len(arrivals) and arrivals[k] == a):
        return None
    d = nonfifo_deadline(a, deadlines[k - 1])
    if d in deadlines:
        d -= DEADLINE_NUDGE
    if not d > a:
        return None
    ds = deadlines[:k] + [d] + deadlines[k:]
    try:
        if check_single_violation([_Due(x) for x in ds]) is None:
            return None
    except UnsupportedInputError:
        return None
    return a, d, k


class _Due:
    __slots__ = ("deadline_s",)

    def __init__(self, d):
        self.deadline_s = d


def generate_shape(cfg: ExperimentConfig, seed: int, lam: float) -> WorkloadShape:
    """Draw a trial; invalid non-FIFO draws are redrawn from the same stream and counted."""
    rng = np.random.default_rng(seed)
    redraws = 0
    while True:
        arrivals, deadlines = _fifo_stream(rng, lam, cfg)
        for _ in range(cfg.max_redraws):
            got = _nonfifo_candidate(rng, arrivals, deadlines, cfg)
            if got is not None:
                a, d, k = got
                return WorkloadShape(tuple(arrivals), tuple(deadlines), a, d, k, redraws)
            redraws += 1


def generate_workload(cfg: ExperimentConfig, seed: int, lam: Optional[float] = None,
                      nonfifo_bits: Optional[float] = None) -> PacketSequence:
    lam = cfg.lambda_fifo[0] if lam is None else lam
    b = cfg.nonfifo_bits[-1] if nonfifo_bits is None else nonfifo_bits
    if not b > 0:
        raise ConfigError(f"non-FIFO packet size must be positive, got {b}")
    return generate_shape(cfg, seed, lam).sequence(cfg.fifo_bits, b)


def trial_seed(cfg: ExperimentConfig, trial: int) -> int:
    return cfg.seed + trial


class DominanceError(AssertionError):
    """A per-trial optimality relation failed; indicates a scheduler bug."""


def run_trial(cfg: ExperimentConfig, lam: float, trial: int, model: EnergyModel) -> dict:
    """Natural-log energies of the four schedulers for each non-FIFO size; ``None`` marks an infeasible trial.

    Logs because bursty schedules under the bandlimited model can cost more
    than a double holds.
    """
    shape = generate_shape(cfg, trial_seed(cfg, trial), lam)
    # before the non-FIFO arrival both online planners see the same FIFO stream
    head = shape.sequence(cfg.fifo_bits, cfg.nonfifo_bits[0]).packets[:shape.insert_at]
    prefix = feed(head, mode="nonfifo", origin=0.0, record=False)
    out = {}
    for b in cfg.nonfifo_bits:
        seq = shape.sequence(cfg.fifo_bits, b)
        tail = seq.packets[shape.insert_at:]
        try:
            e = {"nonfifo_offline": segments_log_energy(model, schedule_non_fifo(seq).schedule.segments),
                 "fifo_offline": segments_log_energy(model, schedule_fifo_baseline(seq).segments)}
            for mode in ("nonfifo", "fifo"):
                st = finish(feed(tail, mode=mode, state=prefix))
                if st.misses:
                    raise InfeasibleError(f"online {mode} missed deadlines: {st.misses[:3]}")
                e[f"{mode}_online"] = segments_log_energy(model, st.executed)
        except InfeasibleError:
            out[b] = None
            continue
        off = e["nonfifo_offline"]
        if any(off > e[k] + 1e-9 for k in ("fifo_offline", "nonfifo_online", "fifo_online")):
            raise DominanceError(f"lambda={lam} trial={trial} b={b}: offline optimum beaten: {e}")
        out[b] = e
    return out


def format_log(value: float, digits: int = 12) -> str:
    """``exp(value)`` in ``%.{digits}e`` style, also beyond the double range."""
    if value == -math.inf:
        return f"{0.0:.{digits}e}"
    if value < 700:
        return f"{math.exp(value):.{digits}e}"
    x = value / math.log(10)
    e = math.floor(x)
    mant = round(10 ** (x - e), digits)
    if mant >= 10:
        mant, e = mant / 10, e + 1
    return f"{mant:.{digits}f}e+{e:d}"


@dataclass
class ResultTable:
    config: ExperimentConfig
    log_energies: dict        # (lam, b) -> scheduler -> per-trial natural-log energies
    infeasible: dict          # (lam, b) -> count

    def log_mean(self, lam, b, scheduler) -> float:
        xs = self.log_energies[(lam, b)][scheduler]
        return log_sum_exp(xs) - math.log(len(xs)) if xs else math.nan

    def log_stddev(self, lam, b, scheduler) -> float:
        xs = self.log_energies[(lam, b)][scheduler]
        if len(xs) < 2:
            return -math.inf
        top = max(xs)
        sd = statistics.stdev([math.exp(x - top) for x in xs])
        return top + math.log(sd) if sd > 0 else -math.inf

    def mean(self, lam, b, scheduler) -> float:
        """Mean energy in joules; ``inf`` if it exceeds the double range."""
        lm = self.log_mean(lam, b, scheduler)
        return math.exp(lm) if lm < 709 else math.inf

    def savings(self, lam, b, online: bool = False) -> float:
        kind = "online" if online else "offline"
        return -math.expm1(self.log_mean(lam, b, f"nonfifo_{kind}") - self.log_mean(lam, b, f"fifo_{kind}"))

    def rows(self):
        for lam in self.config.lambda_fifo:
            for b in self.config.nonfifo_bits:
                for name in SCHEDULERS:
                    n = len(self.log_energies[(lam, b)][name])
                    yield (lam, b, name, self.log_mean(lam, b, name), self.log_stddev(lam, b, name), n,
                           self.infeasible[(lam, b)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("lambda,b_non_bits,scheduler,mean_energy_j,stddev,trials,infeasible_count\n")
        for lam, b, name, lm, lsd, n, bad in self.rows():
            mean = format_log(lm) if n else "nan"
            buf.write(f"{lam:g},{b:.10g},{name},{mean},{format_log(lsd)},{n},{bad}\n")
        return buf.getvalue()

    def plot_data(self, lam) -> str:
        """``b_non_bits`` against the mean energy of every scheduler, for one arrival rate."""
        buf = io.StringIO()
        buf.write("b_non_bits," + ",".join(SCHEDULERS) + "\n")
        for b in self.config.nonfifo_bits:
            buf.write(f"{b:.10g}," + ",".join(format_log(self.log_mean(lam, b, s)) for s in SCHEDULERS) + "\n")
        return buf.getvalue()

    def write(self, out_dir) -> list:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "results.csv"]
        paths[0].write_text(self.to_csv())
        for lam in self.config.lambda_fifo:
            p = out / f"plot_lambda_{lam:g}.csv"
            p.write_text(self.plot_data(lam))
            paths.append(p)
        return paths

    def summary(self) -> str:
        lines = [f"{'lambda':>6} {'b_non_kb':>8} " + " ".join(f"{s:>16}" for s in SCHEDULERS) + f" {'saving':>7}"]
        for lam in self.config.lambda_fifo:
            for b in self.config.nonfifo_bits:
                means = " ".join(f"{format_log(self.log_mean(lam, b, s), 6):>16}" for s in SCHEDULERS)
                lines.append(f"{lam:6g} {b / KB:8.2f} {means} {100 * self.savings(lam, b):6.2f}%")
        return "\n".join(lines)


def run_comparison(cfg: ExperimentConfig, progress=None) -> ResultTable:
    model = cfg.energy_model
    energies = {(lam, b): {s: [] for s in SCHEDULERS} for lam in cfg.lambda_fifo for b in cfg.nonfifo_bits}
    infeasible = {key: 0 for key in energies}
    for lam in cfg.lambda_fifo:
        for trial in range(cfg.trials):
            for b, e in run_trial(cfg, lam, trial, model).items():
                if e is None:
                    infeasible[(lam, b)] += 1
                    continue
                for s in SCHEDULERS:
                    energies[(lam, b)][s].append(e[s])
            if progress is not None:
                progress(lam, trial)
    return ResultTable(cfg, energies, infeasible)
