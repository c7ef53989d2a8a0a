"""Rate/power maps for an AWGN link and exact energy of piecewise-constant schedules.

All logarithms are base 2.  ``UNIT_SHANNON`` is the per-real-dimension form
``p = sigma2 * (2**(2r) - 1)``; ``BANDLIMITED_SHANNON`` is the bandwidth form
``r = W log2(1 + h2 p / (W sigma2))`` used for the Monte-Carlo experiment.
``MONOMIAL`` (``p = r**k``) is a cheap convex family for analytic test cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

LN2 = math.log(2.0)


class ModelKind(str, Enum):
    UNIT_SHANNON = "unit_shannon"
    BANDLIMITED_SHANNON = "bandlimited_shannon"
    MONOMIAL = "monomial"


class ScheduleStructureError(ValueError):
    """Segments overlap, run backwards or carry a negative rate."""


@dataclass(frozen=True)
class EnergyModel:
    kind: ModelKind = ModelKind.UNIT_SHANNON
    bandwidth_hz: float = 1.0
    noise_power: float = 1.0
    channel_gain: float = 1.0
    exponent: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        for name in ("bandwidth_hz", "noise_power", "channel_gain"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if self.kind is ModelKind.MONOMIAL and not self.exponent >= 1:
            raise ValueError(f"monomial exponent must be >= 1, got {self.exponent!r}")

    @classmethod
    def unit_shannon(cls, sigma2: float = 1.0) -> "EnergyModel":
        return cls(ModelKind.UNIT_SHANNON, noise_power=sigma2)

    @classmethod
    def bandlimited_shannon(cls, W: float = 1000.0, sigma2: float = 1.0, h2: float = 2.0) -> "EnergyModel":
        return cls(ModelKind.BANDLIMITED_SHANNON, bandwidth_hz=W, noise_power=sigma2, channel_gain=h2)

    @classmethod
    def monomial(cls, k: float = 2.0) -> "EnergyModel":
        return cls(ModelKind.MONOMIAL, exponent=k)

    @classmethod
    def from_config(cls, cfg: dict) -> "EnergyModel":
        """Build from ``{"kind": ..., "W": ..., "sigma2": ..., "h2": ..., "k": ...}``."""
        kind = ModelKind(cfg.get("kind", "unit_shannon"))
        if kind is ModelKind.UNIT_SHANNON:
            return cls.unit_shannon(float(cfg.get("sigma2", 1.0)))
        if kind is ModelKind.BANDLIMITED_SHANNON:
            return cls.bandlimited_shannon(float(cfg["W"]), float(cfg.get("sigma2", 1.0)), float(cfg.get("h2", 1.0)))
        return cls.monomial(float(cfg.get("k", 2.0)))

    def to_config(self) -> dict:
        if self.kind is ModelKind.UNIT_SHANNON:
            return {"kind": self.kind.value, "sigma2": self.noise_power}
        if self.kind is ModelKind.BANDLIMITED_SHANNON:
            return {"kind": self.kind.value, "W": self.bandwidth_hz, "sigma2": self.noise_power,
                    "h2": self.channel_gain}
        return {"kind": self.kind.value, "k": self.exponent}

    # Closed forms.  ``_scale * expm1(_alpha * r)`` for both Shannon kinds.
    @property
    def _alpha(self) -> float:
        if self.kind is ModelKind.UNIT_SHANNON:
            return 2.0 * LN2
        return LN2 / self.bandwidth_hz

    @property
    def _scale(self) -> float:
        if self.kind is ModelKind.UNIT_SHANNON:
            return self.noise_power
        return self.bandwidth_hz * self.noise_power / self.channel_gain

    def power(self, rate):
        """Vectorised ``f(rate)``; no domain check."""
        if self.kind is ModelKind.MONOMIAL:
            return np.power(rate, self.exponent)
        return self._scale * np.expm1(self._alpha * np.asarray(rate, dtype=float))

    def marginal_power(self, rate):
        """Vectorised ``f'(rate)``."""
        if self.kind is ModelKind.MONOMIAL:
            return self.exponent * np.power(rate, self.exponent - 1.0)
        return self._scale * self._alpha * np.exp(self._alpha * np.asarray(rate, dtype=float))

    def curvature(self, rate):
        """Vectorised ``f''(rate)``."""
        if self.kind is ModelKind.MONOMIAL:
            k = self.exponent
            return k * (k - 1.0) * np.power(rate, k - 2.0) if k != 1 else np.zeros_like(np.asarray(rate, dtype=float))
        return self._scale * self._alpha ** 2 * np.exp(self._alpha * np.asarray(rate, dtype=float))


def power_of_rate(model: EnergyModel, rate: float) -> float:
    """``f(rate)``; ``inf`` past the float range (see :func:`log_power_of_rate`)."""
    if rate < 0:
        raise ValueError(f"rate must be non-negative, got {rate!r}")
    try:
        if model.kind is ModelKind.MONOMIAL:
            return float(rate) ** model.exponent
        return model._scale * math.expm1(model._alpha * rate)
    except OverflowError:
        return math.inf


def log_power_of_rate(model: EnergyModel, rate: float) -> float:
    """Natural log of ``f(rate)``, finite even where ``f`` overflows a double; ``-inf`` at rate 0."""
    if rate < 0:
        raise ValueError(f"rate must be non-negative, got {rate!r}")
    if rate == 0:
        return -math.inf
    if model.kind is ModelKind.MONOMIAL:
        return model.exponent * math.log(rate)
    x = model._alpha * rate
    lx = math.log(math.expm1(x)) if x < 700 else x + math.log1p(-math.exp(-x))
    return math.log(model._scale) + lx


def log_sum_exp(values: Iterable[float]) -> float:
    values = [v for v in values if v != -math.inf]
    if not values:
        return -math.inf
    m = max(values)
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


def rate_of_power(model: EnergyModel, power: float) -> float:
    if power < 0:
        raise ValueError(f"power must be non-negative, got {power!r}")
    if model.kind is ModelKind.MONOMIAL:
        return float(power) ** (1.0 / model.exponent)
    return math.log1p(power / model._scale) / model._alpha


def _checked(segments: Iterable):
    last_end = -math.inf
    for seg in segments:
        t0, t1, rate = seg[0], seg[1], seg[2]
        if t1 < t0:
            raise ScheduleStructureError(f"segment [{t0}, {t1}] has negative duration")
        if t0 < last_end:
            raise ScheduleStructureError(f"segment starting at {t0} overlaps previous one ending at {last_end}")
        if rate < 0:
            raise ScheduleStructureError(f"segment [{t0}, {t1}] has negative rate {rate}")
        last_end = t1
        yield t0, t1, rate


def segments_energy(model: EnergyModel, segments: Iterable) -> float:
    """Sum of ``f(rate) * duration`` over ``(t0, t1, rate)`` triples.

    Segments must be sorted, non-overlapping and have non-negative rates.
    """
    total = 0.0
    for t0, t1, rate in _checked(segments):
        total += power_of_rate(model, rate) * (t1 - t0)
    return total


def segments_log_energy(model: EnergyModel, segments: Iterable) -> float:
    """Natural log of :func:`segments_energy`, computed without overflow."""
    return log_sum_exp([log_power_of_rate(model, rate) + math.log(t1 - t0)
                        for t0, t1, rate in _checked(segments) if t1 > t0 and rate > 0])


def schedule_energy(model: EnergyModel, schedule) -> float:
    """Exact energy of a :class:`~nonfifo.curves.Schedule` (or a bare segment list)."""
    segments = getattr(schedule, "segments", schedule)
    return segments_energy(model, segments)
