"""Minimum-energy packet scheduling under deadlines, with one non-FIFO packet."""

from .curves import (InfeasibleError, Packet, PacketSequence, Schedule, UnsupportedInputError,
                     arrival_curve, is_feasible, min_departure_curve)
from .energy_model import EnergyModel, ModelKind, power_of_rate, rate_of_power, schedule_energy
from .nonfifo import (NonFifoDecision, Possibility, fifo_order, schedule_fifo_baseline, schedule_non_fifo,
                      split_and_reorder)
from .online import run_online
from .taut_string import schedule_fifo, string_tautening
from .workload import ExperimentConfig, ResultTable, generate_workload, run_comparison

__all__ = [
    "EnergyModel", "ModelKind", "power_of_rate", "rate_of_power", "schedule_energy",
    "Packet", "PacketSequence", "Schedule", "InfeasibleError", "UnsupportedInputError",
    "arrival_curve", "min_departure_curve", "is_feasible",
    "schedule_fifo", "string_tautening",
    "NonFifoDecision", "Possibility", "schedule_non_fifo", "split_and_reorder", "fifo_order",
    "schedule_fifo_baseline", "run_online",
    "ExperimentConfig", "ResultTable", "generate_workload", "run_comparison",
]
