"""Command-line front end: ``schedule``, ``verify`` and ``simulate``.

Exit codes: 0 success, 1 bad input (parse, IO, config), 2 infeasible
workload or schedule, 3 an oracle gap above tolerance, 4 unsupported input.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .curves import (InfeasibleError, UnsupportedInputError, is_feasible, load_schedule, load_workload)
from .energy_model import EnergyModel
from .nonfifo import detect_non_fifo, schedule_non_fifo
from .online import MODES, run_online, write_trace
from .oracle import discrete_convex_oracle, grid_split_oracle
from .taut_string import schedule_fifo
from .workload import ConfigError, ExperimentConfig, run_comparison

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_GAP, EXIT_UNSUPPORTED = 0, 1, 2, 3, 4
GAP_TOL = 1e-4


class InputError(Exception):
    pass


def _read_mapping(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ImportError:
                import tomli as tomllib
            return tomllib.loads(text)
        return json.loads(text)
    except ValueError as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc


def load_model(path) -> EnergyModel:
    """Energy model from a JSON/TOML file; unit Shannon with unit noise when ``path`` is None."""
    if path is None:
        return EnergyModel.unit_shannon()
    data = _read_mapping(path)
    data = data.get("model", data)
    try:
        return EnergyModel.from_config(data)
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"bad model config {path}: {exc}") from exc


def _workload(path):
    try:
        return load_workload(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc
    except (KeyError, TypeError) as exc:
        raise InputError(f"bad workload {path}: missing or malformed field {exc}") from exc
    except InfeasibleError:
        raise
    except UnsupportedInputError:
        raise
    except ValueError as exc:
        raise InputError(f"bad workload {path}: {exc}") from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def cmd_schedule(args) -> int:
    seq = _workload(args.workload)
    model = load_model(args.model)
    if args.online:
        res = run_online(seq.packets, model, mode=args.mode, origin=seq.origin)
        if args.trace:
            write_trace(res.trace, args.trace)
        out = {"kind": f"online-{args.mode}", "energy_joules": res.energy_joules, "conflicts": res.conflicts,
               "misses": [list(m) for m in res.misses], "schedule": res.schedule.to_dict()}
        print(_dump(out))
        if res.misses:
            pid, due = res.misses[0][0], res.misses[0][1]
            print(f"infeasible: packet {pid} missed its deadline t={due:.12g}", file=sys.stderr)
            return EXIT_INFEASIBLE
        return EXIT_OK
    if detect_non_fifo(seq) is None:
        sched = schedule_fifo(seq)
        out = {"kind": "fifo", "energy_joules": sched.energy(model), "schedule": sched.to_dict()}
    else:
        out = {"kind": "nonfifo", **schedule_non_fifo(seq, model).to_dict()}
    print(_dump(out))
    return EXIT_OK


def _gap(value: float, reference: float) -> float:
    return abs(value - reference) / max(abs(reference), 1e-300)


def cmd_verify(args) -> int:
    seq = _workload(args.workload)
    model = load_model(args.model)
    if args.check_schedule:
        try:
            sched = load_schedule(args.check_schedule)
        except OSError as exc:
            raise InputError(f"cannot read {args.check_schedule}: {exc.strerror}") from exc
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"cannot parse {args.check_schedule}: {exc}") from exc
        report = is_feasible(sched, seq)
        if report.ok:
            print(f"schedule feasible; energy {sched.energy(model):.12g} J")
            return EXIT_OK
        print(f"schedule infeasible: first violation at t={report.first_violation_time:.12g}")
        for t, msg in report.violations:
            print(f"  {msg}")
        return EXIT_INFEASIBLE

    rows = []
    if detect_non_fifo(seq) is None:
        sched = schedule_fifo(seq)
        energy = sched.energy(model)
        print(f"taut string energy    {energy:.12g} J")
        fifo_seq = seq
    else:
        decision = schedule_non_fifo(seq, model)
        energy = decision.energy_joules
        print(f"cascade energy        {energy:.12g} J  ({decision.possibility.value}, split {decision.split_bits:.12g} bits)")
        grid = grid_split_oracle(seq, decision.j, model, n_grid=args.grid)
        rows.append(("grid oracle", grid.energy_joules))
        print(f"grid oracle energy    {grid.energy_joules:.12g} J  (split {grid.split_bits:.12g} bits, n={args.grid})")
        fifo_seq = decision.sar
    try:
        disc = discrete_convex_oracle(fifo_seq, model, n_steps=args.dt)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    rows.append(("discrete oracle", disc))
    print(f"discrete oracle energy {disc:.12g} J  (n_steps={args.dt})")
    worst = 0.0
    for name, ref in rows:
        g = _gap(energy, ref)
        worst = max(worst, g)
        print(f"relative gap vs {name}: {g:.3e}")
    if worst > GAP_TOL:
        print(f"FAIL: gap {worst:.3e} exceeds {GAP_TOL:g}")
        return EXIT_GAP
    print("OK")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        cfg = cfg.with_overrides(trials=args.trials, seed=args.seed)
        if args.model:
            cfg = cfg.with_overrides(model=load_model(args.model).to_config())
    except OSError as exc:
        raise InputError(f"cannot read {args.config}: {exc.strerror}") from exc
    except ConfigError as exc:
        raise InputError(str(exc)) from exc
    except ValueError as exc:
        raise InputError(f"cannot parse {args.config}: {exc}") from exc
    t0 = time.perf_counter()
    table = run_comparison(cfg)
    try:
        paths = table.write(args.out)
    except OSError as exc:
        raise InputError(f"cannot write to {args.out}: {exc.strerror}") from exc
    print(table.summary())
    print(f"{cfg.trials} trials per rate in {time.perf_counter() - t0:.1f} s; wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonfifo", description="Minimum-energy packet scheduling under deadlines.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", help="schedule a workload file and print the schedule as JSON")
    p.add_argument("workload")
    p.add_argument("--model", help="energy model config (JSON/TOML); default unit Shannon")
    p.add_argument("--online", action="store_true", help="replan at every arrival instead of planning offline")
    p.add_argument("--mode", choices=MODES, default="nonfifo", help="online planner")
    p.add_argument("--trace", help="write the online event trace to this CSV")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("verify", help="compare the scheduler with the brute-force oracles")
    p.add_argument("workload")
    p.add_argument("--model")
    p.add_argument("--grid", type=int, default=2001, help="split-factor grid points")
    p.add_argument("--dt", type=int, default=4000, help="time steps of the discretized program")
    p.add_argument("--check-schedule", metavar="SCHEDULE", help="only check this schedule file for feasibility")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="run the Monte-Carlo comparison")
    p.add_argument("config", nargs="?", help="experiment config (JSON/TOML); defaults built in")
    p.add_argument("--model")
    p.add_argument("--out", default="results")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as exc:
        where = f" at t={exc.time:.12g}" if exc.time is not None else ""
        who = f" (packet {exc.packet_id})" if exc.packet_id is not None else ""
        print(f"infeasible{where}{who}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except UnsupportedInputError as exc:
        print(f"unsupported input: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED


if __name__ == "__main__":
    sys.exit(main())
