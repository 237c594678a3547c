"""Command-line interface.

Subcommands: ``solve`` (single power flow), ``twobus`` (closed-form transfer
check), ``simulate`` (24-hour scenario run), ``optimize`` (parking-lot
placement search), ``validate`` (case-file linting).  All angles entered
on the command line are degrees; all file contents are per-unit or
engineering units as documented in the case-format description.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .caseio import (
    CaseParseError,
    bind_devices,
    builtin_path,
    load_case,
    load_profiles,
)
from .devices import PevLot
from .dispatch import MODES, Scenario, canonical_mode
from .network import ValidationError, build_ybus
from .nsga import GaParams, InfeasibleConfigError, optimize_placement
from .objective import DayEvaluator
from .powerflow import (
    InjectionSet,
    NonConvergence,
    PowerFlowError,
    branch_table,
    bus_table,
    check_limits,
    solve,
)
from .twobus import TwoBusState, classify_direction, transfer_power_general
from .sweep import solve_sweep

EXIT_OK = 0
EXIT_USAGE = 2  # argparse's own convention
EXIT_MISSING_FILE = 3
EXIT_PARSE = 4
EXIT_VALIDATION = 5
EXIT_NO_CONVERGENCE = 6
EXIT_INFEASIBLE = 7

_EXIT_CODE_DOC = """\
exit codes:
  0  success
  2  command-line usage error
  3  referenced file does not exist
  4  case or profile file failed to parse
  5  case data failed validation
  6  power flow failed to converge
  7  requested optimization is infeasible (e.g. more lots than candidate buses)
"""


def _atomic_write(path: Path, text: str) -> None:
    """Write via temp file + rename so readers never see partial output."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _read_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    config: dict[str, str] = {}
    for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CaseParseError(f"{p}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        config[key.strip().lower()] = value.strip()
    return config


_CONFIG_CONVERTERS = {
    "case": str,
    "profiles": str,
    "mode": str,
    "weights": str,
    "lots": int,
    "candidates": str,
    "pop": int,
    "gens": int,
    "seed": int,
    "tol": float,
    "out": str,
    "load_profile": str,
}


def _apply_config(args: argparse.Namespace) -> None:
    config = _read_config(getattr(args, "config", None))
    for key, value in config.items():
        dest = key.replace("-", "_")
        conv = _CONFIG_CONVERTERS.get(dest)
        if conv is None:
            raise CaseParseError(f"unknown config key {key!r}")
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, conv(value))


def _parse_weights(text: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ValidationError("weights must be three comma-separated numbers")
    try:
        a, b, c = (float(p) for p in parts)
    except ValueError:
        raise ValidationError(f"bad weights {text!r}") from None
    return (a, b, c)


def _parse_candidates(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p.strip()) for p in text.split(",") if p.strip())
    except ValueError:
        raise ValidationError(f"bad candidate list {text!r}") from None


def _resolve_case_paths(args: argparse.Namespace) -> tuple[Path, Path]:
    case = Path(args.case) if args.case else builtin_path("bus33.grid")
    profiles = Path(args.profiles) if args.profiles else builtin_path("profiles33.csv")
    return case, profiles


def _scenario(args: argparse.Namespace, default_mode: str = "none") -> Scenario:
    return Scenario(
        mode=args.mode or default_mode,
        weights=_parse_weights(args.weights) if args.weights else (0.6, 0.1, 0.3),
        load_profile_id=getattr(args, "load_profile", None),
        pf_tol=args.tol if args.tol is not None else 1e-8,
    )


def _fmt(x: float) -> str:
    return f"{x:.9f}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args: argparse.Namespace) -> int:
    case_path, _ = _resolve_case_paths(args)
    case = load_case(case_path)
    net = case.network
    tol = args.tol if args.tol is not None else 1e-8
    p_load, q_load = net.load_vectors()
    inj = InjectionSet.from_loads(p_load, q_load)
    sol = solve(net, inj, tol=tol)
    bus_text = bus_table(net, sol)
    branch_text = branch_table(net, sol)
    sys.stdout.write(bus_text)
    report = check_limits(net, sol)
    print(
        f"# converged in {sol.iterations} iterations, mismatch {sol.max_mismatch:.3e}, "
        f"loss {sol.total_losses:.6f} pu, min V {sol.v_min:.6f}, "
        f"violations {len(report.voltage_violations) + len(report.thermal_violations)}"
    )
    if args.check_sweep:
        ref = solve_sweep(net, inj)
        gap = float(np.max(np.abs(ref.v_mag - sol.v_mag)))
        print(f"# sweep cross-check: max voltage gap {gap:.3e} pu")
    if args.out:
        out = Path(args.out)
        _atomic_write(out / "solution.csv", bus_text)
        _atomic_write(out / "branches.csv", branch_text)
    return EXIT_OK


def cmd_twobus(args: argparse.Namespace) -> int:
    state = TwoBusState.from_impedance(
        v1=args.v1,
        v2=args.v2,
        delta1=math.radians(args.delta1),
        delta2=math.radians(args.delta2),
        r=args.r,
        x=args.x,
    )
    p12, q12 = transfer_power_general(state)
    p_dir, q_dir = classify_direction(state)
    print(f"p12 = {_fmt(p12)} pu")
    print(f"q12 = {_fmt(q12)} pu")
    print(f"active flow: {p_dir.value}  (angle rule)")
    print(f"reactive flow: {q_dir.value}  (magnitude rule)")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    case_path, profile_path = _resolve_case_paths(args)
    case = load_case(case_path)
    profiles = load_profiles(profile_path)
    scenario = _scenario(args)
    if args.mode is None:
        raise ValidationError("simulate requires --mode")
    devices = bind_devices(case, profiles)
    evaluator = DayEvaluator(case.network, devices, profiles, scenario)
    day = evaluator.evaluate()

    volt_lines = ["hour,bus,scenario,v_pu"]
    disp_lines = ["hour,device,bus,p_pu,q_pu"]
    max_v = -math.inf
    for hour_result in day.hours:
        sol = hour_result.solution
        max_v = max(max_v, float(sol.v_mag.max()))
        for pos, bus in enumerate(case.network.buses):
            volt_lines.append(
                f"{hour_result.hour},{bus.id},{scenario.mode},{_fmt(sol.v_mag[pos])}"
            )
        for dev in devices:
            p = dev.p_at(hour_result.hour)
            signed_p = p if isinstance(dev, PevLot) else -p
            q = hour_result.q_settings.get(dev.label, 0.0)
            disp_lines.append(
                f"{hour_result.hour},{dev.label},{dev.bus},{_fmt(signed_p)},{_fmt(q)}"
            )

    if args.out:
        out = Path(args.out)
        _atomic_write(out / "voltages.csv", "\n".join(volt_lines) + "\n")
        _atomic_write(out / "dispatch.csv", "\n".join(disp_lines) + "\n")
    bd = day.breakdown
    print(
        f"mode={scenario.mode} min_v={day.min_voltage:.6f} max_v={max_v:.6f} "
        f"v_dev={bd.v_dev:.6f} loss={bd.loss:.6f} scalar={bd.scalar:.6f} "
        f"feasible={str(bd.feasible).lower()}"
    )
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    case_path, profile_path = _resolve_case_paths(args)
    case = load_case(case_path)
    profiles = load_profiles(profile_path)
    scenario = _scenario(args, default_mode="dgq+v2gq")
    devices = bind_devices(case, profiles)
    params = GaParams(
        population=args.pop if args.pop is not None else 40,
        generations=args.gens if args.gens is not None else 60,
        seed=args.seed if args.seed is not None else 0,
        n_lots=args.lots,
        candidates=_parse_candidates(args.candidates) if args.candidates else None,
    )
    result = optimize_placement(case.network, devices, profiles, scenario, params)

    lines = ["rank,lot_buses,v_dev,loss,cost,scalar,feasible"]
    for rank, entry in enumerate(result.archive.entries):
        buses = "+".join(str(b) for b in entry.genome.lot_buses)
        lines.append(
            f"{rank},{buses},{_fmt(entry.v_dev)},{_fmt(entry.loss)},"
            f"{_fmt(entry.cost)},{_fmt(entry.scalar)},{str(entry.feasible).lower()}"
        )
    if args.out:
        out = Path(args.out)
        _atomic_write(out / "placements.csv", "\n".join(lines) + "\n")

    best = result.best_genome.lot_buses
    bd = result.best_breakdown
    print(
        f"best_lot_buses={'+'.join(str(b) for b in best)} "
        f"scalar={bd.scalar:.6f} v_dev={bd.v_dev:.6f} loss={bd.loss:.6f} "
        f"cost={bd.cost:.6f} feasible={str(bd.feasible).lower()} "
        f"evaluations={result.evaluations}"
    )
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    case_path, profile_path = _resolve_case_paths(args)
    case = load_case(case_path)
    net = case.network
    y = build_ybus(net)
    profiles = load_profiles(profile_path) if (args.profiles or not args.case) else {}
    missing = [
        d.profile_id for d in case.devices
        if profiles and d.profile_id not in profiles
    ]
    if missing:
        raise ValidationError(f"device profiles not found: {sorted(set(missing))}")
    row_residual = float(np.max(np.abs(y.row_sums())))
    print(
        f"{case_path.name}: {net.n_bus} buses, {len(net.branches)} branches, "
        f"{len(case.devices)} devices; radial={str(net.radial).lower()}, "
        f"ybus_symmetric={str(y.is_symmetric()).lower()}, "
        f"row_sum_residual={row_residual:.3e}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, *, profiles: bool = True) -> None:
    p.add_argument("--case", help="case file (default: bundled 33-bus feeder)")
    if profiles:
        p.add_argument("--profiles", help="profile CSV (default: bundled profiles)")
    p.add_argument("--tol", type=float, help="power-flow mismatch tolerance (default 1e-8)")
    p.add_argument("--out", help="output directory for CSV artifacts")
    p.add_argument("--config", help="key=value config file; command-line flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pevplan",
        description="Radial-feeder planning toolkit: power flow, converter "
        "reactive dispatch, and parking-lot placement search.",
        epilog=_EXIT_CODE_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="single snapshot power flow at normal load")
    _add_common(p, profiles=False)
    p.add_argument("--profiles", help=argparse.SUPPRESS)
    p.add_argument("--check-sweep", action="store_true",
                   help="cross-check voltages against the sweep solver")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("twobus", help="closed-form two-bus transfer and flow direction")
    p.add_argument("--v1", type=float, required=True, help="sending voltage, pu")
    p.add_argument("--v2", type=float, required=True, help="receiving voltage, pu")
    p.add_argument("--delta1", type=float, default=0.0, help="sending angle, degrees")
    p.add_argument("--delta2", type=float, default=0.0, help="receiving angle, degrees")
    p.add_argument("--r", type=float, default=0.0, help="series resistance, pu")
    p.add_argument("--x", type=float, required=True, help="series reactance, pu")
    p.set_defaults(func=cmd_twobus)

    p = sub.add_parser("simulate", help="24-hour run of one scenario mode")
    _add_common(p)
    p.add_argument("--mode", choices=["none", "dgq", "dgq-v2gq", "dgq+v2gq"],
                   help="reactive-support participation")
    p.add_argument("--weights", help="objective weights a,b,c (default 0.6,0.1,0.3)")
    p.add_argument("--load-profile", dest="load_profile",
                   help="profile id scaling normal loads per hour")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="search parking-lot buses with the GA")
    _add_common(p)
    p.add_argument("--mode", choices=["none", "dgq", "dgq-v2gq", "dgq+v2gq"],
                   help="scenario during evaluation (default dgq+v2gq)")
    p.add_argument("--weights", help="objective weights a,b,c (default 0.6,0.1,0.3)")
    p.add_argument("--load-profile", dest="load_profile",
                   help="profile id scaling normal loads per hour")
    p.add_argument("--lots", type=int,
                   help="number of lots to place (default: lot rows in the case; "
                   "the fleet is truncated or extended by cloning to match)")
    p.add_argument("--candidates", help="comma-separated candidate bus ids")
    p.add_argument("--pop", type=int, help="population size (default 40)")
    p.add_argument("--gens", type=int, help="generations (default 60)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("validate", help="parse and sanity-check case/profile files")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except CaseParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NonConvergence as exc:
        sol = exc.solution
        print(
            f"error: {exc} (diverged={str(sol.diverged).lower()})",
            file=sys.stderr,
        )
        return EXIT_NO_CONVERGENCE
    except PowerFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
