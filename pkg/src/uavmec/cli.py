"""Command-line front end.

    uav-mec solve  --scenario FILE --out DIR [--scheme proposed|scheme1|scheme2]
    uav-mec sweep  --scenario FILE --out DIR --sweep battery_J=120e3,240e3 [--scheme proposed,scheme1]
    uav-mec example-scenario --out FILE

Exit codes: 0 success, 1 usage or input error, 2 infeasible instance.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import orchestrator, output, scenario
from .association import BudgetExhausted
from .model import InstanceError
from .orchestrator import InfeasibleInit, InfeasibleProblem, RunConfig, Scheme

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("uavmec")


class UsageError(Exception):
    pass


def _schemes(text: str):
    names = [s.strip() for s in text.split(",") if s.strip()]
    if not names:
        raise UsageError("--scheme needs at least one name")
    if names == ["all"]:
        return list(Scheme)
    try:
        return [Scheme(s) for s in names]
    except ValueError:
        raise UsageError(f"--scheme: unknown scheme in {text!r}; use proposed, scheme1, scheme2 or all") from None


def _sweep_spec(text: str):
    if "=" not in text:
        raise UsageError("--sweep expects PARAM=v1,v2,...")
    name, _, vals = text.partition("=")
    name = name.strip()
    if name not in orchestrator.SWEEP_PARAMS:
        raise UsageError(f"--sweep: unknown parameter {name!r}; use one of {', '.join(orchestrator.SWEEP_PARAMS)}")
    items = [v.strip() for v in vals.split(",") if v.strip()]
    if not items:
        raise UsageError("--sweep: empty value list")
    try:
        values = [float(v) for v in items]
    except ValueError:
        raise UsageError(f"--sweep: values must be numbers, got {vals!r}") from None
    if any(not v > 0 for v in values):
        raise UsageError("--sweep: values must be positive")
    return name, values


def _common(p: argparse.ArgumentParser, scheme_default: str):
    p.add_argument("--scenario", required=True, type=Path, help="scenario YAML file")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--scheme", default=scheme_default, help="proposed, scheme1, scheme2 (comma list for sweeps)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario seed (drives the default cycles-per-bit spread)")
    p.add_argument("--tol", type=float, default=1e-4, help="relative stopping tolerance on total bits")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uav-mec", description="UAV-aided MEC offloading optimizer")
    sub = parser.add_subparsers(dest="command", required=True)
    ps = sub.add_parser("solve", help="solve one scenario")
    _common(ps, "proposed")
    pw = sub.add_parser("sweep", help="sweep one UAV parameter")
    _common(pw, "proposed")
    pw.add_argument("--sweep", required=True, help="PARAM=v1,v2,... with PARAM in battery_J, cpu_freq_hz, v_max")
    pw.add_argument("--jobs", type=int, default=1, help="concurrent sweep points")
    pe = sub.add_parser("example-scenario", help="write a default scenario file")
    pe.add_argument("--out", required=True, type=Path)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--ues", type=int, default=8)
    pe.add_argument("--slots", type=int, default=50)
    return parser


def _load(args):
    import yaml

    try:
        doc = yaml.safe_load(args.scenario.read_text())
    except OSError as exc:
        raise UsageError(f"cannot read scenario: {exc}") from None
    except yaml.YAMLError as exc:
        raise scenario.SchemaError("<file>", f"not valid YAML: {exc}") from None
    if args.seed is not None:
        if args.seed < 0:
            raise UsageError("--seed must be non-negative")
        if isinstance(doc, dict):
            doc = {**doc, "seed": args.seed}
    return scenario.from_dict(doc)


def _config(args, scheme) -> RunConfig:
    if not args.tol > 0:
        raise UsageError("--tol must be > 0")
    if args.max_iter < 1:
        raise UsageError("--max-iter must be >= 1")
    return RunConfig(tol_rel=args.tol, max_iter=args.max_iter, scheme=scheme,
                     seed=args.seed if args.seed is not None else 0)


def cmd_solve(args) -> int:
    scen = _load(args)
    schemes = _schemes(args.scheme)
    if len(schemes) != 1:
        raise UsageError("solve runs a single scheme")
    cfg = _config(args, schemes[0])
    try:
        report = orchestrator.run(scen, cfg)
    except InfeasibleProblem as exc:
        output.write_failure(args.out, "infeasible", str(exc), exc.family)
        print(f"infeasible ({exc.family}): {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InfeasibleInit, BudgetExhausted) as exc:
        output.write_failure(args.out, "infeasible", str(exc), "velocity" if isinstance(exc, InfeasibleInit) else "energy")
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    output.write_solution(args.out, scen, report)
    print(f"{report.scheme.value}: S = {report.bits:.6e} bits, {len(report.iterations)} iterations, {report.status}")
    return EXIT_OK if report.status in ("converged", "max_iter") else EXIT_ERROR


def cmd_sweep(args) -> int:
    scen = _load(args)
    name, values = _sweep_spec(args.sweep)
    schemes = _schemes(args.scheme)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    cfg = _config(args, schemes[0])
    points = orchestrator.sweep(scen, name, values, schemes, cfg, jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    output.write_sweep(args.out / "sweep.csv", points)
    for pt in points:
        bits = f"{pt.report.bits:.6e}" if pt.report is not None else "-"
        print(f"{name}={pt.value:g} {pt.scheme.value}: {bits} ({pt.status})")
    return EXIT_OK


def cmd_example(args) -> int:
    doc = scenario.default_document(seed=args.seed, K=args.ues, N=args.slots)
    scenario.from_dict(doc)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    scenario.write_document(doc, args.out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"solve": cmd_solve, "sweep": cmd_sweep, "example-scenario": cmd_example}
    try:
        return handlers[args.command](args)
    except scenario.SchemaError as exc:
        print(f"scenario error at {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (UsageError, InstanceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
