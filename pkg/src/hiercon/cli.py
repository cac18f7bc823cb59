"""Command-line front end.

Exit codes: 0 ok, 2 invalid scenario, 3 I/O or parse failure, 4 the
simulation diverged and ``--allow-unstable`` was not given.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dde_sim
from .delay import effective_delays, stability_verdict
from .errors import DomainError, InvalidSpecError
from .hierarchy import assemble, validate
from .powershare import power_report
from .scenario import ScenarioError, ScenarioReadError, load, with_sim
from .spectral import c_invariance_check, spectral_report

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_DIVERGED = 4

log = logging.getLogger("hiercon")


def exit_code(kind: str, allow_unstable: bool = False) -> int:
    """Exit status of ``simulate``/``powershare`` for a classification kind."""
    if kind == dde_sim.DIVERGING and not allow_unstable:
        return EXIT_DIVERGED
    return EXIT_OK


def _emit(payload: dict, out) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _load_valid(path):
    sc = load(path)
    violations = validate(sc.spec)
    if violations:
        raise InvalidSpecError(violations)
    if sc.fleet is not None:
        sc.fleet.check()
    return sc


def cmd_validate(args, path) -> int:
    sc = load(path)
    violations = validate(sc.spec)
    if sc.fleet is not None and not violations:
        try:
            sc.fleet.check()
        except DomainError as exc:
            violations = [f"generators: {exc}"]
    if violations:
        print(f"{path}: invalid")
        for v in violations:
            print(f"  {v}")
        return EXIT_INVALID
    print(f"{path}: valid")
    return EXIT_OK


def cmd_spectrum(args, path) -> int:
    sc = _load_valid(path)
    m = assemble(sc.spec)
    report = spectral_report(m, sc.x0())
    payload = report.to_json()
    if args.seed is not None and m.M > 1:
        res = c_invariance_check(sc.spec, 20, np.random.default_rng(args.seed))
        payload["c_invariance"] = {"trials": res.trials, "pass": res.ok,
                                   "worst_layer": res.worst_layer, "worst_total": res.worst_total}
    _emit(payload, args.out)
    return EXIT_OK


def cmd_bounds(args, path) -> int:
    sc = _load_valid(path)
    m = assemble(sc.spec)
    report = stability_verdict(sc.spec, spectral_report(m))
    layers = ",".join(str(b) for b in report.binding_layers) or "-"
    print(f"{report.verdict} binding_layers={layers}")
    if args.out:
        _emit(report.to_json(), args.out)
    return EXIT_OK


def _simulate(args, path, with_power: bool) -> int:
    sc = _load_valid(path)
    notes = []
    if sc.sim is None:
        notes.append("no sim block: default simulation options applied")
    sc = with_sim(sc, step=args.step, t_end=args.t_end)
    x0 = sc.x0()
    if x0 is None:
        raise ScenarioError("scenario needs generators or initial_state to simulate")
    if x0.shape != (sc.spec.n_physical,):
        raise ScenarioError(f"initial_state has {x0.size} entries, expected {sc.spec.n_physical}")
    m = assemble(sc.spec)
    traj = dde_sim.integrate(m, effective_delays(sc.spec), x0, sc.sim)
    cls = traj.classification
    report = {
        "scenario": sc.name or str(path),
        "classification": cls.to_json(),
        "predicted_consensus": traj.consensus,
        "final_state": [float(v) for v in traj.final],
        "t_final": float(traj.times[-1]),
        "step": traj.step,
        "conservation_max_dev": dde_sim.conservation_series(traj) if traj.times.size > 1 else 0.0,
        "notes": notes,
    }
    if with_power and sc.fleet is not None:
        report["power"] = power_report(traj, sc.fleet).to_json()
    csv_path = args.csv or sc.output.get("csv")
    if csv_path:
        write_csv(traj, csv_path)
        Path(csv_path).with_suffix(".json").write_text(json.dumps(report, indent=2) + "\n")
    _emit(report, args.out or sc.output.get("report"))
    log.info("%s: %s", path, cls)
    return exit_code(cls.kind, args.allow_unstable)


def cmd_simulate(args, path) -> int:
    return _simulate(args, path, with_power=False)


def cmd_powershare(args, path) -> int:
    return _simulate(args, path, with_power=True)


def write_csv(traj, path) -> None:
    """Trajectory as ``t,x1..xN,conservation`` with 12 significant digits."""
    n = traj.states.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i}" for i in range(1, n + 1)] + ["conservation"])
        for t, x, c in zip(traj.times, traj.states, traj.conservation):
            w.writerow([f"{t:.12g}"] + [f"{v:.12g}" for v in x] + [f"{c:.12g}"])


COMMANDS = {
    "validate": cmd_validate,
    "spectrum": cmd_spectrum,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "powershare": cmd_powershare,
}


def run_one(args, path) -> int:
    try:
        return COMMANDS[args.command](args, path)
    except ScenarioReadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ScenarioError, InvalidSpecError, DomainError) as exc:
        print(f"{path}: invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hiercon", description="Hierarchical consensus analysis and simulation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("validate", "check a scenario file"),
        ("spectrum", "layer spectra, union check and consensus value"),
        ("bounds", "interlayer-delay stability verdict"),
        ("simulate", "integrate the delayed dynamics"),
        ("powershare", "simulate and report generator power sharing"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("paths", nargs="+", help="scenario JSON file(s) or built-in names such as fig1_case1")
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--jobs", type=int, default=1, help="process scenarios in parallel")
        if name == "spectrum":
            p.add_argument("--seed", type=int, help="also run a seeded collecting-vector invariance check")
        if name in ("simulate", "powershare"):
            p.add_argument("--csv", help="write the trajectory CSV here")
            p.add_argument("--step", type=float, help="integration step in seconds")
            p.add_argument("--t-end", dest="t_end", type=float, help="simulation horizon in seconds")
            p.add_argument("--allow-unstable", action="store_true", help="exit 0 even if the run diverges")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HIERCON_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    for opt in ("seed", "csv", "step", "t_end", "allow_unstable"):
        if not hasattr(args, opt):
            setattr(args, opt, None)
    if len(args.paths) > 1 and (args.out or args.csv):
        print("error: --out/--csv need a single scenario", file=sys.stderr)
        return EXIT_IO
    if args.jobs > 1 and len(args.paths) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(run_one, [args] * len(args.paths), args.paths))
    else:
        codes = [run_one(args, p) for p in args.paths]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
