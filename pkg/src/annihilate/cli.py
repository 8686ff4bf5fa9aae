"""Command line entry point.

Subcommands: ``run`` (one particle simulation), ``continuum`` (the
finite-volume reference), ``converge`` (the resolution-ladder study),
``check`` (the inequality battery plus negative control), ``validate``
(scenario and kernel-assumption validation).  Every command reads one
scenario file, writes its delimited artifacts plus a ``manifest.json`` into
the output directory, and (unless ``--no-plots``) renders figures next to
them.  Outputs are byte-reproducible for a fixed scenario and seed; the
``ANNIHILATE_LOG`` environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path


from . import __version__
from .analysis import (annihilated_mass, convergence_study, standard_checks,
                       weak_form_residual)
from .continuum import run_continuum
from .dynamics import run
from .kernels import validate_assumptions
from .measures import from_state
from .scenario import Scenario, ScenarioError, load_scenario
from .suite import negative_control_trajectory

log = logging.getLogger("annihilate")


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_manifest(outdir: Path, command: str, scenario: Scenario, artifacts) -> None:
    _write_json(outdir / "manifest.json", {
        "tool": "annihilate",
        "version": __version__,
        "command": command,
        "scenario": scenario.raw,
        "scenario_name": scenario.name,
        "seed": scenario.seed,
        "artifacts": sorted(str(a) for a in artifacts),
    })


def _outdir(args, scenario: Scenario) -> Path:
    out = Path(args.out if args.out else scenario.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    return scenario


def _write_measures_csv(path: Path, state) -> None:
    pair, kappa, kp, km = from_state(state)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("position,weight,species\n")
        for atoms, species in ((pair.plus, "mu_plus"), (pair.minus, "mu_minus"),
                               (kp, "kappa_plus"), (km, "kappa_minus")):
            for p, w in zip(atoms.positions, atoms.weights):
                fh.write(f"{_fmt(p)},{_fmt(w)},{species}\n")


def cmd_run(args) -> int:
    scenario = _load(args)
    out = _outdir(args, scenario)
    state = scenario.build_state()
    log.info("running %s: n=%d, T=%g", scenario.name, state.n, scenario.sim.T)
    traj = run(state, scenario.pair, scenario.sim)
    artifacts = ["trajectory.csv", "events.json", "measures.csv", "manifest.json"]
    traj.to_csv(out / "trajectory.csv")
    traj.events_to_json(out / "events.json")
    _write_measures_csv(out / "measures.csv", traj.states[-1])
    if args.plots:
        from .plots import plot_energy, plot_trajectory, save_figure
        figdir = out / "figures"
        figdir.mkdir(exist_ok=True)
        save_figure(plot_trajectory(traj), figdir / "trajectory.png")
        save_figure(plot_energy(traj), figdir / "energy.png")
        artifacts += ["figures/trajectory.png", "figures/energy.png"]
    _write_manifest(out, "run", scenario, artifacts)
    log.info("events: %d, annihilated mass: %g", len(traj.events), annihilated_mass(traj))
    return 0


def cmd_continuum(args) -> int:
    scenario = _load(args)
    out = _outdir(args, scenario)
    T = scenario.sim.T
    snap_times = [k * T / 8 for k in range(1, 9)]
    snaps = run_continuum(scenario.continuum_initial(), scenario.pair, T,
                          cfl=scenario.cfl, snapshot_times=snap_times)
    with open(out / "continuum.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("t,x,rho_plus,rho_minus,kappa\n")
        for s in snaps:
            for x, rp, rm in zip(s.grid.centers, s.rho_plus, s.rho_minus):
                fh.write(f"{_fmt(s.t)},{_fmt(x)},{_fmt(rp)},{_fmt(rm)},{_fmt(rp - rm)}\n")
    artifacts = ["continuum.csv", "manifest.json"]
    if args.plots:
        from .plots import plot_continuum, save_figure
        figdir = out / "figures"
        figdir.mkdir(exist_ok=True)
        save_figure(plot_continuum(snaps), figdir / "continuum.png")
        artifacts.append("figures/continuum.png")
    _write_manifest(out, "continuum", scenario, artifacts)
    log.info("kappa mass: %g -> %g", snaps[0].kappa_mass, snaps[-1].kappa_mass)
    return 0


def cmd_converge(args) -> int:
    scenario = _load(args)
    out = _outdir(args, scenario)
    if not scenario.n_list:
        raise ScenarioError("converge needs an n_list in the scenario")
    table = convergence_study(scenario, reference=args.reference, jobs=args.jobs)
    table.to_csv(out / "convergence.csv")
    table.distances_to_csv(out / "distances.csv")
    artifacts = ["convergence.csv", "distances.csv", "manifest.json"]
    if args.plots:
        from .plots import plot_convergence, save_figure
        figdir = out / "figures"
        figdir.mkdir(exist_ok=True)
        save_figure(plot_convergence(table), figdir / "convergence.png")
        artifacts.append("figures/convergence.png")
    _write_manifest(out, "converge", scenario, artifacts)
    for r in table.rows:
        log.info("n=%d vs %s: sup distance %.6g", r.n, r.n_ref, r.sup_distance)
    return 0 if table.strictly_decreasing else 1


def cmd_check(args) -> int:
    scenario = _load(args)
    out = _outdir(args, scenario)
    traj = run(scenario.build_state(), scenario.pair, scenario.sim)
    reports = standard_checks(traj, seed=scenario.seed, context={"scenario": scenario.name})
    reports.append(weak_form_residual(traj))
    payload = [dict(r.as_dict(), expected_fail=False) for r in reports]

    control = check_failed = None
    if args.negative_control:
        from .analysis import check_energy_monotone
        control = check_energy_monotone(negative_control_trajectory(),
                                        context={"scenario": "negative_control"})
        payload.append(dict(control.as_dict(), expected_fail=True))
        check_failed = not control.passed
    _write_json(out / "checks.json", payload)
    artifacts = ["checks.json", "manifest.json"]
    if args.plots:
        from .plots import plot_energy, save_figure
        figdir = out / "figures"
        figdir.mkdir(exist_ok=True)
        save_figure(plot_energy(traj), figdir / "energy.png")
        artifacts.append("figures/energy.png")
    _write_manifest(out, "check", scenario, artifacts)
    ok = all(r.passed for r in reports)
    if control is not None:
        ok = ok and check_failed
    for r in reports:
        log.info("%-24s %s slack=%.3g", r.name, "pass" if r.passed else "FAIL", r.slack)
    return 0 if ok else 1


def cmd_validate(args) -> int:
    try:
        scenario = _load(args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1
    out = _outdir(args, scenario)
    report = validate_assumptions(scenario.pair)
    payload = {
        "scenario": scenario.name,
        "kernels": scenario.pair.label(),
        "kernel_assumptions": report.as_dict(),
        "bounds": {
            "rVprime": scenario.pair.bound_rVprime,
            "rWprime": scenario.pair.bound_rWprime,
            "W0": scenario.pair.bound_W0,
            "quad_lower_const": scenario.pair.quad_lower_const,
            "growth_const": scenario.pair.growth_const,
        },
    }
    _write_json(out / "validation.json", payload)
    _write_manifest(out, "validate", scenario, ["validation.json", "manifest.json"])
    print(f"{scenario.name}: kernel assumptions "
          f"{'pass' if report.passed else 'FAIL'} ({scenario.pair.label()})")
    return 0 if report.passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="annihilate",
        description="Signed interacting particles on the line with annihilation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario TOML file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel independent runs")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--plots", action=argparse.BooleanOptionalAction, default=True,
                       help="render figures next to the delimited output")

    p_run = sub.add_parser("run", help="integrate one particle scenario")
    common(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_cont = sub.add_parser("continuum", help="run the finite-volume reference solver")
    common(p_cont)
    p_cont.set_defaults(fn=cmd_continuum)

    p_conv = sub.add_parser("converge", help="resolution-ladder convergence study")
    common(p_conv)
    p_conv.add_argument("--reference", choices=("self-doubling", "continuum"),
                        default="self-doubling")
    p_conv.set_defaults(fn=cmd_converge)

    p_check = sub.add_parser("check", help="run the inequality checks on a scenario")
    common(p_check)
    p_check.add_argument("--negative-control", action=argparse.BooleanOptionalAction,
                         default=True, help="also run the adversarial control")
    p_check.set_defaults(fn=cmd_check)

    p_val = sub.add_parser("validate", help="validate a scenario file and its kernels")
    common(p_val)
    p_val.set_defaults(fn=cmd_validate)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, os.environ.get("ANNIHILATE_LOG", "WARNING").upper(),
                      logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
