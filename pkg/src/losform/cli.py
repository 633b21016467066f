"""Command-line entry point: simulate, certify, validate, demo-paper."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .certificate import InfeasibleCertificate, build_certificate_matrices, check_roa, find_feasible_c
from .scenario import ScenarioError, load_scenario, paper_scenario
from .sim import DivergenceError, RunResult, initial_errors, run, write_outputs

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3

log = logging.getLogger("losform")


def _simulate(scenario, args):
    try:
        result = run(scenario, step=args.step, horizon=args.horizon, decimate=args.decimate)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.records:
            write_outputs(RunResult(exc.records, exc.summary), args.out)
        return EXIT_DIVERGED
    write_outputs(result, args.out)
    s = result.summary
    print(f"{s['name']}: {s['steps']} steps, final t = {s['final_time']:g} s, "
          f"max drift {s['max_drift']:.2e}, U violations {s['U_violations']}")
    for edge, psi in s["final_psi"].items():
        print(f"  Psi_{edge} = {psi:.3e}   |e_Q_{edge}| = {s['final_eQ_norm'][edge]:.3e}")
    return EXIT_OK


def certify_report(scenario):
    B_d = scenario.command.velocity_bound(scenario.horizon)
    report = {"B_d": B_d, "psi_cap": scenario.psi_cap}
    try:
        c = find_feasible_c(scenario.gains, scenario.inertias, B_d, scenario.chain, scenario.psi_cap)
    except InfeasibleCertificate:
        c = None
    cert = build_certificate_matrices(scenario.gains, scenario.inertias, B_d, c or 0.0,
                                      scenario.chain, scenario.psi_cap)
    roa = check_roa(scenario.inertias, initial_errors(scenario), scenario.gains,
                    scenario.psi_cap, scenario.chain)
    report.update({
        "feasible_c": c,
        "min_eigenvalues": {k: float(v) for k, v in sorted(cert.min_eigenvalues.items())},
        "heuristic": cert.heuristic,
        "roa_member": roa.member,
        "margins": {"config": roa.config_margin, "velocity": roa.velocity_margin,
                    "psi_sum": roa.psi_sum, "kinetic": roa.kinetic},
    })
    return report


def _certify(scenario, args):
    report = certify_report(scenario)
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK if report["feasible_c"] is not None else EXIT_INVALID


def _validate(scenario, args):
    print(f"{scenario.name}: valid, chain {'-'.join(map(str, scenario.chain))}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="losform", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="propagate a scenario and write telemetry")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--out", required=True)
    demo = sub.add_parser("demo-paper", help="run the embedded seven-craft example")
    demo.add_argument("--out", default="out/paper_seven_craft")
    for q in (sim, demo):
        q.add_argument("--step", type=float)
        q.add_argument("--horizon", type=float)
        q.add_argument("--decimate", type=int)

    for name, text in (("certify", "print the gain certificate as JSON"),
                       ("validate", "check a scenario file")):
        q = sub.add_parser(name, help=text)
        q.add_argument("--scenario", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scenario = paper_scenario() if args.command == "demo-paper" else load_scenario(args.scenario)
        if args.command in ("simulate", "demo-paper"):
            # overrides go through the same checks as the file values
            if args.step is not None and not 0.0 < args.step <= 0.01:
                raise ScenarioError("step must lie in (0, 0.01]")
            if args.horizon is not None and not args.horizon > 0.0:
                raise ScenarioError("horizon must be positive")
            if args.decimate is not None and args.decimate < 1:
                raise ScenarioError("decimate must be >= 1")
    except (ScenarioError, OSError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    handler = {"simulate": _simulate, "demo-paper": _simulate,
               "certify": _certify, "validate": _validate}[args.command]
    np.seterr(over="ignore", invalid="ignore")
    return handler(scenario, args)


if __name__ == "__main__":
    sys.exit(main())
