"""Run the seven-craft example and plot the error histories.

    python3 scripts/run_paper_example.py --out out/paper_seven_craft

Writes the usual telemetry files plus ``errors.png`` (needs matplotlib).
"""

import argparse
import os
import time

import numpy as np

from losform.cli import certify_report
from losform.scenario import paper_scenario
from losform.sim import run, write_outputs


def plot(records, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = np.array([r.t for r in records])
    labels = [f"{i}{j}" for i, j in records[0].edges]
    psi = np.array([r.psi for r in records])
    eq = np.array([np.linalg.norm(r.e_Q, axis=1) for r in records])
    ew = np.array([np.linalg.norm(r.e_omega, axis=1) for r in records])
    u = np.array([np.linalg.norm(r.u, axis=1) for r in records])

    fig, ax = plt.subplots(2, 2, figsize=(11, 7), sharex=True)
    for m, lab in enumerate(labels):
        ax[0, 0].plot(t, psi[:, m], label=f"Psi_{lab}")
        ax[0, 1].semilogy(t, np.maximum(eq[:, m], 1e-16), label=f"e_Q {lab}")
    for i in range(ew.shape[1]):
        ax[1, 0].semilogy(t, np.maximum(ew[:, i], 1e-16), label=f"craft {i + 1}")
        ax[1, 1].plot(t, u[:, i], label=f"craft {i + 1}")
    ax[0, 0].set_ylabel("configuration error")
    ax[0, 1].set_ylabel("|e_Q| [rad]")
    ax[1, 0].set_ylabel("|e_Omega| [rad/s]")
    ax[1, 1].set_ylabel("|u| [N m]")
    for a in ax.flat:
        a.grid(True, alpha=0.3)
        a.legend(fontsize=7, ncol=2)
    for a in ax[1]:
        a.set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/paper_seven_craft")
    ap.add_argument("--horizon", type=float)
    ap.add_argument("--no-plot", action="store_true")
    args = ap.parse_args()

    sc = paper_scenario()
    report = certify_report(sc)
    print(f"B_d = {report['B_d']:.4f}, feasible c = {report['feasible_c']}, "
          f"initial state inside the certified region: {report['roa_member']}")

    t0 = time.perf_counter()
    res = run(sc, horizon=args.horizon)
    print(f"{res.summary['steps']} steps in {time.perf_counter() - t0:.2f} s, "
          f"U violations {res.summary['U_violations']}")
    for edge, val in res.summary["final_eQ_norm"].items():
        print(f"  |e_Q_{edge}|(T) = {val:.3e}")

    write_outputs(res, args.out)
    if not args.no_plot:
        plot(res.records, os.path.join(args.out, "errors.png"))
        print(f"plot written to {os.path.join(args.out, 'errors.png')}")


if __name__ == "__main__":
    main()
