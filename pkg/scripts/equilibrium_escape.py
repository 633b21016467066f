"""Seed the two-craft loop at each undesired critical point and watch it leave.

The three critical configurations are built from the eigenframe of the LOS
weight matrix; a small random rotation is applied to the first craft.
"""

import argparse

import numpy as np

from losform.error_geometry import eigenframe, undesired_attitude
from losform.scenario import scenario_from_dict
from losform.sim import run
from losform.so3 import euler321_to_rotation, exp_so3

POSITIONS = np.array([[0, 0, 0], [10, 0, 0], [3, 8, 0.0]])
COMMAND = [0.3, 0.2, 0.1]


def scenario(R1, horizon):
    return scenario_from_dict({
        "name": "equilibrium_escape",
        "positions": POSITIONS.tolist(),
        "assignment": [[1, 2, 3]],
        "crafts": [{"inertia": [3, 2, 1], "attitude": {"matrix": R1.tolist()}}, {"inertia": [3, 2, 1]}, {}],
        "trajectories": {"1-2": {"type": "constant", "euler321": COMMAND}},
        "gains": {"k_alpha": 25.0, "k_beta": 25.1, "k_omega": 7.0},
        "horizon": horizon, "decimate": 10,
    })


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--perturbation", type=float, default=1e-4, help="rad")
    ap.add_argument("--horizon", type=float, default=30.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    d = lambda a, b: (POSITIONS[b] - POSITIONS[a]) / np.linalg.norm(POSITIONS[b] - POSITIONS[a])
    U = eigenframe(d(0, 1), np.cross(d(0, 1), d(0, 2)))
    Qd = euler321_to_rotation(*COMMAND)
    for which in ("D1", "D2", "D3"):
        eta = rng.normal(size=3)
        R1 = undesired_attitude(np.eye(3), Qd, U, which) @ exp_so3(args.perturbation * eta / np.linalg.norm(eta))
        res = run(scenario(R1, args.horizon))
        t = np.array([r.t for r in res.records])
        psi = np.array([r.psi[0] for r in res.records])
        left = np.nonzero(psi < psi[0] - 0.1)[0]
        t_escape = t[left[0]] if left.size else float("nan")
        print(f"{which}: Psi(0) = {psi[0]:8.4f}, left by 0.1 at t = {t_escape:5.2f} s, "
              f"Psi(T) = {psi[-1]:.2e}, |e_Q|(T) = {np.linalg.norm(res.records[-1].e_Q):.2e}")


if __name__ == "__main__":
    main()
