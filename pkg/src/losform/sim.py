"""Fixed-step closed-loop propagation, telemetry and output files."""

from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .certificate import (InfeasibleCertificate, chain_weights, check_roa, find_feasible_c)
from .controller import control_moment, error_state
from .error_geometry import attitude_error_vector, edge_errors
from .graph import chain_edges
from .los import SpacecraftState, synthesize_los
from .so3 import cross, hat, orthonormality_error, reorthonormalize, transpose

log = logging.getLogger(__name__)

U_TOL = 1e-6
A_CACHE_TOL = 1e-9
CHUNK = 2000


class DivergenceError(RuntimeError):
    """Integration produced a non-finite or non-projectable state."""

    def __init__(self, message, records=(), summary=None):
        super().__init__(message)
        self.records = list(records)
        self.summary = summary


def _mv(M, v):
    return (M @ v[..., None])[..., 0]


def rigid_body_rates(R, omega, J, J_inv, u):
    """``dR/dt = R hat(Omega)`` and ``J dOmega/dt = u - Omega x J Omega``."""
    return R @ hat(omega), _mv(J_inv, u - cross(omega, _mv(J, omega)))


def rk4_step(rates, R, omega, h):
    """One classical RK4 step of the attitude/rate pair.

    ``rates(stage, R, omega)`` returns ``(dR, dOmega)``; ``stage`` is 0, 1 or 2
    for the start, midpoint and end of the step. No projection is done here.
    """
    k1R, k1w = rates(0, R, omega)
    k2R, k2w = rates(1, R + 0.5 * h * k1R, omega + 0.5 * h * k1w)
    k3R, k3w = rates(1, R + 0.5 * h * k2R, omega + 0.5 * h * k2w)
    k4R, k4w = rates(2, R + h * k3R, omega + h * k3w)
    R_next = R + (h / 6.0) * (k1R + 2.0 * k2R + 2.0 * k3R + k4R)
    w_next = omega + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    return R_next, w_next


class ClosedLoop:
    """Batched closed-loop right-hand side for a scenario.

    Evaluates the same LOS error kernel and control law as
    :func:`losform.controller.control_all`, vectorised over edges and crafts.
    """

    def __init__(self, scenario):
        self.scenario = scenario
        spec = scenario.spec
        self.spec = spec
        self.chain = scenario.chain
        self.edges = chain_edges(self.chain)
        self.nodes = list(spec.nodes)
        n, E = spec.n, len(self.edges)

        labels = []
        for i, j in self.edges:
            k = spec.assignment[(i, j)]
            labels += [(i, j), (i, k), (j, i), (j, k)]
        self.labels = sorted(set(labels))
        index = {lab: m for m, lab in enumerate(self.labels)}
        self.observer = np.array([i - 1 for i, _ in self.labels])
        self.S = np.array([spec.los_direction(i, j) for i, j in self.labels])
        quad = np.array([[index[lab] for lab in labels[4 * e:4 * e + 4]] for e in range(E)])
        self.i_ij, self.i_ik, self.i_ji, self.i_jk = quad.T

        g = [scenario.gains.for_edge(i, j) for i, j in self.edges]
        self.k_alpha = np.array([x.k_alpha for x in g])
        self.k_beta = np.array([x.k_beta for x in g])

        self.A_fwd = np.zeros((n, E))
        self.A_bwd = np.zeros((n, E))
        for e, (i, j) in enumerate(self.edges):
            wi = 1.0 / len(spec.neighbors(i))
            wj = 1.0 / len(spec.neighbors(j))
            self.A_fwd[i - 1, e] = wi
            self.A_bwd[j - 1, e] = wj
        self.B_fwd = (self.A_fwd > 0).astype(float)
        self.B_bwd = (self.A_bwd > 0).astype(float)

        states = scenario.initial_states
        self.J = np.array([s.J for s in states])
        self.J_inv = np.linalg.inv(self.J)
        self.k_omega = np.array([scenario.gains.k_omega[i] for i in self.nodes])
        self.active = np.array([i in self.chain for i in self.nodes], dtype=float)[:, None]
        weights = chain_weights(self.chain)
        self.weights = np.array([weights.get(i, 0.0) for i in self.nodes])

        R0 = np.array([s.R for s in states])
        self.a = self.live_a(R0)

    def los(self, R):
        return (self.S[:, None, :] @ R[self.observer])[:, 0, :]

    def live_a(self, R):
        b = self.los(R)
        n1 = np.linalg.norm(cross(b[self.i_ij], b[self.i_ik]), axis=-1)
        n2 = np.linalg.norm(cross(b[self.i_ji], b[self.i_jk]), axis=-1)
        return n1 * n2

    def signals(self, t):
        """Desired signals on a time array, in array layout."""
        sig = self.scenario.command.evaluate(t)
        Qd = np.stack([sig.Qd[e] for e in self.edges], axis=-3)
        wd = np.stack([sig.omega[i] for i in self.nodes], axis=-2)
        wdd = np.stack([sig.omega_dot[i] for i in self.nodes], axis=-2)
        return Qd, wd, wdd

    def evaluate(self, R, omega, Qd, wd, wdd):
        b = self.los(R)
        err = edge_errors(b[self.i_ij], b[self.i_ik], b[self.i_ji], b[self.i_jk], Qd,
                          self.k_alpha, self.k_beta, self.a)
        term = self.A_fwd @ err.e_ij + self.A_bwd @ err.e_ji
        e_omega = omega - wd
        u = control_moment(term, e_omega, wd, wdd, self.J, self.k_omega) * self.active
        return err, e_omega, u

    def rates(self, R, omega, Qd, wd, wdd):
        _, _, u = self.evaluate(R, omega, Qd, wd, wdd)
        return rigid_body_rates(R, omega, self.J, self.J_inv, u)

    def kernel_arrays(self):
        fwd = np.array([i - 1 for i, _ in self.edges], dtype=np.int64)
        bwd = np.array([j - 1 for _, j in self.edges], dtype=np.int64)
        e = np.arange(len(self.edges))
        return (self.observer.astype(np.int64), self.S,
                np.stack([self.i_ij, self.i_ik, self.i_ji, self.i_jk], axis=1).astype(np.int64),
                fwd, bwd, self.A_fwd[fwd, e].copy(), self.A_bwd[bwd, e].copy(),
                self.k_alpha, self.k_beta, self.a, self.J, self.J_inv, self.k_omega,
                self.active[:, 0].copy(), self.weights)

    def propagate_compiled(self, R, w, h, steps, Qd, wd, wdd):
        """``steps`` RK4 steps in the compiled kernel; see :func:`losform.kernel.propagate`."""
        if not hasattr(self, "_kernel_args"):
            self._kernel_args = self.kernel_arrays()
        return kernel.propagate(np.ascontiguousarray(R), np.ascontiguousarray(w), float(h), int(steps),
                                np.ascontiguousarray(Qd), np.ascontiguousarray(wd),
                                np.ascontiguousarray(wdd), *self._kernel_args)

    def propagate_numpy(self, R, w, h, steps, Qd, wd, wdd):
        """Reference counterpart of :meth:`propagate_compiled`."""
        Rs, ws = [R], [w]
        Us = np.full(steps + 1, np.nan)
        for k in range(steps):
            l = 2 * k
            err, e_omega, u = self.evaluate(R, w, Qd[l], wd[l], wdd[l])
            Us[k] = self.lyapunov(err, e_omega, 0.0)[0]
            first = rigid_body_rates(R, w, self.J, self.J_inv, u)

            def rates(stage, R_, w_, l=l, first=first):
                if stage == 0:
                    return first
                return self.rates(R_, w_, Qd[l + stage], wd[l + stage], wdd[l + stage])

            R_next, w_next = rk4_step(rates, R, w, h)
            try:
                if not (np.all(np.isfinite(R_next)) and np.all(np.isfinite(w_next))):
                    raise ValueError("non-finite state")
                R = reorthonormalize(R_next)
            except ValueError:
                return np.array(Rs), np.array(ws), Us, k
            w = w_next
            Rs.append(R)
            ws.append(w)
        err, e_omega, _ = self.evaluate(R, w, Qd[2 * steps], wd[2 * steps], wdd[2 * steps])
        Us[steps] = self.lyapunov(err, e_omega, 0.0)[0]
        return np.array(Rs), np.array(ws), Us, steps

    def lyapunov(self, err, e_omega, c):
        kinetic = 0.5 * np.einsum("n,ni,nij,nj->", self.weights, e_omega, self.J, e_omega)
        U = float(np.sum(err.psi) + kinetic)
        cross = np.sum((self.B_fwd @ err.e_ij + self.B_bwd @ err.e_ji) * e_omega)
        return U, U + c * float(cross)


@dataclass
class TelemetryRecord:
    t: float
    psi: np.ndarray          # (E,) per chain edge
    e_Q: np.ndarray          # (E, 3)
    e_norm: np.ndarray       # (E,)
    e_omega: np.ndarray      # (n, 3)
    u: np.ndarray            # (n, 3)
    U: float
    V: float
    drift: float
    edges: tuple = field(repr=False, default=())
    nodes: tuple = field(repr=False, default=())


@dataclass
class RunResult:
    records: list
    summary: dict
    U_series: np.ndarray = field(repr=False, default=None)


def step(states, t, h, scenario, loop=None):
    """Advance every craft by one RK4 step of length ``h`` from time ``t``."""
    loop = loop or ClosedLoop(scenario)
    R = np.array([s.R for s in states])
    w = np.array([s.omega for s in states])
    Qd, wd, wdd = loop.signals(np.array([t, t + 0.5 * h, t + h]))

    def rates(stage, R_, w_):
        return loop.rates(R_, w_, Qd[stage], wd[stage], wdd[stage])

    R_next, w_next = rk4_step(rates, R, w, h)
    if not (np.all(np.isfinite(R_next)) and np.all(np.isfinite(w_next))):
        raise DivergenceError(f"non-finite state after step at t={t}")
    R_next = reorthonormalize(R_next)
    return [SpacecraftState(R_next[m], w_next[m], s.J) for m, s in enumerate(states)]


def _certificate(scenario, horizon):
    B_d = scenario.command.velocity_bound(horizon)
    try:
        c = find_feasible_c(scenario.gains, scenario.inertias, B_d, scenario.chain, scenario.psi_cap)
        feasible = True
    except InfeasibleCertificate:
        warnings.warn("no feasible coupling constant; V is reported with c = 0")
        c, feasible = 0.0, False
    return {"B_d": B_d, "c": c, "feasible": feasible}


def initial_errors(scenario):
    sig = scenario.command.evaluate(0.0)
    return error_state(scenario.initial_states, scenario.spec, sig, scenario.gains)


def run(scenario, step=None, horizon=None, decimate=None, c=None, backend="compiled"):
    """Integrate the closed loop over ``[0, horizon]`` and collect telemetry.

    One record every ``decimate`` steps plus the final instant. ``U`` is
    evaluated at every step for the monotonicity audit. Raises
    :class:`DivergenceError` (carrying the records so far) on a non-finite
    state. ``backend="numpy"`` propagates with :class:`ClosedLoop` instead of
    the compiled kernel.
    """
    if backend not in ("compiled", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    h = float(step or scenario.step)
    T = float(horizon or scenario.horizon)
    d = int(decimate or scenario.decimate)
    N = int(round(T / h))
    if N < 1 or abs(N * h - T) > 1e-9 * max(1.0, T):
        raise ValueError("horizon must be a whole number of steps")

    loop = ClosedLoop(scenario)
    cert = _certificate(scenario, T)
    if c is not None:
        cert["c"] = float(c)
    c_val = cert["c"]
    roa = check_roa(scenario.inertias, initial_errors(scenario), scenario.gains,
                    scenario.psi_cap, scenario.chain)

    R = np.array([s.R for s in scenario.initial_states])
    w = np.array([s.omega for s in scenario.initial_states])
    edges, nodes = tuple(loop.edges), tuple(loop.nodes)
    records = []
    U_series = np.empty(N + 1)

    def record(t, R, w, Qd, wd, wdd):
        err, e_omega, u = loop.evaluate(R, w, Qd, wd, wdd)
        U, V = loop.lyapunov(err, e_omega, c_val)
        drift = float(np.max(orthonormality_error(R)))
        a_live = loop.live_a(R)
        if np.max(np.abs(a_live - loop.a)) > A_CACHE_TOL:
            raise RuntimeError("triangle constants drifted from their cached values")
        Q = transpose(R[[j - 1 for _, j in edges]]) @ R[[i - 1 for i, _ in edges]]
        records.append(TelemetryRecord(
            t=t, psi=np.array(err.psi), e_Q=attitude_error_vector(Q, Qd),
            e_norm=np.linalg.norm(err.e_ij, axis=-1), e_omega=e_omega, u=u, U=U, V=V,
            drift=drift, edges=edges, nodes=nodes))

    def summary(k_done, diverged=False):
        last = records[-1] if records else None
        Us = U_series[:k_done + 1]
        inc = np.diff(Us) if len(Us) > 1 else np.zeros(0)
        return {
            "name": scenario.name,
            "step": h, "horizon": T, "steps": k_done, "diverged": diverged,
            "final_time": last.t if last else 0.0,
            "final_psi": {_label(e): float(p) for e, p in zip(edges, last.psi)} if last else {},
            "final_eQ_norm": ({_label(e): float(np.linalg.norm(v)) for e, v in zip(edges, last.e_Q)}
                              if last else {}),
            "max_drift": max((r.drift for r in records), default=0.0),
            "U_violations": int(np.sum(inc > U_TOL)),
            "max_U_increase": float(inc.max()) if inc.size else 0.0,
            "certificate": cert,
            "roa": roa.__dict__,
        }

    propagate = loop.propagate_compiled if backend == "compiled" else loop.propagate_numpy
    k = 0
    while k < N:
        k_end = min(N, k + CHUNK)
        m = np.arange(2 * k, 2 * k_end + 1)
        Qd, wd, wdd = loop.signals(m * (0.5 * h))
        Rs, ws, Us, done = propagate(R, w, h, k_end - k, Qd, wd, wdd)
        U_series[k:k + done + 1] = Us[:done + 1]
        last = k_end if done == k_end - k else k + done
        for kk in range(k, last + 1 if last == N or last < k_end else last):
            if kk % d == 0 or kk == N:
                l = kk - k
                record(kk * h, Rs[l], ws[l], Qd[2 * l], wd[2 * l], wdd[2 * l])
        if last < k_end:
            raise DivergenceError(f"divergence at t={(last + 1) * h:.6g}: non-finite or non-projectable state",
                                  records, summary(last, diverged=True))
        R, w = Rs[-1], ws[-1]
        k = k_end
    return RunResult(records=records, summary=summary(N), U_series=U_series)


def _label(edge):
    i, j = edge
    return f"{i}{j}" if i < 10 and j < 10 else f"{i}_{j}"


def _node(i):
    return str(i)


def csv_header(records):
    r = records[0]
    cols = ["t"]
    cols += [f"Psi_{_label(e)}" for e in r.edges]
    cols += [f"eQ_{_label(e)}_{ax}" for e in r.edges for ax in "xyz"]
    cols += [f"enorm_{_label(e)}" for e in r.edges]
    cols += [f"eW_{_node(i)}_{ax}" for i in r.nodes for ax in "xyz"]
    cols += [f"u_{_node(i)}_{ax}" for i in r.nodes for ax in "xyz"]
    cols += ["U", "V", "drift"]
    return cols


def _row(r):
    return np.concatenate([[r.t], r.psi, r.e_Q.ravel(), r.e_norm, r.e_omega.ravel(), r.u.ravel(),
                           [r.U, r.V, r.drift]])


def _fmt(values):
    return ",".join(f"{x:.17g}" for x in values)


def emit_csv(records, path):
    """Telemetry table, one line per record, 17 significant digits."""
    if not records:
        raise ValueError("no telemetry records")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(csv_header(records)) + "\n")
        for r in records:
            fh.write(_fmt(_row(r)) + "\n")


def _downsample(n, max_points):
    if max_points is None or n <= max_points:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, max_points)).astype(int))


PLOT_FILES = ("plot_psi.csv", "plot_eq.csv", "plot_ew.csv", "plot_u.csv")


def emit_plot_data(records, out_dir, max_points=None):
    """Four series tables: Psi per edge, e_Q per edge, e_Omega per craft, u per craft.

    Downsampling keeps the first and last record. Returns the written paths.
    """
    if not records:
        raise ValueError("no telemetry records")
    idx = _downsample(len(records), max_points)
    rs = [records[m] for m in idx]
    r0 = rs[0]
    E = [_label(e) for e in r0.edges]
    tables = {
        "plot_psi.csv": ([f"Psi_{e}" for e in E], lambda r: r.psi),
        "plot_eq.csv": ([f"eQ_{e}_{ax}" for e in E for ax in "xyz"], lambda r: r.e_Q.ravel()),
        "plot_ew.csv": ([f"eW_{i}_{ax}" for i in r0.nodes for ax in "xyz"], lambda r: r.e_omega.ravel()),
        "plot_u.csv": ([f"u_{i}_{ax}" for i in r0.nodes for ax in "xyz"], lambda r: r.u.ravel()),
    }
    paths = []
    for name, (cols, get) in tables.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(["t"] + cols) + "\n")
            for r in rs:
                fh.write(_fmt(np.concatenate([[r.t], get(r)])) + "\n")
        paths.append(path)
    return paths


def write_outputs(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    emit_csv(result.records, os.path.join(out_dir, "telemetry.csv"))
    emit_plot_data(result.records, out_dir)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
