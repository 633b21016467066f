"""Desired relative-attitude commands and the LOS-based control moments."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .error_geometry import EdgeGains, ErrorState, edge_errors, error_vectors
from .graph import chain_edges, chain_order, derive_sets
from .los import synthesize_los
from .so3 import cross, euler321_to_rotation, transpose

GIMBAL_MARGIN = 1e-3
BOUND_MARGIN = 1.1


def _mv(M, v):
    return (M @ v[..., None])[..., 0]


@dataclass(frozen=True)
class AngleFunction:
    """``offset + amplitude * sin(frequency t)`` (or ``cos``, or a constant)."""

    kind: str = "constant"
    amplitude: float = 0.0
    frequency: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "sin", "cos"):
            raise ValueError(f"unknown angle function kind {self.kind!r}")

    @classmethod
    def constant(cls, value):
        return cls("constant", offset=float(value))

    def derivatives(self, t):
        """Value, first and second time derivative at ``t``."""
        t = np.asarray(t, dtype=float)
        a, w = self.amplitude, self.frequency
        if self.kind == "constant":
            z = np.zeros_like(t)
            return z + self.offset, z, z
        if self.kind == "sin":
            s, c = np.sin(w * t), np.cos(w * t)
            return self.offset + a * s, a * w * c, -a * w * w * s
        s, c = np.sin(w * t), np.cos(w * t)
        return self.offset + a * c, -a * w * s, -a * w * w * c

    def max_abs(self):
        return abs(self.offset) + (0.0 if self.kind == "constant" else abs(self.amplitude))


class DesiredRelativeTrajectory:
    """A smooth ``Qd(t)`` with body rate ``Omega_d = vee(Qd^T dQd/dt)`` and its derivative."""

    def evaluate(self, t):
        """Return ``(Qd, Omega_d, Omega_d_dot)``; broadcasts over an array of times."""
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantTrajectory(DesiredRelativeTrajectory):
    Q: np.ndarray = field(default_factory=lambda: np.eye(3))

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        Q = np.broadcast_to(np.asarray(self.Q, dtype=float), t.shape + (3, 3)).copy()
        z = np.zeros(t.shape + (3,))
        return Q, z, z.copy()


@dataclass(frozen=True)
class EulerTrajectory(DesiredRelativeTrajectory):
    """``Qd = R_z(yaw) R_y(pitch) R_x(roll)`` with analytic rate and acceleration."""

    yaw: AngleFunction
    pitch: AngleFunction
    roll: AngleFunction

    def __post_init__(self):
        if self.pitch.max_abs() >= np.pi / 2 - GIMBAL_MARGIN:
            warnings.warn("pitch command can approach +-pi/2; Euler rates are ill-conditioned there",
                          stacklevel=3)

    def evaluate(self, t):
        a, da, dda = self.yaw.derivatives(t)
        b, db, ddb = self.pitch.derivatives(t)
        c, dc, ddc = self.roll.derivatives(t)
        sb, cb = np.sin(b), np.cos(b)
        sc, cc = np.sin(c), np.cos(c)
        Q = euler321_to_rotation(a, b, c)
        omega = np.stack([
            dc - da * sb,
            db * cc + da * cb * sc,
            -db * sc + da * cb * cc,
        ], axis=-1)
        omega_dot = np.stack([
            ddc - dda * sb - da * db * cb,
            ddb * cc - db * dc * sc + dda * cb * sc - da * db * sb * sc + da * dc * cb * cc,
            -ddb * sc - db * dc * cc + dda * cb * cc - da * db * sb * cc - da * dc * cb * sc,
        ], axis=-1)
        return Q, omega, omega_dot


@dataclass(frozen=True)
class TransposedTrajectory(DesiredRelativeTrajectory):
    """``Qd = P^T`` for a base trajectory ``P``; then ``Omega_d = -P omega_P``."""

    base: DesiredRelativeTrajectory

    def evaluate(self, t):
        P, w, wd = self.base.evaluate(t)
        return transpose(P), -_mv(P, w), -_mv(P, wd)


def euler_trajectory(yaw, pitch, roll):
    """3-2-1 Euler command; each angle is an :class:`AngleFunction` or a constant."""
    def coerce(f):
        return f if isinstance(f, AngleFunction) else AngleFunction.constant(f)
    return EulerTrajectory(coerce(yaw), coerce(pitch), coerce(roll))


@dataclass
class AbsoluteDesiredVelocities:
    omega: dict
    omega_dot: dict


@dataclass
class DesiredSignals:
    """Every desired quantity at time ``t`` (scalar or array of times)."""

    t: np.ndarray
    Qd: dict            # directed edge -> Qd_ij
    omega_rel: dict     # directed edge -> Omega^d_ij
    omega_rel_dot: dict
    omega: dict         # craft -> Omega^d_i
    omega_dot: dict

    def at(self, index):
        """Slice one time sample out of array-valued signals."""
        pick = lambda d: {k: v[index] for k, v in d.items()}
        return DesiredSignals(self.t[index], pick(self.Qd), pick(self.omega_rel),
                              pick(self.omega_rel_dot), pick(self.omega), pick(self.omega_dot))


def directed_signals(trajectories, t):
    """Evaluate forward-edge trajectories and add the reversed edges.

    ``Qd_ji = Qd_ij^T``, ``Omega^d_ji = -Qd_ij Omega^d_ij`` and likewise for the
    derivative (the ``Qd_ij`` rate term drops out because ``hat(w) w = 0``).
    """
    out = {}
    for (i, j), traj in trajectories.items():
        Q, w, wd = traj.evaluate(t)
        out[(i, j)] = (Q, w, wd)
        out[(j, i)] = (transpose(Q), -_mv(Q, w), -_mv(Q, wd))
    return out


def split_velocities(signals, chain, anchor=None, mode="anchor"):
    """Absolute desired rates consistent with ``Omega^d_ij = Omega^d_i - Qd_ji Omega^d_j``.

    ``mode="anchor"`` fixes ``Omega^d_anchor = 0`` and propagates outward along
    the chain; ``mode="half"`` (two crafts only) splits the relative rate
    evenly. ``signals`` maps directed edges to ``(Qd, Omega_d, Omega_d_dot)``.
    """
    if mode == "half":
        if len(chain) != 2:
            raise ValueError("half split is defined for two crafts only")
        i, j = chain
        Q, w, wd = signals[(i, j)]
        return AbsoluteDesiredVelocities(
            omega={i: 0.5 * w, j: -0.5 * _mv(Q, w)},
            omega_dot={i: 0.5 * wd, j: -0.5 * _mv(Q, wd)},
        )
    if mode != "anchor":
        raise ValueError(f"unknown split mode {mode!r}")
    anchor = chain[0] if anchor is None else anchor
    if anchor not in chain:
        raise ValueError(f"anchor {anchor} is not a chain member")
    shape = np.shape(next(iter(signals.values()))[1])
    omega = {anchor: np.zeros(shape)}
    omega_dot = {anchor: np.zeros(shape)}
    m0 = chain.index(anchor)
    walk = [(chain[m], chain[m + 1]) for m in range(m0 - 1, -1, -1)]
    walk += [(chain[m], chain[m - 1]) for m in range(m0 + 1, len(chain))]
    for i, j in walk:
        Q_ji, w_ji, _ = signals[(j, i)]
        _, w_ij, wd_ij = signals[(i, j)]
        omega[i] = w_ij + _mv(Q_ji, omega[j])
        omega_dot[i] = wd_ij + _mv(Q_ji, cross(w_ji, omega[j])) + _mv(Q_ji, omega_dot[j])
    return AbsoluteDesiredVelocities(omega, omega_dot)


@dataclass
class FormationCommand:
    """Per-edge relative-attitude commands for a chain plus the rate-split rule.

    ``trajectories`` is keyed by the forward chain edges ``(c_m, c_{m+1})``.
    """

    chain: list
    trajectories: dict
    anchor: int | None = None
    split: str = "anchor"
    n: int | None = None

    def __post_init__(self):
        missing = set(chain_edges(self.chain)) - set(self.trajectories)
        if missing:
            raise ValueError(f"no desired trajectory for edges {sorted(missing)}")

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        sig = directed_signals(self.trajectories, t)
        vel = split_velocities(sig, self.chain, self.anchor, self.split)
        omega, omega_dot = dict(vel.omega), dict(vel.omega_dot)
        for node in range(1, (self.n or max(self.chain)) + 1):
            if node not in omega:
                omega[node] = np.zeros(t.shape + (3,))
                omega_dot[node] = np.zeros(t.shape + (3,))
        return DesiredSignals(
            t=t,
            Qd={e: v[0] for e, v in sig.items()},
            omega_rel={e: v[1] for e, v in sig.items()},
            omega_rel_dot={e: v[2] for e, v in sig.items()},
            omega=omega,
            omega_dot=omega_dot,
        )

    def velocity_bound(self, horizon, dt=1e-2):
        """``B_d``: sampled ``max ||Omega^d_i||`` over ``[0, horizon]`` with a 10% margin."""
        t = np.linspace(0.0, horizon, max(2, int(np.ceil(horizon / dt)) + 1))
        sig = self.evaluate(t)
        peak = max(float(np.max(np.linalg.norm(w, axis=-1))) for w in sig.omega.values())
        return BOUND_MARGIN * peak


@dataclass
class ControlGains:
    edge: dict          # undirected edge (min, max) -> EdgeGains
    k_omega: dict       # craft -> positive scalar

    def __post_init__(self):
        self.edge = {(min(i, j), max(i, j)): g for (i, j), g in self.edge.items()}
        if any(k <= 0 for k in self.k_omega.values()):
            raise ValueError("k_omega must be positive")

    @classmethod
    def uniform(cls, spec, k_alpha, k_beta, k_omega):
        edges = {e: EdgeGains(k_alpha, k_beta) for e in spec.undirected_edges()}
        return cls(edges, {i: float(k_omega) for i in spec.nodes})

    def for_edge(self, i, j):
        return self.edge[(min(i, j), max(i, j))]


def control_moment(error_term, e_omega, omega_d, omega_d_dot, J, k_omega):
    """``-e - k_Omega e_Omega + Omega_d x J (e_Omega + Omega_d) + J dOmega_d``.

    ``error_term`` is ``e_ij`` for a chain end and ``(e_ij + e_il) / 2`` for an
    interior craft. Broadcasts over leading axes.
    """
    k_omega = np.asarray(k_omega, dtype=float)[..., None]
    return (-error_term - k_omega * e_omega
            + cross(omega_d, _mv(J, e_omega + omega_d))
            + _mv(J, omega_d_dot))


def available_labels(spec, i):
    """LOS craft ``i`` may use: its own measurements and what its neighbours send it."""
    measured, comm = derive_sets(spec)
    labels = set(measured[i])
    for j in spec.neighbors(i):
        labels.update(comm[(j, i)])
    return frozenset(labels)


def _edge_term(i, j, los, signals, gains, spec, a):
    k = spec.assignment[(i, j)]
    a_ij = None if a is None else a.get((i, j))
    e_ij, _ = error_vectors(los, i, j, k, signals.Qd[(i, j)], gains.for_edge(i, j), a_ij)
    return e_ij


def control_endpoint(i, j, los, signals, gains, state, spec, a=None):
    """Moment for a chain end ``i`` paired with ``j`` (also both crafts when n = 2)."""
    e_ij = _edge_term(i, j, los, signals, gains, spec, a)
    e_omega = state.omega - signals.omega[i]
    return control_moment(e_ij, e_omega, signals.omega[i], signals.omega_dot[i],
                          state.J, gains.k_omega[i])


def control_interior(p, los, signals, gains, state, spec, a=None):
    """Moment for an interior craft: the two edge error vectors are averaged."""
    nbrs = spec.neighbors(p)
    if len(nbrs) != 2:
        raise ValueError(f"craft {p} is not an interior chain node")
    err = 0.5 * sum(_edge_term(p, q, los, signals, gains, spec, a) for q in nbrs)
    e_omega = state.omega - signals.omega[p]
    return control_moment(err, e_omega, signals.omega[p], signals.omega_dot[p],
                          state.J, gains.k_omega[p])


def control_all(states, spec, signals, gains, a=None, los=None):
    """Moments for every craft, shape ``(n, 3)``; beacons get zero.

    Each craft only sees the LOS subset it is entitled to.
    """
    los = synthesize_los(states, spec) if los is None else los
    u = np.zeros((spec.n, 3))
    for i in chain_order(spec):
        local = los.restrict(available_labels(spec, i))
        nbrs = spec.neighbors(i)
        if len(nbrs) == 1:
            u[i - 1] = control_endpoint(i, nbrs[0], local, signals, gains, states[i - 1], spec, a)
        else:
            u[i - 1] = control_interior(i, local, signals, gains, states[i - 1], spec, a)
    return u


def error_state(states, spec, signals, gains, a=None, los=None):
    """All edge errors and rate errors at one instant."""
    los = synthesize_los(states, spec) if los is None else los
    fields = {name: {} for name in ("psi_alpha", "psi_beta", "psi", "e_alpha", "e_beta", "e")}
    for i, j in spec.undirected_edges():
        k = spec.assignment[(i, j)]
        g = gains.for_edge(i, j)
        a_ij = None if a is None else a.get((i, j))
        err = edge_errors(los[i, j], los[i, k], los[j, i], los[j, k], signals.Qd[(i, j)],
                          g.k_alpha, g.k_beta, a_ij)
        for edge in ((i, j), (j, i)):
            fields["psi_alpha"][edge] = float(err.psi_alpha)
            fields["psi_beta"][edge] = float(err.psi_beta)
            fields["psi"][edge] = float(err.psi)
        fields["e_alpha"][(i, j)], fields["e_alpha"][(j, i)] = err.e_alpha_ij, err.e_alpha_ji
        fields["e_beta"][(i, j)], fields["e_beta"][(j, i)] = err.e_beta_ij, err.e_beta_ji
        fields["e"][(i, j)], fields["e"][(j, i)] = err.e_ij, err.e_ji
    e_omega = {i: states[i - 1].omega - signals.omega[i] for i in spec.nodes}
    return ErrorState(e_omega=e_omega, **fields)


def finite_difference_omega_dot(command, t, h=1e-6):
    """Central-difference ``dOmega^d_i/dt`` per craft; cross-check for the analytic recursion."""
    plus = command.evaluate(t + h).omega
    minus = command.evaluate(t - h).omega
    return {i: (plus[i] - minus[i]) / (2.0 * h) for i in plus}
