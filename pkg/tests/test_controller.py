import warnings

import numpy as np
import pytest
from hypothesis import given

from losform.controller import (AngleFunction, ConstantTrajectory, ControlGains, EulerTrajectory, FormationCommand,
                                TransposedTrajectory, available_labels, control_all, control_endpoint,
                                control_interior, directed_signals, error_state, euler_trajectory,
                                finite_difference_omega_dot, split_velocities)
from losform.graph import FormationSpec
from losform.los import LosSet, SpacecraftState, synthesize_los
from losform.scenario import paper_scenario
from losform.sim import ClosedLoop

from conftest import seeds
from oracles import random_rotation, unskew

SIN = AngleFunction("sin", amplitude=1.0, frequency=0.5)
COS = AngleFunction("cos", amplitude=1.0, frequency=1.0)


def paper_like_trajectory():
    return EulerTrajectory(SIN, AngleFunction.constant(0.1), COS)


def two_craft_spec():
    return FormationSpec.from_triples([[0, 0, 0], [10, 0, 0], [3, 8, 0]], [(1, 2, 3)])


def test_angle_function_derivatives():
    f = AngleFunction("cos", amplitude=0.5, frequency=2.0, offset=-0.1)
    t, h = 0.37, 1e-5
    v, d, dd = f.derivatives(t)
    assert v == pytest.approx(-0.1 + 0.5 * np.cos(0.74))
    assert d == pytest.approx((f.derivatives(t + h)[0] - f.derivatives(t - h)[0]) / (2 * h), abs=1e-9)
    assert dd == pytest.approx((f.derivatives(t + h)[1] - f.derivatives(t - h)[1]) / (2 * h), abs=1e-9)
    with pytest.raises(ValueError):
        AngleFunction("tan")


def test_constant_angles_have_zero_rates():
    traj = euler_trajectory(0.3, -0.2, 1.0)
    _, w, wd = traj.evaluate(np.linspace(0, 5, 7))
    assert np.all(w == 0.0) and np.all(wd == 0.0)
    Q, w, _ = ConstantTrajectory().evaluate(2.0)
    np.testing.assert_array_equal(Q, np.eye(3))


@pytest.mark.parametrize("traj", [paper_like_trajectory(),
                                  EulerTrajectory(AngleFunction.constant(0.0),
                                                  AngleFunction("cos", 1.0, 0.2, -0.1),
                                                  AngleFunction("sin", 0.5, 2.0)),
                                  TransposedTrajectory(paper_like_trajectory())])
def test_body_rate_matches_finite_difference(traj):
    h = 1e-5
    for t in np.linspace(0.0, 12.0, 9):
        Q, w, wd = traj.evaluate(t)
        Qp, wp, _ = traj.evaluate(t + h)
        Qm, wm, _ = traj.evaluate(t - h)
        np.testing.assert_allclose(unskew(Q.T @ (Qp - Qm) / (2 * h)), w, atol=1e-8)
        np.testing.assert_allclose((wp - wm) / (2 * h), wd, atol=1e-7)


def test_transposed_trajectory_is_transpose():
    base = paper_like_trajectory()
    P = base.evaluate(1.3)[0]
    np.testing.assert_array_equal(TransposedTrajectory(base).evaluate(1.3)[0], P.T)


def test_gimbal_warning():
    with pytest.warns(UserWarning, match="pi/2"):
        EulerTrajectory(SIN, AngleFunction("sin", amplitude=1.6, frequency=1.0), COS)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        paper_like_trajectory()


def test_trivial_split_is_zero():
    chain = [1, 2, 3]
    sig = directed_signals({(1, 2): ConstantTrajectory(), (2, 3): ConstantTrajectory()}, 0.5)
    vel = split_velocities(sig, chain, anchor=2)
    assert all(np.all(v == 0) for v in vel.omega.values())


def test_half_split_satisfies_relation():
    traj = paper_like_trajectory()
    for t in (0.0, 0.7, 3.1):
        sig = directed_signals({(1, 2): traj}, t)
        vel = split_velocities(sig, [1, 2], mode="half")
        Q12, w12, _ = sig[(1, 2)]
        np.testing.assert_allclose(vel.omega[1], 0.5 * w12, atol=0)
        np.testing.assert_allclose(w12, vel.omega[1] - Q12.T @ vel.omega[2], atol=1e-14)
    with pytest.raises(ValueError):
        split_velocities(directed_signals({(1, 2): traj, (2, 3): traj}, 0.0), [1, 2, 3], mode="half")


def test_paper_split_residual_and_fd_cross_check():
    sc = paper_scenario()
    for t in (0.0, 1.7, 12.25, 29.0):
        sig = sc.command.evaluate(t)
        assert np.all(sig.omega[4] == 0.0)
        for i, j in zip(sc.chain[:-1], sc.chain[1:]):
            for a, b in ((i, j), (j, i)):
                r = sig.omega_rel[(a, b)] - (sig.omega[a] - sig.Qd[(b, a)] @ sig.omega[b])
                assert np.linalg.norm(r) <= 1e-10
        fd = finite_difference_omega_dot(sc.command, t)
        for i in sc.chain:
            np.testing.assert_allclose(fd[i], sig.omega_dot[i], atol=1e-6)


def test_velocity_bound_covers_samples():
    sc = paper_scenario()
    B = sc.command.velocity_bound(30.0)
    t = np.random.default_rng(0).uniform(0, 30, 500)
    sig = sc.command.evaluate(t)
    assert max(np.linalg.norm(w, axis=-1).max() for w in sig.omega.values()) <= B


def test_command_requires_every_edge():
    with pytest.raises(ValueError):
        FormationCommand([1, 2, 3], {(1, 2): ConstantTrajectory()})


def _random_states(rng, n, J=(3.0, 2.0, 1.0)):
    return [SpacecraftState(random_rotation(rng), rng.normal(size=3), J) for _ in range(n)]


def test_endpoint_zero_at_equilibrium_and_feedforward():
    spec = two_craft_spec()
    gains = ControlGains.uniform(spec, 25.0, 25.1, 7.0)
    rng = np.random.default_rng(1)
    Qd = random_rotation(rng)
    R2 = random_rotation(rng)
    states = [SpacecraftState(R2 @ Qd, np.zeros(3), [3, 2, 1]), SpacecraftState(R2, np.zeros(3), [3, 2, 1]),
              SpacecraftState(np.eye(3), np.zeros(3), [1, 1, 1])]
    cmd = FormationCommand([1, 2], {(1, 2): ConstantTrajectory(Qd)}, split="half", n=3)
    sig = cmd.evaluate(0.0)
    u = control_all(states, spec, sig, gains)
    np.testing.assert_allclose(u, 0.0, atol=1e-12)

    cmd = FormationCommand([1, 2], {(1, 2): paper_like_trajectory()}, split="half", n=3)
    sig = cmd.evaluate(0.8)
    Qd = sig.Qd[(1, 2)]
    states[0].R = R2 @ Qd
    states[0].omega, states[1].omega = sig.omega[1].copy(), sig.omega[2].copy()
    J = states[0].J
    u1 = control_endpoint(1, 2, synthesize_los(states, spec), sig, gains, states[0], spec)
    wd = sig.omega[1]
    np.testing.assert_allclose(u1, np.cross(wd, J @ wd) + J @ sig.omega_dot[1], atol=1e-12)


@given(seeds)
def test_closed_loop_rate_error_identity(seed):
    rng = np.random.default_rng(seed)
    sc = paper_scenario()
    states = _random_states(rng, 7)
    t = rng.uniform(0, 30)
    sig = sc.command.evaluate(t)
    u = control_all(states, sc.spec, sig, sc.gains)
    err = error_state(states, sc.spec, sig, sc.gains)
    for p in sc.chain:
        s, J = states[p - 1], states[p - 1].J
        omega_dot = np.linalg.solve(J, u[p - 1] - np.cross(s.omega, J @ s.omega))
        lhs = J @ (omega_dot - sig.omega_dot[p])
        eW = err.e_omega[p]
        nbrs = sc.spec.neighbors(p)
        term = err.e[(p, nbrs[0])] if len(nbrs) == 1 else 0.5 * (err.e[(p, nbrs[0])] + err.e[(p, nbrs[1])])
        rhs = np.cross(J @ eW + J @ sig.omega[p], eW) - term - sc.gains.k_omega[p] * eW
        assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_interior_differs_from_endpoint_by_error_term():
    rng = np.random.default_rng(4)
    sc = paper_scenario()
    states = _random_states(rng, 7)
    sig = sc.command.evaluate(2.0)
    los = synthesize_los(states, sc.spec)
    err = error_state(states, sc.spec, sig, sc.gains)
    for p in range(2, 7):
        u_int = control_interior(p, los, sig, sc.gains, states[p - 1], sc.spec)
        for q, r in ((p - 1, p + 1), (p + 1, p - 1)):
            u_end = control_endpoint(p, q, los, sig, sc.gains, states[p - 1], sc.spec)
            np.testing.assert_allclose(u_int - u_end, err.e[(p, q)] - 0.5 * (err.e[(p, q)] + err.e[(p, r)]),
                                       atol=1e-12)
    with pytest.raises(ValueError):
        control_interior(1, los, sig, sc.gains, states[0], sc.spec)


def test_two_and_three_craft_laws():
    rng = np.random.default_rng(8)
    p = np.array([[0, 0, 0], [10, 0, 0], [4, 7, 1.0]])
    spec3 = FormationSpec.from_triples(p, [(1, 2, 3), (2, 3, 1)])
    gains = ControlGains.uniform(spec3, 2.0, 3.0, 1.5)
    cmd = FormationCommand([1, 2, 3], {(1, 2): paper_like_trajectory(), (2, 3): ConstantTrajectory()}, anchor=2)
    sig = cmd.evaluate(0.4)
    states = _random_states(rng, 3)
    u = control_all(states, spec3, sig, gains)
    err = error_state(states, spec3, sig, gains)

    def law(i, term):
        s, J = states[i - 1], states[i - 1].J
        eW, wd = s.omega - sig.omega[i], sig.omega[i]
        return -term - 1.5 * eW + np.cross(wd, J @ (eW + wd)) + J @ sig.omega_dot[i]

    np.testing.assert_allclose(u[0], law(1, err.e[(1, 2)]), atol=1e-12)
    np.testing.assert_allclose(u[1], law(2, 0.5 * (err.e[(2, 1)] + err.e[(2, 3)])), atol=1e-12)
    np.testing.assert_allclose(u[2], law(3, err.e[(3, 2)]), atol=1e-12)

    spec2 = two_craft_spec()
    gains2 = ControlGains.uniform(spec2, 2.0, 3.0, 1.5)
    cmd2 = FormationCommand([1, 2], {(1, 2): paper_like_trajectory()}, split="half", n=3)
    sig2 = cmd2.evaluate(0.4)
    u2 = control_all(states, spec2, sig2, gains2)
    los = synthesize_los(states, spec2)
    np.testing.assert_allclose(u2[0], control_endpoint(1, 2, los, sig2, gains2, states[0], spec2), atol=0)
    np.testing.assert_allclose(u2[1], control_endpoint(2, 1, los, sig2, gains2, states[1], spec2), atol=0)
    np.testing.assert_array_equal(u2[2], 0.0)


def test_paper_initial_moments_finite():
    sc = paper_scenario()
    u = control_all(sc.initial_states, sc.spec, sc.command.evaluate(0.0), sc.gains)
    assert u.shape == (7, 3) and np.all(np.isfinite(u))
    assert np.max(np.abs(u)) < 2 * 2 * 50.1 + 100


class AuditedLos(LosSet):
    def __init__(self, los):
        super().__init__({k: los[k] for k in los.labels})
        self.seen = set()

    def __getitem__(self, label):
        self.seen.add(tuple(label))
        return super().__getitem__(label)


@pytest.mark.parametrize("which", ["two", "seven"])
def test_information_locality(which):
    rng = np.random.default_rng(12)
    if which == "two":
        spec = two_craft_spec()
        gains = ControlGains.uniform(spec, 25.0, 25.1, 7.0)
        sig = FormationCommand([1, 2], {(1, 2): paper_like_trajectory()}, split="half", n=3).evaluate(1.0)
        chain = [1, 2]
    else:
        sc = paper_scenario()
        spec, gains, chain = sc.spec, sc.gains, sc.chain
        sig = sc.command.evaluate(1.0)
    states = _random_states(rng, spec.n)
    full = synthesize_los(states, spec)
    for i in chain:
        audit = AuditedLos(full)
        nbrs = spec.neighbors(i)
        if len(nbrs) == 1:
            control_endpoint(i, nbrs[0], audit, sig, gains, states[i - 1], spec)
        else:
            control_interior(i, audit, sig, gains, states[i - 1], spec)
        assert audit.seen <= available_labels(spec, i), (i, audit.seen - available_labels(spec, i))
    # and the restricted sets are sufficient on their own
    control_all(states, spec, sig, gains)


@given(seeds)
def test_batched_loop_matches_reference_control(seed):
    rng = np.random.default_rng(seed)
    sc = paper_scenario()
    states = _random_states(rng, 7)
    loop = ClosedLoop(sc)
    t = rng.uniform(0, 30)
    sig = sc.command.evaluate(t)
    Qd, wd, wdd = loop.signals(np.array(t))
    R = np.array([s.R for s in states])
    w = np.array([s.omega for s in states])
    err, eW, u = loop.evaluate(R, w, Qd, wd, wdd)
    live = loop.live_a(R)
    a = {e: live[m] for m, e in enumerate(loop.edges)}
    np.testing.assert_allclose(u, control_all(states, sc.spec, sig, sc.gains, a=a), atol=1e-11)
    ref = error_state(states, sc.spec, sig, sc.gains)
    for m, e in enumerate(loop.edges):
        assert err.psi[m] == pytest.approx(ref.psi[e], abs=1e-11)
