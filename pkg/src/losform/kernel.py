"""Compiled closed-loop propagation used by :func:`losform.sim.run`.

Same arithmetic as :class:`losform.sim.ClosedLoop` written as scalar loops so
numba can compile it; the numpy class stays the reference implementation and
the test-suite checks the two agree. Without numba the kernel runs as plain
Python, which is correct but slow.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

MAX_DRIFT = 1e-3
POLAR_ITERS = 30


@njit(cache=True)
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True)
def _matvec(M, v, out):
    for r in range(3):
        out[r] = M[r, 0] * v[0] + M[r, 1] * v[1] + M[r, 2] * v[2]


@njit(cache=True)
def _tmatvec(M, v, out):
    for r in range(3):
        out[r] = M[0, r] * v[0] + M[1, r] * v[1] + M[2, r] * v[2]


@njit(cache=True)
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def closed_loop_rates(R, w, Qd, wd, wdd, observer, S, quad, fwd, bwd, w_fwd, w_bwd,
                      k_alpha, k_beta, a, J, J_inv, k_omega, active, kin_weight, dR, dw):
    """Fill ``dR, dw`` for one stage; return ``U`` (with zero coupling) at the stage state."""
    n = R.shape[0]
    L = S.shape[0]
    E = quad.shape[0]
    b = np.empty((L, 3))
    for m in range(L):
        _tmatvec(R[observer[m]], S[m], b[m])

    term = np.zeros((n, 3))
    psi_sum = 0.0
    bijk = np.empty(3)
    bjik = np.empty(3)
    t1 = np.empty(3)
    t2 = np.empty(3)
    t3 = np.empty(3)
    t4 = np.empty(3)
    ea = np.empty(3)
    eb = np.empty(3)
    for e in range(E):
        bij, bik, bji, bjk = b[quad[e, 0]], b[quad[e, 1]], b[quad[e, 2]], b[quad[e, 3]]
        Q = Qd[e]
        inv_a = 1.0 / a[e]
        _cross(bij, bik, bijk)
        _cross(bji, bjk, bjik)
        _matvec(Q, bij, t1)       # Qd_ij b_ij
        _tmatvec(Q, bji, t2)      # Qd_ji b_ji
        _matvec(Q, bijk, t3)      # Qd_ij b_ijk
        _tmatvec(Q, bjik, t4)     # Qd_ji b_jik
        psi_sum += k_alpha[e] * (1.0 + _dot(bji, t1)) + k_beta[e] * (1.0 + _dot(bjik, t3) * inv_a)
        _cross(t2, bij, ea)
        _cross(t4, bijk, eb)
        for r in range(3):
            term[fwd[e], r] += w_fwd[e] * (k_alpha[e] * ea[r] + k_beta[e] * eb[r] * inv_a)
        _cross(t1, bji, ea)
        _cross(t3, bjik, eb)
        for r in range(3):
            term[bwd[e], r] += w_bwd[e] * (k_alpha[e] * ea[r] + k_beta[e] * eb[r] * inv_a)

    kinetic = 0.0
    eW = np.empty(3)
    v = np.empty(3)
    Jv = np.empty(3)
    u = np.empty(3)
    for p in range(n):
        for r in range(3):
            eW[r] = w[p, r] - wd[p, r]
            v[r] = eW[r] + wd[p, r]
        _matvec(J[p], eW, Jv)
        kinetic += 0.5 * kin_weight[p] * _dot(eW, Jv)
        _matvec(J[p], v, Jv)
        _cross(wd[p], Jv, t1)
        _matvec(J[p], wdd[p], t2)
        for r in range(3):
            u[r] = (-term[p, r] - k_omega[p] * eW[r] + t1[r] + t2[r]) * active[p]
        # rigid body: J dw = u - w x J w
        _matvec(J[p], w[p], Jv)
        _cross(w[p], Jv, t3)
        for r in range(3):
            t4[r] = u[r] - t3[r]
        _matvec(J_inv[p], t4, dw[p])
        # dR = R hat(w)
        for r in range(3):
            x, y, z = R[p, r, 0], R[p, r, 1], R[p, r, 2]
            dR[p, r, 0] = y * w[p, 2] - z * w[p, 1]
            dR[p, r, 1] = z * w[p, 0] - x * w[p, 2]
            dR[p, r, 2] = x * w[p, 1] - y * w[p, 0]
    return psi_sum + kinetic


@njit(cache=True)
def _det3(M):
    return (M[0, 0] * (M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
            - M[0, 1] * (M[1, 0] * M[2, 2] - M[1, 2] * M[2, 0])
            + M[0, 2] * (M[1, 0] * M[2, 1] - M[1, 1] * M[2, 0]))


@njit(cache=True)
def polar_project(M):
    """Nearest rotation by Newton iteration ``X <- (X + X^-T)/2``; ``ok`` False if rejected."""
    drift = 0.0
    for r in range(3):
        for c in range(3):
            s = 0.0
            for k in range(3):
                s += M[k, r] * M[k, c]
            if r == c:
                s -= 1.0
            drift += s * s
    if not (np.sqrt(drift) <= MAX_DRIFT) or _det3(M) <= 0.0:
        return M.copy(), False
    X = M.copy()
    Y = np.empty((3, 3))
    for _ in range(POLAR_ITERS):
        d = _det3(X)
        # X^-T = cofactor(X) / det
        Y[0, 0] = X[1, 1] * X[2, 2] - X[1, 2] * X[2, 1]
        Y[0, 1] = X[1, 2] * X[2, 0] - X[1, 0] * X[2, 2]
        Y[0, 2] = X[1, 0] * X[2, 1] - X[1, 1] * X[2, 0]
        Y[1, 0] = X[0, 2] * X[2, 1] - X[0, 1] * X[2, 2]
        Y[1, 1] = X[0, 0] * X[2, 2] - X[0, 2] * X[2, 0]
        Y[1, 2] = X[0, 1] * X[2, 0] - X[0, 0] * X[2, 1]
        Y[2, 0] = X[0, 1] * X[1, 2] - X[0, 2] * X[1, 1]
        Y[2, 1] = X[0, 2] * X[1, 0] - X[0, 0] * X[1, 2]
        Y[2, 2] = X[0, 0] * X[1, 1] - X[0, 1] * X[1, 0]
        change = 0.0
        for r in range(3):
            for c in range(3):
                nxt = 0.5 * (X[r, c] + Y[r, c] / d)
                change += (nxt - X[r, c]) ** 2
                X[r, c] = nxt
        if change < 1e-34:
            break
    return X, True


@njit(cache=True)
def propagate(R0, w0, h, steps, Qd, wd, wdd, observer, S, quad, fwd, bwd, w_fwd, w_bwd,
              k_alpha, k_beta, a, J, J_inv, k_omega, active, kin_weight):
    """RK4 over ``steps`` steps with signals sampled on the half-step grid.

    ``Qd[m]``, ``wd[m]``, ``wdd[m]`` belong to time ``t0 + m h / 2``. Returns
    ``(R, w, U, done)`` with states at every step boundary (``steps + 1``
    entries) and ``done`` the number of steps completed before a divergence.
    """
    n = R0.shape[0]
    Rs = np.empty((steps + 1, n, 3, 3))
    ws = np.empty((steps + 1, n, 3))
    Us = np.full(steps + 1, np.nan)
    Rs[0] = R0
    ws[0] = w0
    k1R = np.empty((n, 3, 3)); k2R = np.empty((n, 3, 3)); k3R = np.empty((n, 3, 3)); k4R = np.empty((n, 3, 3))
    k1w = np.empty((n, 3)); k2w = np.empty((n, 3)); k3w = np.empty((n, 3)); k4w = np.empty((n, 3))
    args = (observer, S, quad, fwd, bwd, w_fwd, w_bwd, k_alpha, k_beta, a, J, J_inv, k_omega,
            active, kin_weight)
    for k in range(steps):
        R = Rs[k]
        w = ws[k]
        m = 2 * k
        Us[k] = closed_loop_rates(R, w, Qd[m], wd[m], wdd[m], *args, k1R, k1w)
        closed_loop_rates(R + 0.5 * h * k1R, w + 0.5 * h * k1w, Qd[m + 1], wd[m + 1], wdd[m + 1],
                          *args, k2R, k2w)
        closed_loop_rates(R + 0.5 * h * k2R, w + 0.5 * h * k2w, Qd[m + 1], wd[m + 1], wdd[m + 1],
                          *args, k3R, k3w)
        closed_loop_rates(R + h * k3R, w + h * k3w, Qd[m + 2], wd[m + 2], wdd[m + 2], *args, k4R, k4w)
        Rn = R + (h / 6.0) * (k1R + 2.0 * k2R + 2.0 * k3R + k4R)
        wn = w + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        if not (np.all(np.isfinite(Rn)) and np.all(np.isfinite(wn))):
            return Rs, ws, Us, k
        for p in range(n):
            X, ok = polar_project(Rn[p])
            if not ok:
                return Rs, ws, Us, k
            Rs[k + 1, p] = X
        ws[k + 1] = wn
    dR = np.empty((n, 3, 3))
    dw = np.empty((n, 3))
    m = 2 * steps
    Us[steps] = closed_loop_rates(Rs[steps], ws[steps], Qd[m], wd[m], wdd[m], *args, dR, dw)
    return Rs, ws, Us, steps
