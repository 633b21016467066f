"""Reference computations that share no code with the package.

Trace-form error function and gradient, scipy-based rotations, and random
scene generators used across the suite.
"""

import numpy as np
from scipy.linalg import expm
from scipy.spatial.transform import Rotation


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(M):
    return np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]]) / 2.0


def rotvec(v):
    return Rotation.from_rotvec(v).as_matrix()


def random_rotation(rng):
    return Rotation.random(random_state=rng).as_matrix()


def random_triangle(rng, min_sine=0.05):
    """Three inertial positions whose triangle is comfortably non-degenerate."""
    while True:
        p = rng.normal(size=(3, 3)) * 5.0
        s13 = (p[2] - p[0]) / np.linalg.norm(p[2] - p[0])
        s23 = (p[2] - p[1]) / np.linalg.norm(p[2] - p[1])
        s12 = (p[1] - p[0]) / np.linalg.norm(p[1] - p[0])
        if np.linalg.norm(np.cross(s13, s23)) > min_sine and np.linalg.norm(np.cross(s12, s13)) > min_sine:
            return p


def directions(p):
    def s(a, b):
        d = p[b] - p[a]
        return d / np.linalg.norm(d)
    return s


def trace_K(p, k_alpha, k_beta):
    """Inertial weight matrix of edge (1,2) with craft 3 assigned, from positions."""
    s = directions(p)
    s12 = s(0, 1)
    s123 = np.cross(s12, s(0, 2))
    return k_alpha * np.outer(s12, s12) + k_beta / (s123 @ s123) * np.outer(s123, s123)


def trace_psi(R1, R2, Qd12, p, k_alpha, k_beta):
    K = trace_K(p, k_alpha, k_beta)
    return k_alpha + k_beta - np.trace(R2.T @ K @ R1 @ Qd12.T)


def trace_e12(R1, R2, Qd12, p, k_alpha, k_beta):
    K = trace_K(p, k_alpha, k_beta)
    Qd21 = Qd12.T
    return unskew(Qd21 @ R2.T @ K @ R1 - R1.T @ K @ R2 @ Qd12)


def trace_e21(R1, R2, Qd12, p, k_alpha, k_beta):
    K = trace_K(p, k_alpha, k_beta)
    return unskew(Qd12 @ R1.T @ K @ R2 - R2.T @ K @ R1 @ Qd12.T)


def los_of(R1, R2, p):
    """Body-frame LOS b12, b13, b21, b23 for the triangle; rotations may be stacked."""
    s = directions(p)
    to_body = lambda R, v: np.einsum("...ji,j->...i", R, v)
    return to_body(R1, s(0, 1)), to_body(R1, s(0, 2)), to_body(R2, s(1, 0)), to_body(R2, s(1, 2))


def right_perturb(R, eta, eps):
    return R @ expm(eps * skew(eta))
