"""LOS synthesis, relative attitude kinematics and LOS-based attitude determination."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import derive_sets
from .so3 import as_rotation, transpose

COLLINEAR_TOL = 1e-6


@dataclass
class SpacecraftState:
    """Attitude ``R`` (body to inertial), body rate ``omega`` [rad/s], inertia ``J`` [kg m^2]."""

    R: np.ndarray
    omega: np.ndarray
    J: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        self.J = np.asarray(self.J, dtype=float)
        if self.J.shape == (3,):
            self.J = np.diag(self.J)
        if not np.allclose(self.J, self.J.T, atol=1e-12):
            raise ValueError("inertia must be symmetric")
        if np.linalg.eigvalsh(self.J)[0] <= 0.0:
            raise ValueError("inertia must be positive definite")

    @property
    def lambda_max(self):
        return float(np.linalg.eigvalsh(self.J)[-1])

    @property
    def lambda_min(self):
        return float(np.linalg.eigvalsh(self.J)[0])


class LosSet:
    """LOS observations ``b_ij`` keyed by label ``(i, j)``.

    Lookups of a label outside the set raise ``KeyError``; :meth:`restrict`
    is how callers hand a craft exactly the measurements it is allowed to
    use.
    """

    def __init__(self, b):
        self._b = {tuple(k): np.asarray(v, dtype=float) for k, v in b.items()}

    def __getitem__(self, label):
        try:
            return self._b[tuple(label)]
        except KeyError:
            raise KeyError(f"LOS b_{label[0]}{label[1]} is not available") from None

    def __contains__(self, label):
        return tuple(label) in self._b

    def __len__(self):
        return len(self._b)

    @property
    def labels(self):
        return frozenset(self._b)

    def cross(self, i, j, k):
        """``b_ijk = b_ij x b_ik``."""
        return np.cross(self[i, j], self[i, k])

    def restrict(self, labels):
        return LosSet({k: v for k, v in self._b.items() if k in labels})


def synthesize_los(states, spec):
    """Noise-free ``b_ij = R_i^T s_ij`` for every label in the measurement sets.

    ``states`` is a sequence ordered by node label (``states[i - 1]`` is craft ``i``).
    """
    measured, _ = derive_sets(spec)
    b = {}
    for i, labels in measured.items():
        for (_, j) in labels:
            b[(i, j)] = states[i - 1].R.T @ spec.los_direction(i, j)
    return LosSet(b)


def relative_attitude(states, i, j):
    """``Q_ij = R_j^T R_i``: coordinates in body ``i`` to body ``j``."""
    return states[j - 1].R.T @ states[i - 1].R


def relative_velocity(states, i, j):
    """``Omega_ij = Omega_i - Q_ij^T Omega_j``."""
    Q = relative_attitude(states, i, j)
    return states[i - 1].omega - Q.T @ states[j - 1].omega


def los_rate(b, omega):
    """Body-frame rate of a LOS toward a fixed inertial direction: ``b x Omega``."""
    return np.cross(b, omega)


def triangle_constant(b_ij, b_ik, b_ji, b_jk):
    """``a_ij = ||b_ij x b_ik|| ||b_ji x b_jk||`` (constant while positions are fixed)."""
    return float(np.linalg.norm(np.cross(b_ij, b_ik)) * np.linalg.norm(np.cross(b_ji, b_jk)))


def determine_relative_attitude(b_ij, b_ik, b_ji, b_jk, tol=COLLINEAR_TOL):
    """Recover ``Q_ij`` from the four LOS of the triangle ``(i, j, k)``.

    Aligns the frame ``{b_ij, n_i, b_ij x n_i}`` with
    ``{-b_ji, -n_j, b_ji x n_j}`` where ``n_i``, ``n_j`` are the unit normals
    of the triangle seen from each craft. Raises ``ValueError`` when either
    craft sees the triangle as degenerate.
    """
    b_ij, b_ik, b_ji, b_jk = (np.asarray(v, dtype=float) for v in (b_ij, b_ik, b_ji, b_jk))
    n_i = np.cross(b_ij, b_ik)
    n_j = np.cross(b_ji, b_jk)
    ni, nj = np.linalg.norm(n_i), np.linalg.norm(n_j)
    if ni <= tol or nj <= tol:
        raise ValueError("LOS triangle is (nearly) collinear; relative attitude is undetermined")
    n_i, n_j = n_i / ni, n_j / nj
    src = np.column_stack([b_ij, n_i, np.cross(b_ij, n_i)])
    dst = np.column_stack([-b_ji, -n_j, np.cross(b_ji, n_j)])
    return as_rotation(dst @ transpose(src), tol=1e-6)
