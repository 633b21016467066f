"""Configuration errors built directly from LOS measurements.

For an edge ``(i, j)`` with assigned craft ``k`` the four observations
``b_ij, b_ik`` (craft i) and ``b_ji, b_jk`` (craft j) are compared under the
desired relative attitude ``Qd_ij``:

* alpha-term: the two LOS of the edge should be antiparallel,
* beta-term: the triangle normals seen from each craft should be antiparallel.

All kernels broadcast over leading axes so the simulator can evaluate every
edge at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .so3 import cross, transpose, vee

DEGENERATE_TOL = 1e-6
EQUILIBRIUM_TOL = 1e-6

D_MATRICES = {
    "D1": np.diag([1.0, -1.0, -1.0]),
    "D2": np.diag([-1.0, 1.0, -1.0]),
    "D3": np.diag([-1.0, -1.0, 1.0]),
}


@dataclass(frozen=True)
class EdgeGains:
    k_alpha: float
    k_beta: float

    def __post_init__(self):
        if not (self.k_alpha > 0 and self.k_beta > 0):
            raise ValueError("edge gains must be positive")
        if self.k_alpha == self.k_beta:
            raise ValueError("k_alpha and k_beta must differ")

    @property
    def total(self):
        return self.k_alpha + self.k_beta


class EdgeErrors(NamedTuple):
    psi_alpha: np.ndarray
    psi_beta: np.ndarray
    psi: np.ndarray
    e_alpha_ij: np.ndarray
    e_beta_ij: np.ndarray
    e_ij: np.ndarray
    e_alpha_ji: np.ndarray
    e_beta_ji: np.ndarray
    e_ji: np.ndarray


def _mv(M, v):
    return (M @ v[..., None])[..., 0]


def _dot(x, y):
    return (x[..., None, :] @ y[..., :, None])[..., 0, 0]


def psi_alpha(b_ji, Qd_ij, b_ij):
    """``1 + b_ji . Qd_ij b_ij``; zero iff ``b_ji = -Qd_ij b_ij``."""
    return 1.0 + _dot(b_ji, _mv(Qd_ij, b_ij))


def psi_beta(b_jik, Qd_ij, b_ijk, a_ij):
    """``1 + b_jik . Qd_ij b_ijk / a_ij``."""
    a_ij = np.asarray(a_ij, dtype=float)
    if np.any(a_ij <= DEGENERATE_TOL):
        raise ValueError("LOS triangle is degenerate (a_ij too small)")
    return 1.0 + _dot(b_jik, _mv(Qd_ij, b_ijk)) / a_ij


def edge_errors(b_ij, b_ik, b_ji, b_jk, Qd_ij, k_alpha, k_beta, a_ij=None):
    """Error functions and both error vectors of one edge (or a batch of edges).

    ``a_ij`` defaults to the live value ``||b_ij x b_ik|| ||b_ji x b_jk||``;
    the simulator passes the value cached at start-up instead.
    """
    Qd_ji = transpose(Qd_ij)
    b_ijk = cross(b_ij, b_ik)
    b_jik = cross(b_ji, b_jk)
    if a_ij is None:
        a_ij = np.linalg.norm(b_ijk, axis=-1) * np.linalg.norm(b_jik, axis=-1)
    a_ij = np.asarray(a_ij, dtype=float)
    if np.any(a_ij <= DEGENERATE_TOL):
        raise ValueError("LOS triangle is degenerate (a_ij too small)")
    k_alpha = np.asarray(k_alpha, dtype=float)
    k_beta = np.asarray(k_beta, dtype=float)

    Qb_ij = _mv(Qd_ij, b_ij)
    Qb_ji = _mv(Qd_ji, b_ji)
    Qb_ijk = _mv(Qd_ij, b_ijk)
    Qb_jik = _mv(Qd_ji, b_jik)

    pa = 1.0 + _dot(b_ji, Qb_ij)
    pb = 1.0 + _dot(b_jik, Qb_ijk) / a_ij
    inv_a = (1.0 / a_ij)[..., None]
    ea_ij = cross(Qb_ji, b_ij)
    eb_ij = cross(Qb_jik, b_ijk) * inv_a
    ea_ji = cross(Qb_ij, b_ji)
    eb_ji = cross(Qb_ijk, b_jik) * inv_a
    ka, kb = k_alpha[..., None], k_beta[..., None]
    return EdgeErrors(
        psi_alpha=pa,
        psi_beta=pb,
        psi=k_alpha * pa + k_beta * pb,
        e_alpha_ij=ea_ij,
        e_beta_ij=eb_ij,
        e_ij=ka * ea_ij + kb * eb_ij,
        e_alpha_ji=ea_ji,
        e_beta_ji=eb_ji,
        e_ji=ka * ea_ji + kb * eb_ji,
    )


def _edge_los(los, i, j, k):
    return los[i, j], los[i, k], los[j, i], los[j, k]


def error_vectors(los, i, j, k, Qd_ij, gains, a_ij=None):
    """``(e_ij, e_ji)`` for edge ``(i, j)`` with assigned craft ``k``."""
    err = edge_errors(*_edge_los(los, i, j, k), Qd_ij, gains.k_alpha, gains.k_beta, a_ij)
    return err.e_ij, err.e_ji


def psi_total(los, i, j, k, Qd_ij, gains, a_ij=None):
    """``Psi_ij = k_alpha Psi_alpha + k_beta Psi_beta``, in ``[0, 2(k_alpha + k_beta)]``."""
    err = edge_errors(*_edge_los(los, i, j, k), Qd_ij, gains.k_alpha, gains.k_beta, a_ij)
    return float(err.psi)


def build_K(s_ij, s_ijk, gains):
    """Inertial-frame weight matrix with eigenvalues ``{k_alpha, k_beta, 0}``."""
    s_ij = np.asarray(s_ij, dtype=float)
    s_ijk = np.asarray(s_ijk, dtype=float)
    n2 = float(s_ijk @ s_ijk)
    if n2 <= DEGENERATE_TOL ** 2:
        raise ValueError("degenerate triangle normal")
    return gains.k_alpha * np.outer(s_ij, s_ij) + gains.k_beta / n2 * np.outer(s_ijk, s_ijk)


def eigenframe(s_ij, s_ijk):
    """``U = [s_ij, n, s_ij x n]`` with ``n`` the unit triangle normal; ``K = U G U^T``."""
    s_ij = np.asarray(s_ij, dtype=float)
    n = np.asarray(s_ijk, dtype=float)
    n = n / np.linalg.norm(n)
    return np.column_stack([s_ij, n, cross(s_ij, n)])


def _frame_from_K(K, gains):
    w, V = np.linalg.eigh(K)
    cols = [V[:, np.argmin(np.abs(w - target))] for target in (gains.k_alpha, gains.k_beta, 0.0)]
    U = np.column_stack(cols)
    if np.linalg.det(U) < 0:
        U[:, 2] = -U[:, 2]
    return U


@dataclass(frozen=True)
class EquilibriumClass:
    label: str                      # "desired", "D1", "D2", "D3" or "none"
    distance: float
    distances: dict = field(default_factory=dict, compare=False)


def classify_equilibrium(R1, R2, Qd_12, K, gains, tol=EQUILIBRIUM_TOL):
    """Nearest critical configuration of ``Psi_12``.

    Compares ``R1 Qd_21 R2^T`` with ``I`` and ``U D U^T`` for the three sign
    patterns ``D``; the eigenvector order of ``K`` is fixed by matching its
    eigenvalues to ``gains``. Diagnostic only.
    """
    X = R1 @ Qd_12.T @ R2.T
    U = _frame_from_K(np.asarray(K, dtype=float), gains)
    candidates = {"desired": np.eye(3)}
    candidates.update({name: U @ D @ U.T for name, D in D_MATRICES.items()})
    dist = {name: float(np.linalg.norm(X - C)) for name, C in candidates.items()}
    best = min(dist, key=dist.get)
    if dist[best] > tol:
        return EquilibriumClass("none", dist[best], dist)
    return EquilibriumClass(best, dist[best], dist)


def undesired_attitude(R2, Qd_12, U, which):
    """Attitude ``R1`` placing the pair at the undesired critical point ``which``."""
    D = D_MATRICES[which]
    return U @ D @ U.T @ R2 @ Qd_12


def attitude_error_vector(Q, Qd):
    """``e_Q = (Qd^T Q - Q^T Qd)^vee / 2``."""
    Q = np.asarray(Q, dtype=float)
    Qd = np.asarray(Qd, dtype=float)
    return 0.5 * vee(transpose(Qd) @ Q - transpose(Q) @ Qd, tol=np.inf)



@dataclass
class ErrorState:
    """Error snapshot: edge quantities keyed by directed edge, rate errors by craft."""

    psi_alpha: dict
    psi_beta: dict
    psi: dict
    e_alpha: dict
    e_beta: dict
    e: dict
    e_omega: dict

    def psi_sum(self, edges):
        return float(sum(self.psi[edge] for edge in edges))
