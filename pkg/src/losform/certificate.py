"""Bound constants, certificate matrices and region-of-attraction checks.

The quadratic bounds relate an edge error function to its error vector,
``psi_lower ||e||^2 <= Psi <= psi_upper ||e||^2`` inside the sublevel set
``Psi <= psi_cap < 2 min(k_alpha, k_beta)``. A coupling constant ``c`` is
feasible when every 2x2 matrix bounding the strict Lyapunov function and its
derivative is positive definite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import chain_edges

PD_TOL = 1e-12
C_GRID = np.logspace(-8.0, 0.0, 200)
C_RTOL = 1e-3


class InfeasibleCertificate(ValueError):
    pass


@dataclass(frozen=True)
class QuadraticBoundConstants:
    psi_lower: float
    psi_upper: float
    psi_cap: float


def bound_constants(gains, psi_cap):
    k1, k2 = gains.k_alpha, gains.k_beta
    kmin = min(k1, k2)
    if not 0.0 < psi_cap < 2.0 * kmin:
        raise ValueError(f"psi_cap must lie in (0, {2 * kmin:g})")
    if k1 == k2:
        raise ValueError("k_alpha and k_beta must differ")
    lower = kmin / (2.0 * max(k1 * k1, k2 * k2, (k1 - k2) ** 2) + 2.0 * (k1 + k2) ** 2)
    upper = kmin * (k1 + k2) / (min(k1 * k1, k2 * k2) * (2.0 * kmin - psi_cap))
    return QuadraticBoundConstants(lower, upper, psi_cap)


def trace_bound_constants(f, phi):
    """Generic bounds for ``Phi = tr[F(I - P)]/2`` against ``||e_P||^2``, ``F = diag(f)``.

    Returns ``(lower, upper)``; valid while ``Phi < phi < h1``.
    """
    f1, f2, f3 = f
    pair_sums = (f1 + f2, f2 + f3, f3 + f1)
    h1 = min(pair_sums)
    h2 = max((f1 - f2) ** 2, (f2 - f3) ** 2, (f3 - f1) ** 2)
    h3 = max(s * s for s in pair_sums)
    h4 = max(pair_sums)
    h5 = min(s * s for s in pair_sums)
    if not phi < h1:
        raise ValueError("phi must be below h1")
    return h1 / (h2 + h3), h1 * h4 / (h5 * (h1 - phi))


def sym2_min_eig(M):
    """Smallest eigenvalue of a symmetric 2x2 matrix (closed form)."""
    a, b, d = M[0, 0], M[0, 1], M[1, 1]
    return 0.5 * (a + d) - math.hypot(0.5 * (a - d), b)


def _inertia_bounds(J):
    w = np.linalg.eigvalsh(np.asarray(J, dtype=float))
    return float(w[-1]), float(w[0])


@dataclass
class GainCertificate:
    c: float
    matrices: dict
    min_eigenvalues: dict
    heuristic: bool = False
    bounds: dict = field(default_factory=dict)

    @property
    def positive_definite(self):
        return all(v > PD_TOL for v in self.min_eigenvalues.values())


def _lab(*nodes):
    return "".join(str(n) for n in nodes) if all(n < 10 for n in nodes) else "_".join(map(str, nodes))


def build_certificate_matrices(gains, inertias, B_d, c, chain, psi_cap):
    """Assemble the 2x2 certificate matrices for a chain at coupling ``c``.

    ``inertias`` maps craft -> inertia matrix. For two crafts the set is
    ``M_lower_ij, M_upper_ij, W_ij, W_ji, Y_12``; for three it is
    ``W_12, W_213, W_32, Z_21, Z_23`` plus the ``M`` bounds. Longer chains reuse
    the three-craft pattern per interior node and per edge and are flagged
    ``heuristic``.
    """
    lam = {i: _inertia_bounds(inertias[i]) for i in chain}
    edges = chain_edges(chain)
    kbar = {}
    bounds = {}
    for i, j in edges:
        g = gains.for_edge(i, j)
        kbar[(i, j)] = kbar[(j, i)] = g.total
        bounds[(i, j)] = bounds[(j, i)] = bound_constants(g, psi_cap)
    nbrs = {p: [q for q in (chain[m - 1] if m > 0 else None, chain[m + 1] if m + 1 < len(chain) else None)
                if q is not None]
            for m, p in enumerate(chain)}
    kom = gains.k_omega
    mats = {}

    for i, j in edges + [(j, i) for i, j in edges]:
        lM, lm = lam[i]
        b = bounds[(i, j)]
        mats[f"M_lower_{_lab(i, j)}"] = 0.5 * np.array([[b.psi_lower, -c], [-c, lm]])
        mats[f"M_upper_{_lab(i, j)}"] = 0.5 * np.array([[b.psi_upper, c], [c, lM]])

    def rate_diag(p):
        lM, lm = lam[p]
        if len(nbrs[p]) == 1:
            return kom[p] - c * kbar[(p, nbrs[p][0])] * (1.0 + lM / lm)
        ksum = sum(kbar[(p, q)] for q in nbrs[p])
        return 2.0 * kom[p] - c * ksum * (2.0 + lM / lm)

    for p in chain:
        lM, lm = lam[p]
        off = -(c / lm) * ((lM + lm) * B_d + kom[p])
        if len(nbrs[p]) == 1:
            name = f"W_{_lab(p, nbrs[p][0])}"
        else:
            name = f"W_{_lab(p, *nbrs[p])}"
        mats[name] = 0.5 * np.array([[c / lM, off], [off, rate_diag(p)]])

    if len(chain) == 2:
        i, j = chain
        kb = kbar[(i, j)]
        mats[f"Y_{_lab(i, j)}"] = 0.5 * np.array([[rate_diag(i), -2.0 * c * kb],
                                                  [-2.0 * c * kb, rate_diag(j)]])
    else:
        for i, j in edges:
            p, q = (j, i) if len(nbrs[j]) == 2 and len(nbrs[i]) == 1 else (i, j)
            others = sum(kbar[(x, y)] for x in (p, q) for y in nbrs[x] if {x, y} != {p, q})
            off = -c * (6.0 * kbar[(p, q)] + 2.0 * others)
            mats[f"Z_{_lab(p, q)}"] = 0.25 * np.array([[rate_diag(p), off], [off, rate_diag(q)]])

    eigs = {name: sym2_min_eig(M) for name, M in mats.items()}
    return GainCertificate(c=c, matrices=mats, min_eigenvalues=eigs,
                           heuristic=len(chain) > 3, bounds=bounds)


def _feasible(gains, inertias, B_d, c, chain, psi_cap, only):
    cert = build_certificate_matrices(gains, inertias, B_d, c, chain, psi_cap)
    eigs = cert.min_eigenvalues
    if only is not None:
        eigs = {k: v for k, v in eigs.items() if any(k.startswith(p) for p in only)}
    return all(v > PD_TOL for v in eigs.values())


def find_feasible_c(gains, inertias, B_d, chain, psi_cap, only=None, grid=C_GRID):
    """Largest coupling ``c`` on the log grid (refined by bisection) with all matrices PD.

    ``only`` restricts the test to matrix names starting with the given
    prefixes. Raises :class:`InfeasibleCertificate` when no grid point works.
    """
    ok = np.array([_feasible(gains, inertias, B_d, c, chain, psi_cap, only) for c in grid])
    if not ok.any():
        raise InfeasibleCertificate("no coupling constant makes every certificate matrix positive definite")
    m = int(np.nonzero(ok)[0].max())
    if m == len(grid) - 1:
        return float(grid[m])
    lo, hi = float(grid[m]), float(grid[m + 1])
    while (hi - lo) > C_RTOL * lo:
        mid = 0.5 * (lo + hi)
        if _feasible(gains, inertias, B_d, mid, chain, psi_cap, only):
            lo = mid
        else:
            hi = mid
    return lo


def chain_weights(chain):
    """Kinetic-energy weight per craft: 1 at the chain ends, 2 inside."""
    if len(chain) == 2:
        return {chain[0]: 1.0, chain[1]: 1.0}
    return {p: (1.0 if m in (0, len(chain) - 1) else 2.0) for m, p in enumerate(chain)}


@dataclass
class RoaReport:
    member: bool
    psi_sum: float
    psi_cap: float
    kinetic: float
    config_margin: float
    velocity_margin: float


def check_roa(inertias, errors0, gains, psi_cap, chain):
    """Membership of the initial condition in the sublevel-set ROA estimate.

    Checks ``sum Psi(0) <= psi_cap`` and
    ``sum_i w_i lambda_max(J_i) ||e_Omega_i(0)||^2 <= 2 (psi_cap - sum Psi(0))``
    with weights from :func:`chain_weights`.
    """
    edges = chain_edges(chain)
    kmin = min(min(gains.for_edge(i, j).k_alpha, gains.for_edge(i, j).k_beta) for i, j in edges)
    if not 0.0 < psi_cap < 2.0 * kmin:
        raise ValueError(f"psi_cap must lie in (0, {2 * kmin:g})")
    psi_sum = errors0.psi_sum(edges)
    w = chain_weights(chain)
    kinetic = sum(w[p] * _inertia_bounds(inertias[p])[0] * float(errors0.e_omega[p] @ errors0.e_omega[p])
                  for p in chain)
    config_margin = psi_cap - psi_sum
    velocity_margin = 2.0 * config_margin - kinetic
    return RoaReport(member=config_margin >= 0.0 and velocity_margin >= 0.0, psi_sum=psi_sum,
                     psi_cap=psi_cap, kinetic=kinetic, config_margin=config_margin,
                     velocity_margin=velocity_margin)


def lyapunov_values(errors, inertias, c, chain):
    """``(U, V)``: rate-weighted kinetic error plus total ``Psi``, and ``U`` plus cross terms."""
    w = chain_weights(chain)
    edges = chain_edges(chain)
    U = errors.psi_sum(edges)
    cross = 0.0
    for m, p in enumerate(chain):
        eW = errors.e_omega[p]
        J = np.asarray(inertias[p], dtype=float)
        U += 0.5 * w[p] * float(eW @ J @ eW)
        for q in (chain[m - 1] if m > 0 else None, chain[m + 1] if m + 1 < len(chain) else None):
            if q is not None:
                cross += float(errors.e[(p, q)] @ eW)
    return U, U + c * cross


def lyapunov_bounds(errors, inertias, chain, cert):
    """``(sum z^T M_lower z, sum z^T M_upper z)`` over directed chain edges."""
    lo = hi = 0.0
    edges = chain_edges(chain)
    for i, j in edges + [(j, i) for i, j in edges]:
        z = np.array([np.linalg.norm(errors.e[(i, j)]), np.linalg.norm(errors.e_omega[i])])
        lo += z @ cert.matrices[f"M_lower_{_lab(i, j)}"] @ z
        hi += z @ cert.matrices[f"M_upper_{_lab(i, j)}"] @ z
    return float(lo), float(hi)
