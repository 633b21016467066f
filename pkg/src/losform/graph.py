"""Formation topology: edges, assignment map, measurement and communication sets.

Nodes are labelled ``1..n``. An edge ``(i, j)`` means the relative attitude
between crafts ``i`` and ``j`` is controlled directly; the assignment map
attaches a third craft ``k = rho(i, j)`` whose LOS closes the triangle that
fixes the relative attitude. Nodes that appear in no edge are passive
beacons: they are observed but not controlled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

COLLINEAR_TOL = 1e-6

Edge = tuple[int, int]
Label = tuple[int, int]          # LOS label (i, j) stands for b_ij
MeasurementSet = dict[int, frozenset[Label]]
CommunicationSet = dict[Edge, tuple[Label, ...]]


@dataclass(frozen=True)
class FormationSpec:
    n: int
    edges: frozenset[Edge]
    assignment: Mapping[Edge, int]
    positions: Mapping[int, np.ndarray] = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", frozenset((int(i), int(j)) for i, j in self.edges))
        object.__setattr__(self, "assignment",
                           {(int(i), int(j)): int(k) for (i, j), k in self.assignment.items()})
        object.__setattr__(self, "positions",
                           {int(i): np.asarray(p, dtype=float) for i, p in self.positions.items()})

    @classmethod
    def from_triples(cls, positions, triples, n=None):
        """Build a spec from an assignment set ``{(i, j, k)}``.

        ``positions`` is either a mapping ``node -> xyz`` or a sequence
        ordered by node label. Triples given for one direction only are
        mirrored, since both the edge set and the assignment map are
        symmetric.
        """
        if not isinstance(positions, Mapping):
            positions = {i + 1: p for i, p in enumerate(positions)}
        assignment = {}
        for i, j, k in triples:
            assignment[(i, j)] = k
        for (i, j), k in list(assignment.items()):
            assignment.setdefault((j, i), k)
        edges = frozenset(assignment)
        return cls(n=n or len(positions), edges=edges, assignment=assignment, positions=positions)

    @property
    def nodes(self):
        return range(1, self.n + 1)

    def neighbors(self, i):
        return sorted(j for (a, j) in self.edges if a == i)

    def los_direction(self, i, j):
        """Unit vector ``s_ij`` from craft ``i`` toward craft ``j`` (inertial frame)."""
        d = self.positions[j] - self.positions[i]
        norm = np.linalg.norm(d)
        if norm == 0.0:
            raise ValueError(f"crafts {i} and {j} have coincident positions")
        return d / norm

    def undirected_edges(self):
        return sorted({(min(i, j), max(i, j)) for i, j in self.edges})


def build_assignment_set(spec):
    """One triple ``(i, j, rho(i, j))`` per directed edge, sorted."""
    triples = []
    for i, j in sorted(spec.edges):
        if (i, j) not in spec.assignment:
            raise ValueError(f"edge ({i},{j}) has no assigned third craft")
        triples.append((i, j, spec.assignment[(i, j)]))
    return triples


def derive_sets(spec):
    """Measurement sets ``L_i`` and communication sets ``C_ij``.

    ``L_i = {b_ij, b_ik : (i, j, k) in A}`` and ``C_ij = (b_ij, b_i rho(i,j))``
    for ``(i, j)`` in the edge set; ``C_ij`` is empty for non-adjacent pairs
    and is therefore omitted from the returned mapping.
    """
    triples = build_assignment_set(spec)
    measured = {i: set() for i in spec.nodes}
    comm = {}
    for i, j, k in triples:
        measured[i].update({(i, j), (i, k)})
        comm[(i, j)] = ((i, j), (i, k))
    return {i: frozenset(v) for i, v in measured.items()}, comm


def chain_order(spec):
    """Nodes of the edge graph in path order, starting at the lower-labelled end.

    Raises ``ValueError`` unless the undirected edges form a single simple
    path (degree sequence 1, 2, ..., 2, 1).
    """
    und = spec.undirected_edges()
    if not und:
        raise ValueError("formation has no edges")
    adj = {}
    for i, j in und:
        adj.setdefault(i, []).append(j)
        adj.setdefault(j, []).append(i)
    ends = sorted(v for v, nb in adj.items() if len(nb) == 1)
    if len(ends) != 2 or any(len(nb) > 2 for nb in adj.values()):
        raise ValueError("edge set is not a daisy chain")
    order = [ends[0]]
    prev = None
    while True:
        nxt = [v for v in adj[order[-1]] if v != prev]
        if not nxt:
            break
        prev = order[-1]
        order.append(nxt[0])
    if len(order) != len(adj):
        raise ValueError("edge set is not connected")
    return order


def chain_edges(order):
    """Forward edges ``(c_m, c_{m+1})`` along a chain."""
    return list(zip(order[:-1], order[1:]))


@dataclass(frozen=True)
class Violation:
    assumption: str
    message: str
    item: tuple = ()


@dataclass
class ValidationReport:
    violations: list[Violation]

    @property
    def ok(self):
        return not self.violations

    def lines(self):
        if self.ok:
            return ["all assumptions satisfied"]
        return [f"[{v.assumption}] {v.message}" for v in self.violations]


def validate(spec, collinear_tol=COLLINEAR_TOL):
    """Check graph structure and the formation assumptions.

    Returns a report, never raises. Assumption labels: ``graph`` and
    ``assignment`` for structural defects, ``A1`` fixed and distinct
    positions, ``A2`` non-collinear triangles, ``A5`` daisy chain.
    Assumptions 3 and 4 hold by construction of :func:`derive_sets`.
    """
    out = []
    nodes = set(spec.nodes)
    for i, j in sorted(spec.edges):
        if i not in nodes or j not in nodes or i == j:
            out.append(Violation("graph", f"invalid edge ({i},{j})", (i, j)))
        elif (j, i) not in spec.edges:
            out.append(Violation("graph", f"edge ({i},{j}) has no reverse", (i, j)))
    for i, j in sorted(spec.edges):
        k = spec.assignment.get((i, j))
        if k is None:
            out.append(Violation("assignment", f"edge ({i},{j}) has no assigned craft", (i, j)))
            continue
        if k not in nodes or k in (i, j):
            out.append(Violation("assignment", f"rho({i},{j})={k} is not a third craft", (i, j, k)))
        if spec.assignment.get((j, i), k) != k:
            out.append(Violation("assignment", f"rho({i},{j}) != rho({j},{i})", (i, j)))
    for (i, j) in sorted(set(spec.assignment) - spec.edges):
        out.append(Violation("assignment", f"assignment given for non-edge ({i},{j})", (i, j)))

    missing = sorted(nodes - set(spec.positions))
    for i in missing:
        out.append(Violation("A1", f"no position for craft {i}", (i,)))
    labels = sorted(set(spec.positions) & nodes)
    for a in labels:
        for b in labels:
            if a < b and np.linalg.norm(spec.positions[a] - spec.positions[b]) == 0.0:
                out.append(Violation("A1", f"crafts {a} and {b} have coincident positions", (a, b)))

    if not any(v.assumption in ("A1", "assignment") for v in out):
        for (i, j), k in sorted(spec.assignment.items()):
            if (i, j) not in spec.edges:
                continue
            cross = np.cross(spec.los_direction(i, k), spec.los_direction(j, k))
            if np.linalg.norm(cross) <= collinear_tol:
                out.append(Violation("A2", f"craft {k} is collinear with edge ({i},{j})", (i, j, k)))

    try:
        chain_order(spec)
    except ValueError as exc:
        out.append(Violation("A5", str(exc)))
    return ValidationReport(out)
