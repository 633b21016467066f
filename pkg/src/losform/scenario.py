"""Scenario definition and its JSON document format.

A scenario file is one JSON object::

    {
      "name": "...",
      "positions": [[x, y, z], ...],            # craft 1..n, inertial, any length unit
      "assignment": [[i, j, k], ...],           # assignment set; one direction per edge suffices
      "crafts": [{"inertia": [3, 2, 1],         # diagonal or full 3x3 [kg m^2]
                  "attitude": {"axis_angle": [...]} | {"euler321": [yaw, pitch, roll]},
                  "omega": [0, 0, 0]}, ...],    # [rad/s]; every key optional
      "trajectories": {"3-4": {"type": "euler321",
                               "yaw": {"kind": "sin", "amplitude": 1, "frequency": 0.5},
                               "pitch": 0.1, "roll": {"kind": "cos", "amplitude": 1, "frequency": 1}},
                       "1-2": {"type": "constant"},          # identity, or "euler321": [y, p, r]
                       "6-7": {"type": "transpose", "of": "4-5"}},
      "gains": {"k_alpha": 25, "k_beta": 25.1, "k_omega": 7,
                "edges": {"1-2": {"k_alpha": ..., "k_beta": ...}}, "crafts": {"3": {"k_omega": ...}}},
      "split": "anchor" | "half", "anchor": 4,
      "step": 0.001, "horizon": 30.0, "decimate": 10, "psi_cap": 40.0
    }

Angles are radians. Every chain edge needs a trajectory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .controller import (AngleFunction, ConstantTrajectory, ControlGains, EulerTrajectory,
                         FormationCommand, TransposedTrajectory)
from .error_geometry import EdgeGains
from .graph import FormationSpec, chain_edges, chain_order, validate
from .los import SpacecraftState
from .so3 import euler321_to_rotation, exp_so3, is_rotation

MAX_STEP = 0.01


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    spec: FormationSpec
    chain: list
    initial_states: list        # SpacecraftState per craft, ordered by label
    command: FormationCommand
    gains: ControlGains
    step: float = 1e-3
    horizon: float = 30.0
    decimate: int = 10
    psi_cap: float | None = None
    name: str = "scenario"

    def __post_init__(self):
        if not 0.0 < self.step <= MAX_STEP:
            raise ScenarioError(f"step must lie in (0, {MAX_STEP}]")
        if not self.horizon > 0.0:
            raise ScenarioError("horizon must be positive")
        if self.decimate < 1:
            raise ScenarioError("decimate must be >= 1")

    @property
    def inertias(self):
        return {i: self.initial_states[i - 1].J for i in self.spec.nodes}

    def psi_cap_limit(self):
        """Open upper limit ``2 min(k_alpha, k_beta)`` over the chain edges."""
        return 2.0 * min(min(self.gains.for_edge(i, j).k_alpha, self.gains.for_edge(i, j).k_beta)
                         for i, j in chain_edges(self.chain))


def _edge_key(text):
    try:
        i, j = (int(x) for x in str(text).split("-"))
    except ValueError:
        raise ScenarioError(f"edge key {text!r} is not of the form 'i-j'") from None
    return i, j


def _angle(spec):
    if isinstance(spec, (int, float)):
        return AngleFunction.constant(spec)
    try:
        return AngleFunction(kind=spec.get("kind", "constant"),
                             amplitude=float(spec.get("amplitude", 0.0)),
                             frequency=float(spec.get("frequency", 0.0)),
                             offset=float(spec.get("offset", 0.0)))
    except (AttributeError, ValueError) as exc:
        raise ScenarioError(f"bad angle function {spec!r}: {exc}") from None


def _attitude(entry):
    if entry is None:
        return np.eye(3)
    if "axis_angle" in entry:
        return exp_so3(np.asarray(entry["axis_angle"], dtype=float))
    if "euler321" in entry:
        return euler321_to_rotation(*entry["euler321"])
    if "matrix" in entry:
        R = np.asarray(entry["matrix"], dtype=float)
        if not is_rotation(R):
            raise ScenarioError("attitude matrix is not a rotation")
        return R
    raise ScenarioError(f"unrecognised attitude {entry!r}")


def _trajectories(doc, chain):
    raw = {_edge_key(k): v for k, v in doc.get("trajectories", {}).items()}
    built = {}

    def make(edge, entry):
        kind = entry.get("type", "constant")
        if kind == "constant":
            if "euler321" in entry:
                return ConstantTrajectory(euler321_to_rotation(*entry["euler321"]))
            return ConstantTrajectory(np.eye(3))
        if kind == "euler321":
            return EulerTrajectory(_angle(entry.get("yaw", 0.0)), _angle(entry.get("pitch", 0.0)),
                                   _angle(entry.get("roll", 0.0)))
        if kind == "transpose":
            target = _edge_key(entry["of"])
            if target not in raw or raw[target].get("type") == "transpose":
                raise ScenarioError(f"edge {edge}: transpose target {target} must be a direct trajectory")
            return TransposedTrajectory(make(target, raw[target]))
        raise ScenarioError(f"edge {edge}: unknown trajectory type {kind!r}")

    for i, j in chain_edges(chain):
        if (i, j) in raw:
            built[(i, j)] = make((i, j), raw[(i, j)])
        elif (j, i) in raw:
            built[(i, j)] = TransposedTrajectory(make((j, i), raw[(j, i)]))
        else:
            raise ScenarioError(f"no trajectory for edge {i}-{j}")
    return built


def _gains(doc, spec):
    g = doc.get("gains", {})
    try:
        base_a, base_b = float(g["k_alpha"]), float(g["k_beta"])
        base_w = float(g["k_omega"])
    except KeyError as exc:
        raise ScenarioError(f"gains missing {exc}") from None
    overrides = {_edge_key(k): v for k, v in g.get("edges", {}).items()}
    edges = {}
    try:
        for i, j in spec.undirected_edges():
            o = overrides.get((i, j), overrides.get((j, i), {}))
            edges[(i, j)] = EdgeGains(float(o.get("k_alpha", base_a)), float(o.get("k_beta", base_b)))
        k_omega = {i: float(g.get("crafts", {}).get(str(i), {}).get("k_omega", base_w))
                   for i in spec.nodes}
        return ControlGains(edges, k_omega)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def scenario_from_dict(doc):
    """Build and validate a :class:`Scenario`; raises :class:`ScenarioError`."""
    try:
        positions = [np.asarray(p, dtype=float) for p in doc["positions"]]
        triples = [tuple(int(x) for x in t) for t in doc["assignment"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad formation definition: {exc}") from None
    spec = FormationSpec.from_triples(positions, triples)
    report = validate(spec)
    if not report.ok:
        raise ScenarioError("; ".join(report.lines()))
    chain = chain_order(spec)

    crafts = doc.get("crafts", [{}] * spec.n)
    if len(crafts) != spec.n:
        raise ScenarioError(f"expected {spec.n} craft entries, got {len(crafts)}")
    states = []
    for entry in crafts:
        try:
            states.append(SpacecraftState(_attitude(entry.get("attitude")),
                                          np.asarray(entry.get("omega", [0.0, 0.0, 0.0]), dtype=float),
                                          np.asarray(entry.get("inertia", [1.0, 1.0, 1.0]), dtype=float)))
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None

    split = doc.get("split", "half" if len(chain) == 2 else "anchor")
    anchor = doc.get("anchor")
    if split == "anchor" and anchor is not None and anchor not in chain:
        raise ScenarioError(f"anchor {anchor} is not a chain member")
    if split == "half" and len(chain) != 2:
        raise ScenarioError("half split requires a two-craft chain")
    command = FormationCommand(chain, _trajectories(doc, chain), anchor=anchor, split=split, n=spec.n)
    scenario = Scenario(spec=spec, chain=chain, initial_states=states, command=command,
                        gains=_gains(doc, spec), step=float(doc.get("step", 1e-3)),
                        horizon=float(doc.get("horizon", 30.0)), decimate=int(doc.get("decimate", 10)),
                        psi_cap=doc.get("psi_cap"), name=str(doc.get("name", "scenario")))
    limit = scenario.psi_cap_limit()
    if scenario.psi_cap is None:
        scenario.psi_cap = 0.99 * limit
    scenario.psi_cap = float(scenario.psi_cap)
    if not 0.0 < scenario.psi_cap < limit:
        raise ScenarioError(f"psi_cap must lie in (0, {limit:g})")
    return scenario


def load_scenario(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
    return scenario_from_dict(doc)


def heptagon(radius=10.0, phase=0.1):
    """Craft positions on a regular heptagon in the inertial x-y plane."""
    return [[radius * math.cos(phase + 2 * math.pi * m / 7), radius * math.sin(phase + 2 * math.pi * m / 7), 0.0]
            for m in range(7)]


def paper_scenario_dict():
    """The seven-craft formation example with its gains, commands and initial attitudes."""
    identity = {"type": "constant"}
    return {
        "name": "paper-seven-craft",
        "positions": heptagon(),
        "assignment": [[1, 2, 3], [2, 1, 3], [2, 3, 4], [3, 2, 4], [3, 4, 5], [4, 3, 5],
                       [4, 5, 7], [5, 4, 7], [5, 6, 7], [6, 5, 7], [6, 7, 5], [7, 6, 5]],
        "crafts": [
            {"inertia": [3.0, 2.0, 1.0],
             "attitude": ({"axis_angle": [0.999 * math.pi, 0.0, 0.0]} if i == 3 else
                          {"axis_angle": [0.0, 0.990 * math.pi, 0.0]} if i == 6 else None),
             "omega": [0.0, 0.0, 0.0]}
            for i in range(1, 8)
        ],
        "trajectories": {
            "1-2": identity,
            "2-3": identity,
            "3-4": {"type": "euler321",
                    "yaw": {"kind": "sin", "amplitude": 1.0, "frequency": 0.5},
                    "pitch": 0.1,
                    "roll": {"kind": "cos", "amplitude": 1.0, "frequency": 1.0}},
            "4-5": {"type": "euler321",
                    "yaw": 0.0,
                    "pitch": {"kind": "cos", "amplitude": 1.0, "frequency": 0.2, "offset": -0.1},
                    "roll": {"kind": "sin", "amplitude": 0.5, "frequency": 2.0}},
            "5-6": identity,
            "6-7": {"type": "transpose", "of": "4-5"},
        },
        "gains": {"k_alpha": 25.0, "k_beta": 25.1, "k_omega": 7.0},
        "split": "anchor",
        "anchor": 4,
        "step": 1e-3,
        "horizon": 30.0,
        "decimate": 10,
        "psi_cap": 40.0,
    }


def _clean(doc):
    # JSON has no None-valued attitude; drop it so the identity default applies
    out = json.loads(json.dumps(doc))
    for craft in out.get("crafts", []):
        if craft.get("attitude") is None:
            craft.pop("attitude", None)
    return out


def paper_scenario():
    return scenario_from_dict(_clean(paper_scenario_dict()))


def dump_scenario_dict(doc, path):
    with open(path, "w") as fh:
        json.dump(_clean(doc), fh, indent=2)
        fh.write("\n")
