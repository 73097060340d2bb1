"""Mechanism topology, coordinate sets, precision points and problem files.

A problem file is a JSON document with four top-level keys::

    {
      "nodes": [{"id": 0, "label": "A", "x": -5.7114, "y": 2.5202, "fixed": true}, ...],
      "trusses": [{"id": 0, "k": 0, "l": 1}, ...],
      "precision_points": [{"pins": [{"node": 4, "x": -2.6301, "y": 1.0126}],
                            "rays": [{"from": 0, "to": 2, "angle": 1.13}]}, ...],
      "options": {"optimize_fixed_nodes": true,
                  "pinned": [{"node": 0, "axis": "x"}],
                  "formulation": "coordinates",
                  "tolerances": {"gtol": 1e-9},
                  "max_iterations": 200}
    }

Everything the solvers need is held in immutable dataclasses; coordinates are
stored as ``(n, 2)`` arrays in mechanism node order.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

import numpy as np

logger = logging.getLogger(__name__)

FORMULATIONS = ("coordinates", "dimensions")
AXES = {"x": 0, "y": 1}

# Lengths below this fraction of the bounding-box diagonal count as zero.
ZERO_LENGTH_RTOL = 1e-12


class ProblemError(ValueError):
    """Raised for malformed or inconsistent problem definitions."""


class ZeroLengthError(ProblemError):
    """A truss whose endpoints coincide."""

    def __init__(self, truss_id: int, message: str | None = None):
        self.truss_id = truss_id
        super().__init__(message or f"truss {truss_id} has zero length")


@dataclass(frozen=True)
class Node:
    id: int
    label: str = ""
    fixed: bool = False

    @property
    def name(self) -> str:
        return self.label or str(self.id)


@dataclass(frozen=True)
class Truss:
    id: int
    k: int
    l: int


@dataclass(frozen=True)
class Mechanism:
    """Topology only: nodes with ground flags and the trusses joining them."""

    nodes: tuple[Node, ...]
    trusses: tuple[Truss, ...]

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ProblemError(f"duplicate node ids in {ids}")
        tids = [t.id for t in self.trusses]
        if len(set(tids)) != len(tids):
            raise ProblemError(f"duplicate truss ids in {tids}")
        known = set(ids)
        pairs = set()
        for t in self.trusses:
            if t.k not in known or t.l not in known:
                raise ProblemError(f"truss {t.id} references an unknown node ({t.k}, {t.l})")
            if t.k == t.l:
                raise ProblemError(f"truss {t.id} is a self-loop on node {t.k}")
            pair = frozenset((t.k, t.l))
            if pair in pairs:
                raise ProblemError(f"truss {t.id} duplicates the node pair ({t.k}, {t.l})")
            pairs.add(pair)
        object.__setattr__(self, "_index", {nid: i for i, nid in enumerate(ids)})

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_trusses(self) -> int:
        return len(self.trusses)

    def index(self, node_id: int) -> int:
        """Row of ``node_id`` in coordinate arrays."""
        try:
            return self._index[node_id]
        except KeyError:
            raise ProblemError(f"unknown node id {node_id}") from None

    def node(self, node_id: int) -> Node:
        return self.nodes[self.index(node_id)]

    def endpoints(self) -> np.ndarray:
        """``(B, 2)`` integer array of (k, l) row indices."""
        return np.array([(self.index(t.k), self.index(t.l)) for t in self.trusses], dtype=int).reshape(-1, 2)

    def fixed_mask(self) -> np.ndarray:
        return np.array([n.fixed for n in self.nodes], dtype=bool)

    def fixed_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.fixed]


@dataclass(frozen=True, eq=False)
class CoordSet:
    """Planar coordinates for every node of a mechanism, in node order."""

    node_ids: tuple[int, ...]
    xy: np.ndarray

    def __post_init__(self):
        xy = np.array(self.xy, dtype=float).reshape(-1, 2)
        if xy.shape[0] != len(self.node_ids):
            raise ProblemError(f"{xy.shape[0]} coordinate rows for {len(self.node_ids)} nodes")
        if not np.all(np.isfinite(xy)):
            raise ProblemError("non-finite coordinates")
        xy.setflags(write=False)
        object.__setattr__(self, "xy", xy)

    @classmethod
    def from_mapping(cls, mechanism: Mechanism, coords: Mapping[int, Iterable[float]]) -> "CoordSet":
        missing = [n.id for n in mechanism.nodes if n.id not in coords]
        if missing:
            raise ProblemError(f"no coordinates for nodes {missing}")
        return cls(tuple(n.id for n in mechanism.nodes), np.array([tuple(coords[n.id]) for n in mechanism.nodes]))

    @classmethod
    def from_array(cls, mechanism: Mechanism, xy) -> "CoordSet":
        return cls(tuple(n.id for n in mechanism.nodes), np.asarray(xy, dtype=float))

    def __eq__(self, other):
        if not isinstance(other, CoordSet):
            return NotImplemented
        return self.node_ids == other.node_ids and np.array_equal(self.xy, other.xy)

    def __hash__(self):
        return hash((self.node_ids, self.xy.tobytes()))

    def __getitem__(self, node_id: int) -> tuple[float, float]:
        i = self.node_ids.index(node_id)
        return float(self.xy[i, 0]), float(self.xy[i, 1])

    def as_dict(self) -> dict[int, tuple[float, float]]:
        return {nid: (float(x), float(y)) for nid, (x, y) in zip(self.node_ids, self.xy)}

    def flat(self) -> np.ndarray:
        """Coordinates as ``(x_0, y_0, x_1, y_1, ...)``."""
        return self.xy.reshape(-1).copy()

    def with_xy(self, xy) -> "CoordSet":
        return CoordSet(self.node_ids, np.asarray(xy, dtype=float).reshape(-1, 2))


@dataclass(frozen=True)
class Pin:
    node: int
    x: float
    y: float


@dataclass(frozen=True)
class Ray:
    """Prescribed direction ``angle`` (radians) of the line from ``frm`` to ``to``."""

    frm: int
    to: int
    angle: float


@dataclass(frozen=True)
class PrecisionPoint:
    index: int
    pins: tuple[Pin, ...] = ()
    rays: tuple[Ray, ...] = ()


@dataclass(frozen=True)
class VariableOptions:
    optimize_fixed_nodes: bool = True
    pinned_variables: frozenset[tuple[int, int]] = frozenset()
    formulation: str = "coordinates"
    tolerances: Mapping[str, float] = field(default_factory=dict)
    max_iterations: int | None = None

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ProblemError(f"formulation must be one of {FORMULATIONS}, got {self.formulation!r}")
        object.__setattr__(self, "tolerances", dict(self.tolerances))
        if self.max_iterations is not None and not (1 <= self.max_iterations <= 10**6):
            raise ProblemError(f"max_iterations out of range: {self.max_iterations}")


@dataclass(frozen=True)
class SynthesisProblem:
    mechanism: Mechanism
    x0: CoordSet
    points: tuple[PrecisionPoint, ...]
    options: VariableOptions = VariableOptions()
    name: str = ""
    description: str = ""

    def __post_init__(self):
        mech = self.mechanism
        if mech.n_trusses < 1:
            raise ProblemError("a problem needs at least one truss")
        if not self.points:
            raise ProblemError("a problem needs at least one precision point")
        if self.x0.node_ids != tuple(n.id for n in mech.nodes):
            raise ProblemError("initial coordinates do not match the mechanism nodes")
        if not any(n.fixed for n in mech.nodes):
            warnings.warn("no fixed node: the mechanism floats freely", stacklevel=3)
        lengths(mech, self.x0)
        for p in self.points:
            seen = set()
            for pin in p.pins:
                mech.index(pin.node)
                if pin.node in seen:
                    raise ProblemError(f"node {pin.node} pinned twice in precision point {p.index}")
                if mech.node(pin.node).fixed:
                    raise ProblemError(f"precision point {p.index} pins fixed node {pin.node}")
                seen.add(pin.node)
            targets = set()
            for ray in p.rays:
                mech.index(ray.to)
                if not mech.node(ray.frm).fixed:
                    raise ProblemError(
                        f"precision point {p.index}: ray origin {ray.frm} is not a fixed node")
                if ray.to in seen or mech.node(ray.to).fixed:
                    raise ProblemError(
                        f"precision point {p.index}: ray target {ray.to} is already constrained")
                if ray.to in targets:
                    raise ProblemError(f"precision point {p.index}: node {ray.to} carries two rays")
                targets.add(ray.to)
        for nid, axis in self.options.pinned_variables:
            mech.index(nid)
            if axis not in (0, 1):
                raise ProblemError(f"bad axis {axis} for pinned node {nid}")

    @property
    def P(self) -> int:
        return len(self.points)

    def design_mask(self) -> np.ndarray:
        """Boolean mask over flat coordinates: True where x0 is a design variable."""
        mask = np.ones(2 * self.mechanism.n_nodes, dtype=bool)
        for i, node in enumerate(self.mechanism.nodes):
            if node.fixed and not self.options.optimize_fixed_nodes:
                mask[2 * i:2 * i + 2] = False
        for nid, axis in self.options.pinned_variables:
            mask[2 * self.mechanism.index(nid) + axis] = False
        return mask

    def with_options(self, **changes) -> "SynthesisProblem":
        return replace(self, options=replace(self.options, **changes))

    def with_x0(self, x0: CoordSet | np.ndarray) -> "SynthesisProblem":
        if not isinstance(x0, CoordSet):
            x0 = self.x0.with_xy(x0)
        return replace(self, x0=x0)


def bounding_diagonal(xy: np.ndarray) -> float:
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    span = xy.max(axis=0) - xy.min(axis=0)
    return float(np.hypot(*span))


def length_floor(xy: np.ndarray) -> float:
    """Smallest admissible truss length for a coordinate set."""
    return ZERO_LENGTH_RTOL * max(bounding_diagonal(xy), 1.0)


def lengths(mechanism: Mechanism, coords: CoordSet | np.ndarray) -> np.ndarray:
    """Truss lengths in truss order; raises ZeroLengthError on coincident endpoints."""
    xy = coords.xy if isinstance(coords, CoordSet) else np.asarray(coords, dtype=float).reshape(-1, 2)
    ends = mechanism.endpoints()
    out = np.linalg.norm(xy[ends[:, 0]] - xy[ends[:, 1]], axis=1)
    floor = length_floor(xy)
    bad = np.flatnonzero(out < floor)
    if bad.size:
        t = mechanism.trusses[bad[0]]
        raise ZeroLengthError(t.id, f"truss {t.id} ({t.k}-{t.l}) has zero length")
    return out


def length_map(mechanism: Mechanism, coords: CoordSet) -> dict[int, float]:
    return {t.id: float(v) for t, v in zip(mechanism.trusses, lengths(mechanism, coords))}


# -- serialization ---------------------------------------------------------

def _require(obj: Mapping[str, Any], key: str, where: str):
    if key not in obj:
        raise ProblemError(f"{where}: missing field {key!r}")
    return obj[key]


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProblemError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProblemError(f"{where}: expected an integer, got {value!r}")
    return value


def problem_from_dict(data: Mapping[str, Any]) -> SynthesisProblem:
    if not isinstance(data, Mapping):
        raise ProblemError("problem document must be an object")
    nodes, coords = [], {}
    for i, raw in enumerate(_require(data, "nodes", "problem")):
        where = f"nodes[{i}]"
        nid = _int(_require(raw, "id", where), where + ".id")
        nodes.append(Node(nid, str(raw.get("label", "")), bool(raw.get("fixed", False))))
        coords[nid] = (_num(_require(raw, "x", where), where + ".x"), _num(_require(raw, "y", where), where + ".y"))
    trusses = []
    for i, raw in enumerate(_require(data, "trusses", "problem")):
        where = f"trusses[{i}]"
        trusses.append(Truss(_int(_require(raw, "id", where), where + ".id"),
                             _int(_require(raw, "k", where), where + ".k"),
                             _int(_require(raw, "l", where), where + ".l")))
    mech = Mechanism(tuple(nodes), tuple(trusses))

    points = []
    for i, raw in enumerate(_require(data, "precision_points", "problem")):
        where = f"precision_points[{i}]"
        pins = tuple(Pin(_int(_require(p, "node", where), where + ".node"),
                         _num(_require(p, "x", where), where + ".x"),
                         _num(_require(p, "y", where), where + ".y"))
                     for p in raw.get("pins", []))
        rays = tuple(Ray(_int(_require(r, "from", where), where + ".from"),
                         _int(_require(r, "to", where), where + ".to"),
                         _num(_require(r, "angle", where), where + ".angle"))
                     for r in raw.get("rays", []))
        points.append(PrecisionPoint(i, pins, rays))

    raw_opts = data.get("options", {}) or {}
    pinned = set()
    for i, p in enumerate(raw_opts.get("pinned", [])):
        axis = p.get("axis")
        if axis not in AXES:
            raise ProblemError(f"options.pinned[{i}].axis must be 'x' or 'y', got {axis!r}")
        pinned.add((_int(_require(p, "node", "options.pinned"), "options.pinned.node"), AXES[axis]))
    tol = {str(k): _num(v, f"options.tolerances.{k}") for k, v in (raw_opts.get("tolerances") or {}).items()}
    max_it = raw_opts.get("max_iterations")
    options = VariableOptions(
        optimize_fixed_nodes=bool(raw_opts.get("optimize_fixed_nodes", True)),
        pinned_variables=frozenset(pinned),
        formulation=raw_opts.get("formulation", "coordinates"),
        tolerances=tol,
        max_iterations=None if max_it is None else _int(max_it, "options.max_iterations"),
    )
    return SynthesisProblem(mech, CoordSet.from_mapping(mech, coords), tuple(points), options,
                            name=str(data.get("name", "")), description=str(data.get("description", "")))


def load_problem(text: str) -> SynthesisProblem:
    """Parse and validate a problem document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return problem_from_dict(data)


def read_problem(path) -> SynthesisProblem:
    with open(path, encoding="utf-8") as fh:
        return load_problem(fh.read())


def problem_to_dict(problem: SynthesisProblem) -> dict[str, Any]:
    mech, xy = problem.mechanism, problem.x0.xy
    nodes = []
    for node, (x, y) in zip(mech.nodes, xy):
        entry = {"id": node.id}
        if node.label:
            entry["label"] = node.label
        entry.update(x=float(x), y=float(y), fixed=node.fixed)
        nodes.append(entry)
    points = []
    for p in problem.points:
        entry = {"pins": [{"node": q.node, "x": q.x, "y": q.y} for q in p.pins]}
        if p.rays:
            entry["rays"] = [{"from": r.frm, "to": r.to, "angle": r.angle} for r in p.rays]
        points.append(entry)
    opts = problem.options
    axis_name = {v: k for k, v in AXES.items()}
    options = {
        "optimize_fixed_nodes": opts.optimize_fixed_nodes,
        "pinned": [{"node": n, "axis": axis_name[a]} for n, a in sorted(opts.pinned_variables)],
        "formulation": opts.formulation,
    }
    if opts.tolerances:
        options["tolerances"] = dict(opts.tolerances)
    if opts.max_iterations is not None:
        options["max_iterations"] = opts.max_iterations
    out = {}
    if problem.name:
        out["name"] = problem.name
    if problem.description:
        out["description"] = problem.description
    out.update(nodes=nodes,
               trusses=[{"id": t.id, "k": t.k, "l": t.l} for t in mech.trusses],
               precision_points=points,
               options=options)
    return out


def save_problem(problem: SynthesisProblem) -> str:
    # json writes floats with repr(), i.e. round-trip (17 significant digit) precision
    return json.dumps(problem_to_dict(problem), indent=2) + "\n"
