"""JSON netlist parsing, validation and unit handling.

Internal units set hbar = 2e = 1 with energies measured in GHz (E/h).
In these units the reduced flux quantum is 1, a capacitor has charging
energy ``E_C = 1/(8 C)`` and a junction with Josephson inductance ``L_J``
has ``E_J = 1/L_J``.

Netlist document::

    {"nodes": [0, 1, 2], "ground": 0,
     "branches": [{"id": 1, "from": 0, "to": 1, "kind": "C",
                   "value": 10.0, "unit": "fF"}, ...],
     "mutual": [{"a": 3, "b": 4, "M": 0.1, "unit": "nH"}],
     "external_flux": [{"loop": 0, "phi": 3.14159}],
     "offset_charge": [{"node": 1, "ng": 0.25}]}

An optional top-level ``"unit_system": "dimensionless"`` makes every value
an internal-unit number and the ``unit`` keys optional.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import constants as sc

from .errors import (
    DisconnectedGraph,
    DuplicateBranchId,
    InputError,
    NetlistSyntaxError,
    NoGroundNode,
    NonPositiveValue,
    SelfLoopBranch,
    UnknownComponentKind,
)

KINDS = ("C", "L", "JJ", "V", "I")
CAPACITIVE = ("C", "V")
INDUCTIVE = ("L", "JJ")

_ALLOWED_UNITS = {
    "C": ("fF", "GHz"),
    "L": ("nH", "GHz"),
    "JJ": ("nH", "GHz"),
    "V": ("V",),
    "I": ("A",),
}

# conversion factors to internal units
_E_UNIT = sc.h * 1e9  # joule per GHz
_PHI0_RED = sc.hbar / (2 * sc.e)  # reduced flux quantum in Wb
CAP_PER_FARAD = _E_UNIT / (2 * sc.e) ** 2
IND_PER_HENRY = _E_UNIT / _PHI0_RED**2
VOLT_TO_INTERNAL = 2 * sc.e / _E_UNIT
AMP_TO_INTERNAL = _PHI0_RED / _E_UNIT
# resistance quantum h/(2e)^2 in ohm, exposed for converting impedances
R_Q = sc.h / (2 * sc.e) ** 2


def to_internal(value: float, unit: str, kind: str) -> float:
    """Convert a user value to the internal representation of ``kind``.

    C -> capacitance, L -> inductance, JJ -> E_J, V -> voltage, I -> current.
    For C a GHz value is read as E_C, for L as E_L (energy E_L phi^2 / 2)
    and for JJ as E_J.
    """
    if unit in ("", "internal", None):
        return float(value)
    if kind == "C":
        if unit == "fF":
            return value * 1e-15 * CAP_PER_FARAD
        if unit == "GHz":
            return 1.0 / (8.0 * value)
    elif kind == "L":
        if unit == "nH":
            return value * 1e-9 * IND_PER_HENRY
        if unit == "GHz":
            return 1.0 / value
    elif kind == "JJ":
        if unit == "nH":
            return 1.0 / (value * 1e-9 * IND_PER_HENRY)
        if unit == "GHz":
            return float(value)
    elif kind == "M":
        if unit == "nH":
            return value * 1e-9 * IND_PER_HENRY
    elif kind == "V" and unit == "V":
        return value * VOLT_TO_INTERNAL
    elif kind == "I" and unit == "A":
        return value * AMP_TO_INTERNAL
    raise InputError(f"unit {unit!r} not allowed for kind {kind!r}")


def from_internal(value: float, unit: str, kind: str) -> float:
    """Inverse of :func:`to_internal`."""
    if unit in ("", "internal", None):
        return float(value)
    if kind == "C":
        if unit == "fF":
            return value / CAP_PER_FARAD / 1e-15
        if unit == "GHz":
            return 1.0 / (8.0 * value)
    elif kind == "L":
        if unit == "nH":
            return value / IND_PER_HENRY / 1e-9
        if unit == "GHz":
            return 1.0 / value
    elif kind == "JJ":
        if unit == "nH":
            return 1.0 / value / IND_PER_HENRY / 1e-9
        if unit == "GHz":
            return float(value)
    elif kind == "M":
        if unit == "nH":
            return value / IND_PER_HENRY / 1e-9
    elif kind == "V" and unit == "V":
        return value / VOLT_TO_INTERNAL
    elif kind == "I" and unit == "A":
        return value / AMP_TO_INTERNAL
    raise InputError(f"unit {unit!r} not allowed for kind {kind!r}")


@dataclass(frozen=True)
class Branch:
    """Two-terminal component oriented from ``from_node`` to ``to_node``.

    ``value`` is internal: capacitance for C, inductance for L, E_J for JJ,
    voltage for V and current for I. ``raw_value``/``unit`` keep the input.
    """

    id: int
    from_node: int
    to_node: int
    kind: str
    value: float
    raw_value: float
    unit: str = ""


@dataclass(frozen=True)
class Mutual:
    a: int
    b: int
    value: float
    raw_value: float
    unit: str = ""


@dataclass(frozen=True)
class CircuitSpec:
    nodes: Tuple[int, ...]
    ground: Optional[int]
    branches: Tuple[Branch, ...]
    mutual: Tuple[Mutual, ...] = ()
    external_fluxes: Tuple[Tuple[int, float], ...] = ()
    offset_charges: Tuple[Tuple[int, float], ...] = ()
    unit_system: str = "si"
    labels: Tuple[Tuple[int, str], ...] = ()

    @property
    def flux_map(self) -> Dict[int, float]:
        return dict(self.external_fluxes)

    @property
    def ng_map(self) -> Dict[int, float]:
        return dict(self.offset_charges)

    def replace(self, **kw) -> "CircuitSpec":
        from dataclasses import replace

        return replace(self, **kw)


def _line_col(text: str, idx: int) -> Tuple[int, int]:
    line = text.count("\n", 0, idx) + 1
    col = idx - (text.rfind("\n", 0, idx) + 1) + 1
    return line, col


def _locate(text: str, pattern: str) -> Tuple[Optional[int], Optional[int]]:
    m = re.search(pattern, text)
    if m is None:
        return None, None
    return _line_col(text, m.start())


def _branch_pos(text: str, bid) -> Tuple[Optional[int], Optional[int]]:
    return _locate(text, r'"id"\s*:\s*' + re.escape(str(bid)) + r"(?![\d.])")


def _require(obj: Mapping, key: str, text: str, where: str):
    if key not in obj:
        line, col = _locate(text, re.escape(where)) if where else (None, None)
        raise NetlistSyntaxError(f"missing key {key!r}", line, col)
    return obj[key]


def parse_netlist(text: str) -> CircuitSpec:
    """Parse a JSON netlist document into a :class:`CircuitSpec`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetlistSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise NetlistSyntaxError("top level must be an object", 1, 1)
    unit_system = str(doc.get("unit_system", "si")).lower()
    if unit_system not in ("si", "dimensionless"):
        raise NetlistSyntaxError(f"unknown unit_system {unit_system!r}", *_locate(text, '"unit_system"'))
    dimensionless = unit_system == "dimensionless"

    nodes_raw = _require(doc, "nodes", text, "")
    try:
        nodes = tuple(int(n) for n in nodes_raw)
    except (TypeError, ValueError):
        raise NetlistSyntaxError("nodes must be a list of integers", *_locate(text, '"nodes"')) from None
    if len(set(nodes)) != len(nodes):
        raise NetlistSyntaxError("duplicate node id", *_locate(text, '"nodes"'))
    ground = doc.get("ground")
    if ground is not None:
        ground = int(ground)

    branches: List[Branch] = []
    seen = set()
    for b in _require(doc, "branches", text, ""):
        if not isinstance(b, dict):
            raise NetlistSyntaxError("branch must be an object", *_locate(text, '"branches"'))
        for key in ("id", "from", "to", "kind", "value"):
            if key not in b:
                pos = _branch_pos(text, b["id"]) if "id" in b else _locate(text, '"branches"')
                raise NetlistSyntaxError(f"branch missing key {key!r}", *pos)
        bid = int(b["id"])
        pos = _branch_pos(text, bid)
        if bid in seen:
            # report the second occurrence
            ms = list(re.finditer(r'"id"\s*:\s*' + str(bid) + r"(?![\d.])", text))
            if len(ms) > 1:
                pos = _line_col(text, ms[1].start())
            raise DuplicateBranchId(f"branch id {bid} used twice", *pos)
        seen.add(bid)
        kind = str(b["kind"])
        if kind not in KINDS:
            raise UnknownComponentKind(f"unknown component kind {kind!r} on branch {bid}", *pos)
        try:
            raw = float(b["value"])
        except (TypeError, ValueError):
            raise NetlistSyntaxError(f"non-numeric value on branch {bid}", *pos) from None
        if not np.isfinite(raw):
            raise NonPositiveValue(f"non-finite value on branch {bid}", *pos)
        if kind in ("C", "L", "JJ") and raw <= 0:
            raise NonPositiveValue(f"branch {bid} ({kind}) has value {raw} <= 0", *pos)
        if dimensionless:
            unit = str(b.get("unit", ""))
            value = raw
        else:
            if "unit" not in b:
                raise NetlistSyntaxError(f"branch {bid} missing key 'unit'", *pos)
            unit = str(b["unit"])
            if unit not in _ALLOWED_UNITS[kind]:
                raise NetlistSyntaxError(f"unit {unit!r} not allowed for kind {kind}", *pos)
            value = to_internal(raw, unit, kind)
        branches.append(Branch(bid, int(b["from"]), int(b["to"]), kind, value, raw, unit))

    mutual: List[Mutual] = []
    kinds = {br.id: br.kind for br in branches}
    for m in doc.get("mutual", []):
        for key in ("a", "b", "M"):
            if key not in m:
                raise NetlistSyntaxError(f"mutual missing key {key!r}", *_locate(text, '"mutual"'))
        a, bb = int(m["a"]), int(m["b"])
        if kinds.get(a) != "L" or kinds.get(bb) != "L" or a == bb:
            raise NetlistSyntaxError(
                f"mutual inductance must join two distinct L branches (got {a}, {bb})",
                *_locate(text, '"mutual"'),
            )
        raw = float(m["M"])
        unit = str(m.get("unit", "" if dimensionless else "nH"))
        value = raw if dimensionless else to_internal(raw, unit, "M")
        mutual.append(Mutual(a, bb, value, raw, unit))

    fluxes = []
    for f in doc.get("external_flux", []):
        if "loop" not in f or "phi" not in f:
            raise NetlistSyntaxError("external_flux entries need 'loop' and 'phi'", *_locate(text, '"external_flux"'))
        if not isinstance(f["phi"], (int, float)):
            raise NetlistSyntaxError(
                "external flux must be a constant (time-dependent fluxes are not supported)",
                *_locate(text, '"external_flux"'),
            )
        fluxes.append((int(f["loop"]), float(f["phi"])))
    charges = []
    for q in doc.get("offset_charge", []):
        if "node" not in q or "ng" not in q:
            raise NetlistSyntaxError("offset_charge entries need 'node' and 'ng'", *_locate(text, '"offset_charge"'))
        charges.append((int(q["node"]), float(q["ng"])))
    labels = tuple(sorted((int(k), str(v)) for k, v in doc.get("labels", {}).items()))

    return CircuitSpec(
        nodes=nodes,
        ground=ground,
        branches=tuple(branches),
        mutual=tuple(mutual),
        external_fluxes=tuple(fluxes),
        offset_charges=tuple(charges),
        unit_system=unit_system,
        labels=labels,
    )


def load_netlist(path) -> CircuitSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_netlist(fh.read())


def to_dict(spec: CircuitSpec) -> dict:
    doc: dict = {"nodes": list(spec.nodes), "ground": spec.ground}
    if spec.unit_system != "si":
        doc["unit_system"] = spec.unit_system
    doc["branches"] = []
    for b in spec.branches:
        d = {"id": b.id, "from": b.from_node, "to": b.to_node, "kind": b.kind, "value": b.raw_value}
        if b.unit:
            d["unit"] = b.unit
        doc["branches"].append(d)
    if spec.mutual:
        doc["mutual"] = [
            {"a": m.a, "b": m.b, "M": m.raw_value, **({"unit": m.unit} if m.unit else {})} for m in spec.mutual
        ]
    if spec.external_fluxes:
        doc["external_flux"] = [{"loop": k, "phi": v} for k, v in spec.external_fluxes]
    if spec.offset_charges:
        doc["offset_charge"] = [{"node": k, "ng": v} for k, v in spec.offset_charges]
    if spec.labels:
        doc["labels"] = {str(k): v for k, v in spec.labels}
    return doc


def serialize(spec: CircuitSpec) -> str:
    """Canonical JSON text; ``parse_netlist(serialize(s)) == s``."""
    return json.dumps(to_dict(spec), indent=2)


def with_values(spec: CircuitSpec, **changes) -> CircuitSpec:
    """Return a copy with parameters changed, used by sweeps.

    Keys: ``flux<k>`` for external flux on loop k, ``ng<n>`` for the offset
    charge on node n and ``b<id>`` for a branch raw value.
    """
    fluxes = dict(spec.external_fluxes)
    charges = dict(spec.offset_charges)
    branches = list(spec.branches)
    for key, val in changes.items():
        val = float(val)
        if key.startswith("flux"):
            fluxes[int(key[4:] or 0)] = val
        elif key.startswith("ng"):
            charges[int(key[2:])] = val
        elif key.startswith("b"):
            bid = int(key[1:])
            for i, b in enumerate(branches):
                if b.id == bid:
                    internal = val if spec.unit_system == "dimensionless" else to_internal(val, b.unit, b.kind)
                    branches[i] = Branch(b.id, b.from_node, b.to_node, b.kind, internal, val, b.unit)
                    break
            else:
                raise InputError(f"no branch with id {bid}")
        else:
            raise InputError(f"unknown sweep parameter {key!r}")
    return spec.replace(
        branches=tuple(branches),
        external_fluxes=tuple(sorted(fluxes.items())),
        offset_charges=tuple(sorted(charges.items())),
    )


@dataclass(frozen=True)
class CircuitGraph:
    """Validated circuit with node classification and adjacency."""

    spec: CircuitSpec
    ground: Optional[int]
    classification: Tuple[Tuple[int, str], ...]
    adjacency: Tuple[Tuple[int, Tuple[int, ...]], ...] = field(repr=False)

    @property
    def branches(self) -> Tuple[Branch, ...]:
        return self.spec.branches

    @property
    def nodes(self) -> Tuple[int, ...]:
        return self.spec.nodes

    @property
    def N(self) -> int:
        return len(self.spec.nodes)

    @property
    def B(self) -> int:
        return len(self.spec.branches)

    @property
    def active_nodes(self) -> List[int]:
        """Coordinate nodes: all nodes except ground, sorted."""
        return sorted(n for n in self.spec.nodes if n != self.ground)

    def node_class(self, node: int) -> str:
        return dict(self.classification)[node]

    def branch(self, bid: int) -> Branch:
        for b in self.spec.branches:
            if b.id == bid:
                return b
        raise KeyError(bid)

    def branches_at(self, node: int) -> Tuple[int, ...]:
        return dict(self.adjacency)[node]


def validate(spec: CircuitSpec, auto_ground: bool = False, floating: bool = False) -> CircuitGraph:
    """Check a parsed circuit and classify its nodes.

    Parameters
    ----------
    spec : CircuitSpec
    auto_ground : bool
        Ground the lowest node id when no ground is declared.
    floating : bool
        Allow an ungrounded circuit; every node is then a coordinate.
    """
    nodes = set(spec.nodes)
    if len(nodes) < 2:
        raise InputError("a circuit needs at least two nodes")
    for b in spec.branches:
        if b.from_node == b.to_node:
            raise SelfLoopBranch(f"branch {b.id} starts and ends on node {b.from_node}")
        for n in (b.from_node, b.to_node):
            if n not in nodes:
                raise InputError(f"branch {b.id} references undeclared node {n}")
    for n, _ in spec.offset_charges:
        if n not in nodes:
            raise InputError(f"offset charge on undeclared node {n}")

    # connectivity by union-find
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for b in spec.branches:
        parent[find(b.from_node)] = find(b.to_node)
    if len({find(n) for n in nodes}) > 1:
        raise DisconnectedGraph("circuit graph is not connected")

    ground = spec.ground
    if ground is not None and ground not in nodes:
        raise InputError(f"ground node {ground} is not declared")
    if ground is None and not floating:
        if auto_ground:
            ground = min(nodes)
        else:
            raise NoGroundNode("no ground node declared (use auto_ground or floating)")

    adj: Dict[int, List[int]] = {n: [] for n in sorted(nodes)}
    for b in spec.branches:
        adj[b.from_node].append(b.id)
        adj[b.to_node].append(b.id)
    kinds = {b.id: b.kind for b in spec.branches}
    cls = []
    for n in sorted(nodes):
        if n == ground:
            cls.append((n, "ground"))
            continue
        at = [kinds[i] for i in adj[n]]
        has_c = any(k in CAPACITIVE for k in at)
        has_l = any(k in INDUCTIVE for k in at)
        cls.append((n, "active" if (has_c and has_l) else "passive"))
    return CircuitGraph(
        spec=spec,
        ground=ground,
        classification=tuple(cls),
        adjacency=tuple((n, tuple(v)) for n, v in adj.items()),
    )


def load_graph(path, auto_ground: bool = False, floating: bool = False) -> CircuitGraph:
    return validate(load_netlist(path), auto_ground=auto_ground, floating=floating)


def graph_from_dict(doc: dict, **kw) -> CircuitGraph:
    return validate(parse_netlist(json.dumps(doc)), **kw)
