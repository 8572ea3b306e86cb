import json

import pytest

from qcirc import goldens, netlist


def make_netlist(branches, nodes=None, ground=0, **extra):
    """Dimensionless netlist dict from (id, from, to, kind, value) tuples."""
    if nodes is None:
        nodes = sorted({n for b in branches for n in b[1:3]})
    doc = {
        "unit_system": "dimensionless",
        "nodes": list(nodes),
        "ground": ground,
        "branches": [{"id": i, "from": f, "to": t, "kind": k, "value": v} for i, f, t, k, v in branches],
    }
    doc.update(extra)
    return doc


def graph_of(doc, **kw):
    return netlist.validate(netlist.parse_netlist(json.dumps(doc)), **kw)


@pytest.fixture
def fixture():
    """Loader for bundled fixtures: ``fixture("fig20") -> (doc, graph)``."""
    return goldens.load_fixture
