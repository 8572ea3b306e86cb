import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from qcirc import graphkit
from qcirc.errors import InvalidUserTree

from conftest import graph_of, make_netlist

FC_FIG20 = np.array([[1, 0, 1, -1, 0], [0, 1, 0, 1, 1]])
FL_FIG20 = np.array([[-1, 0, 1, 0, 0], [1, -1, 0, 1, 0], [0, -1, 0, 0, 1]])


def test_fig20_user_tree_matrices(fixture):
    doc, g = fixture("fig20")
    tree = graphkit.select_spanning_tree(g, doc["tree"])
    assert tree.twig_ids == (1, 2) and tree.policy_tag == "UserSpecified"
    FC = graphkit.f_cut_matrix(g, tree)
    FL = graphkit.f_loop_matrix(g, tree)
    assert np.array_equal(FC, FC_FIG20)
    assert np.array_equal(FL, FL_FIG20)
    assert graphkit.check_orthogonality(FL, FC)
    assert not (FL.astype(int) @ FC.astype(int).T).any()


def test_corrupted_loop_matrix_detected():
    FL = FL_FIG20.copy()
    FL[1, 3] *= -1
    assert not graphkit.check_orthogonality(FL, FC_FIG20)


def test_fig1_default_tree_holds_both_junctions(fixture):
    doc, g = fixture("fig1")
    tree = graphkit.select_spanning_tree(g)
    kinds = {b.id: b.kind for b in g.branches}
    assert sorted(kinds[i] for i in tree.twig_ids) == ["JJ", "JJ"]
    # the only loop through the inductor closes on the inductor
    assert any(kinds[i] == "L" for i in tree.link_ids)


def test_single_branch_tree():
    g = graph_of(make_netlist([(1, 0, 1, "C", 1.0)]))
    t = graphkit.select_spanning_tree(g)
    assert t.twig_ids == (1,) and t.link_ids == ()
    assert graphkit.f_loop_matrix(g, t).shape[0] == 0


def test_star_graph_identity_block():
    g = graph_of(make_netlist([(1, 0, 1, "C", 1.0), (2, 0, 2, "C", 1.0), (3, 0, 3, "C", 1.0)]))
    t = graphkit.select_spanning_tree(g)
    assert np.array_equal(graphkit.f_cut_matrix(g, t), np.eye(3))


def test_ring_of_three():
    g = graph_of(make_netlist([(1, 0, 1, "JJ", 1.0), (2, 1, 2, "JJ", 1.0), (3, 2, 0, "C", 1.0)]))
    t = graphkit.select_spanning_tree(g)
    FL = graphkit.f_loop_matrix(g, t)
    assert FL.shape == (1, 3)
    # going around the ring 0 -> 1 -> 2 -> 0 follows every orientation
    assert np.array_equal(FL, [[1, 1, 1]])


def test_invalid_user_trees(fixture):
    _, g = fixture("fig20")
    for bad in ([1, 3], [1], [1, 2, 9], [1, 1]):
        with pytest.raises(InvalidUserTree):
            graphkit.select_spanning_tree(g, bad)


# ----------------------------------------------------------------------------
# random circuits against independent oracles


@st.composite
def circuits(draw, max_nodes=8, max_extra=8):
    n = draw(st.integers(2, max_nodes))
    edges = []
    for v in range(1, n):
        u = draw(st.integers(0, v - 1))
        edges.append((u, v) if draw(st.booleans()) else (v, u))
    for _ in range(draw(st.integers(0, max_extra))):
        u = draw(st.integers(0, n - 1))
        v = draw(st.integers(0, n - 1).filter(lambda x: x != u))
        edges.append((u, v))
    perm = draw(st.permutations(range(len(edges))))
    kinds = ["C", "L", "JJ", "V", "I"]
    br = [(i + 1, *edges[p], kinds[draw(st.integers(0, 4))], 1.0) for i, p in enumerate(perm)]
    return graph_of(make_netlist(br, nodes=list(range(n))))


def _components(n_nodes, edges):
    parent = list(range(n_nodes))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    for u, v in edges:
        parent[find(u)] = find(v)
    return [find(x) for x in range(n_nodes)]


def cut_oracle(g, tree):
    """f-cut rows from the node partition obtained by deleting each twig."""
    by_id = {b.id: b for b in g.branches}
    rows = []
    for t in tree.twig_ids:
        rest = [(by_id[i].from_node, by_id[i].to_node) for i in tree.twig_ids if i != t]
        comp = _components(g.N, rest)
        side = comp[by_id[t].from_node]
        row = []
        for bid in tree.order:
            b = by_id[bid]
            a, c = comp[b.from_node] == side, comp[b.to_node] == side
            row.append(0 if a == c else (1 if a else -1))
        rows.append(row)
    return np.array(rows)


def loop_is_signed_cycle(g, tree, row):
    """Nonzero branches form one simple cycle and the signed incidences cancel."""
    by_id = {b.id: b for b in g.branches}
    inc = np.zeros(g.N)
    deg = np.zeros(g.N, int)
    used = []
    for bid, s in zip(tree.order, row):
        if s == 0:
            continue
        b = by_id[bid]
        inc[b.to_node] += s
        inc[b.from_node] -= s
        deg[b.to_node] += 1
        deg[b.from_node] += 1
        used.append((b.from_node, b.to_node))
    if np.any(inc) or np.any((deg != 0) & (deg != 2)):
        return False
    nodes = sorted({x for e in used for x in e})
    comp = _components(g.N, used)
    return len({comp[x] for x in nodes}) == 1


@settings(max_examples=600, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(circuits())
def test_random_circuits_against_oracles(g):
    tree = graphkit.select_spanning_tree(g)
    FC = graphkit.f_cut_matrix(g, tree)
    FL = graphkit.f_loop_matrix(g, tree)
    assert len(tree.twig_ids) == g.N - 1
    assert np.array_equal(FC, cut_oracle(g, tree))
    for k, row in enumerate(FL):
        assert loop_is_signed_cycle(g, tree, row)
        # link k closes loop k with coefficient +1
        assert row[len(tree.twig_ids) + k] == 1
    assert graphkit.check_orthogonality(FL, FC)
    assert not (FL.astype(np.int64) @ FC.astype(np.int64).T).any()


def test_oracle_on_eight_node_fourteen_branch_circuit():
    rng = np.random.default_rng(7)
    edges = [(int(rng.integers(0, v)), v) for v in range(1, 8)]
    while len(edges) < 14:
        u, v = rng.choice(8, 2, replace=False)
        edges.append((int(u), int(v)))
    g = graph_of(make_netlist([(i + 1, u, v, "C", 1.0) for i, (u, v) in enumerate(edges)], nodes=list(range(8))))
    tree = graphkit.select_spanning_tree(g)
    assert np.array_equal(graphkit.f_cut_matrix(g, tree), cut_oracle(g, tree))
    assert all(loop_is_signed_cycle(g, tree, r) for r in graphkit.f_loop_matrix(g, tree))
