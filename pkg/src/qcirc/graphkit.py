"""Spanning trees and fundamental cut/loop matrices.

Columns of the matrices follow the global branch order ``twigs + links``,
rows follow twig order (cut matrix) or link order (loop matrix). Links are
ordered by ascending branch id, so external-flux loop ``k`` is the loop
closed by the k-th link in ascending id order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidUserTree, ShapeMismatch
from .netlist import Branch, CircuitGraph

_PRIORITY = {"JJ": 0, "L": 1, "V": 2, "I": 2, "C": 3}


@dataclass(frozen=True)
class SpanningTree:
    twig_ids: Tuple[int, ...]
    link_ids: Tuple[int, ...]
    policy_tag: str

    @property
    def order(self) -> Tuple[int, ...]:
        """Global branch order used for matrix columns."""
        return self.twig_ids + self.link_ids

    def loop_of_link(self, bid: int) -> int:
        return self.link_ids.index(bid)


class _DSU:
    def __init__(self, items):
        self.p = {x: x for x in items}

    def find(self, x):
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.p[ra] = rb
        return True


def select_spanning_tree(
    graph: CircuitGraph, policy: Union[str, Sequence[int]] = "PreferInductiveTwigs"
) -> SpanningTree:
    """Choose a spanning tree.

    Parameters
    ----------
    graph : CircuitGraph
    policy : "PreferInductiveTwigs" or a sequence of branch ids
        The default is greedy in the order JJ > L > V/I > C with ties
        broken by ascending id. A sequence is taken as the user's twigs,
        in the given order.
    """
    by_id = {b.id: b for b in graph.branches}
    dsu = _DSU(graph.nodes)
    if isinstance(policy, str):
        if policy != "PreferInductiveTwigs":
            raise InvalidUserTree(f"unknown tree policy {policy!r}")
        twigs: List[int] = []
        for b in sorted(graph.branches, key=lambda b: (_PRIORITY[b.kind], b.id)):
            if dsu.union(b.from_node, b.to_node):
                twigs.append(b.id)
        tag = "PreferInductiveTwigs"
    else:
        twigs = [int(i) for i in policy]
        if len(set(twigs)) != len(twigs):
            raise InvalidUserTree("repeated branch id in user tree")
        for i in twigs:
            if i not in by_id:
                raise InvalidUserTree(f"unknown branch id {i} in user tree")
            if not dsu.union(by_id[i].from_node, by_id[i].to_node):
                raise InvalidUserTree(f"user tree contains a loop (branch {i})")
        if len(twigs) != graph.N - 1:
            raise InvalidUserTree(f"user tree has {len(twigs)} twigs, need {graph.N - 1}")
        tag = "UserSpecified"
    tw = set(twigs)
    links = sorted(b.id for b in graph.branches if b.id not in tw)
    return SpanningTree(tuple(twigs), tuple(links), tag)


def _tree_adjacency(graph: CircuitGraph, tree: SpanningTree) -> Dict[int, List[Branch]]:
    adj: Dict[int, List[Branch]] = {n: [] for n in graph.nodes}
    for bid in tree.twig_ids:
        b = graph.branch(bid)
        adj[b.from_node].append(b)
        adj[b.to_node].append(b)
    return adj


def _component(adj, start: int, skip: Optional[int] = None) -> set:
    seen = {start}
    stack = [start]
    while stack:
        n = stack.pop()
        for b in adj[n]:
            if b.id == skip:
                continue
            m = b.to_node if b.from_node == n else b.from_node
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return seen


def _tree_path(adj, start: int, goal: int) -> List[Tuple[Branch, int]]:
    """Twigs on the tree path start -> goal with traversal sign."""
    prev: Dict[int, Tuple[int, Branch]] = {start: (start, None)}
    stack = [start]
    while stack:
        n = stack.pop()
        if n == goal:
            break
        for b in adj[n]:
            m = b.to_node if b.from_node == n else b.from_node
            if m not in prev:
                prev[m] = (n, b)
                stack.append(m)
    path = []
    n = goal
    while n != start:
        p, b = prev[n]
        path.append((b, +1 if (b.from_node == p and b.to_node == n) else -1))
        n = p
    return path[::-1]


def f_cut_matrix(graph: CircuitGraph, tree: SpanningTree) -> np.ndarray:
    """Fundamental cut matrix, shape (N-1, B), entries in {-1, 0, 1}.

    The cut of twig t separates the tree into the side A holding t's
    from-node and the side B holding its to-node. A branch crossing A -> B
    has the twig's orientation (+1), B -> A gets -1.
    """
    adj = _tree_adjacency(graph, tree)
    order = tree.order
    FC = np.zeros((len(tree.twig_ids), len(order)), dtype=np.int8)
    for r, tid in enumerate(tree.twig_ids):
        t = graph.branch(tid)
        side_a = _component(adj, t.from_node, skip=tid)
        for c, bid in enumerate(order):
            b = graph.branch(bid)
            fa, ta = b.from_node in side_a, b.to_node in side_a
            if fa and not ta:
                FC[r, c] = 1
            elif ta and not fa:
                FC[r, c] = -1
    return FC


def f_loop_matrix(graph: CircuitGraph, tree: SpanningTree) -> np.ndarray:
    """Fundamental loop matrix, shape (B-N+1, B), entries in {-1, 0, 1}.

    The loop of link l runs along l and returns through the tree. Branches
    traversed along their arrow get +1, against it -1.
    """
    adj = _tree_adjacency(graph, tree)
    order = tree.order
    col = {bid: c for c, bid in enumerate(order)}
    FL = np.zeros((len(tree.link_ids), len(order)), dtype=np.int8)
    for r, lid in enumerate(tree.link_ids):
        link = graph.branch(lid)
        FL[r, col[lid]] = 1
        for b, s in _tree_path(adj, link.to_node, link.from_node):
            FL[r, col[b.id]] = s
    return FL


def check_orthogonality(FL: np.ndarray, FC: np.ndarray) -> bool:
    """True iff FL @ FC.T vanishes in exact integer arithmetic."""
    FL = np.asarray(FL)
    FC = np.asarray(FC)
    if FL.ndim != 2 or FC.ndim != 2 or FL.shape[1] != FC.shape[1]:
        raise ShapeMismatch(f"incompatible shapes {FL.shape} and {FC.shape}")
    prod = FL.astype(np.int64) @ FC.astype(np.int64).T
    return bool(np.all(prod == 0))


def block_F(FC: np.ndarray, n_twigs: int) -> np.ndarray:
    """The F block of FC = (1 | F)."""
    return np.asarray(FC)[:, n_twigs:]


def matrices_to_dict(graph: CircuitGraph, tree: SpanningTree) -> dict:
    FC = f_cut_matrix(graph, tree)
    FL = f_loop_matrix(graph, tree)
    return {
        "twigs": list(tree.twig_ids),
        "links": list(tree.link_ids),
        "columns": list(tree.order),
        "fcut": FC.astype(int).tolist(),
        "floop": FL.astype(int).tolist(),
        "orthogonal": check_orthogonality(FL, FC),
    }
