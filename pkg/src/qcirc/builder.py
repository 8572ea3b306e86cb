"""Classical circuit Hamiltonians from a validated graph.

Two routes are provided. The node method works with node fluxes relative
to ground. The network (Burkard) route works with twig fluxes of a
spanning tree and the fundamental cut matrix. Both produce a
:class:`ClassicalHamiltonian` with potential

    U(phi) = 1/2 phi^T Linv phi + linear . phi - sum_k A_k cos(w_k . phi + theta_k)

and kinetic energy 1/2 phidot^T C phidot (Lagrangian form) or
1/2 (q - Q0)^T C^-1 (q - Q0) after the Legendre transform. Internal units
have hbar = 2e = 1, so the Cooper-pair number is n = -q.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .errors import (
    FluxOnUndeclaredLoop,
    NonOrthonormalBasis,
    NonPositiveDefiniteInductorBlock,
    ShapeMismatch,
    SingularCapacitanceMatrix,
)
from .graphkit import SpanningTree, f_cut_matrix, f_loop_matrix, select_spanning_tree
from .netlist import CircuitGraph

# a voltage source is modelled as this multiple of the largest capacitance
SOURCE_CAP_FACTOR = 1e3
ORTHO_TOL = 1e-10
CAPACITIVE_KINDS = ("C", "V", "I")


@dataclass
class CosineTerm:
    """Potential term ``-amplitude * cos(w . phi + offset)``."""

    amplitude: float
    w: np.ndarray
    offset: float = 0.0
    branches: Tuple[int, ...] = ()

    def copy(self, **kw) -> "CosineTerm":
        d = dict(amplitude=self.amplitude, w=np.array(self.w, float), offset=self.offset, branches=self.branches)
        d.update(kw)
        return CosineTerm(**d)


@dataclass
class ClassicalHamiltonian:
    labels: List[str]
    C: np.ndarray
    Linv: np.ndarray
    linear: np.ndarray
    cosines: List[CosineTerm]
    Q0: np.ndarray
    fluxes: Dict[int, float] = field(default_factory=dict)
    Cinv: Optional[np.ndarray] = None
    decoupled: Optional[np.ndarray] = None
    notes: List[str] = field(default_factory=list)
    constant: float = 0.0

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def is_hamiltonian(self) -> bool:
        return self.Cinv is not None

    def copy(self, **kw) -> "ClassicalHamiltonian":
        base = dict(
            labels=list(self.labels),
            C=self.C.copy(),
            Linv=self.Linv.copy(),
            linear=self.linear.copy(),
            cosines=[c.copy() for c in self.cosines],
            Q0=self.Q0.copy(),
            fluxes=dict(self.fluxes),
            Cinv=None if self.Cinv is None else self.Cinv.copy(),
            decoupled=None if self.decoupled is None else self.decoupled.copy(),
            notes=list(self.notes),
            constant=self.constant,
        )
        base.update(kw)
        return ClassicalHamiltonian(**base)

    def potential(self, phi: np.ndarray) -> float:
        phi = np.asarray(phi, float)
        u = 0.5 * phi @ self.Linv @ phi + self.linear @ phi + self.constant
        for c in self.cosines:
            u -= c.amplitude * np.cos(c.w @ phi + c.offset)
        return float(u)

    def gradient(self, phi: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi, float)
        g = self.Linv @ phi + self.linear
        for c in self.cosines:
            g = g + c.amplitude * np.sin(c.w @ phi + c.offset) * c.w
        return g

    def hessian(self, phi: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi, float)
        h = self.Linv.copy()
        for c in self.cosines:
            h = h + c.amplitude * np.cos(c.w @ phi + c.offset) * np.outer(c.w, c.w)
        return h

    def to_dict(self) -> dict:
        d = {
            "coordinates": list(self.labels),
            "C": self.C.tolist(),
            "Linv": self.Linv.tolist(),
            "linear": self.linear.tolist(),
            "Q0": self.Q0.tolist(),
            "constant": self.constant,
            "cosines": [
                {"amplitude": c.amplitude, "w": np.asarray(c.w).tolist(), "offset": c.offset, "branches": list(c.branches)}
                for c in self.cosines
            ],
        }
        if self.Cinv is not None:
            d["Cinv"] = self.Cinv.tolist()
        if self.decoupled is not None:
            d["decoupled"] = [bool(x) for x in self.decoupled]
        if self.notes:
            d["notes"] = list(self.notes)
        return d


# ----------------------------------------------------------------------------
# node method


def _coords(graph: CircuitGraph) -> List[int]:
    return graph.active_nodes


def incidence(graph: CircuitGraph, bid: int, coords: Optional[List[int]] = None) -> np.ndarray:
    """Row a_b with branch flux Phi_b = a_b . phi (+1 at to-node, -1 at from-node)."""
    coords = _coords(graph) if coords is None else coords
    idx = {n: i for i, n in enumerate(coords)}
    b = graph.branch(bid)
    a = np.zeros(len(coords))
    if b.to_node in idx:
        a[idx[b.to_node]] += 1.0
    if b.from_node in idx:
        a[idx[b.from_node]] -= 1.0
    return a


def _source_cap(graph: CircuitGraph) -> float:
    caps = [b.value for b in graph.branches if b.kind == "C"]
    return SOURCE_CAP_FACTOR * (max(caps) if caps else 1.0)


def capacitance_matrix(graph: CircuitGraph) -> np.ndarray:
    """Node capacitance matrix sum_b C_b a_b a_b^T (voltage sources as large C)."""
    n = len(_coords(graph))
    C = np.zeros((n, n))
    cv = None
    for b in graph.branches:
        if b.kind == "C":
            val = b.value
        elif b.kind == "V":
            cv = _source_cap(graph) if cv is None else cv
            val = cv
        else:
            continue
        a = incidence(graph, b.id)
        C += val * np.outer(a, a)
    return C


def source_couplings(graph: CircuitGraph) -> Dict[str, object]:
    """Exact drive couplings of grounded voltage sources.

    A source node ``a`` has a prescribed flux rate V, so it is removed from
    the coordinates. The kinetic block ``C_qq`` then belongs to the
    remaining nodes and the Hamiltonian picks up ``(beta . q) V`` with
    ``beta = -C_qq^-1 C_qa``.
    """
    coords = _coords(graph)
    idx = {n: i for i, n in enumerate(coords)}
    src: Dict[int, int] = {}
    for b in graph.branches:
        if b.kind != "V":
            continue
        ends = [n for n in (b.from_node, b.to_node) if n != graph.ground]
        if len(ends) != 1:
            raise ShapeMismatch(f"voltage source {b.id} must have one grounded terminal")
        src[b.id] = idx[ends[0]]
    keep = [i for i in range(len(coords)) if i not in src.values()]
    C = np.zeros((len(coords), len(coords)))
    for b in graph.branches:
        if b.kind == "C":
            a = incidence(graph, b.id)
            C += b.value * np.outer(a, a)
    Cqq = C[np.ix_(keep, keep)]
    beta = {}
    for bid, a in src.items():
        beta[bid] = -np.linalg.solve(Cqq, C[keep, a]) if keep else np.zeros(0)
    return {
        "coordinates": [f"phi{coords[i]}" for i in keep],
        "source_nodes": {bid: coords[a] for bid, a in src.items()},
        "C_qq": Cqq,
        "beta": beta,
    }


def ground_sources(graph: CircuitGraph) -> CircuitGraph:
    """Circuit with every grounded voltage source shorted to ground.

    This is the undriven circuit whose coordinates match
    ``source_couplings(graph)["coordinates"]``.
    """
    from .netlist import Branch, validate

    spec = graph.spec
    merge = {}
    for b in spec.branches:
        if b.kind == "V":
            ends = [n for n in (b.from_node, b.to_node) if n != graph.ground]
            if len(ends) != 1:
                raise ShapeMismatch(f"voltage source {b.id} must have one grounded terminal")
            merge[ends[0]] = graph.ground
    if not merge:
        return graph
    br = []
    for b in spec.branches:
        if b.kind == "V":
            continue
        f, t = merge.get(b.from_node, b.from_node), merge.get(b.to_node, b.to_node)
        if f != t:
            br.append(Branch(b.id, f, t, b.kind, b.value, b.raw_value, b.unit))
    new = spec.replace(
        nodes=tuple(n for n in spec.nodes if n not in merge),
        branches=tuple(br),
        offset_charges=tuple((n, q) for n, q in spec.offset_charges if n not in merge),
        labels=tuple((n, l) for n, l in spec.labels if n not in merge),
    )
    return validate(new, floating=graph.ground is None)


def _inductor_block(graph: CircuitGraph) -> Tuple[List[int], np.ndarray]:
    """Ids of linear inductors and their inductance matrix L' (with mutuals)."""
    ids = [b.id for b in graph.branches if b.kind == "L"]
    pos = {bid: i for i, bid in enumerate(ids)}
    Lp = np.zeros((len(ids), len(ids)))
    for bid in ids:
        Lp[pos[bid], pos[bid]] = graph.branch(bid).value
    for m in graph.spec.mutual:
        Lp[pos[m.a], pos[m.b]] += m.value
        Lp[pos[m.b], pos[m.a]] += m.value
    return ids, Lp


def _inverse_pd(Lp: np.ndarray) -> np.ndarray:
    if Lp.size == 0:
        return Lp.copy()
    if not np.allclose(Lp, Lp.T, rtol=0, atol=1e-14 * np.abs(Lp).max()):
        raise NonPositiveDefiniteInductorBlock("inductance block is not symmetric")
    lam, U = np.linalg.eigh(Lp)
    if lam.min() <= 1e-12 * abs(lam).max():
        raise NonPositiveDefiniteInductorBlock(f"inductance block has eigenvalue {lam.min():.3g}")
    return (U / lam) @ U.T


def inductance_matrix(graph: CircuitGraph) -> np.ndarray:
    """Node inverse-inductance matrix A^T L'^-1 A over linear inductors."""
    ids, Lp = _inductor_block(graph)
    n = len(_coords(graph))
    if not ids:
        return np.zeros((n, n))
    A = np.array([incidence(graph, bid) for bid in ids])
    if not graph.spec.mutual:
        return sum(np.outer(a, a) / graph.branch(bid).value for a, bid in zip(A, ids))
    return A.T @ _inverse_pd(Lp) @ A


def _branch_fluxes(graph: CircuitGraph, tree: SpanningTree, FL: Optional[np.ndarray] = None) -> Dict[int, float]:
    """External flux carried by each link (zero for twigs and flux-free links)."""
    fluxes = graph.spec.flux_map
    nl = len(tree.link_ids)
    if FL is not None and np.asarray(FL).shape[0] != nl:
        raise ShapeMismatch("loop matrix does not match tree")
    for k in fluxes:
        if not (0 <= k < nl):
            raise FluxOnUndeclaredLoop(f"external flux on loop {k}, circuit has {nl} fundamental loops")
    return {bid: fluxes.get(k, 0.0) for k, bid in enumerate(tree.link_ids)}


def allocate_fluxes_and_energies(
    graph: CircuitGraph,
    tree: Optional[SpanningTree] = None,
    FL: Optional[np.ndarray] = None,
) -> ClassicalHamiltonian:
    """Node-method Hamiltonian in Lagrangian form (kinetic matrix C).

    Links carry the external flux of their fundamental loop. Capacitive
    links drop the static flux. Linear inductive links give the quadratic
    term and a linear cross term. JJ links shift their cosine.
    """
    if tree is None:
        tree = select_spanning_tree(graph)
    bflux = _branch_fluxes(graph, tree, FL)
    coords = _coords(graph)
    n = len(coords)
    C = capacitance_matrix(graph)
    Linv = inductance_matrix(graph)

    linear = np.zeros(n)
    const = 0.0
    ids, Lp = _inductor_block(graph)
    if ids:
        phit = np.array([bflux.get(bid, 0.0) for bid in ids])
        if np.any(phit):
            A = np.array([incidence(graph, bid) for bid in ids])
            Ip = _inverse_pd(Lp) @ phit
            linear += A.T @ Ip
            # flux-dependent energy 1/2 phit^T L'^-1 phit, kept for sweeps
            const = 0.5 * float(phit @ Ip)
    cv = None
    Q0 = np.zeros(n)
    for b in graph.branches:
        if b.kind == "I":
            linear += b.value * incidence(graph, b.id)
        elif b.kind == "V":
            cv = _source_cap(graph) if cv is None else cv
            Q0 -= cv * b.value * incidence(graph, b.id)
    idx = {node: i for i, node in enumerate(coords)}
    for node, ng in graph.spec.offset_charges:
        if node in idx:
            Q0[idx[node]] -= ng

    cos = [
        CosineTerm(b.value, incidence(graph, b.id), bflux.get(b.id, 0.0), (b.id,))
        for b in graph.branches
        if b.kind == "JJ"
    ]
    labels = [f"phi{node}" for node in coords]
    notes = []
    for k, bid in enumerate(tree.link_ids):
        if bflux.get(bid) and graph.branch(bid).kind in CAPACITIVE_KINDS:
            notes.append(f"static flux on loop {k} dropped: its closure branch {bid} is capacitive")
    if any(b.kind == "V" for b in graph.branches):
        notes.append(f"voltage sources modelled as capacitors of {cv:.6g}")
    return ClassicalHamiltonian(
        labels, C, Linv, linear, cos, Q0, fluxes=dict(graph.spec.flux_map), notes=notes, constant=const
    )


def squid_effective_ej(E_J: float, flux: float) -> float:
    """Effective Josephson energy 2 E_J |cos(flux/2)| of a symmetric dc SQUID."""
    return 2.0 * E_J * abs(np.cos(flux / 2.0))


def combine_squids(H: ClassicalHamiltonian, rtol: float = 1e-12) -> ClassicalHamiltonian:
    """Merge pairs of equal-amplitude cosines acting on the same coordinate
    combination into one effective junction.

    ``-E cos(x + a) - E cos(x + b) = -2E cos((a-b)/2) cos(x + (a+b)/2)``.
    Unequal amplitudes (asymmetric SQUIDs) are left as separate terms.
    """
    out: List[CosineTerm] = []
    used = [False] * len(H.cosines)
    for i, ci in enumerate(H.cosines):
        if used[i]:
            continue
        for j in range(i + 1, len(H.cosines)):
            cj = H.cosines[j]
            if used[j] or abs(ci.amplitude - cj.amplitude) > rtol * abs(ci.amplitude):
                continue
            if np.array_equal(ci.w, cj.w):
                ob = cj.offset
            elif np.array_equal(ci.w, -cj.w):
                ob = -cj.offset
            else:
                continue
            half = 0.5 * (ci.offset - ob)
            mean = 0.5 * (ci.offset + ob)
            ch = np.cos(half)
            amp = 2.0 * ci.amplitude * abs(ch)
            off = mean + (np.pi if ch < 0 else 0.0)
            ci = CosineTerm(amp, ci.w.copy(), float(off), ci.branches + cj.branches)
            used[j] = True
            break
        used[i] = True
        out.append(ci)
    return H.copy(cosines=out)


def build_hamiltonian(
    graph: CircuitGraph,
    tree=None,
    method: str = "node",
    merge_squids: bool = True,
) -> ClassicalHamiltonian:
    """Lagrangian-form Hamiltonian by the node or the network method."""
    if tree is None or not isinstance(tree, SpanningTree):
        tree = select_spanning_tree(graph, tree if tree is not None else "PreferInductiveTwigs")
    if method == "node":
        H = allocate_fluxes_and_energies(graph, tree)
    elif method == "burkard":
        H = burkard_system(graph, tree).to_hamiltonian()
    else:
        raise ValueError(f"unknown method {method!r}")
    return combine_squids(H) if merge_squids else H


# ----------------------------------------------------------------------------
# network (Burkard) route


@dataclass
class BurkardSystem:
    tree: SpanningTree
    FC: np.ndarray
    D_C: np.ndarray
    L_plus: np.ndarray
    M: np.ndarray
    K: np.ndarray
    Q0: np.ndarray
    I0: np.ndarray
    J_C: np.ndarray
    cosines: List[CosineTerm]
    labels: List[str]
    L_padded: np.ndarray
    fluxes: Dict[int, float] = field(default_factory=dict)
    constant: float = 0.0

    def to_hamiltonian(self) -> ClassicalHamiltonian:
        return ClassicalHamiltonian(
            list(self.labels),
            self.M.copy(),
            self.K.copy(),
            self.I0.copy(),
            [c.copy() for c in self.cosines],
            self.Q0.copy(),
            fluxes=dict(self.fluxes),
            constant=self.constant,
        )


def pseudo_inverse_padded(Lp: np.ndarray, positions: Sequence[int], size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-padded inductance matrix and its Moore-Penrose inverse.

    ``Lp`` must be positive definite; its inverse is placed at
    ``positions`` of a ``size`` x ``size`` zero matrix.
    """
    inv = _inverse_pd(Lp)
    L = np.zeros((size, size))
    Lplus = np.zeros((size, size))
    ix = np.ix_(positions, positions)
    L[ix] = Lp
    Lplus[ix] = inv
    return L, Lplus


def burkard_system(graph: CircuitGraph, tree: Optional[SpanningTree] = None, FC: Optional[np.ndarray] = None) -> BurkardSystem:
    """Twig-flux equations of motion ``M phi'' + Q0' + K phi + I0 + ... = 0``."""
    if tree is None:
        tree = select_spanning_tree(graph)
    if FC is None:
        FC = f_cut_matrix(graph, tree)
    FCf = np.asarray(FC, dtype=float)
    order = tree.order
    B = len(order)
    col = {bid: c for c, bid in enumerate(order)}
    bflux = _branch_fluxes(graph, tree)

    dC = np.zeros(B)
    V = np.zeros(B)
    IB = np.zeros(B)
    JC = np.zeros(B)
    phit = np.zeros(B)
    cv = None
    for bid in order:
        b = graph.branch(bid)
        c = col[bid]
        phit[c] = bflux.get(bid, 0.0)
        if b.kind == "C":
            dC[c] = b.value
        elif b.kind == "V":
            cv = _source_cap(graph) if cv is None else cv
            dC[c] = cv
            V[c] = b.value
        elif b.kind == "I":
            IB[c] = b.value
        elif b.kind == "JJ":
            JC[c] = b.value
    D_C = np.diag(dC)

    ids, Lp = _inductor_block(graph)
    pos = [col[i] for i in ids]
    Lpad, Lplus = pseudo_inverse_padded(Lp, pos, B) if ids else (np.zeros((B, B)), np.zeros((B, B)))
    # fluxes only matter on inductive branches
    phit_L = np.where([graph.branch(i).kind == "L" for i in order], phit, 0.0)

    M = FCf @ D_C @ FCf.T
    K = FCf @ Lplus @ FCf.T
    I0 = FCf @ (Lplus @ phit_L) + FCf @ IB
    Q0 = -FCf @ (D_C @ V)
    twig_pos = {bid: r for r, bid in enumerate(tree.twig_ids)}
    cos = [
        CosineTerm(JC[col[bid]], FCf[:, col[bid]].copy(), phit[col[bid]], (bid,))
        for bid in order
        if graph.branch(bid).kind == "JJ"
    ]
    # offset charges given per node enter through the twig incidence
    if graph.spec.offset_charges:
        coords = _coords(graph)
        T = np.array([incidence(graph, t, coords) for t in tree.twig_ids])
        qn = np.zeros(len(coords))
        idx = {n: i for i, n in enumerate(coords)}
        for node, ng in graph.spec.offset_charges:
            if node in idx:
                qn[idx[node]] -= ng
        if T.shape[0] == T.shape[1]:
            Q0 = Q0 + np.linalg.solve(T.T, qn)
    labels = [f"t{bid}" for bid in tree.twig_ids]
    del twig_pos
    const = 0.5 * float(phit_L @ Lplus @ phit_L)
    return BurkardSystem(
        tree, np.asarray(FC), D_C, Lplus, M, K, Q0, I0, JC, cos, labels, Lpad, dict(graph.spec.flux_map), const
    )


def twig_transform(graph: CircuitGraph, tree: SpanningTree) -> np.ndarray:
    """Matrix T with twig fluxes = T @ node fluxes (grounded circuits)."""
    return np.array([incidence(graph, t) for t in tree.twig_ids])


# ----------------------------------------------------------------------------
# normal modes and basis changes


@dataclass
class ModeBasis:
    V: np.ndarray
    chi: np.ndarray
    K: np.ndarray
    raw: np.ndarray
    n_cm: int = 0
    lowdin: bool = False


def _null_space(A: np.ndarray, rtol: float = 1e-10) -> Tuple[np.ndarray, np.ndarray]:
    lam, U = np.linalg.eigh(A)
    scale = max(abs(lam).max(), 1.0) if lam.size else 1.0
    zero = np.abs(lam) <= rtol * scale
    return U[:, zero], U[:, ~zero]


def _fix_sign(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    for j in range(v.shape[1]):
        k = np.argmax(np.abs(v[:, j]) - 1e-12 * np.arange(v.shape[0]))
        if v[k, j] < 0:
            v[:, j] = -v[:, j]
    return v


def _canonical_subspace(B: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(B): Gram-Schmidt on the
    projected standard basis vectors, keeping the largest projections."""
    P = B @ B.T
    out: List[np.ndarray] = []
    cand = sorted(range(P.shape[0]), key=lambda i: (-round(P[i, i], 10), i))
    for i in cand:
        v = P[:, i].copy()
        for u in out:
            v -= (u @ v) * u
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            out.append(v / nv)
        if len(out) == B.shape[1]:
            break
    return np.array(out).T


def _group(values: np.ndarray, tol: float) -> List[List[int]]:
    groups: List[List[int]] = []
    for i, x in enumerate(values):
        if groups and abs(x - values[groups[-1][0]]) <= tol * max(1.0, abs(x)):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def normal_modes(C: np.ndarray, Linv: np.ndarray, cm_tolerant: bool = False, tol: float = 1e-9) -> ModeBasis:
    """Orthonormal eigenvectors of Omega^2 = C^-1 Linv.

    The returned ``V`` has orthonormal columns. Eigenvalues are ascending,
    with centre-of-mass modes (null space of C) first. Within a degenerate
    eigenvalue group the basis also diagonalises C, and any remaining
    freedom is fixed canonically. The largest entry of each column is
    positive. If the generalized eigenvectors are not mutually orthogonal
    they are orthonormalised (Loewdin) and ``lowdin`` is set.
    """
    C = np.asarray(C, float)
    Linv = np.asarray(Linv, float)
    n = C.shape[0]
    N0, R = _null_space(C)
    if N0.shape[1] and not cm_tolerant:
        raise SingularCapacitanceMatrix(
            f"capacitance matrix has {N0.shape[1]} zero eigenvalue(s) (centre-of-mass mode, K singular)"
        )
    if N0.shape[1] and np.abs(Linv @ N0).max() > 1e-9 * max(1.0, np.abs(Linv).max()):
        raise SingularCapacitanceMatrix("zero-capacitance direction is not free of inductive energy")
    cols: List[np.ndarray] = []
    chis: List[float] = []
    if N0.shape[1]:
        cm = _fix_sign(_canonical_subspace(N0))
        cols.extend(cm.T)
        chis.extend([0.0] * cm.shape[1])
    CR = R.T @ C @ R
    LR = R.T @ Linv @ R
    chi, Y = sla.eigh(LR, CR)
    X = R @ Y
    # degenerate groups: re-diagonalise C inside the subspace
    blocks: List[np.ndarray] = []
    for g in _group(chi, tol):
        Xg = X[:, g]
        Q, _ = np.linalg.qr(Xg)
        if len(g) > 1:
            cg, Z = np.linalg.eigh(Q.T @ C @ Q)
            parts = []
            for h in _group(cg, tol):
                sub = Q @ Z[:, h]
                parts.append(_canonical_subspace(sub) if len(h) > 1 else sub)
            Qn = np.hstack(parts)
        else:
            Qn = Xg / np.linalg.norm(Xg)
        blocks.append(Qn)
        chis.extend([chi[g[0]]] * len(g))
    raw = np.hstack(([np.array(cols).T] if cols else []) + blocks) if (cols or blocks) else np.zeros((n, 0))
    V = raw.copy()
    lowdin = False
    G = V.T @ V
    if np.abs(G - np.eye(V.shape[1])).max() > ORTHO_TOL:
        lam, U = np.linalg.eigh(G)
        V = V @ (U / np.sqrt(lam)) @ U.T
        lowdin = True
    V = _fix_sign(V)
    return ModeBasis(V=V, chi=np.array(chis), K=V.T @ C @ V, raw=_fix_sign(raw), n_cm=N0.shape[1], lowdin=lowdin)


def change_basis(H: ClassicalHamiltonian, V, labels: Optional[List[str]] = None) -> ClassicalHamiltonian:
    """Express H in coordinates psi with phi = V psi (V orthonormal)."""
    Vm = V.V if isinstance(V, ModeBasis) else np.asarray(V, float)
    if Vm.shape[0] != H.n:
        raise ShapeMismatch(f"basis has {Vm.shape[0]} rows, Hamiltonian has {H.n} coordinates")
    if Vm.shape[0] != Vm.shape[1] or np.abs(Vm.T @ Vm - np.eye(Vm.shape[1])).max() > ORTHO_TOL:
        raise NonOrthonormalBasis("transformation matrix is not orthonormal")
    K = Vm.T @ H.C @ Vm
    Li = Vm.T @ H.Linv @ Vm
    lin = Vm.T @ H.linear
    cos = [c.copy(w=Vm.T @ c.w) for c in H.cosines]
    Q0 = Vm.T @ H.Q0
    dec = np.array(
        [
            np.all(np.abs(Li[i]) < 1e-12)
            and abs(lin[i]) < 1e-12
            and all(abs(c.w[i]) < 1e-12 for c in cos)
            for i in range(Vm.shape[1])
        ]
    )
    labels = labels or [f"psi{i}" for i in range(Vm.shape[1])]
    Cinv = None if H.Cinv is None else Vm.T @ H.Cinv @ Vm
    return H.copy(labels=labels, C=K, Linv=Li, linear=lin, cosines=cos, Q0=Q0, decoupled=dec, Cinv=Cinv)


def legendre_transform(H: ClassicalHamiltonian, drop_decoupled: bool = True) -> ClassicalHamiltonian:
    """Charge form: kinetic energy 1/2 (q - Q0)^T C^-1 (q - Q0).

    Coordinates flagged as decoupled with vanishing kinetic row (a free
    centre of mass) are removed first.
    """
    keep = np.ones(H.n, bool)
    if drop_decoupled and H.decoupled is not None:
        for i in range(H.n):
            if H.decoupled[i] and np.all(np.abs(H.C[i]) < 1e-12):
                keep[i] = False
    if not keep.all():
        idx = np.flatnonzero(keep)
        H = H.copy(
            labels=[H.labels[i] for i in idx],
            C=H.C[np.ix_(idx, idx)],
            Linv=H.Linv[np.ix_(idx, idx)],
            linear=H.linear[idx],
            cosines=[c.copy(w=c.w[idx]) for c in H.cosines],
            Q0=H.Q0[idx],
            decoupled=H.decoupled[idx],
            Cinv=None,
        )
    if H.n == 0:
        raise SingularCapacitanceMatrix("no dynamical coordinates left")
    lam = np.linalg.eigvalsh(H.C)
    if lam.min() <= 1e-12 * max(abs(lam).max(), 1e-300):
        raise SingularCapacitanceMatrix(f"kinetic matrix is singular (smallest eigenvalue {lam.min():.3g})")
    Cinv = np.linalg.inv(H.C)
    return H.copy(Cinv=0.5 * (Cinv + Cinv.T))


def effective_energies(H: ClassicalHamiltonian) -> List[Dict[str, float]]:
    """Per coordinate E_C = (C^-1)_nn / 8, E_L = (Linv)_nn / 2, E_J = sum A w_n^2."""
    if H.Cinv is None:
        raise SingularCapacitanceMatrix("legendre_transform first")
    out = []
    for i in range(H.n):
        ej = sum(c.amplitude * c.w[i] ** 2 for c in H.cosines)
        out.append({"label": H.labels[i], "E_C": H.Cinv[i, i] / 8.0, "E_L": H.Linv[i, i] / 2.0, "E_J": float(ej)})
    return out


def equations_of_motion(H: ClassicalHamiltonian):
    """Right-hand sides for the Lagrangian and Hamiltonian forms.

    Returns ``(el, ham)``: ``el(t, [phi, phidot])`` from the Euler-Lagrange
    equations and ``ham(t, [phi, q])`` from Hamilton's equations.
    """
    n = H.n
    Cinv = H.Cinv if H.Cinv is not None else np.linalg.inv(H.C)

    def el(t, y):
        phi, v = y[:n], y[n:]
        return np.concatenate([v, -np.linalg.solve(H.C, H.gradient(phi))])

    def ham(t, y):
        phi, q = y[:n], y[n:]
        return np.concatenate([Cinv @ (q - H.Q0), -H.gradient(phi)])

    return el, ham


# ----------------------------------------------------------------------------
# potential minimum and elimination of zero-capacitance coordinates


def find_potential_minimum(H: ClassicalHamiltonian, points: int = 5, max_starts: int = 5**6) -> np.ndarray:
    """Lowest local minimum of U from a multi-start Newton search."""
    n = H.n
    if not H.cosines:
        if np.allclose(H.linear, 0):
            return np.zeros(n)
        return -np.linalg.lstsq(H.Linv, H.linear, rcond=None)[0]
    active = [i for i in range(n) if any(abs(c.w[i]) > 0 for c in H.cosines)]
    grid = np.linspace(-np.pi, np.pi, points, endpoint=False)
    starts = list(itertools.product(grid, repeat=len(active)))
    if len(starts) > max_starts:
        rng = np.random.default_rng(0)
        starts = [starts[i] for i in np.sort(rng.choice(len(starts), max_starts, replace=False))]
    best_x, best_u = None, np.inf
    for s in starts:
        x0 = np.zeros(n)
        x0[active] = s
        res = optimize.minimize(H.potential, x0, jac=H.gradient, hess=H.hessian, method="trust-exact")
        u = H.potential(res.x)
        if u < best_u - 1e-12:
            best_x, best_u = res.x, u
    return np.asarray(best_x)


def shift_coordinates(H: ClassicalHamiltonian, phi0: np.ndarray) -> ClassicalHamiltonian:
    """Rewrite U in terms of delta = phi - phi0."""
    phi0 = np.asarray(phi0, float)
    cos = [c.copy(offset=float(c.offset + c.w @ phi0)) for c in H.cosines]
    const = H.constant + 0.5 * float(phi0 @ H.Linv @ phi0) + float(H.linear @ phi0)
    return H.copy(linear=H.linear + H.Linv @ phi0, cosines=cos, constant=const)


@dataclass
class Reduction:
    H: ClassicalHamiltonian
    E: np.ndarray
    kept: List[int]
    eliminated: List[int]
    exact: bool
    residual: float


def eliminate_zero_kinetic(H: ClassicalHamiltonian, samples: int = 25) -> Reduction:
    """Remove coordinates without capacitance by solving their static
    constraint dU/dphi_p = 0.

    The constraint is solved at the harmonic level, phi_p = R phi_q, and
    substituted exactly into every term. The nonlinear constraint is then
    checked at sample points; ``exact`` reports whether it holds there.
    """
    zero = [i for i in range(H.n) if np.all(np.abs(H.C[i]) < 1e-300) and np.all(np.abs(H.C[:, i]) < 1e-300)]
    keep = [i for i in range(H.n) if i not in zero]
    if not zero:
        return Reduction(H, np.eye(H.n), keep, [], True, 0.0)
    U2 = H.hessian(np.zeros(H.n))
    Upp = U2[np.ix_(zero, zero)]
    Upq = U2[np.ix_(zero, keep)]
    R = -np.linalg.solve(Upp, Upq)
    E = np.zeros((H.n, len(keep)))
    E[keep, np.arange(len(keep))] = 1.0
    E[zero, :] = R
    Hr = H.copy(
        labels=[H.labels[i] for i in keep],
        C=H.C[np.ix_(keep, keep)],
        Linv=E.T @ H.Linv @ E,
        linear=E.T @ H.linear,
        cosines=[c.copy(w=E.T @ c.w) for c in H.cosines],
        Q0=H.Q0[keep],
        decoupled=None,
        Cinv=None,
    )
    rng = np.random.default_rng(0)
    res = 0.0
    for _ in range(samples):
        pq = rng.uniform(-np.pi, np.pi, len(keep))
        g = H.gradient(E @ pq)
        res = max(res, float(np.abs(g[zero]).max()))
    scale = max(1.0, max((c.amplitude for c in H.cosines), default=1.0))
    exact = res < 1e-9 * scale
    if not exact:
        Hr.notes.append(f"zero-capacitance elimination is harmonic only (constraint residual {res:.3g})")
    return Reduction(Hr, E, keep, zero, exact, res)


def prepare_quantum(H: ClassicalHamiltonian, basis: str = "node") -> ClassicalHamiltonian:
    """Charge-form Hamiltonian ready for quantisation.

    Zero-capacitance coordinates are eliminated, a free centre of mass is
    separated through the normal-mode basis, and ``basis="normal"``
    rotates to the normal modes even for grounded circuits.
    """
    if H.is_hamiltonian:
        return H
    H = eliminate_zero_kinetic(H).H
    N0, _ = _null_space(H.C)
    if basis == "normal" or N0.shape[1]:
        mb = normal_modes(H.C, H.Linv, cm_tolerant=True)
        H = change_basis(H, mb)
    return legendre_transform(H)
