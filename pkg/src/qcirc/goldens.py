"""Bundled fixture netlists and their golden assertions.

Every fixture is a netlist JSON with an extra ``meta`` block holding the
symbolic parameters used by the golden formulas. ``run_goldens`` rebuilds
each circuit through the pipeline and compares against closed-form
results for that circuit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import builder, fockspace, graphkit, netlist, truncate
from .netlist import CircuitGraph, to_internal

FIXTURE_DIR = Path(__file__).resolve().parent / "fixtures"

# Fluxonium (E_C, E_J, E_L) = (1, 3.43, 0.58) GHz, lowest three gaps in GHz.
# Frozen from the exact-cosine pipeline at dims 120 (flux 0) and 240 (flux pi);
# a real-space grid oracle in the test suite reproduces them.
FLUXONIUM_GAPS = {
    0.0: (4.63492833, 3.02328205, 1.12984490),
    math.pi: (0.39239737, 3.23427140, 2.07193807),
}


@dataclass
class Check:
    fixture: str
    name: str
    ok: bool
    value: float
    expected: float
    tol: float
    known_issue: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def status(self) -> str:
        if self.ok:
            return "PASS"
        return "XFAIL" if self.known_issue else "FAIL"


def fixture_names() -> List[str]:
    return sorted(p.stem for p in FIXTURE_DIR.glob("*.json") if p.stem != "bad")


def fixture_path(name: str) -> Path:
    return FIXTURE_DIR / f"{name}.json"


def load_document(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.loads(fh.read())


def graph_of(doc: dict, **overrides) -> CircuitGraph:
    spec = netlist.parse_netlist(json.dumps(doc))
    if overrides:
        spec = netlist.with_values(spec, **overrides)
    floating = bool(doc.get("meta", {}).get("floating", False))
    return netlist.validate(spec, floating=floating)


def load_fixture(name: str) -> Tuple[dict, CircuitGraph]:
    doc = load_document(fixture_path(name))
    return doc, graph_of(doc)


def tree_of(doc: dict, graph: CircuitGraph) -> graphkit.SpanningTree:
    return graphkit.select_spanning_tree(graph, doc.get("tree") or "PreferInductiveTwigs")


# ----------------------------------------------------------------------------
# helpers


def _close(fx: str, name: str, value, expected, rtol: float = 1e-12, atol: float = 0.0, issue: str = "") -> Check:
    value = np.asarray(value, float)
    expected = np.asarray(expected, float)
    err = float(np.max(np.abs(value - expected))) if value.size else 0.0
    scale = float(np.max(np.abs(expected))) if expected.size else 0.0
    tol = rtol * scale + atol
    ok = value.shape == expected.shape and err <= tol
    return Check(fx, name, bool(ok), err, 0.0, tol, issue)


def _flag(fx: str, name: str, value: float, bound: float, issue: str = "") -> Check:
    """Pass when ``value < bound``."""
    return Check(fx, name, bool(value < bound), float(value), float(bound), 0.0, issue)


def _report(graph: CircuitGraph, tree=None) -> Dict[str, object]:
    H = builder.build_hamiltonian(graph, tree)
    poly, modes = truncate.hamiltonian_to_ladder(H)
    return truncate.coupling_report(poly, modes)


def _cm_decoupling(graph: CircuitGraph) -> float:
    """Largest coupling of the centre-of-mass coordinate to anything else."""
    H = builder.build_hamiltonian(graph)
    mb = builder.normal_modes(H.C, H.Linv, cm_tolerant=True)
    V = mb.V
    K = V.T @ H.C @ V
    Li = V.T @ H.Linv @ V
    worst = 0.0
    for k in range(mb.n_cm):
        others = [j for j in range(V.shape[1]) if j != k]
        worst = max(worst, float(np.abs(K[k, others]).max(initial=0.0)))
        worst = max(worst, float(np.abs(Li[k]).max(initial=0.0)))
        for c in H.cosines:
            worst = max(worst, abs(float(c.w @ V[:, k])))
    return worst


def fluxonium_gaps(doc: dict, flux: float, start: int = 15, max_dim: int = 240) -> fockspace.ConvergedSpectrum:
    g = graph_of(doc, flux1=flux)
    return fockspace.converged_spectrum(builder.build_hamiltonian(g), levels=4, start=start, max_dim=max_dim, rtol=1e-9)


# ----------------------------------------------------------------------------
# goldens per fixture


def _fig1(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    rep = _report(g)
    z1, z2 = rep["modes"][0]["zeta"], rep["modes"][1]["zeta"]
    # GHz value of an L branch is E_L with energy E_L phi^2/2, i.e. L = 1/E_L
    EL12 = 1.0 / (2.0 * (1.0 / p["EL"]))
    zeta1 = math.sqrt(4 * p["EC1"] / (EL12 + p["EJ1"] / 2))
    return [
        _close(fx, "g12 = -sqrt(zeta1 zeta2) E_L12", rep["couplings"][0]["g"], -math.sqrt(z1 * z2) * EL12),
        _close(fx, "zeta1 = sqrt(4 E_C1 / (E_L12 + E_J1/2))", z1, zeta1),
    ]


def _lc(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    f = 1.0 / (2 * math.pi * math.sqrt(p["L_nH"] * 1e-9 * p["C_fF"] * 1e-15)) / 1e9
    H = builder.build_hamiltonian(g)
    mode = fockspace.mode_quantizations(builder.prepare_quantum(H), [2])[0]
    e, _ = fockspace.spectrum(fockspace.build_fock_hamiltonian(H, 12, "exact"), 3)
    return [
        _close(fx, "omega = sqrt(1/LC) (mode)", mode.omega, f),
        _close(fx, "omega = sqrt(1/LC) (spectrum)", e[1] - e[0], f, rtol=1e-10),
    ]


def _fig7a(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    C1, C2, Cg = (to_internal(p[k], "fF", "C") for k in ("C1_fF", "C2_fF", "Cg_fF"))
    Cexp = np.array([[C1 + Cg, -Cg], [-Cg, C2 + Cg]])
    rep = _report(g)
    z1, z2 = rep["modes"][0]["zeta"], rep["modes"][1]["zeta"]
    CS = C1 * C2 + C1 * Cg + C2 * Cg
    return [
        _close(fx, "C = [[C1+Cg, -Cg], [-Cg, C2+Cg]]", builder.capacitance_matrix(g), Cexp),
        _close(fx, "g12 = Cg / (2 C_Sigma sqrt(zeta1 zeta2))", rep["couplings"][0]["g"], Cg / (2 * CS * math.sqrt(z1 * z2)), rtol=1e-10),
    ]


def _fig7b(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    Cexp = np.array([[p["C1"] + p["Cg"], -p["Cg"]], [-p["Cg"], p["Cr"] + p["Cg"]]])
    rep = _report(g)
    return [
        _close(fx, "C = [[C1+Cg, -Cg], [-Cg, Cr+Cg]]", builder.capacitance_matrix(g), Cexp),
        _close(fx, "resonator mode is linear (alpha = 0)", rep["modes"][1]["anharmonic_coeff"], 0.0, atol=1e-15),
    ]


def _fig12(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    sc = builder.source_couplings(g)
    beta = sc["beta"][1][0]
    return [
        _close(fx, "H_ext coefficient C_ext/(C+C_ext)", beta, p["Cext"] / (p["C"] + p["Cext"])),
        _close(fx, "kinetic capacitance C + C_ext", sc["C_qq"][0, 0], p["C"] + p["Cext"]),
    ]


def _fig14a(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    red = builder.eliminate_zero_kinetic(builder.build_hamiltonian(g))
    psi = np.linspace(-2 * math.pi, 2 * math.pi, 41)
    U = np.array([red.H.potential(np.array([x])) for x in psi])
    Uexp = -p["EJ"] * (2 * p["gamma"] * np.cos(psi / 2) + np.cos(psi + p["flux"]))
    return [
        Check(fx, "passive middle node eliminated exactly", bool(red.exact and red.H.n == 1), red.residual, 0.0, 1e-9),
        _close(fx, "U = -E_J[2 gamma cos(psi/2) + cos(psi + flux)]", U, Uexp, atol=1e-12),
    ]


def _fluxonium(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    out = []
    for flux, gaps in FLUXONIUM_GAPS.items():
        r = fluxonium_gaps(doc, flux)
        d = np.diff(r.energies)
        out.append(_close(fx, f"frozen gaps at flux={flux:.4f}", d, gaps, atol=1e-7))
        out.append(Check(fx, f"cutoff converged at flux={flux:.4f}", bool(r.converged), r.drift, 0.0, 1e-9))
        if flux == math.pi:
            out.append(_flag(fx, "flux=pi: doublet splitting < 0.2 x gap to level 2", d[0] / d[1], 0.2))
        else:
            spread = (d.max() - d.min()) / d.max()
            out.append(
                _flag(
                    fx,
                    "flux=0: lowest three gaps within 25% (near-harmonic)",
                    spread,
                    0.25,
                    issue="converged gaps 4.63/3.02/1.13 GHz are not near-harmonic for these parameters",
                )
            )
    return out


def _fig15(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    H = builder.build_hamiltonian(g)
    V = 0.5 * np.array([[-1, 1, -1, 1], [-1, 1, 1, -1], [1, 1, -1, -1], [1, 1, 1, 1]], float)
    K = V @ H.C @ V.T
    L = V @ H.Linv @ V.T
    CJ, C, EL = p["CJ"], p["C"], 2.0 / p["L"]
    return [
        _close(fx, "C -> 2 diag(C_J, C_J + C, C, 0)", K, np.diag([2 * CJ, 2 * (CJ + C), 2 * C, 0.0]), atol=1e-15),
        _close(fx, "E_L/2 (varphi^2 + zeta^2), E_L = 2/L", L, np.diag([EL, 0.0, EL, 0.0]), atol=1e-15),
        _flag(fx, "centre-of-mass decoupling", _cm_decoupling(g), 1e-12),
    ]


def _fig17(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    C1, Cg, C2, C1g, C2g, C12 = (p[k] for k in ("C1", "Cg", "C2", "C1g", "C2g", "C12"))
    Cexp = np.array(
        [[C1 + C1g + C12, -C1g, -C12], [-C1g, Cg + C1g + C2g, -C2g], [-C12, -C2g, C2 + C2g + C12]]
    )
    H = builder.prepare_quantum(builder.build_hamiltonian(g))
    rep = _report(g)
    zs = [m["zeta"] for m in rep["modes"]]
    gq = {(c["i"], c["j"]): c["g"] for c in rep["couplings"]}
    g1g = H.Cinv[0, 1] / (2 * math.sqrt(zs[0] * zs[1]))
    return [
        _close(fx, "three-node capacitance matrix", builder.capacitance_matrix(g), Cexp, rtol=1e-15),
        _close(fx, "g_1g = (C^-1)_1g / (2 sqrt(zeta_1 zeta_g))", gq[("phi1", "phi2")], g1g, rtol=1e-10),
    ]


def _fig18(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    C, Cg, Cc = p["C"], p["Cg"], p["Cc"]
    Cexp = np.array(
        [
            [C + Cg, -C, 0, 0],
            [-C, C + Cg + Cc, -Cc, 0],
            [0, -Cc, C + Cg + Cc, -C],
            [0, 0, -C, C + Cg],
        ]
    )
    s = 1 / math.sqrt(2)
    V = np.array([[0.5, 0.5, 0.5, 0.5], [s, -s, 0, 0], [0, 0, -s, s], [0.5, 0.5, -0.5, -0.5]])
    r2 = math.sqrt(2)
    Kexp = 0.5 * np.array(
        [
            [2 * Cg, 0, 0, 0],
            [0, 4 * C + 2 * Cg + Cc, -Cc, -r2 * Cc],
            [0, -Cc, 4 * C + 2 * Cg + Cc, r2 * Cc],
            [0, -r2 * Cc, r2 * Cc, 2 * Cg + 2 * Cc],
        ]
    )
    Cn = builder.capacitance_matrix(g)
    K = V @ Cn @ V.T
    Kinv = np.linalg.inv(K)
    return [
        _close(fx, "four-node capacitance matrix", Cn, Cexp, rtol=1e-15),
        _close(fx, "centre-of-mass basis K", K, Kexp, rtol=1e-12),
        _close(fx, "E_C(1) = E_C(2)", Kinv[1, 1] / 8, Kinv[2, 2] / 8, rtol=1e-12),
    ]


def _fig19(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    C, Cd, EJ, Ed = p["C"], p["Cd"], p["EJ"], p["Ed"]
    Cexp = np.array(
        [[2 * C + Cd, -C, -Cd, -C], [-C, 2 * C, -C, 0], [-Cd, -C, 2 * C + Cd, -C], [-C, 0, -C, 2 * C]]
    )
    Cn = builder.capacitance_matrix(g)
    lam = np.sort(np.linalg.eigvalsh(Cn))
    s = 1 / math.sqrt(2)
    # rows: v_CM, v_1, v_2, v_3
    V = np.array([[0.5] * 4, [s, 0, -s, 0], [0, s, 0, -s], [0.5, -0.5, 0.5, -0.5]])
    H = builder.build_hamiltonian(g, merge_squids=False)
    rng = np.random.default_rng(7)
    err = 0.0
    for _ in range(50):
        psi = rng.uniform(-math.pi, math.pi, 4)
        phi = V.T @ psi
        u = -Ed * math.cos(math.sqrt(2) * psi[1]) - 4 * EJ * math.cos(psi[1] * s) * math.cos(psi[2] * s) * math.cos(psi[3])
        err = max(err, abs(H.potential(phi) - u))
    return [
        _close(fx, "square capacitance matrix", Cn, Cexp, rtol=1e-15),
        _close(fx, "K eigenvalues 0, 2C, 4C, 2(C + C_d)", lam, np.sort([0.0, 2 * C, 4 * C, 2 * (C + Cd)]), atol=1e-12),
        Check(fx, "three-body potential in the eigenmode basis", bool(err < 1e-11), err, 0.0, 1e-11),
        _flag(fx, "centre-of-mass decoupling", _cm_decoupling(g), 1e-12),
    ]


FC_EXAMPLE = np.array([[1, 0, 1, -1, 0], [0, 1, 0, 1, 1]])
FL_EXAMPLE = np.array([[-1, 0, 1, 0, 0], [1, -1, 0, 1, 0], [0, -1, 0, 0, 1]])


def _fig20(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    tree = tree_of(doc, g)
    FC = graphkit.f_cut_matrix(g, tree)
    FL = graphkit.f_loop_matrix(g, tree)
    Hn = builder.build_hamiltonian(g, tree, "node")
    Hb = builder.build_hamiltonian(g, tree, "burkard")
    M = np.array([[p["Cc"] + p["Cr"], -p["Cc"]], [-p["Cc"], p["Cc"] + p["Cs"]]])
    K = np.array([[1 / p["Lr"], 0.0], [0.0, 0.0]])
    exact = lambda a, b: bool(np.shape(a) == np.shape(b) and np.array_equal(a, b))  # noqa: E731
    return [
        Check(fx, "F^(C) equals the printed matrix", exact(FC, FC_EXAMPLE), 0.0, 0.0, 0.0),
        Check(fx, "F^(L) equals the printed matrix", exact(FL, FL_EXAMPLE), 0.0, 0.0, 0.0),
        Check(fx, "F^(L) F^(C)^T = 0 (integers)", graphkit.check_orthogonality(FL, FC), 0.0, 0.0, 0.0),
        Check(fx, "M identical from node and network routes", exact(Hn.C, M) and exact(Hb.C, M), 0.0, 0.0, 0.0),
        Check(fx, "K identical from node and network routes", exact(Hn.Linv, K) and exact(Hb.Linv, K), 0.0, 0.0, 0.0),
    ]


def _fig21(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    sc = builder.source_couplings(g)
    EC = 1 / (8 * sc["C_qq"][0, 0])
    return [_close(fx, "E_C = e^2 / 2(C_g + C_J)", EC, 1 / (8 * (p["Cg"] + p["CJ"])), rtol=1e-15)]


def _fig22(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    sc = builder.source_couplings(g)
    EC = 1 / (8 * sc["C_qq"][0, 0])
    return [_close(fx, "E_C = e^2 / 2(C_J + C_B + C_g)", EC, 1 / (8 * (p["CJ"] + p["CB"] + p["Cg"])), rtol=1e-15)]


def _cpb(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    H = builder.build_hamiltonian(graph_of(doc, ng1=0.5))
    e, _ = fockspace.spectrum(fockspace.build_fock_hamiltonian(H, 41, "exact", bases="auto"), 2)
    return [_flag(fx, "gap at n_g = 1/2 within 15% of E_J", abs(e[1] - e[0] - p["EJ"]) / p["EJ"], 0.15)]


def transmon_band(doc: dict, ngs: Sequence[float] = (0.0, 0.5)) -> np.ndarray:
    rows = []
    for ng in ngs:
        H = builder.build_hamiltonian(graph_of(doc, ng1=ng))
        e, _ = fockspace.spectrum(fockspace.build_fock_hamiltonian(H, 41, "exact", bases="auto"), 3)
        rows.append(e)
    return np.array(rows)


def _transmon(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    E = transmon_band(doc)
    E01 = E[0, 1] - E[0, 0]
    alpha = (E[0, 2] - E[0, 1]) - E01
    return [
        _flag(fx, "lowest-band dispersion < 1e-3 E01", abs(E[0, 0] - E[1, 0]) / E01, 1e-3),
        Check(fx, "|alpha|/E01 > 1%", bool(abs(alpha) / E01 > 0.01), abs(alpha) / E01, 0.01, 0.0),
    ]


def _squid(fx: str, doc: dict, g: CircuitGraph) -> List[Check]:
    p = doc["meta"]["params"]
    out = []
    for flux, expected in ((0.0, 2 * p["EJ"]), (math.pi, 0.0)):
        H = builder.build_hamiltonian(graph_of(doc, flux1=flux))
        amp = sum(c.amplitude for c in H.cosines)
        out.append(_close(fx, f"effective E_J at flux={flux:.4f}", amp, expected, atol=1e-12 * p["EJ"]))
    return out


GOLDENS: Dict[str, Callable[[str, dict, CircuitGraph], List[Check]]] = {
    "fig1": _fig1,
    "fig4": _lc,
    "lc": _lc,
    "fig7a": _fig7a,
    "fig7b": _fig7b,
    "fig12": _fig12,
    "fig14a": _fig14a,
    "fig14b": _fluxonium,
    "fluxonium": _fluxonium,
    "fig15": _fig15,
    "fig17": _fig17,
    "fig18": _fig18,
    "fig19": _fig19,
    "fig20": _fig20,
    "fig21": _fig21,
    "fig22": _fig22,
    "cpb": _cpb,
    "transmon": _transmon,
    "squid": _squid,
}


def run_goldens(names: Optional[Sequence[str]] = None) -> List[Check]:
    names = list(names) if names else sorted(GOLDENS)
    out: List[Check] = []
    for name in names:
        doc, g = load_fixture(name)
        out.extend(GOLDENS[name](name, doc, g))
    return out
