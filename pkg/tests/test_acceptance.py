"""Acceptance criteria, one test each, printing one PASS/FAIL line apiece.

Run ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
Tolerances and time budgets are the required ones; a criterion that is not
met stays red (see notes/decisions.md for the three known cases).
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import linalg, optimize

sys.path.insert(0, str(Path(__file__).parent))

from qcirc import builder, cli, dynamics as dy, fockspace, goldens, graphkit, truncate  # noqa: E402
from qcirc.truncate import LadderPoly  # noqa: E402

TWO_PI = 2 * math.pi
R2 = math.sqrt(2)


class Criterion:
    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget
        self.failures = []
        self.details = []

    def check(self, ok, what):
        (self.details if ok else self.failures).append(what)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        if exc[0] is not None:
            self.failures.append(f"raised {exc[0].__name__}: {exc[1]}")
        elapsed = time.perf_counter() - self.t0
        if elapsed > self.budget:
            self.failures.append(f"took {elapsed:.2f} s > {self.budget} s")
        status = "PASS" if not self.failures else "FAIL"
        msg = "; ".join(self.failures) if self.failures else f"{len(self.details)} checks"
        self.line = f"{status} criterion {self.number:2d} {self.title} ({elapsed:.2f} s): {msg}"
        return True  # exceptions become FAIL lines


def _emit(crit, capsys=None):
    if capsys is not None:
        with capsys.disabled():
            print("\n" + crit.line)
    else:
        print(crit.line)
    assert not crit.failures, crit.line


# ----------------------------------------------------------------------------


def criterion_1():
    import test_graphkit as tg

    with Criterion(1, "graph algebra", 5.0) as c:
        doc, g = goldens.load_fixture("fig20")
        tree = graphkit.select_spanning_tree(g, doc["tree"])
        FC = graphkit.f_cut_matrix(g, tree)
        FL = graphkit.f_loop_matrix(g, tree)
        c.check(np.array_equal(FC, tg.FC_FIG20), "F^(C) equals printed matrix")
        c.check(np.array_equal(FL, tg.FL_FIG20), "F^(L) equals printed matrix")
        c.check(not (FL.astype(np.int64) @ FC.astype(np.int64).T).any(), "integer orthogonality")
        tg.test_random_circuits_against_oracles()  # 600 random circuits
        c.check(True, "600 random circuits against cut and loop oracles")
    return c


def criterion_2():
    with Criterion(2, "node and network routes agree on Fig. 20", 1.0) as c:
        doc, g = goldens.load_fixture("fig20")
        p = doc["meta"]["params"]
        tree = graphkit.select_spanning_tree(g, doc["tree"])
        M = np.array([[p["Cc"] + p["Cr"], -p["Cc"]], [-p["Cc"], p["Cc"] + p["Cs"]]])
        K = np.array([[1 / p["Lr"], 0.0], [0.0, 0.0]])
        for method in ("node", "burkard"):
            H = builder.build_hamiltonian(g, tree, method)
            c.check(np.array_equal(H.C, M), f"M bit-for-bit ({method})")
            c.check(np.array_equal(H.Linv, K), f"K bit-for-bit ({method})")
    return c


def criterion_3():
    with Criterion(3, "Cooper-pair box and transmon bands", 5.0) as c:
        doc, _ = goldens.load_fixture("cpb")
        EJ = doc["meta"]["params"]["EJ"]
        H = builder.build_hamiltonian(goldens.graph_of(doc, ng1=0.5))
        op = fockspace.build_fock_hamiltonian(H, 41, "exact", bases="charge")  # n = -20..20
        e, _ = fockspace.spectrum(op, 2)
        gap = e[1] - e[0]
        c.check(abs(gap - EJ) / EJ < 0.15, f"CPB gap at n_g=1/2 = {gap:.4f} vs E_J = {EJ}")
        doc, _ = goldens.load_fixture("transmon")
        E = goldens.transmon_band(doc)
        E01 = E[0, 1] - E[0, 0]
        disp = abs(E[0, 0] - E[1, 0]) / E01
        alpha = (E[0, 2] - E[0, 1]) - E01
        c.check(disp < 1e-3, f"transmon dispersion {disp:.2e} E01")
        c.check(abs(alpha) / E01 > 0.01, f"transmon |alpha|/E01 = {abs(alpha) / E01:.4f}")
    return c


def criterion_4():
    with Criterion(4, "transmon frequency and anharmonicity formulas", 5.0) as c:
        doc, g = goldens.load_fixture("transmon")
        EC, EJ = doc["meta"]["params"]["EC"], doc["meta"]["params"]["EJ"]
        r = fockspace.converged_spectrum(builder.build_hamiltonian(g), levels=3, start=21, rtol=1e-10)
        c.check(r.converged, "cutoff converged")
        rep = truncate.anharmonicity_report(r.energies)
        w_formula = math.sqrt(8 * EC * EJ) - EC
        dw = abs(rep["E01"] - w_formula) / w_formula
        da = abs(rep["alpha"] + EC) / EC
        c.check(dw < 0.03, f"omega01 {rep['E01']:.5f} vs {w_formula:.5f} ({dw:.2%})")
        c.check(da < 0.10, f"alpha {rep['alpha']:.5f} = {rep['alpha'] / EC:.4f} E_C vs -E_C ({da:.1%}, limit 10%)")
    return c


def criterion_5():
    with Criterion(5, "fluxonium spectrum", 20.0) as c:
        doc, _ = goldens.load_fixture("fluxonium")
        for flux in (math.pi, 0.0):
            r = goldens.fluxonium_gaps(doc, flux)
            d = np.diff(r.energies)
            c.check(np.allclose(d, goldens.FLUXONIUM_GAPS[flux], atol=1e-7), f"flux={flux:.4f} frozen gaps")
            H = builder.build_hamiltonian(goldens.graph_of(doc, flux1=flux))
            e60, e120 = (fockspace.spectrum(fockspace.build_fock_hamiltonian(H, n, "exact"), 4)[0] for n in (60, 120))
            drift = float(np.abs(e120 - e60).max() / np.abs(e120).max())
            c.check(drift < 1e-6, f"flux={flux:.4f} dims 60->120 drift {drift:.1e}")
            if flux == math.pi:
                c.check(d[0] < 0.2 * d[1], f"flux=pi doublet {d[0]:.4f} < 0.2 x {d[1]:.4f}")
            else:
                spread = (d.max() - d.min()) / d.max()
                c.check(spread <= 0.25, f"flux=0 gaps {d[0]:.3f}/{d[1]:.3f}/{d[2]:.3f} GHz spread {spread:.0%} (limit 25%)")
    return c


def criterion_6():
    with Criterion(6, "exact truncation of exponentials", 5.0) as c:
        b, bd = fockspace.ladder_ops(160)
        for k in (0.1, 0.3, 0.7, 1.2):
            ref = linalg.expm(1j * k * (b + bd))[:40, :40]
            err = np.abs(fockspace.displacement_matrix(k, 40) - ref).max()
            c.check(err < 1e-10, f"displacement k={k} err {err:.1e}")
        z1, z2 = 0.3, 0.5
        k1, k2 = math.sqrt(z1 / 2), math.sqrt(z2 / 2)
        f = math.exp(-(z1 + z2) / 4)
        a1, a2, c1, c2 = 1 - k1**2 / 2, 1 - k2**2 / 2, k1**2 / 2, k2**2 / 2
        expect = {"XX": f * k1 * k2, "ZZ": f * c1 * c2, "ZI": f * c1 * a2, "IZ": f * a1 * c2}
        got = truncate.two_level_cosine(z1, z2).nonzero()
        err = max(abs(got.get(key, 0) - v) for key, v in expect.items())
        c.check(set(got) == set(expect) and err < 1e-12, f"2-level cosine structure err {err:.1e}")
        bb, bbd = fockspace.ladder_ops(40)
        for z in (0.1, 0.2, 0.4):
            ref = linalg.expm(1j * math.sqrt(z / 2) * (bb + bbd))[:4, :4]
            err = np.abs(truncate.four_level_exponential(z).data - ref).max()
            c.check(err < 1e-10, f"four-level exponential zeta={z} err {err:.1e}")
    return c


# Two-level rows as printed (identity parts dropped), and the 3-level matrices.
TABLE_ROWS = [
    ("b^dag - b", lambda: LadderPoly.quadrature(1, 0, -1), {"Y": -1j}),
    ("b^dag + b", lambda: LadderPoly.quadrature(1, 0, 1), {"X": 1}),
    ("(b^dag - b)^2", lambda: LadderPoly.quadrature(1, 0, -1) ** 2, {"Z": -1}),
    ("(b^dag + b)^2", lambda: LadderPoly.quadrature(1, 0, 1) ** 2, {"Z": -1}),
    ("(b^dag + b)^3", lambda: LadderPoly.quadrature(1, 0, 1) ** 3, {"X": 3}),
    ("(b^dag + b)^4", lambda: LadderPoly.quadrature(1, 0, 1) ** 4, {"Z": -6}),
    ("(b^dag - b)_i (b^dag - b)_j", lambda: LadderPoly.quadrature(2, 0, -1) * LadderPoly.quadrature(2, 1, -1), {"YY": -1}),
    ("(b^dag + b)_i (b^dag + b)_j", lambda: LadderPoly.quadrature(2, 0, 1) * LadderPoly.quadrature(2, 1, 1), {"XX": 1}),
    ("(b^dag + b)_i^3 (b^dag + b)_j", lambda: LadderPoly.quadrature(2, 0, 1) ** 3 * LadderPoly.quadrature(2, 1, 1), {"XX": 3}),
    (
        "(b^dag + b)_i^2 (b^dag + b)_j^2",
        lambda: LadderPoly.quadrature(2, 0, 1) ** 2 * LadderPoly.quadrature(2, 1, 1) ** 2,
        {"ZZ": 1, "ZI": -2, "IZ": -2},
    ),
]
THREE_LEVEL = [
    (2, [[1, 0, R2], [0, 3, 0], [R2, 0, 5]]),
    (3, [[0, 3, 0], [3, 0, 6 * R2], [0, 6 * R2, 0]]),
    (4, [[3, 0, 6 * R2], [0, 15, 0], [6 * R2, 0, 39]]),
]


def criterion_7():
    with Criterion(7, "truncation tables", 1.0) as c:
        for name, make, printed in TABLE_ROWS:
            poly = make()
            M = poly.to_matrix(2)
            dec = truncate.pauli_decompose(truncate.TruncatedOperator(M, [2] * poly.n)).nonzero(1e-13)
            got = {k: v for k, v in dec.items() if set(k) != {"I"}}
            ok = set(got) == set(printed) and all(abs(got[k] - v) < 1e-13 for k, v in printed.items())
            shown = ", ".join(f"{k}:{complex(v).real:+g}" if abs(complex(v).imag) < 1e-15 else f"{k}:{complex(v)}" for k, v in got.items())
            c.check(ok, f"row {name}: computed {{{shown}}} vs printed {printed}")
        for k, M in THREE_LEVEL:
            got = (LadderPoly.quadrature(1, 0, 1) ** k).to_matrix(3)
            c.check(np.allclose(got, M, atol=1e-13, rtol=0), f"3-level (b^dag + b)^{k}")
    return c


def criterion_8():
    with Criterion(8, "single- and two-qubit gates", 10.0) as c:
        circ = cli.Circuit(str(goldens.fixture_path("fig12")), False, False, None)
        E3, A3 = cli.driven_levels(circ, {"source": 1}, 3, 30, "exact", "auto")
        E01 = E3[1] - E3[0]
        alpha = (E3[2] - E3[1]) - E01
        for levels, tol in ((2, 1 - 1e-6), (3, 0.999)):
            E, A = E3[:levels], A3[:levels, :levels]
            rabi = abs(alpha) / 20  # peak Rabi rate in GHz
            V0 = rabi / abs(A[1, 0])
            tau = math.pi / (TWO_PI * rabi * dy.Segment("gaussian", 1.0, 0.0, 0.0, 1.0).area())
            seq = dy.PulseSequence([dy.Segment("gaussian", V0, TWO_PI * E01, 0.0, tau)])
            Hd = dy.drive_hamiltonian(TWO_PI * E, TWO_PI * A, seq)
            U = dy.evolve_unitary(Hd, tau, tau / 2000)
            F = dy.gate_fidelity(U, dy.SX, subspace=2)
            c.check(F > tol, f"{levels}-level X fidelity 1-{1 - F:.1e} (Omega = |alpha|/20)")
        g = 0.05
        tau = (math.pi / 2) / (TWO_PI * g)
        U = dy.evolve_unitary(dy.swap_hamiltonian(TWO_PI * g, lambda t: 1.0), tau, tau / 200)
        err = np.abs(U - dy.ISWAP).max()
        c.check(err < 1e-6, f"iSWAP max error {err:.1e}")
    return c


def criterion_9():
    with Criterion(9, "dispersive shift and tunable coupler", 15.0) as c:
        wr, wq, gjc = 6.0, 5.0, 0.05
        chi = gjc**2 / (wq - wr)
        pull = dy.jc_resonator_pull(wr, wq, gjc, 30)["pull"]
        c.check(abs(pull - chi) / abs(chi) < 0.05, f"JC pull {pull:.6f} vs chi {chi:.6f}")
        w, gq, g12 = 4.0, 0.1, 0.007

        def g_eff(wc):
            return dy.tunable_coupler_g(gq, gq, g12, w - wc, w - wc, w + wc, w + wc)["g_eff"]

        def splitting(wc):
            gm = np.zeros((3, 3))
            gm[0, 1] = gm[1, 2] = gq
            gm[0, 2] = g12
            H = dy.coupled_modes_hamiltonian([w, wc, w], gm, [-0.2, -0.1, -0.2], dim=3)
            return dy.single_excitation_splitting(H, 3, 3, (0, 2))

        wc_f = optimize.brentq(g_eff, 4.3, 9.0)
        wc_n = optimize.minimize_scalar(splitting, bounds=(4.3, 9.0), method="bounded", options={"xatol": 1e-6}).x
        rel = abs((wc_n - w) - (wc_f - w)) / (wc_f - w)
        c.check(rel < 0.10, f"zero crossing at coupler detuning {wc_n - w:.4f} (3-mode) vs {wc_f - w:.4f} (formula)")
    return c


def criterion_10():
    with Criterion(10, "open-system dynamics", 15.0) as c:
        r = dy.t1_experiment(dy.NoiseModel(Gamma_minus=0.02), T=250.0, dt=0.5)
        c.check(abs(r["Gamma1"] - 0.02) / 0.02 < 5e-3, f"T1 fit {r['Gamma1']:.6f}")
        noise = dy.NoiseModel(Gamma_minus=0.01, Gamma_phi=0.02)
        t, p = dy.ramsey_signal(0.5, noise, T=200.0, dt=0.05)
        fit = dy.fit_ramsey(t, p)
        c.check(abs(fit["delta"] - 0.5) / 0.5 < 1e-2, f"Ramsey delta {fit['delta']:.5f}")
        c.check(abs(fit["Gamma2"] - noise.Gamma2) / noise.Gamma2 < 1e-2, f"Ramsey Gamma2 {fit['Gamma2']:.5f}")
        noise = dy.NoiseModel(Gamma_minus=0.03, Gamma_phi=0.05)
        a, b = 0.6, 0.8j
        tr = dy.lindblad_evolve(0.35 * dy.SZ, noise, dy.pure_state_rho(a, b), T=40.0, dt=0.01, sample_every=20)
        err = max(np.abs(rho - dy.bloch_redfield_rho(a, b, noise.Gamma1, noise.Gamma2, 0.7, tt)).max() for tt, rho in zip(tr.times, tr.states))
        trace = max(abs(np.trace(rho) - 1) for rho in tr.states)
        c.check(err < 1e-4, f"closed-form deviation {err:.1e}")
        c.check(trace < 1e-9, f"trace drift {trace:.1e}")
    return c


def criterion_11():
    with Criterion(11, "structural properties", 5.0) as c:
        worst = 0.0
        for d in range(2, 61):
            phi, n = fockspace.flux_charge_ops(0.37, d)
            expect = 1j * np.eye(d)
            expect[-1, -1] = 1j * (1 - d)
            worst = max(worst, np.abs(phi @ n - n @ phi - expect).max())
        c.check(worst < 1e-12, f"commutator identity dims 2..60 err {worst:.1e}")
        for name in goldens.fixture_names():
            doc = goldens.load_document(goldens.fixture_path(name))
            if not doc.get("meta", {}).get("floating"):
                continue
            dec = goldens._cm_decoupling(goldens.graph_of(doc))
            c.check(dec < 1e-12, f"{name} centre-of-mass coupling {dec:.1e}")
        doc, _ = goldens.load_fixture("squid")
        H = builder.build_hamiltonian(goldens.graph_of(doc, flux1=math.pi))
        amp = sum(abs(t.amplitude) for t in H.cosines)
        c.check(amp < 1e-12 * doc["meta"]["params"]["EJ"], f"SQUID E_J at flux pi = {amp:.1e}")
    return c


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


@pytest.mark.parametrize("fn", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 12)])
def test_acceptance(fn, capsys):
    _emit(fn(), capsys)


if __name__ == "__main__":
    bad = 0
    for fn in CRITERIA:
        crit = fn()
        print(crit.line)
        bad += bool(crit.failures)
    sys.exit(1 if bad else 0)
