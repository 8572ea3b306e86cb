import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from qcirc import builder, truncate
from qcirc.errors import DimensionExceeded, NonCommutingLadderH0, NonQubitDimensions, ShapeMismatch
from qcirc.fockspace import ladder_ops
from qcirc.truncate import LadderPoly, truncate_levels

from conftest import graph_of, make_netlist

R2 = math.sqrt(2)


def _projected(expr, n_modes, d, pad=12):
    """Oracle: build the operator with padded dense ladder matrices and project."""
    b, bd = ladder_ops(pad)
    eye = np.eye(pad)

    def emb(op, i):
        ops = [eye] * n_modes
        ops[i] = op
        out = ops[0]
        for o in ops[1:]:
            out = np.kron(out, o)
        return out

    M = expr([emb(b, i) for i in range(n_modes)], [emb(bd, i) for i in range(n_modes)])
    idx = [np.ravel_multi_index(t, [pad] * n_modes) for t in np.ndindex(*([d] * n_modes))]
    return M[np.ix_(idx, idx)]


def test_three_level_matrices():
    x = LadderPoly.quadrature(1, 0, +1)
    assert np.allclose((x**2).to_matrix(3), [[1, 0, R2], [0, 3, 0], [R2, 0, 5]], atol=1e-14)
    assert np.allclose((x**3).to_matrix(3), [[0, 3, 0], [3, 0, 6 * R2], [0, 6 * R2, 0]], atol=1e-14)
    assert np.allclose((x**4).to_matrix(3), [[3, 0, 6 * R2], [0, 15, 0], [6 * R2, 0, 39]], atol=1e-13)


@pytest.mark.parametrize("k", range(1, 7))
@pytest.mark.parametrize("sign", [+1, -1])
@pytest.mark.parametrize("d", [2, 3, 4])
def test_normal_ordered_truncation_is_projection(k, sign, d):
    poly = LadderPoly.quadrature(1, 0, sign) ** k
    ref = _projected(lambda b, bd: np.linalg.matrix_power(bd[0] + sign * b[0], k), 1, d)
    assert np.allclose(poly.to_matrix(d), ref, atol=1e-10)


def _pauli(poly, d=2):
    M = poly.to_matrix(d)
    n = poly.n
    return truncate.pauli_decompose(truncate.TruncatedOperator(M, [2] * n)).nonzero()


def _drop_identity(coeffs):
    return {k: v for k, v in coeffs.items() if set(k) != {"I"}}


# Two-level Pauli forms of ladder products, identity part dropped.
# The (b^dag - b)^2 entry is +Z: the projection of -(2 b^dag b + 1) is
# diag(-1, -3) = -2 I + Z.
TWO_LEVEL_ROWS = [
    ("b^dag - b", lambda: LadderPoly.quadrature(1, 0, -1), {"Y": -1j}),
    ("b^dag + b", lambda: LadderPoly.quadrature(1, 0, +1), {"X": 1}),
    ("(b^dag - b)^2", lambda: LadderPoly.quadrature(1, 0, -1) ** 2, {"Z": 1}),
    ("(b^dag + b)^2", lambda: LadderPoly.quadrature(1, 0, +1) ** 2, {"Z": -1}),
    ("(b^dag + b)^3", lambda: LadderPoly.quadrature(1, 0, +1) ** 3, {"X": 3}),
    ("(b^dag + b)^4", lambda: LadderPoly.quadrature(1, 0, +1) ** 4, {"Z": -6}),
    ("(b^dag - b)_i (b^dag - b)_j", lambda: LadderPoly.quadrature(2, 0, -1) * LadderPoly.quadrature(2, 1, -1), {"YY": -1}),
    ("(b^dag + b)_i (b^dag + b)_j", lambda: LadderPoly.quadrature(2, 0, 1) * LadderPoly.quadrature(2, 1, 1), {"XX": 1}),
    ("(b^dag + b)_i^3 (b^dag + b)_j", lambda: LadderPoly.quadrature(2, 0, 1) ** 3 * LadderPoly.quadrature(2, 1, 1), {"XX": 3}),
    (
        "(b^dag + b)_i^2 (b^dag + b)_j^2",
        lambda: LadderPoly.quadrature(2, 0, 1) ** 2 * LadderPoly.quadrature(2, 1, 1) ** 2,
        {"ZZ": 1, "ZI": -2, "IZ": -2},
    ),
]


@pytest.mark.parametrize("name, make, expected", TWO_LEVEL_ROWS, ids=[r[0] for r in TWO_LEVEL_ROWS])
def test_two_level_pauli_rows(name, make, expected):
    got = _drop_identity(_pauli(make()))
    assert set(got) == set(expected)
    for k, v in expected.items():
        assert got[k] == pytest.approx(v, abs=1e-13)


def test_truncation_four_levels_of_charge_square():
    p = LadderPoly.quadrature(1, 0, -1) ** 2
    M = p.to_matrix(4)
    ref = _projected(lambda b, bd: (bd[0] - b[0]) @ (bd[0] - b[0]), 1, 4)
    assert np.allclose(M, ref)
    assert np.allclose(np.diag(M), [-1, -3, -5, -7])


@pytest.mark.parametrize("zeta", [0.1, 0.2, 0.4, 1.0])
def test_four_level_exponential_is_projection(zeta):
    b, bd = ladder_ops(60)
    ref = linalg.expm(1j * math.sqrt(zeta / 2) * (b + bd))[:4, :4]
    op = truncate.four_level_exponential(zeta)
    assert np.allclose(op.data, ref, atol=1e-12)


def test_four_level_a_coefficient():
    z = 0.3
    M = truncate.four_level_exponential(z).data
    # A4 = diag(0,0,1,3) carries z^2/8 e^{-z/4}; read it from levels 0 and 2
    base = (1 - z / 4 + z / 4) * math.exp(-z / 4)
    assert M[0, 0].real == pytest.approx(base)
    assert M[2, 2].real == pytest.approx(((1 - z / 4) - 3 * z / 4 + z**2 / 8) * math.exp(-z / 4))


def test_two_level_exponential_and_cosine():
    k = 0.4
    ref = linalg.expm(1j * k * (lambda b: b + b.T)(ladder_ops(40)[0]))[:2, :2]
    assert np.allclose(truncate.two_level_exponential(k), ref, atol=1e-13)
    z1, z2 = 0.3, 0.5
    dec = truncate.two_level_cosine(z1, z2).nonzero()
    b, bd = ladder_ops(40)
    p1 = np.kron(math.sqrt(z1 / 2) * (b + bd), np.eye(40))
    p2 = np.kron(np.eye(40), math.sqrt(z2 / 2) * (b + bd))
    w, U = np.linalg.eigh(p1 - p2)
    C = ((U * np.cos(w)) @ U.T)[np.ix_([0, 1, 40, 41], [0, 1, 40, 41])]
    ref = _drop_identity(truncate.pauli_decompose(truncate.TruncatedOperator(C, [2, 2])).nonzero())
    assert set(dec) == set(ref)
    for key in ref:
        assert dec[key] == pytest.approx(ref[key], abs=1e-12)
    # the overall damping factor
    f = math.exp(-(z1 + z2) / 4)
    assert dec["XX"].real == pytest.approx(f * math.sqrt(z1 * z2) / 2, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_pauli_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    D = 2**n
    A = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    H = A + A.conj().T
    dec = truncate.pauli_decompose(truncate.TruncatedOperator(H, [2] * n))
    assert np.allclose(dec.reconstruct(), H, atol=1e-12)
    assert all(abs(c.imag) == 0 for c in dec.coefficients.values())
    decA = truncate.pauli_decompose(truncate.TruncatedOperator(A, [2] * n))
    assert np.allclose(decA.reconstruct(), A, atol=1e-12)


def test_pauli_identity_and_errors():
    assert truncate.pauli_decompose(truncate.TruncatedOperator(np.eye(4), [2, 2])).nonzero() == {"II": 1}
    with pytest.raises(NonQubitDimensions):
        truncate.pauli_decompose(truncate.TruncatedOperator(np.eye(3), [3]))


def test_truncate_levels_fock_and_eigen():
    A = np.arange(16.0).reshape(4, 4)
    t = truncate_levels(A, [2, 2], dims=[2, 2])
    assert np.array_equal(t.data, A)
    t = truncate_levels(A, [1, 2], dims=[2, 2])
    assert np.array_equal(t.data, A[:2, :2])
    with pytest.raises(DimensionExceeded):
        truncate_levels(A, 3, dims=[2, 2])
    with pytest.raises(ShapeMismatch):
        truncate_levels(A, 2, dims=[3])
    H = np.diag([3.0, 1.0, 2.0, 0.0])
    t = truncate_levels(H, 2, basis="eigen")
    assert np.allclose(t.data, np.diag([0.0, 1.0]))


def test_rotating_frame_ladder_against_matrix():
    w1, w2, g, t = 5.0, 5.3, 0.05, 0.37
    H = (
        LadderPoly.number(2, 0) * w1
        + LadderPoly.number(2, 1) * w2
        + (LadderPoly.create(2, 0) * LadderPoly.annihilate(2, 1) + LadderPoly.annihilate(2, 0) * LadderPoly.create(2, 1)) * g
        + (LadderPoly.create(2, 0) * LadderPoly.create(2, 1) + LadderPoly.annihilate(2, 0) * LadderPoly.annihilate(2, 1)) * g
    )
    H0 = LadderPoly.number(2, 0) * w1 + LadderPoly.number(2, 1) * w2
    lad = truncate.rotating_frame(H, H0, t).to_matrix(4)
    mat = truncate.rotating_frame(H.to_matrix(4), H0.to_matrix(4), t)
    assert np.allclose(lad, mat, atol=1e-12)
    # the exchange term picks up the detuning phase
    term = truncate.rotating_frame(H, [w1, w2], t).coefficient((1, 0), (0, 1))
    assert term == pytest.approx(g * np.exp(1j * (w1 - w2) * t))


def test_rotating_frame_rejects_non_number_h0():
    H = LadderPoly.number(1, 0)
    with pytest.raises(NonCommutingLadderH0):
        truncate.rotating_frame(H, LadderPoly.quadrature(1, 0), 0.1)


def _example_step(w1, w2, g, K=-0.1):
    n = 2
    x = [LadderPoly.quadrature(n, i, 1) for i in range(n)]
    H = LadderPoly.number(n, 0) * w1 + LadderPoly.number(n, 1) * w2
    H = H + LadderPoly.monomial(n, 0, 2, 2, K) + LadderPoly.monomial(n, 1, 2, 2, K)
    return H + x[0] * x[1] * g


def test_rwa_keeps_resonant_exchange():
    H = _example_step(5.0, 5.0, 0.05)
    kept = truncate.rwa_filter(H, [5.0, 5.0])
    keys = set(kept.terms)
    assert ((1, 0), (0, 1)) in keys and ((0, 1), (1, 0)) in keys
    assert ((1, 1), (0, 0)) in keys and ((2, 2), (0, 0)) in keys
    assert ((1, 0), (1, 0)) not in keys and ((0, 1), (0, 1)) not in keys


def test_rwa_drops_detuned_exchange():
    kept = truncate.rwa_filter(_example_step(5.0, 6.0, 0.05), [5.0, 6.0])
    assert ((1, 0), (0, 1)) not in kept.terms
    kept = truncate.rwa_filter(_example_step(5.0, 6.0, 0.05), [5.0, 6.0], threshold_ratio=1e3)
    assert ((1, 0), (0, 1)) in kept.terms


def test_rwa_ratio_limits():
    H = _example_step(5.0, 5.2, 0.05)
    assert set(truncate.rwa_filter(H, [5.0, 5.2], threshold_ratio=1e9).terms) == set(H.terms)
    tiny = truncate.rwa_filter(H, [5.0, 5.2], threshold_ratio=1e-9)
    assert all(t.self_conjugate for t in tiny.to_terms())


def test_hamiltonian_to_ladder_transmon_resonator():
    g = graph_of(make_netlist([(1, 0, 1, "C", 0.25), (2, 0, 1, "JJ", 12.5), (3, 1, 2, "C", 0.02), (4, 0, 2, "C", 0.1), (5, 0, 2, "L", 8.0)]))
    poly, modes = truncate.hamiltonian_to_ladder(builder.build_hamiltonian(g))
    assert poly.is_hermitian()
    rep = truncate.coupling_report(poly, modes)
    assert rep["modes"][0]["anharmonic_coeff"] < 0
    assert rep["modes"][1]["anharmonic_coeff"] == 0
    assert rep["couplings"][0]["g"] != 0


def test_anharmonicity_report():
    r = truncate.anharmonicity_report([0.0, 5.0, 9.8])
    assert r == pytest.approx({"E01": 5.0, "alpha": -0.2, "alpha_r": -0.04})
    with pytest.raises(ValueError):
        truncate.anharmonicity_report([0.0, 1.0])
