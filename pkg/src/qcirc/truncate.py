"""Level truncation, Pauli decomposition, ladder-operator algebra and
rotating frames.

Ladder polynomials are stored normal ordered, one ``(n_create, n_annihilate)``
pair per mode, so products reduce with the single-mode identity

    b^a b^dag^c = sum_k C(a, k) C(c, k) k! b^dag^(c-k) b^(a-k).

Truncating a normal-ordered monomial by multiplying truncated matrices is
exact, which is what makes the table reproductions integer exact.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg as sla
from scipy import sparse

from .builder import ClassicalHamiltonian, prepare_quantum
from .errors import (
    DimensionExceeded,
    NonCommutingLadderH0,
    NonHermitianInput,
    NonQubitDimensions,
    ShapeMismatch,
)
from .fockspace import ModeQuantization, OperatorMatrix, ladder_ops, mode_quantizations

HERMITIAN_TOL = 1e-10
DEFAULT_RWA_RATIO = 10.0

Powers = Tuple[Tuple[int, int], ...]

# ----------------------------------------------------------------------------
# truncation


@dataclass
class TruncatedOperator:
    data: np.ndarray
    dims: List[int]
    basis: str = "fock"
    labels: List[str] = field(default_factory=list)

    @property
    def hermitian(self) -> bool:
        return bool(np.abs(self.data - self.data.conj().T).max() < HERMITIAN_TOL)


def _as_dense(A) -> Tuple[np.ndarray, Optional[List[int]]]:
    if isinstance(A, OperatorMatrix):
        return A.dense(), list(A.dims)
    if isinstance(A, TruncatedOperator):
        return np.asarray(A.data), list(A.dims)
    M = A.toarray() if sparse.issparse(A) else np.asarray(A)
    return M, None


def fock_labels(dims: Sequence[int]) -> List[str]:
    return ["".join(str(i) for i in idx) for idx in itertools.product(*[range(d) for d in dims])]


def truncate_levels(
    A,
    d: Union[int, Sequence[int]],
    basis: str = "fock",
    H=None,
    dims: Optional[Sequence[int]] = None,
) -> TruncatedOperator:
    """Matrix elements of ``A`` between the lowest levels.

    Parameters
    ----------
    A : OperatorMatrix, ndarray or sparse matrix
    d : int or sequence of int
        Levels kept per mode (Fock basis) or in total (eigen basis).
    basis : {"fock", "eigen"}
        "eigen" uses the lowest ``d`` eigenvectors of ``H`` (``A`` itself if
        ``H`` is omitted).
    dims : sequence of int, optional
        Mode dimensions of ``A`` when it is a bare array.
    """
    M, adims = _as_dense(A)
    if dims is not None:
        adims = list(dims)
    if adims is None:
        adims = [M.shape[0]]
    if int(np.prod(adims)) != M.shape[0] or M.shape[0] != M.shape[1]:
        raise ShapeMismatch(f"operator of shape {M.shape} does not match dims {adims}")
    basis = basis.lower()
    if basis == "fock":
        ds = [int(d)] * len(adims) if np.isscalar(d) else [int(x) for x in d]
        if len(ds) != len(adims):
            raise ShapeMismatch(f"need {len(adims)} level counts, got {len(ds)}")
        for k, (dk, ak) in enumerate(zip(ds, adims)):
            if dk > ak:
                raise DimensionExceeded(f"mode {k}: {dk} levels requested from dimension {ak}")
            if dk < 1:
                raise DimensionExceeded("level count must be positive")
        idx = [np.ravel_multi_index(t, adims) for t in itertools.product(*[range(x) for x in ds])]
        idx = np.asarray(idx, dtype=int)
        return TruncatedOperator(M[np.ix_(idx, idx)], ds, "fock", fock_labels(ds))
    if basis == "eigen":
        if not np.isscalar(d):
            raise ShapeMismatch("eigen-basis truncation takes a single level count")
        d = int(d)
        Hm = M if H is None else _as_dense(H)[0]
        if Hm.shape != M.shape:
            raise ShapeMismatch("H and A must have the same shape")
        if d > Hm.shape[0]:
            raise DimensionExceeded(f"{d} levels requested from dimension {Hm.shape[0]}")
        if np.abs(Hm - Hm.conj().T).max() >= HERMITIAN_TOL:
            raise NonHermitianInput("eigen-basis truncation needs a Hermitian H")
        _, V = np.linalg.eigh(Hm)
        V = V[:, :d]
        return TruncatedOperator(V.conj().T @ M @ V, [d], "eigen", [f"E{i}" for i in range(d)])
    raise ValueError("basis must be 'fock' or 'eigen'")


# ----------------------------------------------------------------------------
# Pauli algebra

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_string(label: str) -> np.ndarray:
    return reduce(np.kron, [PAULI[c] for c in label])


@dataclass
class PauliDecomposition:
    coefficients: Dict[str, complex]
    n_qubits: int

    def reconstruct(self) -> np.ndarray:
        D = 2**self.n_qubits
        out = np.zeros((D, D), dtype=complex)
        for lab, c in self.coefficients.items():
            out += c * pauli_string(lab)
        return out

    def nonzero(self, tol: float = 1e-12) -> Dict[str, complex]:
        return {k: v for k, v in self.coefficients.items() if abs(v) > tol}

    def to_dict(self, tol: float = 1e-12) -> Dict[str, object]:
        out = {}
        for k, v in self.nonzero(tol).items():
            out[k] = float(v.real) if abs(v.imag) <= tol else [float(v.real), float(v.imag)]
        return out


def pauli_decompose(A) -> PauliDecomposition:
    """Coefficients ``c_P = tr(P A) / 2^n`` on all Pauli strings.

    Real for Hermitian input. The identity string is included, so the
    reconstruction is exact.
    """
    M, dims = _as_dense(A)
    dims = dims or [M.shape[0]]
    if any(d != 2 for d in dims) or M.shape[0] != 2 ** len(dims):
        raise NonQubitDimensions(f"Pauli decomposition needs qubit dimensions, got {dims}")
    n = len(dims)
    herm = np.abs(M - M.conj().T).max() < HERMITIAN_TOL
    coeffs = {}
    for lab in itertools.product("IXYZ", repeat=n):
        s = "".join(lab)
        c = np.trace(pauli_string(s) @ M) / 2**n
        coeffs[s] = complex(c.real, 0.0) if herm else complex(c)
    return PauliDecomposition(coeffs, n)


# ----------------------------------------------------------------------------
# four-level matrices and the exact exponential

Z4 = np.diag([1.0, -1.0, -3.0, -5.0])
A4 = np.diag([0.0, 0.0, 1.0, 3.0])
B4 = np.diag([0.0, 0.0, 0.0, 1.0])


def X4(i: int, j: int) -> np.ndarray:
    m = np.zeros((4, 4), dtype=complex)
    m[i, j] = m[j, i] = 1.0
    return m


def Y4(i: int, j: int) -> np.ndarray:
    m = np.zeros((4, 4), dtype=complex)
    m[i, j] = -1j
    m[j, i] = 1j
    return m


def four_level_exponential(zeta: float) -> TruncatedOperator:
    """Closed form of ``exp[i sqrt(zeta/2)(b + b^dag)]`` on the lowest four levels.

    The X12 and X23 coefficients carry an extra ``sqrt(zeta)`` relative to
    the commonly quoted form; without it the result is not the projection
    of the exponential (see the ledger).
    """
    if zeta < 0:
        raise ValueError("zeta must be non-negative")
    z = float(zeta)
    rz = math.sqrt(z)
    M = (
        (1 - z / 4) * np.eye(4)
        + (z / 4) * Z4
        + (z**2 / 8) * A4
        - (z**3 / 48) * B4
        + 1j * math.sqrt(z / 2) * X4(0, 1)
        - (z / math.sqrt(8)) * X4(0, 2)
        - 1j * z**1.5 / math.sqrt(48) * X4(0, 3)
        + 1j * rz * (1 - z / 4) * X4(1, 2)
        - (math.sqrt(6) / 4) * (z - z**2 / 6) * X4(1, 3)
        + 1j * math.sqrt(1.5) * rz * (1 - z / 2 + z**2 / 24) * X4(2, 3)
    )
    return TruncatedOperator(M * math.exp(-z / 4), [4], "fock", ["0", "1", "2", "3"])


def two_level_exponential(k: float) -> np.ndarray:
    """``M2[exp(ik(b + b^dag))] = (1 - k^2/2 + (k^2/2) sz + i k sx) e^{-k^2/2}``."""
    return (
        (1 - k * k / 2) * PAULI["I"] + (k * k / 2) * PAULI["Z"] + 1j * k * PAULI["X"]
    ) * math.exp(-k * k / 2)


def two_level_cosine(zeta1: float, zeta2: float) -> PauliDecomposition:
    """Exact two-level truncation of ``cos(phi_1 - phi_2)``, constant dropped."""
    k1, k2 = math.sqrt(zeta1 / 2), math.sqrt(zeta2 / 2)
    M = 0.5 * (np.kron(two_level_exponential(k1), two_level_exponential(-k2)))
    M = M + M.conj().T
    dec = pauli_decompose(TruncatedOperator(M, [2, 2]))
    dec.coefficients["II"] = 0.0
    return dec


# ----------------------------------------------------------------------------
# normal-ordered ladder polynomials


def _reorder(a: int, c: int) -> List[Tuple[int, int, int]]:
    """``b^a b^dag^c`` as a list of ``(coeff, n_create, n_annihilate)``."""
    return [
        (math.comb(a, k) * math.comb(c, k) * math.factorial(k), c - k, a - k)
        for k in range(min(a, c) + 1)
    ]


def _mode_product(x: Tuple[int, int], y: Tuple[int, int]) -> List[Tuple[int, Tuple[int, int]]]:
    (p1, q1), (p2, q2) = x, y
    return [(c, (p1 + p, q + q2)) for c, p, q in _reorder(q1, p2)]


@dataclass
class LadderTerm:
    """``coeff * prod_i b_i^dag^p_i b_i^q_i`` with rotation frequency under H0."""

    coeff: complex
    powers: Powers
    frequency: float = 0.0

    @property
    def self_conjugate(self) -> bool:
        return all(p == q for p, q in self.powers)

    @property
    def conserving(self) -> bool:
        return sum(p for p, _ in self.powers) == sum(q for _, q in self.powers)

    def conjugate_powers(self) -> Powers:
        return tuple((q, p) for p, q in self.powers)

    def label(self) -> str:
        parts = []
        for i, (p, q) in enumerate(self.powers):
            parts += [f"b{i + 1}^dag"] * p + [f"b{i + 1}"] * q
        return " ".join(parts) if parts else "1"


class LadderPoly:
    """Polynomial in bosonic ladder operators, kept normal ordered."""

    def __init__(self, n_modes: int, terms: Optional[Dict[Powers, complex]] = None):
        self.n = int(n_modes)
        self.terms: Dict[Powers, complex] = {}
        for k, v in (terms or {}).items():
            if len(k) != self.n:
                raise ShapeMismatch("monomial length does not match number of modes")
            if v != 0:
                self.terms[k] = complex(v)

    # constructors
    @classmethod
    def constant(cls, n_modes: int, c: complex = 1.0) -> "LadderPoly":
        return cls(n_modes, {((0, 0),) * n_modes: c})

    @classmethod
    def monomial(cls, n_modes: int, mode: int, p: int, q: int, c: complex = 1.0) -> "LadderPoly":
        key = [(0, 0)] * n_modes
        key[mode] = (p, q)
        return cls(n_modes, {tuple(key): c})

    @classmethod
    def create(cls, n_modes: int, mode: int) -> "LadderPoly":
        return cls.monomial(n_modes, mode, 1, 0)

    @classmethod
    def annihilate(cls, n_modes: int, mode: int) -> "LadderPoly":
        return cls.monomial(n_modes, mode, 0, 1)

    @classmethod
    def quadrature(cls, n_modes: int, mode: int, sign: int = 1) -> "LadderPoly":
        """``b^dag + sign * b``."""
        return cls.create(n_modes, mode) + cls.annihilate(n_modes, mode) * sign

    @classmethod
    def number(cls, n_modes: int, mode: int) -> "LadderPoly":
        return cls.monomial(n_modes, mode, 1, 1)

    # algebra
    def __add__(self, other) -> "LadderPoly":
        if not isinstance(other, LadderPoly):
            other = LadderPoly.constant(self.n, other)
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return LadderPoly(self.n, {k: v for k, v in out.items() if abs(v) > 0})

    __radd__ = __add__

    def __neg__(self) -> "LadderPoly":
        return self * -1

    def __sub__(self, other) -> "LadderPoly":
        return self + (-other if isinstance(other, LadderPoly) else -other)

    def __mul__(self, other) -> "LadderPoly":
        if not isinstance(other, LadderPoly):
            return LadderPoly(self.n, {k: v * other for k, v in self.terms.items()})
        out: Dict[Powers, complex] = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                per_mode = [_mode_product(a, b) for a, b in zip(k1, k2)]
                for combo in itertools.product(*per_mode):
                    c = v1 * v2
                    key = []
                    for ci, pq in combo:
                        c *= ci
                        key.append(pq)
                    key = tuple(key)
                    out[key] = out.get(key, 0) + c
        return LadderPoly(self.n, out)

    def __rmul__(self, other) -> "LadderPoly":
        return self * other

    def __pow__(self, k: int) -> "LadderPoly":
        out = LadderPoly.constant(self.n)
        for _ in range(int(k)):
            out = out * self
        return out

    def dagger(self) -> "LadderPoly":
        return LadderPoly(self.n, {tuple((q, p) for p, q in k): np.conj(v) for k, v in self.terms.items()})

    def drop_constant(self) -> "LadderPoly":
        zero = ((0, 0),) * self.n
        return LadderPoly(self.n, {k: v for k, v in self.terms.items() if k != zero})

    def chop(self, tol: float = 1e-12) -> "LadderPoly":
        out = {}
        for k, v in self.terms.items():
            re = v.real if abs(v.real) > tol else 0.0
            im = v.imag if abs(v.imag) > tol else 0.0
            if re or im:
                out[k] = complex(re, im)
        return LadderPoly(self.n, out)

    def coefficient(self, *powers: Tuple[int, int]) -> complex:
        return self.terms.get(tuple(powers), 0.0)

    def to_terms(self, frequencies: Optional[Sequence[float]] = None) -> List[LadderTerm]:
        w = [0.0] * self.n if frequencies is None else list(frequencies)
        out = []
        for k in sorted(self.terms):
            f = sum((p - q) * wi for (p, q), wi in zip(k, w))
            out.append(LadderTerm(self.terms[k], k, f))
        return out

    @classmethod
    def from_terms(cls, terms: Iterable[LadderTerm], n_modes: Optional[int] = None) -> "LadderPoly":
        terms = list(terms)
        n = n_modes if n_modes is not None else len(terms[0].powers)
        out: Dict[Powers, complex] = {}
        for t in terms:
            out[t.powers] = out.get(t.powers, 0) + t.coeff
        return cls(n, out)

    def to_matrix(self, dims: Union[int, Sequence[int]]) -> np.ndarray:
        """Matrix on the truncated space, exact for each normal-ordered monomial."""
        dims = [int(dims)] * self.n if np.isscalar(dims) else list(dims)
        D = int(np.prod(dims))
        out = np.zeros((D, D), dtype=complex)
        ladders = [ladder_ops(d) for d in dims]
        for k, v in self.terms.items():
            ops = [
                np.linalg.matrix_power(bd, p) @ np.linalg.matrix_power(b, q)
                for (p, q), (b, bd) in zip(k, ladders)
            ]
            out += v * reduce(np.kron, ops)
        return out

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        h = self.dagger()
        keys = set(self.terms) | set(h.terms)
        return all(abs(self.terms.get(k, 0) - h.terms.get(k, 0)) < tol for k in keys)


def hamiltonian_to_ladder(
    H: ClassicalHamiltonian, order: int = 4, modes: Optional[Sequence[ModeQuantization]] = None
) -> Tuple[LadderPoly, List[ModeQuantization]]:
    """Taylor-expanded quantum Hamiltonian as a normal-ordered ladder polynomial.

    Each coordinate uses its own oscillator basis (``mode_quantizations``),
    the cosines are expanded to ``order`` about the origin and constants
    are dropped.
    """
    Hq = prepare_quantum(H)
    n = Hq.n
    modes = list(modes) if modes is not None else mode_quantizations(Hq, [2] * n)
    phi = [LadderPoly.quadrature(n, i, +1) * math.sqrt(m.zeta / 2) for i, m in enumerate(modes)]
    nq = [LadderPoly.quadrature(n, i, -1) * (1j / math.sqrt(2 * m.zeta)) for i, m in enumerate(modes)]
    out = LadderPoly(n)
    lin_q = -Hq.Cinv @ Hq.Q0
    for i in range(n):
        for j in range(n):
            if Hq.Cinv[i, j]:
                out = out + nq[i] * nq[j] * (0.5 * Hq.Cinv[i, j])
            if Hq.Linv[i, j]:
                out = out + phi[i] * phi[j] * (0.5 * Hq.Linv[i, j])
        if Hq.linear[i]:
            out = out + phi[i] * Hq.linear[i]
        if lin_q[i]:
            out = out + nq[i] * lin_q[i]
    for c in Hq.cosines:
        x = LadderPoly(n)
        for i, w in enumerate(c.w):
            if w:
                x = x + phi[i] * float(w)
        cth, sth = math.cos(c.offset), math.sin(c.offset)
        xp = LadderPoly.constant(n)
        for k in range(1, order + 1):
            xp = xp * x
            # cos(x + th) = sum_k x^k/k! * d^k cos(th)
            deriv = [cth, -sth, -cth, sth][k % 4]
            out = out + xp * (-c.amplitude * deriv / math.factorial(k))
    return out.drop_constant().chop(), modes


def coupling_report(poly: LadderPoly, modes: Sequence[ModeQuantization]) -> Dict[str, object]:
    """Frequencies, anharmonicities and pairwise swap couplings read off a polynomial.

    ``g_ij`` is the coefficient of ``b_i^dag b_j`` (equal to that of
    ``(b_i^dag + b_i)(b_j^dag + b_j)`` for inductive coupling).
    """
    n = poly.n
    rep = {"modes": [], "couplings": []}
    for i, m in enumerate(modes):
        key1 = [(0, 0)] * n
        key1[i] = (1, 1)
        key2 = [(0, 0)] * n
        key2[i] = (2, 2)
        rep["modes"].append(
            {
                "label": m.label,
                "zeta": m.zeta,
                "omega": m.omega,
                "alpha": m.alpha,
                "number_coeff": float(poly.terms.get(tuple(key1), 0).real),
                "anharmonic_coeff": float(2 * poly.terms.get(tuple(key2), 0).real),
            }
        )
    for i in range(n):
        for j in range(i + 1, n):
            key = [(0, 0)] * n
            key[i] = (1, 0)
            key[j] = (0, 1)
            g = poly.terms.get(tuple(key), 0)
            key[i], key[j] = (1, 0), (1, 0)
            gp = poly.terms.get(tuple(key), 0)
            rep["couplings"].append(
                {"i": modes[i].label, "j": modes[j].label, "g": float(g.real), "g_nonconserving": float(gp.real)}
            )
    return rep


# ----------------------------------------------------------------------------
# rotating frames and the rotating-wave approximation


def _frame_frequencies(H0, n: int) -> List[float]:
    if isinstance(H0, LadderPoly):
        w = [0.0] * n
        for k, v in H0.terms.items():
            nz = [i for i, pq in enumerate(k) if pq != (0, 0)]
            if not nz:
                continue
            if len(nz) != 1 or k[nz[0]] != (1, 1) or abs(v.imag) > 1e-14:
                raise NonCommutingLadderH0("ladder-form H0 must be a real sum of number operators")
            w[nz[0]] += v.real
        return w
    w = [float(x) for x in np.atleast_1d(H0)]
    if len(w) != n:
        raise ShapeMismatch(f"need {n} frame frequencies, got {len(w)}")
    return w


def rotating_frame(H, H0, t: float):
    """Transform ``H`` to the frame of ``H0`` at time ``t``.

    Ladder form (``LadderPoly``; ``H0`` a ``LadderPoly`` of number operators
    or a list of frequencies): each monomial gains ``e^{i t sum (p-q) w}``
    and the ``H0`` number terms are removed. Matrix form: ``U^dag H U - H0``
    with ``U = exp(-i H0 t)``.
    """
    if isinstance(H, LadderPoly):
        w = _frame_frequencies(H0, H.n)
        out = {}
        for k, v in H.terms.items():
            f = sum((p - q) * wi for (p, q), wi in zip(k, w))
            out[k] = v * cmath.exp(1j * f * t)
        res = LadderPoly(H.n, out)
        h0 = LadderPoly(H.n)
        for i, wi in enumerate(w):
            h0 = h0 + LadderPoly.number(H.n, i) * wi
        return (res - h0).chop(1e-15)
    if isinstance(H0, LadderPoly):
        raise NonCommutingLadderH0("matrix-form H needs a matrix H0")
    Hm = _as_dense(H)[0]
    H0m = _as_dense(H0)[0]
    if H0m.shape != Hm.shape:
        raise ShapeMismatch("H and H0 shapes differ")
    if np.abs(H0m - H0m.conj().T).max() >= HERMITIAN_TOL:
        raise NonHermitianInput("H0 must be Hermitian")
    U = sla.expm(-1j * H0m * t)
    return U.conj().T @ Hm @ U - H0m


def rwa_filter(
    terms: Union[LadderPoly, Sequence[LadderTerm]],
    frequencies: Sequence[float],
    threshold_ratio: float = DEFAULT_RWA_RATIO,
):
    """Drop terms rotating faster than ``threshold_ratio`` times their coefficient.

    A term and its Hermitian partner are judged together on the larger of
    the two coefficients. Self-conjugate terms are always kept. Returns the
    same container type as the input.
    """
    poly_in = isinstance(terms, LadderPoly)
    tl = terms.to_terms(frequencies) if poly_in else [
        LadderTerm(t.coeff, t.powers, sum((p - q) * w for (p, q), w in zip(t.powers, frequencies)))
        for t in terms
    ]
    by_key = {t.powers: t for t in tl}
    kept = []
    for t in tl:
        if t.self_conjugate:
            kept.append(t)
            continue
        partner = by_key.get(t.conjugate_powers())
        c = max(abs(t.coeff), abs(partner.coeff) if partner else 0.0)
        if abs(t.frequency) > threshold_ratio * c:
            continue
        kept.append(t)
    if poly_in:
        n = terms.n
        return LadderPoly.from_terms(kept, n) if kept else LadderPoly(n)
    return kept


def anharmonicity_report(eigs: Sequence[float]) -> Dict[str, float]:
    """``alpha = (E2 - E1) - (E1 - E0)`` and ``alpha_r = alpha / (E1 - E0)``."""
    e = np.sort(np.asarray(eigs, dtype=float))
    if e.size < 3:
        raise ValueError("need at least three eigenvalues")
    e01 = e[1] - e[0]
    alpha = (e[2] - e[1]) - e01
    return {"E01": float(e01), "alpha": float(alpha), "alpha_r": float(alpha / e01)}
