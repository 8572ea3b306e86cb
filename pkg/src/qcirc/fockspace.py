"""Operator matrices in truncated Fock space and Hamiltonian assembly.

Each mode is expanded in the eigenbasis of its own harmonic part, with
``phi = sqrt(zeta/2) (b + b^dag)`` and charge operator
``n = i (b^dag - b) / sqrt(2 zeta)`` so that ``[phi, n] = i`` on the
interior of the truncated space.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla
from scipy.special import eval_genlaguerre, gammaln

from .builder import ClassicalHamiltonian, CosineTerm, find_potential_minimum, prepare_quantum, shift_coordinates
from .errors import CutoffTooSmall, DimensionTooSmall, NonHermitianInput, SingularCapacitanceMatrix

DENSE_LIMIT = 4096
HERMITIAN_TOL = 1e-10
EXPANSIONS = ("taylor4", "taylor6", "exact")
COMPACT_EXTENT = 1.75 * math.pi


@dataclass
class ModeQuantization:
    E_C: float
    E_L: float
    E_J: float
    zeta: float
    omega: float
    alpha: float
    dim: int = 10
    label: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "E_C": self.E_C,
            "E_L": self.E_L,
            "E_J": self.E_J,
            "zeta": self.zeta,
            "omega": self.omega,
            "alpha": self.alpha,
            "dim": self.dim,
        }


def quantize_mode(E_C: float, E_L: float, E_J: float, dim: int = 10, label: str = "") -> ModeQuantization:
    """Impedance, frequency and leading-order anharmonicity of one mode.

    ``zeta = sqrt(4 E_C / (E_L + E_J/2))``, ``omega = 4 sqrt(E_C (E_L + E_J/2))``
    and ``alpha = -zeta^2 E_J / 8`` (equal to ``-E_C`` when ``E_L = 0``).
    """
    a = E_L + E_J / 2.0
    if a <= 0 or E_C <= 0:
        raise SingularCapacitanceMatrix(f"mode {label!r} has no harmonic confinement (E_L + E_J/2 = {a:.3g})")
    zeta = math.sqrt(4.0 * E_C / a)
    omega = 4.0 * math.sqrt(E_C * a)
    alpha = -(zeta**2) * E_J / 8.0
    return ModeQuantization(E_C, E_L, E_J, zeta, omega, alpha, dim, label)


@dataclass
class OperatorMatrix:
    data: Union[np.ndarray, sparse.spmatrix]
    dims: List[int]
    hermitian: bool = True
    modes: List[ModeQuantization] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    bases: List[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def dense(self) -> np.ndarray:
        return self.data.toarray() if sparse.issparse(self.data) else np.asarray(self.data)


# ----------------------------------------------------------------------------
# single-mode operators


def ladder_ops(dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """Annihilation and creation matrices with sqrt(n) off-diagonals."""
    if dim < 2:
        raise DimensionTooSmall(f"Fock dimension must be at least 2, got {dim}")
    b = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)
    return b, b.T.copy()


def flux_charge_ops(zeta: float, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """``(phi, n)`` with ``phi = sqrt(zeta/2)(b + b^dag)``, ``n = i(b^dag - b)/sqrt(2 zeta)``."""
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    b, bd = ladder_ops(dim)
    phi = math.sqrt(zeta / 2.0) * (b + bd)
    n = 1j * (bd - b) / math.sqrt(2.0 * zeta)
    return phi.astype(complex), n


def number_op(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float))


def _power_projected(op_pad: np.ndarray, k: int, dim: int) -> np.ndarray:
    """k-th power computed in a padded space and projected to ``dim``."""
    m = np.linalg.matrix_power(op_pad, k) if k else np.eye(op_pad.shape[0], dtype=op_pad.dtype)
    return m[:dim, :dim]


def phi_power(zeta: float, dim: int, k: int) -> np.ndarray:
    """Projection of phi^k onto the lowest ``dim`` levels (exact truncation)."""
    pad = dim + k // 2 + 1
    b, bd = ladder_ops(pad)
    return _power_projected(math.sqrt(zeta / 2.0) * (b + bd), k, dim)


def charge_power(zeta: float, dim: int, k: int) -> np.ndarray:
    pad = dim + k // 2 + 1
    b, bd = ladder_ops(pad)
    return _power_projected(1j * (bd - b) / math.sqrt(2.0 * zeta), k, dim)


def displacement_matrix(k: float, dim: int) -> np.ndarray:
    """Matrix elements of ``D(ik) = exp[ik(b^dag + b)]`` in the lowest ``dim`` levels.

    Uses ``<m|D|n> = (ik)^|m-n| sqrt(min!/max!) e^{-k^2/2} L_min^{(|m-n|)}(k^2)``
    evaluated with log-gamma prefactors.
    """
    if dim < 2:
        raise DimensionTooSmall(f"Fock dimension must be at least 2, got {dim}")
    if k == 0:
        return np.eye(dim, dtype=complex)
    m, n = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    lo = np.minimum(m, n)
    d = np.abs(m - n)
    x = k * k
    logpref = 0.5 * (gammaln(lo + 1) - gammaln(lo + d + 1)) + d * math.log(abs(k)) - x / 2.0
    lag = eval_genlaguerre(lo, d, x)
    phase = (1j) ** d * np.sign(k) ** d
    return phase * np.exp(logpref) * lag


def exact_cosine(term: CosineTerm, modes: Sequence[ModeQuantization], dims: Optional[Sequence[int]] = None) -> np.ndarray:
    """``-A/2 [e^{i theta} prod_i D_i(i w_i sqrt(zeta_i/2)) + h.c.]`` on the tensor space."""
    dims = [m.dim for m in modes] if dims is None else list(dims)
    ops = [displacement_matrix(float(w) * math.sqrt(m.zeta / 2.0), d) for w, m, d in zip(term.w, modes, dims)]
    E = _kron_all(ops)
    E = np.exp(1j * term.offset) * E
    return -0.5 * term.amplitude * (E + E.conj().T)


def charge_basis_hamiltonian(E_C: float, E_J: float, n_g: float, n_max: int) -> np.ndarray:
    """Tridiagonal ``4 E_C (n - n_g)^2 - E_J/2 (|n><n+1| + h.c.)`` for n = -n_max..n_max."""
    if n_max < 1:
        raise DimensionTooSmall("n_max must be at least 1")
    n = np.arange(-n_max, n_max + 1)
    H = np.diag(4.0 * E_C * (n - n_g) ** 2)
    off = -0.5 * E_J * np.ones(len(n) - 1)
    return H + np.diag(off, 1) + np.diag(off, -1)


# ----------------------------------------------------------------------------
# tensor helpers


def _kron_all(ops: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for o in ops:
        out = np.kron(out, o)
    return out


def _skron_all(ops) -> sparse.csr_matrix:
    out = sparse.csr_matrix(np.ones((1, 1), dtype=complex))
    for o in ops:
        out = sparse.kron(out, sparse.csr_matrix(o), format="csr")
    return out


def embed(op: np.ndarray, i: int, dims: Sequence[int]) -> np.ndarray:
    ops = [np.eye(d) for d in dims]
    ops[i] = op
    return _kron_all(ops)


def _sembed(op, i: int, dims: Sequence[int]) -> sparse.csr_matrix:
    ops = [sparse.identity(d, dtype=complex, format="csr") for d in dims]
    ops[i] = op
    return _skron_all(ops)


# ----------------------------------------------------------------------------
# Hamiltonian assembly


def quantize_coordinate(H: ClassicalHamiltonian, i: int, dim: int = 10) -> ModeQuantization:
    """Oscillator basis of coordinate ``i`` of a charge-form Hamiltonian.

    The confinement uses the local curvature ``Linv_nn + sum A w_n^2 cos(theta)``.
    If that is not positive, ``|cos theta|`` and then the bare amplitudes
    are used to fix the oscillator basis.
    """
    E_C = H.Cinv[i, i] / 8.0
    E_L = H.Linv[i, i] / 2.0
    ej_loc = sum(c.amplitude * c.w[i] ** 2 * math.cos(c.offset) for c in H.cosines)
    ej_abs = sum(c.amplitude * c.w[i] ** 2 * abs(math.cos(c.offset)) for c in H.cosines)
    ej_bare = sum(c.amplitude * c.w[i] ** 2 for c in H.cosines)
    for ej in (ej_loc, ej_abs, ej_bare):
        if E_L + ej / 2.0 > 0:
            return quantize_mode(E_C, E_L, ej, int(dim), H.labels[i])
    raise SingularCapacitanceMatrix(f"coordinate {H.labels[i]} has no inductive confinement; use the charge basis")


def mode_quantizations(H: ClassicalHamiltonian, dims: Sequence[int]) -> List[ModeQuantization]:
    """``quantize_coordinate`` for every coordinate."""
    return [quantize_coordinate(H, i, dims[i]) for i in range(H.n)]


def compact_coordinates(H: ClassicalHamiltonian) -> List[bool]:
    """Coordinates living on a circle: no inductive or linear term and
    integer weights in every cosine."""
    out = []
    for i in range(H.n):
        free = bool(np.all(np.abs(H.Linv[i]) < 1e-14) and abs(H.linear[i]) < 1e-14)
        ws = [c.w[i] for c in H.cosines]
        integer = all(abs(w - round(w)) < 1e-12 for w in ws) and any(abs(w) > 0 for w in ws)
        out.append(free and integer)
    return out


def charge_dim(cutoff: int) -> int:
    """Charge-basis size 2 n_max + 1 used for a cutoff value."""
    return 2 * max(1, int(cutoff) // 2) + 1


def _charge_values(dim: int) -> np.ndarray:
    nmax = (dim - 1) // 2
    return np.arange(-nmax, nmax + 1, dtype=float)


def _shift(dim: int, w: int) -> np.ndarray:
    """e^{i w phi} in the charge basis: raises q = -n by w."""
    return np.eye(dim, k=-int(round(w)), dtype=complex)


def _multinomial_power(w: np.ndarray, k: int, modes, dims) -> sparse.csr_matrix:
    """(sum_i w_i phi_i)^k on the tensor space."""
    act = [i for i in range(len(w)) if w[i] != 0]
    D = int(np.prod(dims))
    out = sparse.csr_matrix((D, D), dtype=complex)
    for comp in itertools.product(range(k + 1), repeat=len(act)):
        if sum(comp) != k:
            continue
        coef = math.factorial(k)
        for c in comp:
            coef //= math.factorial(c)
        ops = [sparse.identity(d, dtype=complex, format="csr") for d in dims]
        pref = float(coef)
        for i, c in zip(act, comp):
            if c:
                ops[i] = phi_power(modes[i].zeta, dims[i], c)
                pref *= w[i] ** c
        out = out + pref * _skron_all(ops)
    return out


def taylor_cosine(term: CosineTerm, modes, dims, order: int):
    """Expansion of ``-A cos(u + theta)`` to ``u^order``."""
    D = int(np.prod(dims))
    ct, st = math.cos(term.offset), math.sin(term.offset)
    out = (-term.amplitude * ct) * sparse.identity(D, dtype=complex, format="csr")
    for k in range(1, order + 1):
        # cos(u+t) = cos t cos u - sin t sin u
        if k % 2 == 0:
            c = ct * (-1) ** (k // 2) / math.factorial(k)
        else:
            c = -st * (-1) ** ((k - 1) // 2) / math.factorial(k)
        if abs(c) < 1e-300:
            continue
        out = out + (-term.amplitude * c) * _multinomial_power(np.asarray(term.w, float), k, modes, dims)
    return out


def build_fock_hamiltonian(
    H: ClassicalHamiltonian,
    cutoffs: Union[int, Sequence[int]] = 10,
    expansion: str = "taylor4",
    shift_minimum: Optional[bool] = None,
    bases: Union[str, Sequence[str]] = "fock",
) -> OperatorMatrix:
    """Quantised Hamiltonian matrix.

    No constant is dropped: the offset-charge energy ``1/2 Q0^T C^-1 Q0``,
    the static-flux energy of linear inductors and the cosine constants
    all vary along sweeps.

    Parameters
    ----------
    H : ClassicalHamiltonian
        Lagrangian or charge form; Lagrangian input is prepared first.
    cutoffs : int or sequence of int
        Fock dimension per coordinate. A charge-basis coordinate uses
        ``n = -cutoff//2 .. cutoff//2``.
    expansion : {"taylor4", "taylor6", "exact"}
        Taylor expansions are taken about the potential minimum.
    bases : "fock", "auto" or per-coordinate list of "fock"/"charge"
        "auto" puts compact coordinates in the charge basis when the
        expansion is exact.
    """
    expansion = expansion.lower()
    if expansion not in EXPANSIONS:
        raise ValueError(f"expansion must be one of {EXPANSIONS}")
    H = prepare_quantum(H)
    n = H.n
    cut = [int(cutoffs)] * n if np.isscalar(cutoffs) else [int(d) for d in cutoffs]
    if len(cut) != n:
        raise ValueError(f"need {n} cutoffs, got {len(cut)}")
    if isinstance(bases, str):
        if bases == "auto":
            comp = compact_coordinates(H)
            bases = ["charge" if (c and expansion == "exact") else "fock" for c in comp]
        else:
            bases = [bases] * n
    bases = list(bases)
    comp = compact_coordinates(H)
    for i, bs in enumerate(bases):
        if bs == "charge" and not (comp[i] and expansion == "exact"):
            raise ValueError(f"coordinate {H.labels[i]} cannot use the charge basis")
    for d in cut:
        if d < 2:
            raise DimensionTooSmall(f"Fock dimension must be at least 2, got {d}")
        if expansion.startswith("taylor") and H.cosines and d < 4:
            raise CutoffTooSmall(f"Taylor expansion needs at least 4 levels per mode, got {d}")
    if shift_minimum is None:
        shift_minimum = expansion != "exact"
    notes = list(H.notes)
    if shift_minimum and (H.cosines or np.any(H.linear)):
        phi0 = find_potential_minimum(H)
        if np.abs(phi0).max() > 1e-12:
            H = shift_coordinates(H, phi0)
            notes.append("expanded about potential minimum " + ", ".join(f"{x:.6g}" for x in phi0))
    elif np.any(H.linear):
        # centre the oscillators on the inductive minimum; a pure translation
        phi0 = -np.linalg.lstsq(H.Linv, H.linear, rcond=None)[0]
        if np.allclose(H.Linv @ phi0, -H.linear, atol=1e-12 * max(1.0, np.abs(H.linear).max())):
            H = shift_coordinates(H, phi0)
            notes.append("oscillators centred at " + ", ".join(f"{x:.6g}" for x in phi0))
    dims = [charge_dim(c) if bs == "charge" else c for c, bs in zip(cut, bases)]
    modes = mode_quantizations(H, dims)
    D = int(np.prod(dims))
    M = sparse.csr_matrix((D, D), dtype=complex)

    phis, qs, q2s = [], [], []
    for m, d, bs in zip(modes, dims, bases):
        if bs == "charge":
            qv = _charge_values(d)
            phis.append(None)
            qs.append(np.diag(qv).astype(complex))
            q2s.append(np.diag(qv**2).astype(complex))
        else:
            ph, q = flux_charge_ops(m.zeta, d)
            phis.append(ph)
            qs.append(q)
            q2s.append(charge_power(m.zeta, d, 2))
    lin_q = -H.Cinv @ H.Q0
    for i in range(n):
        single = 0.5 * H.Cinv[i, i] * q2s[i]
        if bases[i] == "fock":
            single = single + 0.5 * H.Linv[i, i] * phi_power(modes[i].zeta, dims[i], 2)
            if H.linear[i]:
                single = single + H.linear[i] * phis[i]
        if lin_q[i]:
            single = single + lin_q[i] * qs[i]
        M = M + _sembed(single, i, dims)
        for j in range(i + 1, n):
            if H.Cinv[i, j]:
                M = M + H.Cinv[i, j] * (_sembed(qs[i], i, dims) @ _sembed(qs[j], j, dims))
            if H.Linv[i, j]:
                M = M + H.Linv[i, j] * (_sembed(phis[i], i, dims) @ _sembed(phis[j], j, dims))
    order = {"taylor4": 4, "taylor6": 6}.get(expansion)
    for c in H.cosines:
        if order is None:
            if not np.any(c.w):
                M = M + (-c.amplitude * math.cos(c.offset)) * sparse.identity(D, dtype=complex, format="csr")
                continue
            ops = [
                _shift(d, w) if bs == "charge" else displacement_matrix(float(w) * math.sqrt(m.zeta / 2.0), d)
                for w, m, d, bs in zip(c.w, modes, dims, bases)
            ]
            E = np.exp(1j * c.offset) * _skron_all(ops)
            M = M + (-0.5 * c.amplitude) * (E + E.conj().T)
        else:
            M = M + taylor_cosine(c, modes, dims, order)
    # constants depend on n_g and flux, so they are kept for sweeps
    q_const = 0.5 * float(H.Q0 @ H.Cinv @ H.Q0) + H.constant
    if q_const:
        M = M + q_const * sparse.identity(D, dtype=complex, format="csr")
    M = (0.5 * (M + M.conj().T)).tocsr()
    M.eliminate_zeros()
    data = M if D > DENSE_LIMIT else M.toarray()
    return OperatorMatrix(data, dims, True, modes, notes, bases)


def charge_operator(op: OperatorMatrix, i: int) -> sparse.csr_matrix:
    """Conjugate charge of coordinate ``i`` embedded in the space of ``op``.

    In a Fock basis this is ``i(b^dag - b)/sqrt(2 zeta)``, in the charge
    basis the diagonal of integer charges, matching the Hamiltonian.
    """
    d = op.dims[i]
    if op.bases and op.bases[i] == "charge":
        q = np.diag(_charge_values(d)).astype(complex)
    else:
        q = flux_charge_ops(op.modes[i].zeta, d)[1]
    return _sembed(q, i, op.dims)


# ----------------------------------------------------------------------------
# diagonalisation


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    for j in range(out.shape[1]):
        k = np.argmax(np.abs(out[:, j]) - 1e-12 * np.arange(out.shape[0]))
        ph = out[k, j] / abs(out[k, j])
        out[:, j] /= ph
    return out


def spectrum(H, k: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Lowest ``k`` eigenpairs, ascending, with a fixed phase convention."""
    A = H.data if isinstance(H, OperatorMatrix) else H
    if sparse.issparse(A):
        dev = abs(A - A.conj().T).max() if A.nnz else 0.0
    else:
        A = np.asarray(A)
        dev = np.abs(A - A.conj().T).max() if A.size else 0.0
    if dev >= HERMITIAN_TOL:
        raise NonHermitianInput(f"matrix is not Hermitian (max deviation {dev:.3g})")
    size = A.shape[0]
    k = size if k is None else min(k, size)
    if size > DENSE_LIMIT and k < size - 1:
        vals, vecs = spla.eigsh(A, k=k, which="SA", tol=1e-12)
        idx = np.argsort(vals)
        vals, vecs = vals[idx], vecs[:, idx]
    else:
        dense = A.toarray() if sparse.issparse(A) else A
        vals, vecs = np.linalg.eigh(dense)
        vals, vecs = vals[:k], vecs[:, :k]
    return vals, _fix_phase(vecs)


@dataclass
class ConvergedSpectrum:
    energies: np.ndarray
    dims: List[int]
    converged: bool
    drift: float
    H: OperatorMatrix


def compact_caps(H: ClassicalHamiltonian, max_dim: int = 160) -> List[int]:
    """Largest useful cutoff per coordinate.

    For a coordinate with no inductive or linear term the potential is
    2 pi periodic, and oscillator states reaching into the neighbouring
    well would add spurious copies of the spectrum. Such coordinates are
    capped so that the basis extent ``sqrt(2 zeta d) |w|`` stays below
    ``COMPACT_EXTENT``.
    """
    modes = mode_quantizations(H, [2] * H.n)
    caps = []
    for i, m in enumerate(modes):
        free = np.all(np.abs(H.Linv[i]) < 1e-14) and abs(H.linear[i]) < 1e-14
        wmax = max((abs(c.w[i]) for c in H.cosines), default=0.0)
        if free and wmax > 0:
            caps.append(max(4, min(max_dim, int(COMPACT_EXTENT**2 / (2 * m.zeta * wmax**2)))))
        else:
            caps.append(max_dim)
    return caps


def converged_spectrum(
    H: ClassicalHamiltonian,
    levels: int = 4,
    expansion: str = "exact",
    start: Union[int, Sequence[int]] = 10,
    max_dim: int = 160,
    rtol: float = 1e-8,
    bases: Union[str, Sequence[str]] = "auto",
) -> ConvergedSpectrum:
    """Double every cutoff until the lowest four levels move less than ``rtol``.

    The relative change is measured against the largest of the levels. The
    result is flagged ``converged=False`` if the caps are hit first.
    """
    Hq = prepare_quantum(H)
    caps = compact_caps(Hq, max_dim) if expansion != "exact" else [max_dim] * Hq.n
    dims = [int(start)] * Hq.n if np.isscalar(start) else list(start)
    dims = [min(d, c) for d, c in zip(dims, caps)]
    nchk = max(4, levels)
    prev = None
    drift = np.inf
    while True:
        op = build_fock_hamiltonian(Hq, dims, expansion, bases=bases)
        vals, _ = spectrum(op, min(nchk, op.size))
        if prev is not None:
            m = min(4, len(vals), len(prev))
            scale = max(np.abs(prev[:m]).max(), 1e-300)
            drift = float(np.max(np.abs(vals[:m] - prev[:m])) / scale)
            if drift < rtol:
                return ConvergedSpectrum(vals[:levels], dims, True, drift, op)
        nxt = [min(2 * d, c) for d, c in zip(dims, caps)]
        if nxt == dims or int(np.prod(nxt)) > 4 * DENSE_LIMIT:
            return ConvergedSpectrum(vals[:levels], dims, False, drift, op)
        prev, dims = vals, nxt
