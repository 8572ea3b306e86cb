"""Driven evolution, dispersive and coupler formulas, and open-system dynamics.

Conventions: the qubit ground state is ``|0> = (1, 0)``, ``sigma_- = |0><1|``
and the free qubit Hamiltonian in a frame detuned by ``delta`` is
``(delta/2) sigma_z``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg as sla
from scipy.optimize import curve_fit
from scipy.special import erf

from .errors import (
    DivergentEffectiveInductance,
    FitFailed,
    InvalidState,
    NonHermitianInput,
    PositivityLost,
    StepTooLarge,
)
from .fockspace import ladder_ops

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-8
POSITIVITY_TOL = 1e-6

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SM = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
SP = SM.T.copy()

ISWAP = np.array([[1, 0, 0, 0], [0, 0, -1j, 0], [0, -1j, 0, 0], [0, 0, 0, 1]], dtype=complex)
TARGET_GATES = {"X": SX, "Y": SY, "Z": SZ, "I": np.eye(2, dtype=complex), "ISWAP": ISWAP}

# ----------------------------------------------------------------------------
# pulses

SHAPES = ("square", "gaussian", "cosine", "sampled")


@dataclass
class Segment:
    """``V(t) = V0 eta(t) sin(omega t + phi)`` over ``[0, tau]``."""

    shape: str = "square"
    V0: float = 1.0
    omega: float = 0.0
    phi: float = 0.0
    tau: float = 1.0
    samples: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown envelope shape {self.shape!r}")
        if not self.tau > 0:
            raise ValueError("segment duration must be positive")
        if self.shape == "sampled":
            if self.samples is None or len(self.samples) < 2:
                raise ValueError("sampled envelope needs at least two samples")
            s = np.asarray(self.samples, dtype=float)
            if not np.all(np.isfinite(s)):
                raise ValueError("envelope samples must be finite")
            self.samples = s

    def envelope(self, t):
        """Dimensionless envelope on local time ``t`` (zero outside the segment)."""
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.tau)
        if self.shape == "square":
            e = np.ones_like(t)
        elif self.shape == "gaussian":
            sig = self.tau / 6.0
            e = np.exp(-((t - self.tau / 2) ** 2) / (2 * sig**2))
        elif self.shape == "cosine":
            e = 0.5 * (1 - np.cos(2 * np.pi * t / self.tau))
        else:
            grid = np.linspace(0, self.tau, len(self.samples))
            e = np.interp(t, grid, self.samples)
        return np.where(inside, e, 0.0)

    def area(self) -> float:
        """``int_0^tau eta(t) dt``."""
        if self.shape == "square":
            return self.tau
        if self.shape == "gaussian":
            sig = self.tau / 6.0
            return sig * math.sqrt(2 * math.pi) * erf(3 / math.sqrt(2))
        if self.shape == "cosine":
            return self.tau / 2
        grid = np.linspace(0, self.tau, len(self.samples))
        return float(np.trapezoid(self.samples, grid))

    def to_dict(self) -> dict:
        d = {"shape": self.shape, "V0": self.V0, "omega": self.omega, "phi": self.phi, "tau": self.tau}
        if self.samples is not None:
            d["samples"] = [float(x) for x in self.samples]
        return d


@dataclass
class PulseSequence:
    segments: List[Segment] = field(default_factory=list)

    @classmethod
    def from_dict(cls, doc: dict) -> "PulseSequence":
        segs = []
        for s in doc.get("segments", []):
            kw = {k: s[k] for k in ("shape", "V0", "omega", "phi", "tau", "samples") if k in s}
            segs.append(Segment(**kw))
        return cls(segs)

    @property
    def duration(self) -> float:
        return float(sum(s.tau for s in self.segments))

    def starts(self) -> List[float]:
        return list(np.cumsum([0.0] + [s.tau for s in self.segments])[:-1])

    def locate(self, t: float) -> Tuple[Optional[Segment], float]:
        for s, t0 in zip(self.segments, self.starts()):
            if t0 <= t <= t0 + s.tau:
                return s, t - t0
        return None, 0.0

    def envelope(self, t: float) -> float:
        s, tl = self.locate(t)
        return float(s.envelope(tl)) if s else 0.0

    def voltage(self, t: float) -> float:
        s, tl = self.locate(t)
        if s is None:
            return 0.0
        return float(s.V0 * s.envelope(tl) * math.sin(s.omega * t + s.phi))

    def theta(self, Omega: float) -> List[float]:
        """Rotation angle ``Omega V0 int eta`` of each segment."""
        return [Omega * s.V0 * s.area() for s in self.segments]


def amplitude_for_angle(theta: float, Omega: float, shape: str, tau: float) -> float:
    """``V0`` giving rotation angle ``theta`` for the named envelope."""
    return theta / (Omega * Segment(shape, 1.0, 0.0, 0.0, tau).area())


def default_dt(omega_max: float, tau: float) -> float:
    """``min(1 / (50 omega_max), tau / 1000)``."""
    cands = [tau / 1000.0]
    if omega_max > 0:
        cands.append(1.0 / (50.0 * omega_max))
    return min(cands)


# ----------------------------------------------------------------------------
# drive Hamiltonians


def rabi_coefficient(C_ext: float, C: float, zeta: float) -> float:
    """``Omega = C_ext / [sqrt(2 zeta) (C + C_ext)]``."""
    if C_ext <= 0 or C <= 0:
        raise ValueError("capacitances must be positive")
    return C_ext / (math.sqrt(2 * zeta) * (C + C_ext))


@dataclass
class DriveTerm:
    """``Omega V(t) i(b^dag - b)`` on ``dim`` levels."""

    Omega: float
    operator: np.ndarray
    pulse: PulseSequence

    def __call__(self, t: float) -> np.ndarray:
        return self.Omega * self.pulse.voltage(t) * self.operator

    def transition_rates(self) -> np.ndarray:
        """Coefficient of ``|n+1><n|`` up to the phase ``i``, i.e. ``sqrt(n+1) Omega``."""
        return np.abs(np.diag(self.operator, -1)) * self.Omega


def drive_term(C_ext: float, C: float, zeta: float, V: PulseSequence, dim: int = 2) -> DriveTerm:
    b, bd = ladder_ops(dim)
    return DriveTerm(rabi_coefficient(C_ext, C, zeta), 1j * (bd - b), V)


def drive_hamiltonian(
    energies: Sequence[float],
    coupling: np.ndarray,
    pulse: PulseSequence,
    frame: str = "drive",
    frame_frequency: Optional[float] = None,
) -> Callable[[float], np.ndarray]:
    """``H(t)`` for levels ``energies`` driven by ``V(t) * coupling``.

    frame="drive" rotates every level ``n`` at ``n * frame_frequency``
    (default: the carrier of the first segment) and keeps the co-rotating
    nearest-level terms, so a resonant drive is time independent apart from
    its envelope. frame="qubit" is the exact interaction picture of the
    bare levels, with no rotating-wave approximation.
    """
    E = np.asarray(energies, dtype=float)
    E = E - E[0]
    A = np.asarray(coupling, dtype=complex)
    d = len(E)
    if A.shape != (d, d):
        raise ValueError("coupling matrix must match the number of levels")
    if frame == "qubit":
        def H(t: float) -> np.ndarray:
            ph = np.exp(1j * E * t)
            return pulse.voltage(t) * (ph[:, None] * A * ph.conj()[None, :])

        return H
    if frame != "drive":
        raise ValueError("frame must be 'drive' or 'qubit'")
    wf = frame_frequency
    if wf is None:
        wf = pulse.segments[0].omega if pulse.segments else 0.0
    n = np.arange(d)
    H0 = np.diag(E - n * wf).astype(complex)
    low = np.diag(np.diag(A, -1), -1)  # |n+1><n| elements

    def H(t: float) -> np.ndarray:
        s, tl = pulse.locate(t)
        if s is None:
            return H0.copy()
        c = 0.5j * s.V0 * float(s.envelope(tl)) * np.exp(-1j * s.phi) * np.exp(1j * (wf - s.omega) * t)
        up = c * low
        return H0 + up + up.conj().T

    return H


# ----------------------------------------------------------------------------
# unitary evolution

_C1, _C2 = 0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6
_A1, _A2 = 0.25 + math.sqrt(3) / 6, 0.25 - math.sqrt(3) / 6


def _expm_herm(Hs: np.ndarray, h: float) -> np.ndarray:
    """``exp(-i h H)`` for a stack of Hermitian matrices."""
    w, V = np.linalg.eigh(Hs)
    return (V * np.exp(-1j * h * w)[..., None, :]) @ np.swapaxes(V.conj(), -1, -2)


def _check_hermitian(H: np.ndarray, t: float):
    if np.abs(H - H.conj().T).max() >= HERMITIAN_TOL:
        raise NonHermitianInput(f"Hamiltonian is not Hermitian at t = {t:.6g}")


def _steps(T: float, dt: float) -> Tuple[int, float]:
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return n, T / n


def evolve_unitary(Hfn: Callable[[float], np.ndarray], T: float, dt: float, t0: float = 0.0) -> np.ndarray:
    """Time-ordered propagator from ``t0`` to ``t0 + T``.

    Fourth-order commutator-free Magnus scheme: each step is
    ``exp(-ih(a2 H1 + a1 H2)) exp(-ih(a1 H1 + a2 H2))`` with ``H1, H2`` at
    the two Gauss points. The step count is ``ceil(T/dt)``.
    """
    n, h = _steps(T, dt)
    t = t0 + h * np.arange(n)
    H1 = np.array([Hfn(x) for x in t + _C1 * h], dtype=complex)
    H2 = np.array([Hfn(x) for x in t + _C2 * h], dtype=complex)
    dev = max(np.abs(H1 - np.swapaxes(H1.conj(), 1, 2)).max(), np.abs(H2 - np.swapaxes(H2.conj(), 1, 2)).max())
    if dev >= HERMITIAN_TOL:
        raise NonHermitianInput(f"Hamiltonian is not Hermitian (max deviation {dev:.3g})")
    norm = max(np.abs(np.linalg.eigvalsh(H1)).max(), np.abs(np.linalg.eigvalsh(H2)).max())
    if norm * h > math.pi:
        raise StepTooLarge(f"step {h:.3g} too large for spectral radius {norm:.3g}")
    first = _expm_herm(_A1 * H1 + _A2 * H2, h)
    second = _expm_herm(_A2 * H1 + _A1 * H2, h)
    d = H1.shape[1]
    U = np.eye(d, dtype=complex)
    for k in range(n):
        U = second[k] @ (first[k] @ U)
    err = np.abs(U.conj().T @ U - np.eye(d)).max()
    if err > UNITARY_TOL:
        raise StepTooLarge(f"propagator lost unitarity ({err:.3g})")
    return U


def gate_fidelity(U: np.ndarray, target: np.ndarray, subspace: Optional[int] = None) -> float:
    """``|tr(target^dag U)| / d``, optionally on the lowest ``subspace`` levels of each factor."""
    U = np.asarray(U)
    if subspace is not None and U.shape[0] != target.shape[0]:
        U = U[:subspace, :subspace]
    d = target.shape[0]
    return float(abs(np.trace(target.conj().T @ U)) / d)


def state_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    s = sla.sqrtm(rho)
    return float(np.real(np.trace(sla.sqrtm(s @ sigma @ s))) ** 2)


def swap_hamiltonian(g: float, envelope: Callable[[float], float]) -> Callable[[float], np.ndarray]:
    """``g eta(t) (s1+ s2- + s1- s2+)`` for two qubits."""
    op = np.kron(SP, SM) + np.kron(SM, SP)
    return lambda t: g * envelope(t) * op


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    return np.real([np.trace(rho @ SX), np.trace(rho @ SY), np.trace(rho @ SZ)])


# ----------------------------------------------------------------------------
# open systems


@dataclass
class NoiseModel:
    Gamma_minus: float = 0.0
    Gamma_plus: float = 0.0
    Gamma_phi: float = 0.0

    def __post_init__(self):
        for k in ("Gamma_minus", "Gamma_plus", "Gamma_phi"):
            if getattr(self, k) < 0:
                raise InvalidState(f"{k} must be non-negative")

    @property
    def Gamma1(self) -> float:
        return self.Gamma_plus + self.Gamma_minus

    @property
    def Gamma2(self) -> float:
        return self.Gamma1 / 2 + self.Gamma_phi

    @classmethod
    def from_dict(cls, doc: dict) -> "NoiseModel":
        return cls(float(doc.get("Gamma_minus", 0.0)), float(doc.get("Gamma_plus", 0.0)), float(doc.get("Gamma_phi", 0.0)))

    def jump_operators(self, dim: int = 2) -> List[Tuple[float, np.ndarray]]:
        """``(rate, L)`` pairs; the dephasing operator is ``1 - 2n``
        (``sigma_z`` for a qubit) at rate ``Gamma_phi / 2`` so that
        coherences decay at ``Gamma_2``."""
        b, bd = ladder_ops(dim)
        if dim == 2:
            b, bd = SM.real, SP.real
        zop = np.diag(1.0 - 2.0 * np.arange(dim))
        return [(self.Gamma_minus, b), (self.Gamma_plus, bd), (self.Gamma_phi / 2, zop)]


def validate_density(rho: np.ndarray, tol_herm: float = 1e-10, tol_tr: float = 1e-9, tol_pos: float = 1e-9) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidState("density matrix must be square")
    if np.abs(rho - rho.conj().T).max() > tol_herm:
        raise InvalidState("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol_tr:
        raise InvalidState(f"density matrix trace is {np.trace(rho).real:.12g}")
    if np.linalg.eigvalsh(rho).min() < -tol_pos:
        raise InvalidState("density matrix has negative eigenvalues")
    return rho


def _dissipator(jumps, d: int) -> np.ndarray:
    """Column-stacked superoperator of ``sum G (L rho L^dag - {L^dag L, rho}/2)``."""
    I = np.eye(d)
    D = np.zeros((d * d, d * d), dtype=complex)
    for g, L in jumps:
        if g == 0:
            continue
        LdL = L.conj().T @ L
        D += g * (np.kron(L.conj(), L) - 0.5 * np.kron(I, LdL) - 0.5 * np.kron(LdL.T, I))
    return D


def liouvillian(H: np.ndarray, jumps, d: Optional[int] = None) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    d = H.shape[0]
    I = np.eye(d)
    return -1j * (np.kron(I, H) - np.kron(H.T, I)) + _dissipator(jumps, d)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, d, d)

    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.states))

    def expect(self, op: np.ndarray) -> np.ndarray:
        return np.real(np.einsum("tij,ji->t", self.states, op))


def _rk4_matrix(L: np.ndarray, h: float) -> np.ndarray:
    hL = h * L
    P = np.eye(L.shape[0], dtype=complex)
    term = P.copy()
    for k in range(1, 5):
        term = term @ hL / k
        P = P + term
    return P


def lindblad_evolve(
    H: Union[np.ndarray, Callable[[float], np.ndarray]],
    noise: NoiseModel,
    rho0: np.ndarray,
    T: float,
    dt: float,
    sample_every: int = 1,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate the Lindblad equation with classical fourth-order Runge-Kutta.

    Every stored sample is checked for trace (1e-9), Hermiticity and
    positivity; a minimum eigenvalue below ``-1e-6`` raises ``PositivityLost``.
    """
    rho0 = validate_density(rho0)
    d = rho0.shape[0]
    jumps = noise.jump_operators(d)
    n, h = _steps(T, dt)
    const = not callable(H)
    if const:
        Hm = np.asarray(H, dtype=complex)
        _check_hermitian(Hm, t0)
        P = _rk4_matrix(liouvillian(Hm, jumps), h)
    else:
        D = _dissipator(jumps, d)
        I = np.eye(d)

        def Lt(t):
            Ht = np.asarray(H(t), dtype=complex)
            _check_hermitian(Ht, t)
            return -1j * (np.kron(I, Ht) - np.kron(Ht.T, I)) + D

    v = rho0.reshape(-1, order="F")
    times, states = [t0], [rho0]
    for k in range(n):
        t = t0 + k * h
        if const:
            v = P @ v
        else:
            La, Lb, Lc = Lt(t), Lt(t + h / 2), Lt(t + h)
            k1 = La @ v
            k2 = Lb @ (v + h / 2 * k1)
            k3 = Lb @ (v + h / 2 * k2)
            k4 = Lc @ (v + h * k3)
            v = v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (k + 1) % sample_every == 0 or k == n - 1:
            rho = v.reshape(d, d, order="F")
            rho = 0.5 * (rho + rho.conj().T)
            if abs(np.trace(rho) - 1) > 1e-9:
                raise PositivityLost(f"trace drifted to {np.trace(rho).real:.12g} at t = {t + h:.6g}")
            if np.linalg.eigvalsh(rho).min() < -POSITIVITY_TOL:
                raise PositivityLost(f"negative eigenvalue at t = {t + h:.6g}; reduce dt")
            times.append(t + h)
            states.append(rho)
    return Trajectory(np.array(times), np.array(states))


def steady_state(H: np.ndarray, noise: NoiseModel) -> np.ndarray:
    """Null vector of the Liouvillian, normalised to unit trace."""
    H = np.asarray(H, dtype=complex)
    d = H.shape[0]
    L = liouvillian(H, noise.jump_operators(d))
    w, V = np.linalg.eig(L)
    v = V[:, np.argmin(np.abs(w))].reshape(d, d, order="F")
    v = v / np.trace(v)
    return 0.5 * (v + v.conj().T)


def pure_state_rho(alpha: complex, beta: complex) -> np.ndarray:
    psi = np.array([alpha, beta], dtype=complex)
    return np.outer(psi, psi.conj())


def bloch_redfield_rho(alpha: complex, beta: complex, Gamma1: float, Gamma2: float, delta: float, t: float) -> np.ndarray:
    """Closed-form qubit density matrix under relaxation to ``|0>`` and dephasing.

    Solution of the Lindblad equation with ``H = (delta/2) sigma_z``,
    ``Gamma_plus = 0`` and coherence decay ``Gamma2``.
    """
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1) > 1e-10:
        raise InvalidState("|alpha|^2 + |beta|^2 must equal 1")
    if Gamma1 < 0 or Gamma2 < Gamma1 / 2 - 1e-15:
        raise InvalidState("need Gamma1 >= 0 and Gamma2 >= Gamma1/2")
    e1 = math.exp(-Gamma1 * t)
    c = alpha * np.conj(beta) * np.exp(-1j * delta * t) * math.exp(-Gamma2 * t)
    return np.array([[1 + (abs(alpha) ** 2 - 1) * e1, c], [np.conj(c), abs(beta) ** 2 * e1]], dtype=complex)


def rates_from_psd(S: np.ndarray, psd: Callable[[float], float], omega_q: float) -> Dict[str, float]:
    """Golden-rule ``Gamma1 = |<0|S|1>|^2 S(omega_q)`` and
    ``Gamma_phi = |<0|S|0> - <1|S|1>|^2 S(0)``."""
    S = np.asarray(S.dense() if hasattr(S, "dense") else S)
    s_q, s_0 = float(psd(omega_q)), float(psd(0.0))
    if s_q < 0 or s_0 < 0:
        raise ValueError("power spectral density must be non-negative")
    g1 = abs(S[0, 1]) ** 2 * s_q
    gphi = abs(S[0, 0] - S[1, 1]) ** 2 * s_0
    return {"Gamma1": float(g1), "Gamma_phi": float(gphi)}


# ----------------------------------------------------------------------------
# fits


def fit_exponential(t: np.ndarray, y: np.ndarray) -> Dict[str, float]:
    """Fit ``a e^{-G t} + c``."""
    t, y = np.asarray(t, float), np.asarray(y, float)
    g0 = 1.0 / max(t[-1] - t[0], 1e-300)
    try:
        p, _ = curve_fit(lambda x, a, G, c: a * np.exp(-G * x) + c, t, y, p0=[y[0] - y[-1], g0, y[-1]], maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitFailed(f"exponential fit failed: {exc}") from exc
    if not np.all(np.isfinite(p)) or p[1] <= 0:
        raise FitFailed("exponential fit returned a non-positive rate")
    return {"amplitude": float(p[0]), "rate": float(p[1]), "offset": float(p[2])}


def t1_experiment(noise: NoiseModel, T: float, dt: float, samples: int = 200) -> Dict[str, object]:
    """Relax from ``|1>`` with ``H = 0`` and fit the excited population."""
    n, _ = _steps(T, dt)
    tr = lindblad_evolve(np.zeros((2, 2)), noise, pure_state_rho(0, 1), T, dt, max(1, n // samples))
    p1 = tr.populations()[:, 1]
    fit = fit_exponential(tr.times, p1)
    return {"times": tr.times, "p1": p1, "Gamma1": fit["rate"], "fit": fit, "trajectory": tr}


def ramsey_signal(delta: float, noise: NoiseModel, T: float, dt: float, samples: int = 400) -> Tuple[np.ndarray, np.ndarray]:
    """Excited population after ``pi/2 - wait - pi/2`` with ideal pulses.

    The free evolution between the pulses is integrated with
    ``lindblad_evolve`` under ``H = (delta/2) sigma_z``.
    """
    Rx = sla.expm(-0.25j * math.pi * SX)
    rho = Rx @ pure_state_rho(1, 0) @ Rx.conj().T
    n, _ = _steps(T, dt)
    tr = lindblad_evolve(0.5 * delta * SZ, noise, rho, T, dt, max(1, n // samples))
    out = np.einsum("ij,tjk,lk->til", Rx, tr.states, Rx.conj())
    return tr.times, np.real(out[:, 1, 1])


def fit_ramsey(t: np.ndarray, p: np.ndarray) -> Dict[str, float]:
    """Fit ``c + a e^{-G t} cos(w t + phi)``; without a resolvable oscillation
    the result is a pure decay with ``delta = 0``."""
    t, p = np.asarray(t, float), np.asarray(p, float)
    y = p - p.mean()
    spec = np.abs(np.fft.rfft(y * np.hanning(len(y))))
    freqs = np.fft.rfftfreq(len(t), t[1] - t[0]) * 2 * np.pi
    k = int(np.argmax(spec))
    if k == 0:
        fit = fit_exponential(t, p)
        return {"delta": 0.0, "Gamma2": fit["rate"], "amplitude": fit["amplitude"], "offset": fit["offset"]}
    w0 = freqs[k]
    env = np.abs(y).max()
    model = lambda x, c, a, G, w, ph: c + a * np.exp(-G * x) * np.cos(w * x + ph)
    try:
        pr, _ = curve_fit(model, t, p, p0=[p.mean(), env, 1.0 / (t[-1] - t[0]), w0, 0.0], maxfev=40000)
    except (RuntimeError, ValueError) as exc:
        raise FitFailed(f"Ramsey fit failed: {exc}") from exc
    c, a, G, w, ph = pr
    if abs(w) * (t[-1] - t[0]) < math.pi / 2:
        # less than a quarter period in the window: no resolvable oscillation
        fit = fit_exponential(t, p)
        return {"delta": 0.0, "Gamma2": fit["rate"], "amplitude": fit["amplitude"], "offset": fit["offset"]}
    if not np.all(np.isfinite(pr)) or G <= 0:
        raise FitFailed("Ramsey fit returned a non-positive decay rate")
    return {"delta": float(abs(w)), "Gamma2": float(G), "amplitude": float(a), "offset": float(c)}


# ----------------------------------------------------------------------------
# dispersive regime and couplers


def dispersive_params(
    g: float,
    Delta: float,
    alpha: Optional[float] = None,
    omega_q: Optional[float] = None,
    omega_r: Optional[float] = None,
) -> Dict[str, object]:
    """Dispersive shift and its validity.

    ``chi = g^2 / Delta`` for a two-level system, and
    ``chi = -(g^2 / Delta) / (1 + Delta / alpha)`` when the anharmonicity
    is supplied. ``N_c = Delta^2 / (4 g^2)`` is the critical photon number.
    """
    if Delta == 0:
        raise ValueError("detuning must be nonzero")
    chi2 = g * g / Delta
    chi = chi2 if alpha is None else -(g * g / Delta) / (1 + Delta / alpha)
    nc = Delta**2 / (4 * g * g) if g else math.inf
    valid = abs(Delta) >= 10 * abs(g)
    if not valid:
        warnings.warn(f"|Delta| = {abs(Delta):.3g} is not much larger than g = {abs(g):.3g}", RuntimeWarning)
    out = {"chi": chi, "chi_two_level": chi2, "N_c": nc, "dispersive": valid}
    if omega_q is not None:
        out["omega_q_dressed"] = omega_q + chi
    if omega_r is not None:
        out["omega_r_pulled"] = (omega_r - chi, omega_r + chi)
    return out


def jaynes_cummings(omega_r: float, omega_q: float, g: float, n_max: int = 20) -> np.ndarray:
    """``omega_r b^dag b + omega_q |e><e| + g(|e><g| b + h.c.)``, qubit factor first."""
    b, bd = ladder_ops(n_max)
    e = np.diag([0.0, 1.0])
    up = np.array([[0, 0], [1, 0]], dtype=float)  # |e><g|
    return (
        omega_r * np.kron(np.eye(2), bd @ b)
        + omega_q * np.kron(e, np.eye(n_max))
        + g * (np.kron(up, b) + np.kron(up.T, bd))
    )


def jc_resonator_pull(omega_r: float, omega_q: float, g: float, n_max: int = 20) -> Dict[str, float]:
    """Resonator frequency with the qubit in ``|g>`` and ``|e>`` from exact diagonalisation.

    States are identified by overlap with the bare ``|q, n>`` states.
    """
    H = jaynes_cummings(omega_r, omega_q, g, n_max)
    w, V = np.linalg.eigh(H)

    def level(q, n):
        idx = q * n_max + n
        return w[np.argmax(np.abs(V[idx, :]))]

    wg = level(0, 1) - level(0, 0)
    we = level(1, 1) - level(1, 0)
    return {"omega_r_g": float(wg), "omega_r_e": float(we), "pull": float((we - wg) / 2)}


def tunable_coupler_g(
    g1g: float, g2g: float, g12: float, Delta1: float, Delta2: float, Sigma1: float, Sigma2: float
) -> Dict[str, float]:
    """Effective coupling and dressed-frequency shifts of the capacitive coupler.

    ``g12_eff = g12 + (g1g g2g / 2)(1/D1 + 1/D2 - 1/S1 - 1/S2)``,
    ``shift_j = g_jg^2 (1/D_j - 1/S_j)``.
    """
    ge = g12 + 0.5 * g1g * g2g * (1 / Delta1 + 1 / Delta2 - 1 / Sigma1 - 1 / Sigma2)
    return {
        "g_eff": float(ge),
        "shift1": float(g1g**2 * (1 / Delta1 - 1 / Sigma1)),
        "shift2": float(g2g**2 * (1 / Delta2 - 1 / Sigma2)),
    }


def capacitive_couplings(Cinv: np.ndarray, zetas: Sequence[float]) -> np.ndarray:
    """``g_ij = (C^-1)_ij / (2 sqrt(zeta_i zeta_j))``, zero diagonal."""
    z = np.sqrt(np.asarray(zetas, float))
    g = np.asarray(Cinv, float) / (2 * np.outer(z, z))
    np.fill_diagonal(g, 0.0)
    return g


def coupled_modes_hamiltonian(
    omegas: Sequence[float], g: np.ndarray, alphas: Optional[Sequence[float]] = None, dim: int = 4
) -> np.ndarray:
    """``sum w b^dag b + a/2 b^dag b^dag b b + sum_{i<j} g_ij (b_i^dag b_j + b_i b_j^dag - b_i^dag b_j^dag - b_i b_j)``."""
    n = len(omegas)
    alphas = [0.0] * n if alphas is None else list(alphas)
    b, bd = ladder_ops(dim)
    I = np.eye(dim)

    def emb(op, i):
        ops = [I] * n
        ops[i] = op
        out = ops[0]
        for o in ops[1:]:
            out = np.kron(out, o)
        return out

    B = [emb(b, i) for i in range(n)]
    H = np.zeros((dim**n, dim**n))
    for i in range(n):
        Bd = B[i].T
        H += omegas[i] * Bd @ B[i] + 0.5 * alphas[i] * Bd @ Bd @ B[i] @ B[i]
        for j in range(i + 1, n):
            if g[i, j]:
                H += g[i, j] * (Bd @ B[j] + B[i] @ B[j].T - Bd @ B[j].T - B[i] @ B[j])
    return H


def single_excitation_splitting(H: np.ndarray, n_modes: int, dim: int, pair: Tuple[int, int] = (0, 1)) -> float:
    """Gap between the two eigenstates with most weight on single excitations of ``pair``."""
    w, V = np.linalg.eigh(H)
    idx = []
    for m in pair:
        occ = [0] * n_modes
        occ[m] = 1
        idx.append(int(np.ravel_multi_index(occ, [dim] * n_modes)))
    weight = np.abs(V[idx, :]) ** 2
    total = weight.sum(axis=0)
    top = np.argsort(-total)[:2]
    return float(abs(w[top[1]] - w[top[0]]))


def gmon_coupling(
    L1: float, L2: float, LJ1: float, LJ2: float, Lg: float, delta: float, zeta1: float, zeta2: float
) -> Dict[str, float]:
    """Gmon mutual inductance and swap coupling in the harmonic weak-coupling limit.

    ``M = L1 L2 / (L1 + L2 + Lg / cos delta)`` is evaluated as
    ``L1 L2 cos delta / ((L1 + L2) cos delta + Lg)``, which is finite at
    ``cos delta = 0`` and diverges only where the denominator vanishes.
    """
    c = math.cos(delta)
    den = (L1 + L2) * c + Lg
    if abs(den) < 1e-12 * max(Lg, L1 + L2):
        raise DivergentEffectiveInductance(f"mutual inductance diverges at delta = {delta:.6g}")
    M = L1 * L2 * c / den
    Lq1, Lq2 = LJ1 + L1 - M, LJ2 + L2 - M
    if min(abs(Lq1), abs(Lq2)) < 10 * abs(M):
        warnings.warn("weak-coupling condition L_q >> M is not satisfied", RuntimeWarning)
    Gamma = -M / (Lq1 * Lq2)
    g = 0.5 * Gamma * math.sqrt(zeta1 * zeta2)
    L_eff = Lg / c if abs(c) > 1e-300 else math.inf
    return {"L_eff": L_eff, "M": M, "L_q1": Lq1, "L_q2": Lq2, "Gamma": Gamma, "g": g}
