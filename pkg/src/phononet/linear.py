"""First-moment (Heisenberg) dynamics of the bosonized five-mode chain.

Mode order is (S1, a1, b, a2, S2). A DriftMatrix holds A with da/dt = A a;
for Hamiltonian dynamics A = -iM with M Hermitian (the single-excitation
coupling matrix), available as ``DriftMatrix.coupling``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from .errors import ParameterError
from .model import NETWORK_LABELS


@dataclass(frozen=True)
class DriftMatrix:
    modes: Tuple[str, ...]
    matrix: np.ndarray
    metadata: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (len(self.modes), len(self.modes)):
            raise ParameterError(f"drift matrix shape {m.shape} does not match {len(self.modes)} modes")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def coupling(self) -> np.ndarray:
        """M = i A."""
        return 1j * self.matrix

    def is_hamiltonian(self, tol: float = 1e-12) -> bool:
        M = self.coupling
        return bool(np.abs(M - M.conj().T).max() <= tol * max(1.0, np.abs(M).max()))

    def index(self, mode: str) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise ParameterError(f"unknown mode {mode!r} (modes: {list(self.modes)})") from None


def build_drift(g: float, G: float, delta1: float = 0.0, delta2: float = 0.0) -> DriftMatrix:
    """Five-mode drift in the resonator-1 frame (b at delta1, a2 and S2 at delta1 - delta2)."""
    M = np.zeros((5, 5))
    M[0, 1] = M[1, 0] = G
    M[1, 2] = M[2, 1] = g
    M[2, 3] = M[3, 2] = g
    M[3, 4] = M[4, 3] = G
    M[2, 2] = delta1
    M[3, 3] = M[4, 4] = delta1 - delta2
    return DriftMatrix(NETWORK_LABELS, -1j * M, {"g": g, "G": G, "delta1": delta1, "delta2": delta2})


def effective_drift(G: float) -> DriftMatrix:
    """Two-mode beam splitter on (S-, a-)."""
    M = np.array([[0.0, G], [G, 0.0]])
    return DriftMatrix(("S-", "a-"), -1j * M, {"G": G})


def gamma(g: float, G: float) -> float:
    """Collective rate sqrt(2 g^2 + G^2)."""
    return math.sqrt(2 * g * g + G * G)


def closed_form_S1(t: float, g: float, G: float) -> np.ndarray:
    """
    Coefficients of S1(t) over (b, a+, a-, S+, S-) at zero detuning,
    with x+- = (x1 +- x2)/sqrt(2).
    """
    Gam = gamma(g, G)
    if Gam == 0:
        return np.array([0, 0, 0, 1, 1], dtype=complex) / math.sqrt(2)
    r = 1 / math.sqrt(2)
    c = math.cos(Gam * t) - 1.0
    return np.array(
        [
            g * G / Gam**2 * c,
            -1j * G * math.sin(Gam * t) * r / Gam,
            -1j * math.sin(G * t) * r,
            r * (1 + G**2 / Gam**2 * c),
            r * math.cos(G * t),
        ],
        dtype=complex,
    )


def transfer_condition(g: float, n: int) -> float:
    """G with sqrt(2 g^2 + G^2) = 2 n G, i.e. G = g sqrt(2 / (4n^2 - 1))."""
    if int(n) != n or n < 1:
        raise ParameterError(f"transfer order n must be an integer >= 1, got {n}")
    if g < 0:
        raise ParameterError(f"g must be >= 0, got {g}")
    return g * math.sqrt(2.0 / (4 * n * n - 1))


def propagator(M: DriftMatrix, t: float) -> np.ndarray:
    """exp(A t)."""
    if M.is_hamiltonian():
        w, V = la.eigh(M.coupling)
        return (V * np.exp(-1j * w * t)) @ V.conj().T
    return la.expm(M.matrix * t)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    values: np.ndarray  # (len(times), n_modes)
    modes: Tuple[str, ...]

    def column(self, mode: str) -> np.ndarray:
        return self.values[:, self.modes.index(mode)]

    def as_rows(self) -> Sequence[Dict[str, float]]:
        rows = []
        for t, row in zip(self.times, self.values):
            rec = {"t": float(t)}
            rec.update({m: float(np.real(v)) for m, v in zip(self.modes, row)})
            rows.append(rec)
        return rows


def propagate_amplitudes(M: DriftMatrix, a0: Sequence[complex], t_grid: Sequence[float]) -> Trajectory:
    a0 = np.asarray(a0, dtype=complex)
    if a0.shape != (len(M.modes),):
        raise ParameterError(f"initial amplitude vector has shape {a0.shape}, expected ({len(M.modes)},)")
    t = np.asarray(t_grid, dtype=float)
    if M.is_hamiltonian():
        w, V = la.eigh(M.coupling)
        c = V.conj().T @ a0
        out = (V @ (np.exp(-1j * np.outer(w, t)) * c[:, None])).T
    else:
        out = np.array([la.expm(M.matrix * ti) @ a0 for ti in t])
    return Trajectory(t, out, M.modes)


def occupation_trajectory(M: DriftMatrix, n0: Sequence[float], t_grid: Sequence[float]) -> Trajectory:
    """Mean occupations for a Fock-product initial state: n_i(t) = sum_j |U_ij(t)|^2 n_j."""
    n0 = np.asarray(n0, dtype=float)
    if n0.shape != (len(M.modes),):
        raise ParameterError(f"initial occupation vector has shape {n0.shape}, expected ({len(M.modes)},)")
    t = np.asarray(t_grid, dtype=float)
    rows = [np.abs(propagator(M, ti)) ** 2 @ n0 for ti in t]
    return Trajectory(t, np.array(rows), M.modes)
