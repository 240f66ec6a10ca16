"""Uhlmann fidelity, ideal swap targets and Bloch-sphere lower-bound scans."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la

from .errors import InvalidStateError, ParameterError, PhononetError, ScanPointError
from .hilbert import BOSON, POSITIVITY_FLOOR, DensityState, partial_trace

log = logging.getLogger(__name__)

STATE_VS_STATE = "state_vs_state"
SWAP_TARGET = "uhlmann_vs_target_swap"
LOWER_BOUND = "lower_bound_scan"

DEFAULT_MESH = 64
MIN_MESH = 16
DOUBLING_TOL = 1e-3
RANK_ONE_TOL = 1e-12
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class ScanDetail:
    mesh_size: int
    worst_theta: float
    worst_phi: float
    points: Tuple[Tuple[float, float, float], ...]
    doubled_bound: Optional[float] = None
    mesh_converged: Optional[bool] = None

    def rows(self) -> List[dict]:
        return [{"theta": t, "phi": p, "fidelity": f} for t, p, f in self.points]


@dataclass(frozen=True)
class FidelityReport:
    value: float
    kind: str
    scan_detail: Optional[ScanDetail] = None
    leakage: Optional[float] = None
    notes: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not (-1e-9 <= self.value <= 1 + 1e-9):
            raise InvalidStateError(f"fidelity {self.value} outside [0, 1]")
        if self.kind not in (STATE_VS_STATE, SWAP_TARGET, LOWER_BOUND):
            raise ValueError(f"unknown fidelity kind {self.kind!r}")


def _as_matrix(x: Union[DensityState, np.ndarray]) -> np.ndarray:
    if isinstance(x, DensityState):
        return x.matrix
    a = np.asarray(x, dtype=complex)
    return np.outer(a, a.conj()) if a.ndim == 1 else a


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, V = la.eigh(0.5 * (m + m.conj().T))
    if w[0] < POSITIVITY_FLOOR:
        raise InvalidStateError(f"state has eigenvalue {w[0]:.3e} below {POSITIVITY_FLOOR}")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T


def uhlmann_fidelity(rho: Union[DensityState, np.ndarray], sigma: Union[DensityState, np.ndarray]) -> float:
    """(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2. Pure or rank-one arguments take the overlap shortcut."""
    if isinstance(rho, DensityState) and isinstance(sigma, DensityState) and rho.space != sigma.space:
        raise PhononetError("uhlmann_fidelity: states live on different spaces")
    for pure, other in ((sigma, rho), (rho, sigma)):
        vec = pure.data if isinstance(pure, DensityState) and pure.is_pure else None
        if vec is None and not isinstance(pure, DensityState) and np.ndim(pure) == 1:
            vec = np.asarray(pure, dtype=complex)
        if vec is None:
            vec = _rank_one_vector(_as_matrix(pure))
        if vec is not None:
            m = _as_psd(_as_matrix(other))
            return float(np.real(np.vdot(vec, m @ vec)))
    a, b = _as_matrix(rho), _as_matrix(sigma)
    if a.shape != b.shape:
        raise PhononetError(f"uhlmann_fidelity: shapes {a.shape} and {b.shape} differ")
    s = _psd_sqrt(a)
    inner = s @ _as_psd(b) @ s
    w = la.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)


def _rank_one_vector(m: np.ndarray) -> Optional[np.ndarray]:
    """sqrt(w) v when m = w |v><v| up to RANK_ONE_TOL, else None."""
    w, V = la.eigh(0.5 * (m + m.conj().T))
    if w[-1] <= 0 or np.abs(w[:-1]).max(initial=0.0) > RANK_ONE_TOL * w[-1]:
        return None
    return math.sqrt(w[-1]) * V[:, -1]


def _as_psd(m: np.ndarray) -> np.ndarray:
    lo = la.eigvalsh(0.5 * (m + m.conj().T))[0]
    if lo < POSITIVITY_FLOOR:
        raise InvalidStateError(f"state has eigenvalue {lo:.3e} below {POSITIVITY_FLOOR}")
    return m


def state_fidelity(rho: DensityState, sigma: DensityState) -> FidelityReport:
    return FidelityReport(min(uhlmann_fidelity(rho, sigma), 1.0), STATE_VS_STATE)


def swap_unitary() -> np.ndarray:
    return np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def frame_correction(phase: complex = 1.0) -> np.ndarray:
    """Single-qubit frame diag(1, phase) picked up by |1> on the way across."""
    if not math.isclose(abs(phase), 1.0, rel_tol=1e-12):
        raise ParameterError(f"frame phase must have unit modulus, got {phase}")
    return np.diag([1.0, phase]).astype(complex)


def swap_target(rho_initial: np.ndarray, phase: complex = 1.0) -> np.ndarray:
    """(F x F) SWAP rho SWAP^dag (F x F)^dag."""
    F = frame_correction(phase)
    U = np.kron(F, F) @ swap_unitary()
    return U @ rho_initial @ U.conj().T


def logical_block(state: DensityState, labels: Sequence[str]) -> np.ndarray:
    """
    Two-logical-subsystem reduced matrix restricted to {0,1} x {0,1}, not
    renormalised; its trace deficit is the leakage out of the logical space.
    """
    if len(labels) != 2:
        raise ParameterError(f"need exactly two logical subsystems, got {list(labels)}")
    reduced = partial_trace(state, labels)
    d1, d2 = reduced.space.dims
    order = [reduced.space.index(label) for label in labels]
    m = reduced.matrix
    if order == [1, 0]:
        m = m.reshape(d1, d2, d1, d2).transpose(1, 0, 3, 2).reshape(d1 * d2, d1 * d2)
        d1, d2 = d2, d1
    idx = [i * d2 + j for i in (0, 1) for j in (0, 1)]
    return m[np.ix_(idx, idx)]


def swap_fidelity(run) -> FidelityReport:
    """
    Figure of merit for a transfer run: fidelity between the final logical state
    and SWAP (with the run's frame phase) applied to the initial logical state.
    ``run`` needs ``logical`` (two labels), ``initial_state``, ``result`` and
    optionally ``frame_phase``.
    """
    labels = getattr(run, "logical", None)
    if not labels:
        raise ParameterError("run has no logical-subsystem designation")
    initial = logical_block(run.initial_state, labels)
    final = logical_block(run.result.final_state, labels)
    phase = getattr(run, "frame_phase", 1.0)
    target = swap_target(initial / np.trace(initial).real, phase)
    leakage = max(0.0, 1.0 - float(np.trace(final).real))
    value = uhlmann_fidelity(final, target)
    space = run.initial_state.space
    bosonic = any(space.subsystem(label).kind == BOSON for label in labels)
    return FidelityReport(min(value, 1.0), SWAP_TARGET, leakage=leakage if bosonic else None)


def fibonacci_sphere(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Polar and azimuthal angles of n near-uniform points."""
    if n < 1:
        raise ParameterError(f"mesh size must be >= 1, got {n}")
    k = np.arange(n)
    z = 1.0 - (2.0 * k + 1.0) / n
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = np.mod(k * _GOLDEN_ANGLE, 2 * math.pi)
    return theta, phi


def bloch_state(theta: float, phi: float) -> np.ndarray:
    """cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>, |0> = |->."""
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)], dtype=complex)


def _scan(channel, n: int) -> List[Tuple[float, float, float]]:
    points = []
    for theta, phi in zip(*fibonacci_sphere(n)):
        try:
            f = float(channel.fidelity_for(float(theta), float(phi)))
        except PhononetError as e:
            raise ScanPointError(float(theta), float(phi), e) from e
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
            raise ScanPointError(float(theta), float(phi), e) from e
        points.append((float(theta), float(phi), f))
    return points


def lower_bound_scan(spec, mesh_size: int = DEFAULT_MESH, check_doubling: bool = True) -> FidelityReport:
    """
    Minimum swap fidelity over spin-1 initial states on a Fibonacci mesh.

    ``spec`` is a protocol spec with ``build_channel()`` or an object that
    already has ``fidelity_for(theta, phi)``. When check_doubling is set the
    mesh is doubled and a change above 1e-3 flags the bound.
    """
    if mesh_size < MIN_MESH:
        raise ParameterError(f"mesh_size must be >= {MIN_MESH}, got {mesh_size}")
    channel = spec if hasattr(spec, "fidelity_for") else spec.build_channel()
    points = _scan(channel, mesh_size)
    worst = min(points, key=lambda p: p[2])
    bound = worst[2]
    assert all(bound <= p[2] for p in points)

    doubled = None
    converged = None
    notes: Tuple[str, ...] = ()
    if check_doubling:
        doubled = min(p[2] for p in _scan(channel, 2 * mesh_size))
        converged = abs(doubled - bound) < DOUBLING_TOL
        if not converged:
            msg = f"mesh {mesh_size} bound {bound:.6f} moves to {doubled:.6f} at mesh {2 * mesh_size}"
            log.warning("[fidelity] %s", msg)
            notes = (msg,)
    detail = ScanDetail(
        mesh_size=mesh_size,
        worst_theta=worst[0],
        worst_phi=worst[1],
        points=tuple(points),
        doubled_bound=doubled,
        mesh_converged=converged,
    )
    leakage = getattr(channel, "max_leakage", None)
    return FidelityReport(min(max(bound, 0.0), 1.0), LOWER_BOUND, scan_detail=detail, leakage=leakage, notes=notes)
