"""Time evolution: Lindblad master equation and unitary propagation.

The Lindblad generator is applied directly with sparse products on the dense
density matrix, using the effective Hamiltonian
H_eff = H - (i/2) sum_k rate_k L_k^dag L_k, so that
    drho/dt = -i (H_eff rho - rho H_eff^dag) + sum_k rate_k L_k rho L_k^dag.

When H conserves total excitation number N and every L_k shifts N by a fixed
amount, rho splits into sectors of fixed N_row - N_col which evolve
independently; each sector is integrated on its own dense blocks and the
state stays in that form until an output step needs it.

Trace drift and positivity are tracked over every output step; the report
carries the worst values seen and the time of the lowest eigenvalue.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .config import default_tolerances
from .errors import ConvergenceError, ParameterError, SpaceMismatchError
from .hilbert import (
    BOSON,
    POSITIVITY_FLOOR,
    QUBIT,
    CompositeSpace,
    DensityState,
    QuantumOperator,
    bose_occupation,
    excitation_blocks,
    excitation_numbers,
    make_operator,
)
from .model import MechanicalParams, PulseSchedule, SpinParams

log = logging.getLogger(__name__)

TRACE_DRIFT_LIMIT = 1e-6
DENSE_EIGH_LIMIT = 4096
POSITIVITY_DENSE_LIMIT = 512


@dataclass(frozen=True)
class LindbladTerm:
    operator: QuantumOperator
    rate: float
    label: str = ""

    def __post_init__(self) -> None:
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise ParameterError(f"Lindblad rate must be finite and >= 0, got {self.rate} ({self.label})")


@dataclass(frozen=True)
class ScheduledHamiltonian:
    """Piecewise-constant Hamiltonian: one operator per schedule segment, starting at t=0.
    The last segment's operator also applies past the end of the schedule."""

    schedule: PulseSchedule
    operators: Tuple[QuantumOperator, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "operators", tuple(self.operators))
        if len(self.operators) != len(self.schedule.segments):
            raise ParameterError("ScheduledHamiltonian needs one operator per segment")
        for op in self.operators[1:]:
            if op.space != self.operators[0].space:
                raise SpaceMismatchError("schedule operators live on different spaces")

    @classmethod
    def from_builder(
        cls, schedule: PulseSchedule, build: Callable[[Mapping[str, float]], QuantumOperator]
    ) -> "ScheduledHamiltonian":
        return cls(schedule, tuple(build(seg.values) for seg in schedule.segments))

    @property
    def space(self) -> CompositeSpace:
        return self.operators[0].space

    def operator_at(self, t: float) -> QuantumOperator:
        return self.operators[self.schedule.segment_index(t)]


@dataclass(frozen=True)
class TimeDependentHamiltonian:
    """H(t) = static + sum_k f_k(t) A_k. The sum must be Hermitian at every t."""

    static: QuantumOperator
    terms: Tuple[Tuple[QuantumOperator, Callable[[float], complex]], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        for op, _ in self.terms:
            if op.space != self.static.space:
                raise SpaceMismatchError("time-dependent term lives on a different space")

    @property
    def space(self) -> CompositeSpace:
        return self.static.space

    def operator_at(self, t: float) -> QuantumOperator:
        m = self.static.matrix.copy()
        for op, f in self.terms:
            m = m + op.matrix * f(t)
        return QuantumOperator(self.space, m)


Hamiltonian = Union[QuantumOperator, ScheduledHamiltonian, TimeDependentHamiltonian]


@dataclass(frozen=True)
class ConvergenceReport:
    cutoffs: Dict[str, int]
    trace_drift: float
    positivity_floor: float
    rtol: float
    atol: float
    method: str
    sectors: int = 1
    converged: Optional[bool] = None
    cutoff_note: str = ""
    floor_time: Optional[float] = None

    def to_dict(self) -> Dict[str, object]:
        return {
            "cutoffs": dict(self.cutoffs),
            "trace_drift": self.trace_drift,
            "positivity_floor": self.positivity_floor,
            "rtol": self.rtol,
            "atol": self.atol,
            "method": self.method,
            "sectors": self.sectors,
            "converged": self.converged,
            "cutoff_note": self.cutoff_note,
            "floor_time": self.floor_time,
        }


@dataclass
class EvolutionResult:
    times: np.ndarray
    states: List[DensityState]
    expectations: Dict[str, np.ndarray]
    final_state: DensityState
    convergence_report: ConvergenceReport
    wall_seconds: float = 0.0

    def expectation(self, name: str) -> np.ndarray:
        """Real part of a recorded expectation value."""
        return np.real(self.expectations[name])


# ----------------------------
# Noise
# ----------------------------

def standard_noise_set(
    space: CompositeSpace,
    mech: MechanicalParams,
    spins: SpinParams,
    mechanical: Optional[Sequence[str]] = None,
    spin_labels: Optional[Sequence[str]] = None,
) -> List[LindbladTerm]:
    """
    Thermal mechanical damping plus spin decay and dephasing.

    Mechanical mode m: a_m at kappa(1+nbar) and a_m^dag at kappa*nbar,
    kappa = omega_m/Q_m, nbar = bose_occupation(omega_m, T).
    Qubit spin: sigma_z at 1/(2 T2*), lowering at 1/T1.
    Bosonized ensemble: n at 2/T2* (a 0-1 coherence then decays as exp(-t/T2*)),
    annihilation at 1/T1.
    """
    if spin_labels is None:
        spin_labels = [label for label in space.labels if label.startswith("S")]
    if mechanical is None:
        mechanical = [s.label for s in space.subsystems if s.kind == BOSON and s.label not in spin_labels]
    nbar = bose_occupation(mech.omega_m, mech.T)
    kappa = mech.kappa
    terms: List[LindbladTerm] = []
    for label in mechanical:
        a = make_operator(space, label, "annihilation")
        terms.append(LindbladTerm(a, kappa * (1 + nbar), f"damping:{label}"))
        if nbar > 0:
            terms.append(LindbladTerm(a.dag(), kappa * nbar, f"heating:{label}"))
    for label in spin_labels:
        kind = space.subsystem(label).kind
        if math.isfinite(spins.T2_star):
            if kind == QUBIT:
                terms.append(LindbladTerm(make_operator(space, label, "sigma_z"), 1 / (2 * spins.T2_star), f"dephasing:{label}"))
            else:
                terms.append(LindbladTerm(make_operator(space, label, "number"), 2 / spins.T2_star, f"dephasing:{label}"))
        if math.isfinite(spins.T1):
            which = "lower" if kind == QUBIT else "annihilation"
            terms.append(LindbladTerm(make_operator(space, label, which), 1 / spins.T1, f"decay:{label}"))
    log.debug("[dynamics] noise set: nbar=%.4g kappa=%.4g rad/s, %d terms", nbar, kappa, len(terms))
    return terms


# ----------------------------
# Grid and structure helpers
# ----------------------------

def _check_grid(t_grid: Sequence[float]) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ParameterError("t_grid must be a non-empty 1-D sequence")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ParameterError("t_grid must be strictly increasing")
    return t


def _merge_grid(t: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Union of the grid with interior edges; grid points within 1e-12 of an edge snap to it."""
    inner = edges[(edges > t[0]) & (edges < t[-1])]
    if inner.size == 0:
        return t
    scale = max(abs(t[-1]), 1e-300)
    keep = [x for x in t if np.min(np.abs(inner - x)) > 1e-12 * scale]
    return np.unique(np.concatenate([keep, inner]))


def _segments(H: Hamiltonian, times: np.ndarray) -> List[Tuple[np.ndarray, Optional[QuantumOperator]]]:
    """
    Split output times into integration pieces. Each piece is (times, operator)
    with a constant operator, or (times, None) for a time-dependent H.
    """
    if isinstance(H, ScheduledHamiltonian):
        edges = H.schedule.boundaries()
        pieces = []
        for k, op in enumerate(H.operators):
            lo = edges[k] if k > 0 else -np.inf
            hi = edges[k + 1] if k < len(H.operators) - 1 else np.inf
            sel = times[(times >= lo) & (times <= hi)]
            if sel.size > 1:
                pieces.append((sel, op))
        return pieces
    if isinstance(H, TimeDependentHamiltonian):
        return [(times, None)]
    return [(times, H)]


def _space_of(H: Hamiltonian) -> CompositeSpace:
    return H.space


def _constant_operators(H: Hamiltonian) -> List[QuantumOperator]:
    if isinstance(H, ScheduledHamiltonian):
        return list(H.operators)
    if isinstance(H, TimeDependentHamiltonian):
        return []
    return [H]


def operator_shift(op: QuantumOperator, numbers: np.ndarray) -> Optional[int]:
    """Fixed change of total excitation number produced by op, or None if not fixed."""
    coo = op.matrix.tocoo()
    mask = coo.data != 0
    if not mask.any():
        return 0
    d = numbers[coo.row[mask]] - numbers[coo.col[mask]]
    return int(d[0]) if np.all(d == d[0]) else None


def _sector_ready(H: Hamiltonian, terms: Sequence[LindbladTerm], numbers: np.ndarray) -> Optional[List[int]]:
    """Shifts of the jump operators if the problem is sector-decomposable, else None."""
    if isinstance(H, TimeDependentHamiltonian):
        return None
    if any(operator_shift(op, numbers) != 0 for op in _constant_operators(H)):
        return None
    shifts = []
    for term in terms:
        k = operator_shift(term.operator, numbers)
        if k is None:
            return None
        shifts.append(k)
    return shifts


# ----------------------------
# Right-hand sides
# ----------------------------

class _FullRHS:
    def __init__(self, n: int, heff: sp.csr_matrix, jumps: List[Tuple[float, sp.csr_matrix]],
                 td_terms: Sequence[Tuple[sp.csr_matrix, Callable[[float], complex]]] = ()):
        self.n = n
        self.heff = heff
        self.jumps = jumps
        self.td_terms = list(td_terms)

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        rho = y.reshape(self.n, self.n)
        x = self.heff @ rho
        for A, f in self.td_terms:
            x = x + f(t) * (A @ rho)
        x = -1j * x
        # rho is Hermitian, so rho H_eff^dag = (H_eff rho)^dag
        out = x + x.conj().T
        for rate, L in self.jumps:
            lr = L @ rho
            out += rate * (L @ lr.conj().T)
        return out.ravel()


@dataclass
class _Sector:
    D: int
    keys: List[int]
    shapes: List[Tuple[int, int]]
    offsets: List[int]
    size: int = 0


def _make_sector(D: int, blocks: Dict[int, np.ndarray]) -> _Sector:
    keys = [N for N in blocks if (N - D) in blocks]
    shapes = [(blocks[N].size, blocks[N - D].size) for N in keys]
    offsets = list(np.cumsum([0] + [r * c for r, c in shapes]))
    return _Sector(D, keys, shapes, offsets[:-1], int(offsets[-1]))


class _SectorRHS:
    """Generator restricted to blocks rho[N, N-D] for one fixed D."""

    def __init__(self, sector: _Sector, blocks: Dict[int, np.ndarray], heff: sp.csr_matrix,
                 jumps: List[Tuple[float, sp.csr_matrix, int]]):
        self.sector = sector
        self.pos = {N: i for i, N in enumerate(sector.keys)}
        D = sector.D
        self.heff_row = [heff[blocks[N]][:, blocks[N]].toarray() for N in sector.keys]
        self.heff_col_dag = [heff[blocks[N - D]][:, blocks[N - D]].toarray().conj().T for N in sector.keys]
        # per target block: list of (rate, L_row, source position, L_col^dag)
        self.feeds: List[List[Tuple[float, np.ndarray, int, np.ndarray]]] = [[] for _ in sector.keys]
        for rate, L, k in jumps:
            for i, N in enumerate(sector.keys):
                src = N - k
                if src not in self.pos:
                    continue
                Lr = L[blocks[N]][:, blocks[src]].toarray()
                Lc = L[blocks[N - D]][:, blocks[src - D]].toarray()
                if not Lr.any() or not Lc.any():
                    continue
                self.feeds[i].append((rate, Lr, self.pos[src], Lc.conj().T))

    def unpack(self, y: np.ndarray) -> List[np.ndarray]:
        s = self.sector
        return [y[o:o + r * c].reshape(r, c) for o, (r, c) in zip(s.offsets, s.shapes)]

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        xs = self.unpack(y)
        out = np.empty_like(y)
        s = self.sector
        for i, (o, (r, c)) in enumerate(zip(s.offsets, s.shapes)):
            X = xs[i]
            d = -1j * (self.heff_row[i] @ X - X @ self.heff_col_dag[i])
            for rate, Lr, j, LcH in self.feeds[i]:
                d += rate * (Lr @ xs[j] @ LcH)
            out[o:o + r * c] = d.ravel()
        return out


def _effective_hamiltonian(H: QuantumOperator, terms: Sequence[LindbladTerm]) -> sp.csr_matrix:
    m = H.matrix.copy()
    for term in terms:
        if term.rate:
            L = term.operator.matrix
            m = m - 0.5j * term.rate * (L.conj().T @ L)
    return sp.csr_matrix(m)


def _integrate(rhs: Callable, y0: np.ndarray, times: np.ndarray, rtol: float, atol: float) -> np.ndarray:
    """Returns y at every entry of ``times`` (first row is y0)."""
    sol = solve_ivp(rhs, (times[0], times[-1]), y0, method="DOP853", t_eval=times, rtol=rtol, atol=atol)
    if not sol.success:
        raise ConvergenceError(f"integrator failed on [{times[0]:.4g}, {times[-1]:.4g}] s: {sol.message}")
    return sol.y.T


# ----------------------------
# Unitary propagators
# ----------------------------

class _Propagator:
    """exp(-i H t) for a static H: per excitation block when H conserves N, else dense or Krylov."""

    def __init__(self, H: QuantumOperator, blocks: Optional[Dict[int, np.ndarray]]):
        self.H = H
        self.n = H.space.dim
        self.blocks = blocks
        self.eig: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        if blocks is not None:
            for N, idx in blocks.items():
                self.eig[N] = la.eigh(H.matrix[idx][:, idx].toarray())
        elif self.n <= DENSE_EIGH_LIMIT:
            self.eig[-1] = la.eigh(H.to_dense())

    def unitary_blocks(self, t: float) -> Dict[int, np.ndarray]:
        return {N: (V * np.exp(-1j * w * t)) @ V.conj().T for N, (w, V) in self.eig.items()}

    def apply(self, psi: np.ndarray, t: float) -> np.ndarray:
        if self.blocks is not None:
            out = np.zeros_like(psi, dtype=complex)
            for N, idx in self.blocks.items():
                w, V = self.eig[N]
                out[idx] = V @ (np.exp(-1j * w * t) * (V.conj().T @ psi[idx]))
            return out
        if -1 in self.eig:
            w, V = self.eig[-1]
            return V @ (np.exp(-1j * w * t) * (V.conj().T @ psi))
        return expm_multiply(-1j * t * self.H.matrix.tocsc(), psi)

    def conjugate(self, rho: np.ndarray, t: float) -> np.ndarray:
        """U rho U^dag."""
        if self.blocks is not None:
            U = self.unitary_blocks(t)
            out = np.zeros_like(rho, dtype=complex)
            for N, iN in self.blocks.items():
                for M, iM in self.blocks.items():
                    sub = rho[np.ix_(iN, iM)]
                    if sub.any():
                        out[np.ix_(iN, iM)] = U[N] @ sub @ U[M].conj().T
            return out
        if -1 in self.eig:
            w, V = self.eig[-1]
            U = (V * np.exp(-1j * w * t)) @ V.conj().T
            return U @ rho @ U.conj().T
        left = expm_multiply(-1j * t * self.H.matrix.tocsc(), rho)
        return expm_multiply(-1j * t * self.H.matrix.tocsc(), left.conj().T).conj().T


def _blocks_if_conserving(op: QuantumOperator) -> Optional[Dict[int, np.ndarray]]:
    numbers = excitation_numbers(op.space)
    return excitation_blocks(op.space) if operator_shift(op, numbers) == 0 else None


class _TrajectoryCheck:
    """Worst trace drift and positivity floor over every recorded step."""

    def __init__(self, initial_trace: float):
        self.initial_trace = initial_trace
        self.drift = 0.0
        self.floor = math.inf
        self.floor_time: Optional[float] = None

    def observe(self, t: float, trace: float, floor: float) -> None:
        self.drift = max(self.drift, abs(trace - self.initial_trace))
        if floor < self.floor:
            self.floor = floor
            self.floor_time = float(t)


def _dense_floor(data: np.ndarray, blocks: Dict[int, np.ndarray]) -> float:
    """Lowest eigenvalue of rho; above POSITIVITY_DENSE_LIMIT, of its excitation-diagonal blocks."""
    if data.ndim == 1:
        return 0.0
    herm = 0.5 * (data + data.conj().T)
    if data.shape[0] <= POSITIVITY_DENSE_LIMIT:
        return float(np.linalg.eigvalsh(herm)[0])
    return min(float(np.linalg.eigvalsh(herm[np.ix_(idx, idx)])[0]) for idx in blocks.values())


def _dense_trace(data: np.ndarray) -> float:
    if data.ndim == 1:
        return float(np.vdot(data, data).real)
    return float(np.trace(data).real)


Blocks = Dict[int, Dict[int, np.ndarray]]


class _BlockView:
    """
    rho held as excitation blocks: xs[D][N] = rho[N, N-D] for D >= 0. The
    blocks with D < 0 are the conjugate transposes and are never stored.
    """

    def __init__(self, blocks: Dict[int, np.ndarray], n: int):
        self.blocks = blocks
        self.n = n
        self.level = np.empty(n, dtype=int)
        self.pos = np.empty(n, dtype=int)
        for N, idx in blocks.items():
            self.level[idx] = N
            self.pos[idx] = np.arange(idx.size)

    def split(self, rho: np.ndarray, sectors: Mapping[int, _Sector]) -> Blocks:
        return {
            D: {N: rho[np.ix_(self.blocks[N], self.blocks[N - D])] for N in sector.keys}
            for D, sector in sectors.items()
        }

    def assemble(self, xs: Blocks) -> np.ndarray:
        rho = np.zeros((self.n, self.n), dtype=complex)
        for D, parts in xs.items():
            for N, X in parts.items():
                rho[np.ix_(self.blocks[N], self.blocks[N - D])] = X
                if D:
                    rho[np.ix_(self.blocks[N - D], self.blocks[N])] = X.conj().T
        return rho

    def trace(self, xs: Blocks) -> float:
        return float(sum(np.trace(X).real for X in xs.get(0, {}).values()))

    def floor(self, xs: Blocks) -> float:
        """Lowest eigenvalue over the D = 0 blocks (each must be PSD on its own)."""
        diag = xs.get(0, {})
        if not diag:
            return 0.0
        return min(float(np.linalg.eigvalsh(0.5 * (X + X.conj().T))[0]) for X in diag.values())

    def plan(self, op: QuantumOperator) -> List[Tuple[int, int, np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
        """Where each entry rho_ji needed by Tr(A rho) = sum_ij A_ij rho_ji lives."""
        coo = op.matrix.tocoo()
        nz = coo.data != 0
        i, j, a = coo.row[nz], coo.col[nz], coo.data[nz]
        D = self.level[j] - self.level[i]
        flip = D < 0
        top = np.where(flip, self.level[i], self.level[j])
        rows = np.where(flip, self.pos[i], self.pos[j])
        cols = np.where(flip, self.pos[j], self.pos[i])
        keys = np.abs(D)
        groups = []
        for d, N in np.unique(np.stack([keys, top], axis=1), axis=0):
            m = (keys == d) & (top == N)
            groups.append((int(d), int(N), a[m], rows[m], cols[m], flip[m]))
        return groups

    @staticmethod
    def expect(plan, xs: Blocks) -> complex:
        total = 0j
        for d, N, a, rows, cols, flip in plan:
            X = xs.get(d, {}).get(N)
            if X is None:
                continue
            vals = X[rows, cols]
            total += complex(np.sum(a * np.where(flip, vals.conj(), vals)))
        return total


# ----------------------------
# Public evolution entry points
# ----------------------------

def _record(
    space: CompositeSpace,
    t: float,
    rho_or_psi: np.ndarray,
    e_ops: Mapping[str, QuantumOperator],
    expectations: Dict[str, List[complex]],
    states: List[DensityState],
    keep_states: bool,
    check: _TrajectoryCheck,
    blocks: Dict[int, np.ndarray],
) -> DensityState:
    state = DensityState(space, rho_or_psi, check=False)
    for name, op in e_ops.items():
        expectations[name].append(state.expect(op))
    if keep_states:
        states.append(state)
    check.observe(t, _dense_trace(rho_or_psi), _dense_floor(rho_or_psi, blocks))
    return state


def _finish(
    space: CompositeSpace,
    times: np.ndarray,
    states: List[DensityState],
    expectations: Dict[str, List[complex]],
    final: DensityState,
    check: _TrajectoryCheck,
    rtol: float,
    atol: float,
    method: str,
    sectors: int,
    started: float,
) -> EvolutionResult:
    check.observe(times[-1], final.trace(), final.min_eigenvalue())
    if check.drift > TRACE_DRIFT_LIMIT:
        log.warning("[dynamics] trace drift %.3e exceeds %.0e", check.drift, TRACE_DRIFT_LIMIT)
    if check.floor < POSITIVITY_FLOOR:
        log.warning(
            "[dynamics] min eigenvalue %.3e at t=%.4g s below floor %.0e", check.floor, check.floor_time, POSITIVITY_FLOOR
        )
    report = ConvergenceReport(
        cutoffs=space.cutoffs(),
        trace_drift=check.drift,
        positivity_floor=check.floor,
        rtol=rtol,
        atol=atol,
        method=method,
        sectors=sectors,
        floor_time=check.floor_time,
    )
    wall = time.perf_counter() - started
    log.debug("[dynamics] %s evolution dim=%d points=%d in %.3fs", method, space.dim, times.size, wall)
    return EvolutionResult(
        times=times,
        states=states,
        expectations={k: np.asarray(v) for k, v in expectations.items()},
        final_state=final,
        convergence_report=report,
        wall_seconds=wall,
    )


def _sample(piece_times: np.ndarray, recording: bool) -> np.ndarray:
    """Output points of one piece; only its ends when nothing is recorded."""
    return piece_times if recording else piece_times[[0, -1]]


def evolve_lindblad(
    H: Hamiltonian,
    terms: Sequence[LindbladTerm],
    rho0: DensityState,
    t_grid: Sequence[float],
    e_ops: Optional[Mapping[str, QuantumOperator]] = None,
    keep_states: bool = True,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    use_blocks: bool = True,
) -> EvolutionResult:
    """
    Integrate the master equation from t_grid[0]. Schedule edges are inserted
    into the output grid. Without jump terms the evolution is done with exact
    propagators for static and scheduled H. Trace and positivity are checked
    at every output step; with no e_ops and keep_states=False only the final
    state is produced.
    """
    started = time.perf_counter()
    space = _space_of(H)
    if rho0.space != space:
        raise SpaceMismatchError("initial state and Hamiltonian live on different spaces")
    for term in terms:
        if term.operator.space != space:
            raise SpaceMismatchError(f"Lindblad term {term.label or '?'} lives on a different space")
    d_rtol, d_atol = default_tolerances()
    rtol = d_rtol if rtol is None else rtol
    atol = d_atol if atol is None else atol
    e_ops = dict(e_ops or {})
    recording = bool(e_ops) or keep_states

    times = _check_grid(t_grid)
    if isinstance(H, ScheduledHamiltonian):
        times = _merge_grid(times, H.schedule.boundaries())
    active = [t for t in terms if t.rate > 0]
    n = space.dim
    rho = np.array(rho0.matrix, dtype=complex)
    blocks = excitation_blocks(space)
    check = _TrajectoryCheck(float(np.trace(rho).real))

    expectations: Dict[str, List[complex]] = {k: [] for k in e_ops}
    states: List[DensityState] = []
    _record(space, times[0], rho, e_ops, expectations, states, keep_states, check, blocks)

    numbers = excitation_numbers(space)
    shifts = _sector_ready(H, active, numbers) if use_blocks else None
    method = "full"
    sectors_used = 1

    if not active and not isinstance(H, TimeDependentHamiltonian):
        method = "exact"
        for piece_times, op in _segments(H, times):
            prop = _Propagator(op, _blocks_if_conserving(op) if use_blocks else None)
            base = rho
            t0 = piece_times[0]
            for t in _sample(piece_times, recording)[1:]:
                rho = prop.conjugate(base, t - t0)
                if recording:
                    _record(space, t, rho, e_ops, expectations, states, keep_states, check, blocks)
                else:
                    check.observe(t, _dense_trace(rho), _dense_floor(rho, blocks))
    elif shifts is not None:
        method = "sector"
        view = _BlockView(blocks, n)
        sectors = {D: _make_sector(D, blocks) for D in sorted({N - M for N in blocks for M in blocks}) if D >= 0}
        xs = view.split(rho, sectors)
        plans = {name: view.plan(op) for name, op in e_ops.items()}
        for piece_times, op in _segments(H, times):
            heff = _effective_hamiltonian(op, active)
            jumps = [(t.rate, t.operator.matrix, k) for t, k in zip(active, shifts)]
            sample = _sample(piece_times, recording)
            rhss: Dict[int, _SectorRHS] = {}
            results: Dict[int, np.ndarray] = {}
            for D, sector in sectors.items():
                y0 = np.concatenate([xs[D][N].ravel() for N in sector.keys])
                if not np.any(y0):
                    continue
                rhss[D] = _SectorRHS(sector, blocks, heff, jumps)
                results[D] = _integrate(rhss[D], y0, sample, rtol, atol)
            sectors_used = max(sectors_used, len(results))
            for step in range(1, sample.size):
                xs = {**xs, **{D: dict(zip(rhss[D].sector.keys, rhss[D].unpack(ys[step]))) for D, ys in results.items()}}
                t = sample[step]
                if keep_states:
                    _record(space, t, view.assemble(xs), e_ops, expectations, states, keep_states, check, blocks)
                    continue
                for name, plan in plans.items():
                    expectations[name].append(view.expect(plan, xs))
                check.observe(t, view.trace(xs), view.floor(xs))
        rho = view.assemble(xs)
    else:
        for piece_times, op in _segments(H, times):
            if op is None:
                assert isinstance(H, TimeDependentHamiltonian)
                heff = _effective_hamiltonian(H.static, active)
                td = [(A.matrix, f) for A, f in H.terms]
            else:
                heff = _effective_hamiltonian(op, active)
                td = []
            rhs = _FullRHS(n, heff, [(t.rate, t.operator.matrix) for t in active], td)
            sample = _sample(piece_times, recording)
            ys = _integrate(rhs, rho.ravel(), sample, rtol, atol)
            for t, y in zip(sample[1:], ys[1:]):
                rho = y.reshape(n, n)
                if recording:
                    _record(space, t, rho, e_ops, expectations, states, keep_states, check, blocks)
                else:
                    check.observe(t, _dense_trace(rho), _dense_floor(rho, blocks))

    final = DensityState(space, rho, check=False)
    log.info("[dynamics] lindblad %s path: dim=%d jumps=%d rtol=%.1e atol=%.1e", method, n, len(active), rtol, atol)
    return _finish(space, times, states, expectations, final, check, rtol, atol, method, sectors_used, started)


def evolve_schrodinger(
    H: Hamiltonian,
    psi0: Union[DensityState, np.ndarray],
    t_grid: Sequence[float],
    e_ops: Optional[Mapping[str, QuantumOperator]] = None,
    keep_states: bool = True,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
) -> EvolutionResult:
    """Unitary evolution of a pure state. Exact for static and scheduled H, adaptive RK for driven H."""
    started = time.perf_counter()
    space = _space_of(H)
    if isinstance(psi0, DensityState):
        if psi0.space != space:
            raise SpaceMismatchError("initial state and Hamiltonian live on different spaces")
        psi = np.array(psi0.vector, dtype=complex)
    else:
        psi = np.asarray(psi0, dtype=complex)
        DensityState(space, psi)
    d_rtol, d_atol = default_tolerances()
    rtol = d_rtol if rtol is None else rtol
    atol = d_atol if atol is None else atol
    e_ops = dict(e_ops or {})

    times = _check_grid(t_grid)
    if isinstance(H, ScheduledHamiltonian):
        times = _merge_grid(times, H.schedule.boundaries())
    blocks: Dict[int, np.ndarray] = {}
    check = _TrajectoryCheck(float(np.vdot(psi, psi).real))
    expectations: Dict[str, List[complex]] = {k: [] for k in e_ops}
    states: List[DensityState] = []
    _record(space, times[0], psi, e_ops, expectations, states, keep_states, check, blocks)

    if isinstance(H, TimeDependentHamiltonian):
        method = "ode"
        static = H.static.matrix
        td = [(A.matrix, f) for A, f in H.terms]

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            out = static @ y
            for A, f in td:
                out = out + f(t) * (A @ y)
            return -1j * out

        for t, y in zip(times[1:], _integrate(rhs, psi, times, rtol, atol)[1:]):
            psi = y
            _record(space, t, psi, e_ops, expectations, states, keep_states, check, blocks)
    else:
        method = "exact"
        for piece_times, op in _segments(H, times):
            prop = _Propagator(op, _blocks_if_conserving(op))
            base = psi
            t0 = piece_times[0]
            for t in piece_times[1:]:
                psi = prop.apply(base, t - t0)
                _record(space, t, psi, e_ops, expectations, states, keep_states, check, blocks)

    final = DensityState(space, psi, check=False)
    if check.drift > 1e-10 and method == "exact":
        log.warning("[dynamics] norm drift %.3e in exact propagation", check.drift)
    return _finish(space, times, states, expectations, final, check, rtol, atol, method, 1, started)
