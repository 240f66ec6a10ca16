"""Tensor-product Hilbert spaces, operators and states.

A CompositeSpace fixes the subsystem order once; every operator and state
carries its space and mixing spaces is an error. Operators are stored sparse
(CSR), density matrices dense. Qubits use |-> = index 0 (ground) and
|+> = index 1 (excited), so the spin lowering operator is |-><+| = |0><1|.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import InitVar, dataclass, field
from functools import reduce
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy import constants

from .errors import InvalidStateError, SpaceMismatchError, SubsystemKindError, UnknownSubsystemError

log = logging.getLogger(__name__)

QUBIT = "qubit"
BOSON = "boson"

HERMITIAN_TOL = 1e-12
STATE_TOL = 1e-9
POSITIVITY_FLOOR = -1e-8
TRUNCATION_WARN = 1e-6


class TruncationWarning(UserWarning):
    """Raised when a Fock cutoff discards non-negligible probability."""


@dataclass(frozen=True)
class Subsystem:
    label: str
    kind: str
    dim: int

    def __post_init__(self) -> None:
        if self.kind not in (QUBIT, BOSON):
            raise SubsystemKindError(f"subsystem {self.label!r}: kind must be qubit or boson, got {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"subsystem {self.label!r}: dim must be an integer >= 2, got {self.dim!r}")
        if self.kind == QUBIT and self.dim != 2:
            raise ValueError(f"subsystem {self.label!r}: a qubit has dim 2, got {self.dim}")


@dataclass(frozen=True)
class CompositeSpace:
    subsystems: Tuple[Subsystem, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        labels = [s.label for s in self.subsystems]
        if not labels:
            raise ValueError("a CompositeSpace needs at least one subsystem")
        dupes = sorted({x for x in labels if labels.count(x) > 1})
        if dupes:
            raise ValueError(f"duplicate subsystem labels: {dupes}")

    @classmethod
    def build(cls, *specs: Tuple[str, str, int]) -> "CompositeSpace":
        """CompositeSpace.build(("S1", "qubit", 2), ("a1", "boson", 4), ...)."""
        return cls(tuple(Subsystem(label, kind, int(dim)) for label, kind, dim in specs))

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(s.label for s in self.subsystems)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(s.dim for s in self.subsystems)

    @property
    def dim(self) -> int:
        return int(math.prod(self.dims))

    def index(self, label: str) -> int:
        for i, s in enumerate(self.subsystems):
            if s.label == label:
                return i
        raise UnknownSubsystemError(f"unknown subsystem {label!r} (space has {list(self.labels)})")

    def subsystem(self, label: str) -> Subsystem:
        return self.subsystems[self.index(label)]

    def __contains__(self, label: object) -> bool:
        return label in self.labels

    def subspace(self, labels: Iterable[str]) -> "CompositeSpace":
        """Space of the given labels, in this space's order."""
        wanted = set(labels)
        for label in wanted:
            self.index(label)
        return CompositeSpace(tuple(s for s in self.subsystems if s.label in wanted))

    def with_dims(self, changes: Mapping[str, int]) -> "CompositeSpace":
        """Copy with some boson cutoffs replaced (used for convergence reruns)."""
        for label in changes:
            self.index(label)
        return CompositeSpace(
            tuple(Subsystem(s.label, s.kind, int(changes.get(s.label, s.dim))) for s in self.subsystems)
        )

    def cutoffs(self) -> Dict[str, int]:
        return {s.label: s.dim for s in self.subsystems}


def _require_same_space(a: CompositeSpace, b: CompositeSpace) -> None:
    if a != b:
        raise SpaceMismatchError(f"space mismatch: {list(a.cutoffs().items())} vs {list(b.cutoffs().items())}")


@dataclass(frozen=True, eq=False)
class QuantumOperator:
    space: CompositeSpace
    matrix: sp.csr_matrix
    hermitian: bool = False

    def __post_init__(self) -> None:
        m = sp.csr_matrix(self.matrix, dtype=complex)
        m.sum_duplicates()
        object.__setattr__(self, "matrix", m)
        n = self.space.dim
        if m.shape != (n, n):
            raise SpaceMismatchError(f"operator shape {m.shape} does not match space dimension {n}")
        if self.hermitian:
            dev = _max_abs(m - m.conj().T)
            scale = max(1.0, _max_abs(m))
            if dev >= HERMITIAN_TOL * scale:
                raise ValueError(f"operator tagged hermitian but max|A - A^dag| = {dev:.3e}")

    def dag(self) -> "QuantumOperator":
        return QuantumOperator(self.space, self.matrix.conj().T.tocsr(), self.hermitian)

    def __add__(self, other: "QuantumOperator") -> "QuantumOperator":
        _require_same_space(self.space, other.space)
        return QuantumOperator(self.space, self.matrix + other.matrix, self.hermitian and other.hermitian)

    def __sub__(self, other: "QuantumOperator") -> "QuantumOperator":
        _require_same_space(self.space, other.space)
        return QuantumOperator(self.space, self.matrix - other.matrix, self.hermitian and other.hermitian)

    def __neg__(self) -> "QuantumOperator":
        return QuantumOperator(self.space, -self.matrix, self.hermitian)

    def __mul__(self, c: complex) -> "QuantumOperator":
        if isinstance(c, QuantumOperator):
            raise TypeError("use @ to compose operators")
        real = bool(np.isreal(c))
        return QuantumOperator(self.space, self.matrix * c, self.hermitian and real)

    __rmul__ = __mul__

    def __matmul__(self, other: "QuantumOperator") -> "QuantumOperator":
        _require_same_space(self.space, other.space)
        return QuantumOperator(self.space, self.matrix @ other.matrix)

    def commutator(self, other: "QuantumOperator") -> "QuantumOperator":
        _require_same_space(self.space, other.space)
        return QuantumOperator(self.space, self.matrix @ other.matrix - other.matrix @ self.matrix)

    def with_hermitian_part(self) -> "QuantumOperator":
        """A + A^dag, tagged hermitian."""
        return QuantumOperator(self.space, self.matrix + self.matrix.conj().T, hermitian=True)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ psi

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def max_abs(self) -> float:
        return _max_abs(self.matrix)

    def hermiticity_error(self) -> float:
        return _max_abs(self.matrix - self.matrix.conj().T)

    def is_zero(self) -> bool:
        return self.matrix.count_nonzero() == 0


def _max_abs(m: sp.spmatrix) -> float:
    m = sp.csr_matrix(m)
    return float(np.abs(m.data).max()) if m.nnz else 0.0


def _local_matrix(sub: Subsystem, which: str, i: Optional[int], j: Optional[int]) -> sp.csr_matrix:
    d = sub.dim
    boson_only = {"annihilation", "creation", "number"}
    qubit_only = {"lower", "raise", "sigma_x", "sigma_z"}
    if which in boson_only and sub.kind != BOSON:
        raise SubsystemKindError(f"{which} operator requested on {sub.kind} subsystem {sub.label!r}")
    if which in qubit_only and sub.kind != QUBIT:
        raise SubsystemKindError(f"{which} operator requested on {sub.kind} subsystem {sub.label!r}")

    if which == "annihilation":
        return sp.diags(np.sqrt(np.arange(1, d, dtype=float)), offsets=1, shape=(d, d), format="csr")
    if which == "creation":
        return sp.diags(np.sqrt(np.arange(1, d, dtype=float)), offsets=-1, shape=(d, d), format="csr")
    if which == "number":
        return sp.diags(np.arange(d, dtype=float), format="csr")
    if which == "lower":
        return sp.csr_matrix(([1.0], ([0], [1])), shape=(2, 2))
    if which == "raise":
        return sp.csr_matrix(([1.0], ([1], [0])), shape=(2, 2))
    if which == "sigma_x":
        return sp.csr_matrix(([1.0, 1.0], ([0, 1], [1, 0])), shape=(2, 2))
    if which == "sigma_z":
        # |+><+| - |-><-|
        return sp.diags([-1.0, 1.0], format="csr")
    if which == "identity":
        return sp.identity(d, format="csr")
    if which == "projector":
        if i is None or j is None:
            raise ValueError("projector needs i and j")
        if not (0 <= i < d and 0 <= j < d):
            raise ValueError(f"projector indices ({i}, {j}) out of range for dim {d}")
        return sp.csr_matrix(([1.0], ([i], [j])), shape=(d, d))
    raise ValueError(f"unknown operator kind {which!r}")


def tensor_embed(space: CompositeSpace, factors: Mapping[str, Union[np.ndarray, sp.spmatrix]]) -> QuantumOperator:
    """Kronecker product of the given local matrices, identity elsewhere, in space order."""
    for label in factors:
        space.index(label)
    mats: List[sp.spmatrix] = []
    for s in space.subsystems:
        local = factors.get(s.label)
        if local is None:
            mats.append(sp.identity(s.dim, format="csr", dtype=complex))
        else:
            local = sp.csr_matrix(local, dtype=complex)
            if local.shape != (s.dim, s.dim):
                raise SpaceMismatchError(f"local operator for {s.label!r} has shape {local.shape}, expected {s.dim}x{s.dim}")
            mats.append(local)
    return QuantumOperator(space, reduce(lambda a, b: sp.kron(a, b, format="csr"), mats))


def make_operator(
    space: CompositeSpace,
    subsystem: str,
    which: str,
    i: Optional[int] = None,
    j: Optional[int] = None,
) -> QuantumOperator:
    """
    Local operator on one subsystem, embedded in the full space.

    which: annihilation | creation | number (bosons), lower | raise | sigma_x |
    sigma_z (qubits), projector (|i><j|, any kind), identity.
    """
    sub = space.subsystem(subsystem)
    local = _local_matrix(sub, which, i, j)
    op = tensor_embed(space, {subsystem: local})
    hermitian = which in {"number", "sigma_x", "sigma_z", "identity"} or (which == "projector" and i == j)
    return QuantumOperator(space, op.matrix, hermitian=hermitian)


def ladder(space: CompositeSpace, label: str) -> QuantumOperator:
    """Lowering operator of a subsystem whatever its kind (a for bosons, |-><+| for qubits)."""
    kind = space.subsystem(label).kind
    return make_operator(space, label, "annihilation" if kind == BOSON else "lower")


def occupation(space: CompositeSpace, label: str) -> QuantumOperator:
    """Excitation number of one subsystem (n for bosons, |+><+| for qubits)."""
    kind = space.subsystem(label).kind
    if kind == BOSON:
        return make_operator(space, label, "number")
    return make_operator(space, label, "projector", 1, 1)


def compose(ops: Sequence[QuantumOperator]) -> QuantumOperator:
    """Product ops[0] @ ops[1] @ ... computed sparse."""
    if not ops:
        raise ValueError("compose needs at least one operator")
    for op in ops[1:]:
        _require_same_space(ops[0].space, op.space)
    return QuantumOperator(ops[0].space, reduce(lambda a, b: a @ b, [o.matrix for o in ops]))


def operator_sum(ops: Sequence[QuantumOperator], space: Optional[CompositeSpace] = None) -> QuantumOperator:
    if not ops:
        if space is None:
            raise ValueError("operator_sum of nothing needs a space")
        return zero_operator(space)
    return reduce(lambda a, b: a + b, ops)


def zero_operator(space: CompositeSpace) -> QuantumOperator:
    return QuantumOperator(space, sp.csr_matrix((space.dim, space.dim), dtype=complex), hermitian=True)


def identity(space: CompositeSpace) -> QuantumOperator:
    return QuantumOperator(space, sp.identity(space.dim, format="csr", dtype=complex), hermitian=True)


def excitation_numbers(space: CompositeSpace, labels: Optional[Iterable[str]] = None) -> np.ndarray:
    """Total excitation number of every basis index (qubit |+> counts 1)."""
    wanted = set(labels) if labels is not None else set(space.labels)
    grids = np.indices(space.dims).reshape(len(space.dims), -1)
    total = np.zeros(space.dim, dtype=int)
    for k, s in enumerate(space.subsystems):
        if s.label in wanted:
            total += grids[k]
    return total


def total_number(space: CompositeSpace, labels: Optional[Iterable[str]] = None) -> QuantumOperator:
    return QuantumOperator(space, sp.diags(excitation_numbers(space, labels).astype(float), format="csr"), hermitian=True)


def excitation_blocks(space: CompositeSpace) -> Dict[int, np.ndarray]:
    """Basis indices grouped by total excitation number, keys ascending."""
    numbers = excitation_numbers(space)
    return {int(n): np.flatnonzero(numbers == n) for n in np.unique(numbers)}


def conserves_excitations(op: QuantumOperator, tol: float = 0.0) -> bool:
    """True if op only connects basis states with equal total excitation number."""
    numbers = excitation_numbers(op.space)
    coo = op.matrix.tocoo()
    mask = np.abs(coo.data) > tol
    return bool(np.all(numbers[coo.row[mask]] == numbers[coo.col[mask]]))


def restrict_to_block(op: QuantumOperator, indices: np.ndarray) -> np.ndarray:
    """Dense sub-matrix of op on the given basis indices."""
    return op.matrix[indices][:, indices].toarray()


# ----------------------------
# States
# ----------------------------

@dataclass(frozen=True, eq=False)
class DensityState:
    """
    Unit-trace Hermitian state. ``data`` is either a pure state vector (1-D)
    or a density matrix (2-D); ``matrix`` always gives the dense matrix.
    """

    space: CompositeSpace
    data: np.ndarray
    check: InitVar[bool] = True
    _matrix: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self, check: bool) -> None:
        arr = np.array(self.data, dtype=complex)
        n = self.space.dim
        if arr.ndim == 1 and arr.shape != (n,):
            raise SpaceMismatchError(f"state vector length {arr.shape[0]} does not match space dimension {n}")
        if arr.ndim == 2 and arr.shape != (n, n):
            raise SpaceMismatchError(f"density matrix shape {arr.shape} does not match space dimension {n}")
        if arr.ndim not in (1, 2):
            raise InvalidStateError("state data must be a vector or a square matrix")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if check:
            self.validate()

    @classmethod
    def from_vector(cls, space: CompositeSpace, psi: np.ndarray, normalize: bool = False) -> "DensityState":
        psi = np.asarray(psi, dtype=complex)
        if normalize:
            norm = np.linalg.norm(psi)
            if norm == 0:
                raise InvalidStateError("cannot normalise the zero vector")
            psi = psi / norm
        return cls(space, psi)

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @property
    def vector(self) -> np.ndarray:
        if not self.is_pure:
            raise InvalidStateError("state is stored as a density matrix, not a vector")
        return self.data

    @property
    def matrix(self) -> np.ndarray:
        if not self.is_pure:
            return self.data
        if self._matrix is None:
            m = np.outer(self.data, self.data.conj())
            m.setflags(write=False)
            object.__setattr__(self, "_matrix", m)
        return self._matrix  # type: ignore[return-value]

    def trace(self) -> float:
        if self.is_pure:
            return float(np.vdot(self.data, self.data).real)
        return float(np.trace(self.data).real)

    def purity(self) -> float:
        if self.is_pure:
            return self.trace() ** 2
        return float(np.real(np.vdot(self.data.conj().T, self.data)))

    def min_eigenvalue(self) -> float:
        if self.is_pure:
            return 0.0 if self.space.dim > 1 else self.trace()
        return float(np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T))[0])

    def expect(self, op: QuantumOperator) -> complex:
        _require_same_space(self.space, op.space)
        if self.is_pure:
            return complex(np.vdot(self.data, op.matrix @ self.data))
        # Tr(A rho) = sum_ij A_ij rho_ji
        coo = op.matrix.tocoo()
        return complex(np.sum(coo.data * self.data[coo.col, coo.row]))

    def validate(self) -> None:
        tr = self.trace()
        if abs(tr - 1.0) > STATE_TOL:
            raise InvalidStateError(f"state trace {tr:.12f} is not 1 within {STATE_TOL}")
        if self.is_pure:
            return
        herm = float(np.abs(self.data - self.data.conj().T).max())
        if herm > STATE_TOL:
            raise InvalidStateError(f"density matrix not Hermitian (max deviation {herm:.3e})")
        lo = self.min_eigenvalue()
        if lo < POSITIVITY_FLOOR:
            raise InvalidStateError(f"density matrix has negative eigenvalue {lo:.3e}")


def basis_vector(space: CompositeSpace, occupations: Mapping[str, int]) -> np.ndarray:
    """|n_1, n_2, ...> with unspecified subsystems in |0>."""
    idx = []
    for s in space.subsystems:
        n = int(occupations.get(s.label, 0))
        if not 0 <= n < s.dim:
            raise ValueError(f"occupation {n} out of range for {s.label!r} (dim {s.dim})")
        idx.append(n)
    for label in occupations:
        space.index(label)
    psi = np.zeros(space.dim, dtype=complex)
    psi[np.ravel_multi_index(tuple(idx), space.dims)] = 1.0
    return psi


def basis_state(space: CompositeSpace, occupations: Mapping[str, int]) -> DensityState:
    return DensityState(space, basis_vector(space, occupations))


def product_state(space: CompositeSpace, parts: Mapping[str, Union[np.ndarray, DensityState]]) -> DensityState:
    """
    Tensor product of local states in space order. Each part is a local vector,
    a local density matrix, or a DensityState on a single-subsystem space;
    missing subsystems are in |0>. Stays pure when every part is a vector.
    """
    for label in parts:
        space.index(label)
    locals_: List[np.ndarray] = []
    for s in space.subsystems:
        part = parts.get(s.label)
        if part is None:
            v = np.zeros(s.dim, dtype=complex)
            v[0] = 1.0
            locals_.append(v)
            continue
        arr = part.data if isinstance(part, DensityState) else np.asarray(part, dtype=complex)
        expected = (s.dim,) if arr.ndim == 1 else (s.dim, s.dim)
        if arr.shape != expected:
            raise SpaceMismatchError(f"local state for {s.label!r} has shape {arr.shape}, expected {expected}")
        locals_.append(arr)
    if all(a.ndim == 1 for a in locals_):
        return DensityState(space, reduce(np.kron, locals_))
    mats = [np.outer(a, a.conj()) if a.ndim == 1 else a for a in locals_]
    return DensityState(space, reduce(np.kron, mats))


def partial_trace(state: DensityState, keep: Sequence[str]) -> DensityState:
    """Reduced state on ``keep`` (returned in the original subsystem order)."""
    if not keep:
        raise ValueError("partial_trace: keep must name at least one subsystem")
    space = state.space
    keep_idx = sorted({space.index(label) for label in keep})
    drop_idx = [k for k in range(len(space.dims)) if k not in keep_idx]
    reduced = space.subspace(space.labels[k] for k in keep_idx)
    return DensityState(reduced, _partial_trace_array(state.data, space.dims, keep_idx, drop_idx), check=False)


def _partial_trace_array(data: np.ndarray, dims: Sequence[int], keep_idx: List[int], drop_idx: List[int]) -> np.ndarray:
    dk = int(math.prod(dims[k] for k in keep_idx))
    dd = int(math.prod(dims[k] for k in drop_idx)) if drop_idx else 1
    n = len(dims)
    if data.ndim == 1:
        m = data.reshape(dims).transpose(keep_idx + drop_idx).reshape(dk, dd)
        return m @ m.conj().T
    t = data.reshape(tuple(dims) * 2)
    perm = keep_idx + drop_idx + [n + k for k in keep_idx] + [n + k for k in drop_idx]
    t = t.transpose(perm).reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def reduce_matrix(matrix: np.ndarray, space: CompositeSpace, keep: Sequence[str]) -> np.ndarray:
    """Partial trace of a raw (possibly non-Hermitian) operator; linear in ``matrix``."""
    keep_idx = sorted({space.index(label) for label in keep})
    drop_idx = [k for k in range(len(space.dims)) if k not in keep_idx]
    return _partial_trace_array(np.asarray(matrix), space.dims, keep_idx, drop_idx)


def trace_distance(a: Union[DensityState, np.ndarray], b: Union[DensityState, np.ndarray]) -> float:
    if isinstance(a, DensityState) and isinstance(b, DensityState):
        _require_same_space(a.space, b.space)
    ma = a.matrix if isinstance(a, DensityState) else np.asarray(a)
    mb = b.matrix if isinstance(b, DensityState) else np.asarray(b)
    diff = ma - mb
    return float(0.5 * np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())


def thermal_state(space: CompositeSpace, label: str, nbar: float) -> DensityState:
    """
    Thermal Fock distribution p_n ~ (nbar/(1+nbar))^n on one boson subsystem,
    renormalised over the truncated space. Returns a state on that subsystem alone.
    """
    if nbar < 0:
        raise ValueError(f"nbar must be >= 0, got {nbar}")
    sub = space.subsystem(label)
    if sub.kind != BOSON:
        raise SubsystemKindError(f"thermal_state needs a boson subsystem, {label!r} is a {sub.kind}")
    local = space.subspace([label])
    d = sub.dim
    if nbar == 0:
        p = np.zeros(d)
        p[0] = 1.0
        return DensityState(local, np.diag(p).astype(complex))
    r = nbar / (1.0 + nbar)
    tail = r**d
    if tail > TRUNCATION_WARN:
        msg = f"thermal state on {label!r} (nbar={nbar:.4g}, dim {d}) discards probability {tail:.3e}"
        log.warning("[hilbert] %s", msg)
        warnings.warn(msg, TruncationWarning, stacklevel=2)
    p = r ** np.arange(d)
    p /= p.sum()
    return DensityState(local, np.diag(p).astype(complex))


def thermal_tail(nbar: float, dim: int) -> float:
    """Probability a thermal distribution puts at or above Fock level ``dim``."""
    if nbar <= 0:
        return 0.0
    return (nbar / (1.0 + nbar)) ** dim


def bose_occupation(omega: float, T: float) -> float:
    """Mean thermal occupation 1/(exp(hbar*omega/kB*T) - 1); 0 at T=0."""
    if omega <= 0:
        raise ValueError(f"omega must be > 0, got {omega}")
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    if T == 0:
        return 0.0
    x = constants.hbar * omega / (constants.k * T)
    return float(1.0 / np.expm1(x))


def tensor_product_states(states: Sequence[DensityState]) -> DensityState:
    """Product of states on disjoint spaces; the result space concatenates them in order."""
    if not states:
        raise ValueError("tensor_product_states needs at least one state")
    space = CompositeSpace(tuple(s for st in states for s in st.space.subsystems))
    if all(st.is_pure for st in states):
        return DensityState(space, reduce(np.kron, [st.data for st in states]))
    return DensityState(space, reduce(np.kron, [st.matrix for st in states]))
