"""Executable transfer protocols.

Each protocol is described by a frozen spec (parameters, initial-state choice,
cutoffs, integrator and convergence policy). ``spec.run()`` evolves one initial
state and returns a ProtocolRun; ``spec.build_channel()`` evolves the four
tomographic inputs |0>, |1>, |+x>, |+y> of spin 1 so that any Bloch-sphere
input can be scored without another evolution.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import default_tolerances, max_dimension
from .convergence import OUT_OF_DESK_SCALE, CutoffVerdict, diff_results, fmt_diff, not_checked
from .dynamics import (
    ConvergenceReport,
    EvolutionResult,
    LindbladTerm,
    ScheduledHamiltonian,
    TimeDependentHamiltonian,
    evolve_lindblad,
    evolve_schrodinger,
    standard_noise_set,
)
from .errors import ConvergenceError, ParameterError
from .fidelity import (
    DEFAULT_MESH,
    STATE_VS_STATE,
    FidelityReport,
    bloch_state,
    frame_correction,
    logical_block,
    lower_bound_scan,
    swap_fidelity,
    uhlmann_fidelity,
)
from .hilbert import (
    BOSON,
    CompositeSpace,
    DensityState,
    QuantumOperator,
    bose_occupation,
    occupation,
    partial_trace,
    product_state,
    thermal_state,
    trace_distance,
    zero_operator,
)
from .linear import build_drift, occupation_trajectory, transfer_condition
from .model import (
    BOSONIZED,
    MECHANICAL_LABELS,
    MS_CONVENTION_CANDIDATES,
    NETWORK_LABELS,
    SINGLE_SPIN,
    MechanicalParams,
    MSParams,
    PulseSchedule,
    SpinParams,
    build_effective_hamiltonian,
    build_network_hamiltonian,
    ms_hamiltonian_terms,
    ms_space,
    network_space,
    triple_swap_schedule,
)

log = logging.getLogger(__name__)

TRIPLE_SWAP = "triple_swap"
MS_GATE = "ms_gate"
ENSEMBLE_TRANSFER = "ensemble_transfer"
PROTOCOLS = (TRIPLE_SWAP, MS_GATE, ENSEMBLE_TRANSFER)

NETWORK_MODEL = "network"
EFFECTIVE_MODEL = "effective"
ENSEMBLE_MODELS = (NETWORK_MODEL, EFFECTIVE_MODEL)
EFFECTIVE_LABELS = ("S1", "a1", "a2", "S2")

# |1> of spin 1 arrives in spin 2 as (-i)(-1)(-i)|1> = +|1>
TRIPLE_SWAP_FRAME = 1.0
ENSEMBLE_FRAME = 1.0

MS_TARGET = np.array([1.0, 0.0, 0.0, -1j]) / math.sqrt(2)  # (|--> - i|++>)/sqrt(2)
MS_VACUUM_CUTOFF = 10
MS_THERMAL_MARGIN = 8
THERMAL_TAIL = 1e-4
EXCITED = (math.pi, 0.0)

CHANNEL_INPUTS: Dict[str, np.ndarray] = {
    "0": np.array([1.0, 0.0], dtype=complex),
    "1": np.array([0.0, 1.0], dtype=complex),
    "x": np.array([1.0, 1.0], dtype=complex) / math.sqrt(2),
    "y": np.array([1.0, 1j], dtype=complex) / math.sqrt(2),
}


@dataclass(frozen=True)
class CutoffPolicy:
    step: int = 5
    tolerance: float = 1e-4
    max_dim: Optional[int] = None
    strict: bool = False
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.step < 1:
            raise ParameterError(f"convergence.step must be >= 1, got {self.step}")
        if not self.tolerance > 0:
            raise ParameterError(f"convergence.tolerance must be > 0, got {self.tolerance}")

    def limit(self) -> int:
        return self.max_dim if self.max_dim is not None else max_dimension()


@dataclass(frozen=True)
class IntegratorSettings:
    rtol: Optional[float] = None
    atol: Optional[float] = None

    def resolved(self) -> Tuple[float, float]:
        rtol, atol = default_tolerances()
        return (self.rtol if self.rtol is not None else rtol, self.atol if self.atol is not None else atol)


def auto_cutoff(nbar: float, tail: float = THERMAL_TAIL, extra: int = 0, minimum: int = 2) -> int:
    """Smallest Fock dimension whose thermal tail mass is below ``tail``, plus ``extra``."""
    if nbar <= 0:
        return minimum
    r = nbar / (1.0 + nbar)
    return max(minimum, int(math.ceil(math.log(tail) / math.log(r))) + extra)


@dataclass
class ProtocolRun:
    protocol: str
    parameters: Dict[str, Any]
    initial_state_spec: Dict[str, Any]
    initial_state: DensityState
    result: EvolutionResult
    fidelity_report: Optional[FidelityReport] = None
    logical: Tuple[str, ...] = ("S1", "S2")
    frame_phase: complex = 1.0
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    cutoff_verdict: Optional[CutoffVerdict] = None

    @property
    def traces(self) -> Dict[str, np.ndarray]:
        out = {"t": self.result.times}
        out.update({k: np.real(v) for k, v in self.result.expectations.items()})
        return out

    def summary(self) -> Dict[str, float]:
        s: Dict[str, float] = {}
        if self.fidelity_report is not None:
            s["fidelity"] = self.fidelity_report.value
            if self.fidelity_report.leakage is not None:
                s["leakage"] = self.fidelity_report.leakage
        for key in ("waveguide_return", "purity"):
            if key in self.diagnostics:
                s[key] = float(self.diagnostics[key])
        return s


class _ProtocolSpec:
    """Shared machinery; concrete specs are frozen dataclasses."""

    protocol: str = ""
    logical: Tuple[str, str] = ("S1", "S2")
    frame_phase: complex = 1.0

    # provided by subclasses
    noise: bool
    integrator: IntegratorSettings
    convergence: CutoffPolicy

    def space(self) -> CompositeSpace:
        raise NotImplementedError

    def hamiltonian(self, space: CompositeSpace):
        raise NotImplementedError

    def times(self) -> np.ndarray:
        raise NotImplementedError

    def background(self, space: CompositeSpace) -> Dict[str, Any]:
        """Initial states of every subsystem except spin 1."""
        raise NotImplementedError

    def thermal_modes(self) -> Dict[str, float]:
        return {}

    def with_cutoffs(self, changes: Mapping[str, int]) -> "_ProtocolSpec":
        raise NotImplementedError

    def noise_terms(self, space: CompositeSpace) -> List[LindbladTerm]:
        if not self.noise:
            return []
        return standard_noise_set(space, self.mech, self.spins)  # type: ignore[attr-defined]

    def snapshot(self) -> Dict[str, Any]:
        snap = dataclasses.asdict(self)  # type: ignore[call-overload]
        snap["protocol"] = self.protocol
        return snap

    def initial_state(self, space: CompositeSpace, spin1: np.ndarray) -> DensityState:
        parts = self.background(space)
        d = space.subsystem("S1").dim
        vec = np.zeros(d, dtype=complex)
        vec[:2] = spin1
        parts["S1"] = vec
        return product_state(space, parts)

    def occupation_ops(self, space: CompositeSpace) -> Dict[str, QuantumOperator]:
        return {label: occupation(space, label) for label in space.labels}

    def evolve(
        self,
        space: CompositeSpace,
        rho0: DensityState,
        e_ops: Optional[Mapping[str, QuantumOperator]] = None,
        keep_states: bool = False,
    ) -> EvolutionResult:
        H = self.hamiltonian(space)
        terms = [t for t in self.noise_terms(space) if t.rate > 0]
        rtol, atol = self.integrator.resolved()
        if not terms and rho0.is_pure:
            return evolve_schrodinger(H, rho0, self.times(), e_ops=e_ops, keep_states=keep_states, rtol=rtol, atol=atol)
        return evolve_lindblad(H, terms, rho0, self.times(), e_ops=e_ops, keep_states=keep_states, rtol=rtol, atol=atol)

    def build_channel(self) -> "LogicalChannel":
        return LogicalChannel.build(self)

    # -- cutoff convergence --

    def truncated_modes(self) -> Tuple[str, ...]:
        """Boson modes whose Fock cutoff can discard population during the run."""
        return tuple(self.thermal_modes())

    def refinement(self) -> Dict[str, int]:
        """Cutoffs of the convergence rerun: every truncated mode raised by the policy step."""
        space = self.space()
        return {label: space.subsystem(label).dim + self.convergence.step for label in self.truncated_modes()}

    def refined(self) -> Tuple[Optional["_ProtocolSpec"], str]:
        """Spec with every truncated mode cutoff raised by the policy step, or (None, reason)."""
        policy = self.convergence
        if not policy.enabled:
            return None, "disabled"
        changes = self.refinement()
        if not changes:
            return None, "no truncated modes"
        spec = self.with_cutoffs(changes)
        dim = spec.space().dim
        if dim > policy.limit():
            log.warning("[protocol] cutoff rerun needs dim %d > max_dim %d; reporting %s", dim, policy.limit(), OUT_OF_DESK_SCALE)
            return None, OUT_OF_DESK_SCALE
        return spec, ""

    def cutoff_verdict(
        self,
        base: Mapping[str, float],
        evaluate: Callable[["_ProtocolSpec"], Mapping[str, float]],
    ) -> CutoffVerdict:
        cutoffs = self.space().cutoffs()
        spec, note = self.refined()
        if spec is None:
            if note == OUT_OF_DESK_SCALE:
                # refused rerun cutoffs are recorded as well
                return CutoffVerdict(None, cutoffs, {**cutoffs, **self.refinement()}, note=note)
            return not_checked(cutoffs, note)
        refined = evaluate(spec)
        diffs = diff_results(base, refined, self.convergence.tolerance)
        verdict = CutoffVerdict(
            converged=not diffs,
            base_cutoffs=cutoffs,
            refined_cutoffs=spec.space().cutoffs(),
            diffs=tuple(diffs),
        )
        if diffs:
            lines = "\n".join(fmt_diff(d) for d in diffs)
            log.warning("[protocol] %s not converged in Fock cutoff:\n%s", self.protocol, lines)
            if self.convergence.strict:
                raise ConvergenceError(f"{self.protocol}: results moved at cutoff +{self.convergence.step}:\n{lines}")
        else:
            log.info("[protocol] %s converged at cutoffs %s", self.protocol, cutoffs)
        return verdict

    def lower_bound(self, mesh_size: int = DEFAULT_MESH) -> Tuple[FidelityReport, CutoffVerdict]:
        report = lower_bound_scan(self, mesh_size)
        base = {"fidelity": report.value}
        verdict = self.cutoff_verdict(
            base, lambda s: {"fidelity": lower_bound_scan(s, mesh_size, check_doubling=False).value}
        )
        return report, verdict


# ----------------------------
# Tomographic channel
# ----------------------------

@dataclass
class LogicalChannel:
    """
    Linear map from the spin-1 input density matrix to the final two-logical
    block, reconstructed from the outputs for |0>, |1>, |+x>, |+y>.
    """

    logical: Tuple[str, str]
    frame_phase: complex
    outputs: Dict[str, np.ndarray]
    reports: Tuple[ConvergenceReport, ...] = ()
    max_leakage: float = 0.0

    @classmethod
    def build(cls, spec: _ProtocolSpec) -> "LogicalChannel":
        space = spec.space()
        outputs: Dict[str, np.ndarray] = {}
        reports: List[ConvergenceReport] = []
        for key, vec in CHANNEL_INPUTS.items():
            result = spec.evolve(space, spec.initial_state(space, vec))
            outputs[key] = logical_block(result.final_state, spec.logical)
            reports.append(result.convergence_report)
        log.debug("[protocol] built %s channel on dim %d", spec.protocol, space.dim)
        return cls(spec.logical, spec.frame_phase, outputs, tuple(reports))

    def output(self, r: np.ndarray) -> np.ndarray:
        o = self.outputs
        x01 = 0.5 * ((2 * o["x"] - o["0"] - o["1"]) + 1j * (2 * o["y"] - o["0"] - o["1"]))
        return r[0, 0] * o["0"] + r[1, 1] * o["1"] + r[0, 1] * x01 + r[1, 0] * x01.conj().T

    def fidelity_for(self, theta: float, phi: float) -> float:
        psi = bloch_state(theta, phi)
        out = self.output(np.outer(psi, psi.conj()))
        self.max_leakage = max(self.max_leakage, 1.0 - float(np.trace(out).real))
        target = np.kron(np.array([1.0, 0.0]), frame_correction(self.frame_phase) @ psi)
        return float(np.real(np.vdot(target, out @ target)))


# ----------------------------
# Triple swap
# ----------------------------

@dataclass(frozen=True)
class TripleSwapSpec(_ProtocolSpec):
    mech: MechanicalParams
    spins: SpinParams
    epsilon: float = 0.0
    initial_spin: Tuple[float, float] = EXCITED
    cutoffs: Mapping[str, int] = field(default_factory=dict)
    noise: bool = True
    thermal: bool = False
    points_per_segment: int = 40
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    convergence: CutoffPolicy = field(default_factory=CutoffPolicy)

    protocol = TRIPLE_SWAP
    frame_phase = TRIPLE_SWAP_FRAME

    def __post_init__(self) -> None:
        if self.spins.kind != SINGLE_SPIN:
            raise ParameterError("triple swap runs on single spins (spins.kind = single_spin)")
        if self.points_per_segment < 2:
            raise ParameterError("points_per_segment must be >= 2")

    def _nbar(self) -> float:
        return bose_occupation(self.mech.omega_m, self.mech.T)

    def thermal_modes(self) -> Dict[str, float]:
        nbar = self._nbar()
        return {label: nbar for label in MECHANICAL_LABELS} if self.thermal and nbar > 0 else {}

    def truncated_modes(self) -> Tuple[str, ...]:
        # a T > 0 bath pumps phonons in even from vacuum
        if self.thermal_modes() or (self.noise and self._nbar() > 0):
            return MECHANICAL_LABELS
        return ()

    def space(self) -> CompositeSpace:
        thermal = self.thermal_modes()
        dims: Dict[str, int] = {}
        for label in MECHANICAL_LABELS:
            if label in self.cutoffs:
                dims[label] = int(self.cutoffs[label])
            elif label in thermal:
                dims[label] = auto_cutoff(thermal[label])
            else:
                dims[label] = 3 if (self.noise and self.mech.T > 0) else 2
        return network_space(SINGLE_SPIN, dims)

    def with_cutoffs(self, changes: Mapping[str, int]) -> "TripleSwapSpec":
        merged = {**self.space().cutoffs(), **changes}
        return dataclasses.replace(self, cutoffs={k: v for k, v in merged.items() if k in MECHANICAL_LABELS})

    def schedule(self) -> PulseSchedule:
        return triple_swap_schedule(self.spins.G1, self.spins.G2, self.mech.g, self.epsilon)

    def hamiltonian(self, space: CompositeSpace) -> ScheduledHamiltonian:
        return ScheduledHamiltonian.from_builder(
            self.schedule(), lambda values: build_network_hamiltonian(space, self.mech, self.spins, values)
        )

    def times(self) -> np.ndarray:
        edges = self.schedule().boundaries()
        pieces = [np.linspace(a, b, self.points_per_segment) for a, b in zip(edges[:-1], edges[1:])]
        return np.unique(np.concatenate(pieces))

    def background(self, space: CompositeSpace) -> Dict[str, Any]:
        return {label: thermal_state(space, label, nbar) for label, nbar in self.thermal_modes().items()}

    def run(self, check_cutoffs: bool = True) -> ProtocolRun:
        space = self.space()
        rho0 = self.initial_state(space, bloch_state(*self.initial_spin))
        result = self.evolve(space, rho0, e_ops=self.occupation_ops(space))
        run = ProtocolRun(
            protocol=TRIPLE_SWAP,
            parameters=self.snapshot(),
            initial_state_spec={
                "spin1": {"theta": self.initial_spin[0], "phi": self.initial_spin[1]},
                "spin2": "|->",
                "mechanical": "thermal" if self.thermal_modes() else "vacuum",
            },
            initial_state=rho0,
            result=result,
            logical=self.logical,
            frame_phase=self.frame_phase,
        )
        run.fidelity_report = swap_fidelity(run)
        run.diagnostics["purity"] = result.final_state.purity()
        run.diagnostics["segment_edges"] = [float(x) for x in self.schedule().boundaries()]
        if check_cutoffs:
            run.cutoff_verdict = self.cutoff_verdict(run.summary(), lambda s: s.run(check_cutoffs=False).summary())
        log.info("[protocol] triple_swap fidelity=%.6f", run.fidelity_report.value)
        return run


# ----------------------------
# Molmer-Sorensen gate
# ----------------------------

@dataclass(frozen=True)
class MSGateSpec(_ProtocolSpec):
    mech: MechanicalParams
    spins: SpinParams
    ms: MSParams
    thermal: bool = False
    nbar: Optional[float] = None
    cutoff: Optional[int] = None
    noise: bool = True
    points: int = 101
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    convergence: CutoffPolicy = field(default_factory=CutoffPolicy)

    protocol = MS_GATE

    def __post_init__(self) -> None:
        if self.spins.kind != SINGLE_SPIN:
            raise ParameterError("the MS gate runs on single spins (spins.kind = single_spin)")
        if self.nbar is not None and self.nbar < 0:
            raise ParameterError(f"nbar must be >= 0, got {self.nbar}")
        if self.points < 2:
            raise ParameterError("points must be >= 2")

    def mode_nbar(self) -> float:
        if self.nbar is not None:
            return float(self.nbar)
        return bose_occupation(self.mech.omega_m, self.mech.T) if self.thermal else 0.0

    def thermal_modes(self) -> Dict[str, float]:
        nbar = self.mode_nbar()
        return {"m": nbar} if nbar > 0 else {}

    def truncated_modes(self) -> Tuple[str, ...]:
        heated = self.noise and bose_occupation(self.mech.omega_m, self.mech.T) > 0
        return ("m",) if self.mode_nbar() > 0 or heated else ()

    def space(self) -> CompositeSpace:
        if self.cutoff is not None:
            return ms_space(self.cutoff)
        return ms_space(auto_cutoff(self.mode_nbar(), extra=MS_THERMAL_MARGIN, minimum=MS_VACUUM_CUTOFF))

    def with_cutoffs(self, changes: Mapping[str, int]) -> "MSGateSpec":
        return dataclasses.replace(self, cutoff=int(changes["m"]))

    def hamiltonian(self, space: CompositeSpace) -> TimeDependentHamiltonian:
        return TimeDependentHamiltonian(zero_operator(space), tuple(ms_hamiltonian_terms(space, self.ms)))

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.ms.gate_time, self.points)

    def background(self, space: CompositeSpace) -> Dict[str, Any]:
        nbar = self.mode_nbar()
        return {"m": thermal_state(space, "m", nbar)} if nbar > 0 else {}

    def build_channel(self) -> LogicalChannel:
        raise ParameterError("the MS gate is scored against a fixed entangled target, not a swap scan")

    def run(self, check_cutoffs: bool = True) -> ProtocolRun:
        space = self.space()
        rho0 = self.initial_state(space, CHANNEL_INPUTS["0"])
        result = self.evolve(space, rho0, e_ops=self.occupation_ops(space))
        spins_final = partial_trace(result.final_state, ["S1", "S2"])
        value = min(uhlmann_fidelity(spins_final, MS_TARGET), 1.0)
        mode_initial = partial_trace(rho0, ["m"])
        mode_final = partial_trace(result.final_state, ["m"])
        run = ProtocolRun(
            protocol=MS_GATE,
            parameters=self.snapshot(),
            initial_state_spec={"spins": "|-->", "mode_nbar": self.mode_nbar()},
            initial_state=rho0,
            result=result,
            fidelity_report=FidelityReport(value, STATE_VS_STATE),
        )
        run.diagnostics.update(
            purity=spins_final.purity(),
            mode_return=trace_distance(mode_final, mode_initial),
            convention_factor=self.ms.convention_factor,
            gate_time=self.ms.gate_time,
            delta=self.ms.delta,
        )
        if check_cutoffs:
            run.cutoff_verdict = self.cutoff_verdict(
                {"fidelity": value}, lambda s: {"fidelity": s.run(check_cutoffs=False).fidelity_report.value}
            )
        log.info("[protocol] ms_gate fidelity=%.6f purity=%.6f", value, run.diagnostics["purity"])
        return run


@dataclass(frozen=True)
class MSCalibration:
    factor: float
    fidelities: Dict[float, float]
    threshold: float


def calibrate_ms_convention(
    G: float = 2 * math.pi * 0.1e6,
    omega_m: float = 2 * math.pi * 1e9,
    K: int = 1,
    candidates: Sequence[float] = MS_CONVENTION_CANDIDATES,
    threshold: float = 0.999,
) -> MSCalibration:
    """
    Scan the drive convention factor at the closure condition (vacuum, no noise)
    and return the factor that reaches the target state.
    """
    mech = MechanicalParams(g=G, omega_m=omega_m, T=0.0)
    spins = SpinParams(G1=G, G2=G)
    fidelities: Dict[float, float] = {}
    for c in candidates:
        spec = MSGateSpec(mech, spins, MSParams.for_closure(omega_m, G, K, c), noise=False, cutoff=MS_VACUUM_CUTOFF)
        fidelities[float(c)] = spec.run(check_cutoffs=False).fidelity_report.value  # type: ignore[union-attr]
        log.debug("[protocol] ms convention c=%.6f fidelity=%.6f", c, fidelities[float(c)])
    best = max(fidelities, key=fidelities.__getitem__)
    if fidelities[best] <= threshold:
        raise ConvergenceError(f"no convention factor reached fidelity {threshold} (best {best}: {fidelities[best]:.6f})")
    return MSCalibration(factor=best, fidelities=fidelities, threshold=threshold)


# ----------------------------
# Ensemble transfer
# ----------------------------

@dataclass(frozen=True)
class EnsembleTransferSpec(_ProtocolSpec):
    mech: MechanicalParams
    spins: SpinParams
    n: Optional[int] = 1
    G: Optional[float] = None
    G_scale: float = 1.0
    occupations: Mapping[str, int] = field(default_factory=dict)
    thermal: bool = False
    cutoffs: Mapping[str, int] = field(default_factory=dict)
    noise: bool = True
    model: str = NETWORK_MODEL
    initial_spin: Tuple[float, float] = EXCITED
    points: int = 101
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    convergence: CutoffPolicy = field(default_factory=CutoffPolicy)

    protocol = ENSEMBLE_TRANSFER
    frame_phase = ENSEMBLE_FRAME

    def __post_init__(self) -> None:
        if self.spins.kind != BOSONIZED:
            raise ParameterError("ensemble transfer needs spins.kind = bosonized_ensemble")
        if self.model not in ENSEMBLE_MODELS:
            raise ParameterError(f"model must be one of {ENSEMBLE_MODELS}, got {self.model!r}")
        if self.G is None and self.n is None:
            raise ParameterError("give either the transfer order n or an explicit G")
        if not self.G_scale > 0:
            raise ParameterError(f"G_scale must be > 0, got {self.G_scale}")
        bad = set(self.occupations) - set(self.mechanical_labels)
        if bad:
            raise ParameterError(f"initial occupations given for non-mechanical modes {sorted(bad)}")
        if self.thermal and any(self.occupations.values()):
            raise ParameterError("choose Fock occupations or a thermal mechanical state, not both")

    @property
    def mechanical_labels(self) -> Tuple[str, ...]:
        return ("a1", "a2") if self.model == EFFECTIVE_MODEL else MECHANICAL_LABELS

    @property
    def target_G(self) -> float:
        if self.G is not None:
            return float(self.G)
        return transfer_condition(self.mech.g, int(self.n))  # type: ignore[arg-type]

    @property
    def coupling(self) -> float:
        return self.target_G * self.G_scale

    @property
    def duration(self) -> float:
        return math.pi / self.target_G

    def _nbar(self) -> float:
        return bose_occupation(self.mech.omega_m, self.mech.T)

    def thermal_modes(self) -> Dict[str, float]:
        nbar = self._nbar()
        return {label: nbar for label in self.mechanical_labels} if self.thermal and nbar > 0 else {}

    def truncated_modes(self) -> Tuple[str, ...]:
        # thermal phonons swap through every mode, the ensembles included
        if self.thermal_modes() or (self.noise and self._nbar() > 0):
            return self.space().labels
        return ()

    def space(self) -> CompositeSpace:
        nbar = self._nbar()
        total = 1 + sum(int(v) for v in self.occupations.values())
        labels = EFFECTIVE_LABELS if self.model == EFFECTIVE_MODEL else NETWORK_LABELS
        dims: Dict[str, int] = {}
        for label in labels:
            if label in self.cutoffs:
                dims[label] = int(self.cutoffs[label])
            elif self.thermal and nbar > 0:
                dims[label] = auto_cutoff(nbar)
            elif self.noise and nbar > 0:
                dims[label] = max(3, total + 1)
            else:
                dims[label] = total + 1
        if self.model == EFFECTIVE_MODEL:
            return CompositeSpace.build(*[(label, BOSON, dims[label]) for label in labels])
        return network_space(BOSONIZED, dims)

    def with_cutoffs(self, changes: Mapping[str, int]) -> "EnsembleTransferSpec":
        return dataclasses.replace(self, cutoffs={**self.space().cutoffs(), **changes})

    def hamiltonian(self, space: CompositeSpace) -> QuantumOperator:
        c = self.coupling
        if self.model == EFFECTIVE_MODEL:
            return build_effective_hamiltonian(space, c)
        return build_network_hamiltonian(space, self.mech, None, {"G1": c, "G2": c})

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.duration, self.points)

    def background(self, space: CompositeSpace) -> Dict[str, Any]:
        thermal = self.thermal_modes()
        parts: Dict[str, Any] = {}
        for label in self.mechanical_labels:
            if label in thermal:
                parts[label] = thermal_state(space, label, thermal[label])
            elif self.occupations.get(label):
                vec = np.zeros(space.subsystem(label).dim, dtype=complex)
                vec[int(self.occupations[label])] = 1.0
                parts[label] = vec
        return parts

    def run(self, check_cutoffs: bool = True) -> ProtocolRun:
        space = self.space()
        rho0 = self.initial_state(space, bloch_state(*self.initial_spin))
        result = self.evolve(space, rho0, e_ops=self.occupation_ops(space))
        run = ProtocolRun(
            protocol=ENSEMBLE_TRANSFER,
            parameters=self.snapshot(),
            initial_state_spec={
                "spin1": {"theta": self.initial_spin[0], "phi": self.initial_spin[1]},
                "spin2": "|0>",
                "mechanical": "thermal" if self.thermal_modes() else dict(self.occupations),
            },
            initial_state=rho0,
            result=result,
            logical=self.logical,
            frame_phase=self.frame_phase,
        )
        run.fidelity_report = swap_fidelity(run)
        run.diagnostics["purity"] = result.final_state.purity()
        run.diagnostics["G"] = self.coupling
        run.diagnostics["ensemble_dephasing"] = "number operator at 2/T2*"
        if "b" in space:
            run.diagnostics["waveguide_return"] = trace_distance(
                partial_trace(result.final_state, ["b"]), partial_trace(rho0, ["b"])
            )
        if self.model == NETWORK_MODEL and not self.noise and not self.thermal_modes():
            run.diagnostics["linear_max_deviation"] = self._linear_deviation(run)
        if check_cutoffs:
            run.cutoff_verdict = self.cutoff_verdict(run.summary(), lambda s: s.run(check_cutoffs=False).summary())
        log.info("[protocol] ensemble_transfer fidelity=%.6f", run.fidelity_report.value)
        return run

    def _linear_deviation(self, run: ProtocolRun) -> float:
        """Largest gap between Fock-space occupations and the first-moment prediction."""
        n0 = [math.sin(self.initial_spin[0] / 2) ** 2] + [float(self.occupations.get(k, 0)) for k in ("a1", "b", "a2")] + [0.0]
        drift = build_drift(self.mech.g, self.coupling, self.mech.delta1, self.mech.delta2)
        linear = occupation_trajectory(drift, n0, run.result.times)
        full = np.column_stack([run.result.expectation(label) for label in NETWORK_LABELS])
        return float(np.abs(full - linear.values).max())


# ----------------------------
# Convenience entry points
# ----------------------------

def run_triple_swap(
    mech: MechanicalParams,
    spins: SpinParams,
    epsilon: float = 0.0,
    initial_spin: Tuple[float, float] = EXCITED,
    cutoffs: Optional[Mapping[str, int]] = None,
    **options: Any,
) -> ProtocolRun:
    return TripleSwapSpec(mech, spins, epsilon, initial_spin, dict(cutoffs or {}), **options).run()


def run_ms_gate(
    mech: MechanicalParams,
    spins: SpinParams,
    ms: MSParams,
    nbar: Optional[float] = None,
    cutoff: Optional[int] = None,
    **options: Any,
) -> ProtocolRun:
    return MSGateSpec(mech, spins, ms, nbar=nbar, cutoff=cutoff, **options).run()


def run_ensemble_transfer(
    mech: MechanicalParams,
    spins: SpinParams,
    n: Optional[int] = 1,
    G: Optional[float] = None,
    occupations: Optional[Mapping[str, int]] = None,
    cutoffs: Optional[Mapping[str, int]] = None,
    **options: Any,
) -> ProtocolRun:
    return EnsembleTransferSpec(
        mech, spins, n=n, G=G, occupations=dict(occupations or {}), cutoffs=dict(cutoffs or {}), **options
    ).run()


def evaluate(spec: _ProtocolSpec, scan: bool = False, mesh_size: int = DEFAULT_MESH) -> Dict[str, Any]:
    """One sweep row: fidelity, its kind, leakage, waveguide return and the cutoff flag."""
    if scan:
        report, verdict = spec.lower_bound(mesh_size)
        return {
            "fidelity": report.value,
            "fidelity_kind": report.kind,
            "leakage": report.leakage,
            "waveguide_return": None,
            "converged": verdict.flag,
        }
    run = spec.run()  # type: ignore[attr-defined]
    report = run.fidelity_report
    return {
        "fidelity": report.value,
        "fidelity_kind": report.kind,
        "leakage": report.leakage,
        "waveguide_return": run.diagnostics.get("waveguide_return"),
        "converged": run.cutoff_verdict.flag if run.cutoff_verdict else "n/a",
    }
