"""Physical parameter sets, Hamiltonian builders and derived rates.

All Hamiltonians are returned as H/hbar in rad/s, in the frame rotating at
the frequency of resonator 1. Detunings are defined as (waveguide - resonator):
delta1 = w_b - w_1, delta2 = w_b - w_2, so in that frame b sits at delta1 and
resonator 2 (with its resonant spin S2) at delta1 - delta2.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy import constants

from .errors import ParameterError
from .hilbert import (
    BOSON,
    QUBIT,
    CompositeSpace,
    QuantumOperator,
    ladder,
    make_operator,
    occupation,
    operator_sum,
    zero_operator,
)

log = logging.getLogger(__name__)

SINGLE_SPIN = "single_spin"
BOSONIZED = "bosonized_ensemble"
SPIN_KINDS = (SINGLE_SPIN, BOSONIZED)

NETWORK_LABELS = ("S1", "a1", "b", "a2", "S2")
SUPERMODE_LABELS = ("S+", "a+", "b", "a-", "S-")
MS_LABELS = ("S1", "S2", "m")
MECHANICAL_LABELS = ("a1", "b", "a2")

DEFAULT_CUTOFF = 3
DEFAULT_MS_CONVENTION = 1 / math.sqrt(2)
MS_CONVENTION_CANDIDATES = (0.25, 0.5, 1 / math.sqrt(2), 1.0, math.sqrt(2), 2.0)


# ----------------------------
# Parameter sets
# ----------------------------

@dataclass(frozen=True)
class MechanicalParams:
    g: float
    delta1: float = 0.0
    delta2: float = 0.0
    omega_m: float = 2 * math.pi * 1e9
    Q_m: float = 1e7
    T: float = 0.0

    def __post_init__(self) -> None:
        if not self.g > 0:
            raise ParameterError(f"mechanical.g must be > 0, got {self.g}")
        if not self.Q_m > 0:
            raise ParameterError(f"mechanical.Q_m must be > 0, got {self.Q_m}")
        if self.T < 0:
            raise ParameterError(f"mechanical.T must be >= 0, got {self.T}")
        if not self.omega_m > 0:
            raise ParameterError(f"mechanical.omega_m must be > 0, got {self.omega_m}")

    @property
    def kappa(self) -> float:
        """Energy damping rate omega_m / Q_m."""
        return self.omega_m / self.Q_m


@dataclass(frozen=True)
class SpinParams:
    G1: float
    G2: float
    T1: float = math.inf
    T2_star: float = math.inf
    kind: str = SINGLE_SPIN

    def __post_init__(self) -> None:
        if not self.T1 > 0:
            raise ParameterError(f"spins.T1 must be > 0, got {self.T1}")
        if not self.T2_star > 0:
            raise ParameterError(f"spins.T2_star must be > 0, got {self.T2_star}")
        if self.kind not in SPIN_KINDS:
            raise ParameterError(f"spins.kind must be one of {SPIN_KINDS}, got {self.kind!r}")

    @property
    def bosonized(self) -> bool:
        return self.kind == BOSONIZED


@dataclass(frozen=True)
class RamanParams:
    D: float
    k_m: float
    x_zpf: float
    Omega_plus: float
    Omega_minus: float
    Delta_plus: float
    Delta_minus: float
    Gamma_ex: float
    omega_m: float

    def __post_init__(self) -> None:
        for name in ("D", "k_m", "x_zpf", "Gamma_ex", "omega_m"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"raman.{name} must be > 0, got {getattr(self, name)}")
        for name in ("Omega_plus", "Omega_minus"):
            if getattr(self, name) < 0:
                raise ParameterError(f"raman.{name} must be >= 0, got {getattr(self, name)}")

    @property
    def resonance_mismatch(self) -> float:
        """(Delta_minus - omega_m) - Delta_plus; zero on two-photon resonance."""
        return self.Delta_minus - self.omega_m - self.Delta_plus


@dataclass(frozen=True)
class MSParams:
    Delta_MS: float
    K: int
    G: float
    convention_factor: float = DEFAULT_MS_CONVENTION
    omega_m: float = 2 * math.pi * 1e9

    def __post_init__(self) -> None:
        if int(self.K) != self.K or self.K < 1:
            raise ParameterError(f"ms.K must be an integer >= 1, got {self.K}")
        if not self.G > 0:
            raise ParameterError(f"ms.G must be > 0, got {self.G}")
        if not self.convention_factor > 0:
            raise ParameterError(f"ms.convention_factor must be > 0, got {self.convention_factor}")

    @property
    def delta(self) -> float:
        """Drive detuning from the mediating mode, omega_m - Delta_MS."""
        return self.omega_m - self.Delta_MS

    @property
    def gate_time(self) -> float:
        """2*pi*K/|delta|, after which the mode disentangles from the spins."""
        d = self.delta
        if d == 0:
            raise ParameterError("ms: omega_m == Delta_MS, a resonant drive is not an MS gate")
        return 2 * math.pi * self.K / abs(d)

    @property
    def closure_G(self) -> float:
        """Drive strength that closes the gate at K loops: |delta| / (2*sqrt(2K))."""
        return abs(self.delta) / (2 * math.sqrt(2 * self.K))

    @classmethod
    def for_closure(
        cls,
        omega_m: float,
        G: float,
        K: int = 1,
        convention_factor: float = DEFAULT_MS_CONVENTION,
        sign: int = -1,
    ) -> "MSParams":
        """
        Choose Delta_MS so that G satisfies the closure condition.

        sign=-1 puts the drive above the mode (delta < 0), which with the
        default convention factor produces (|--> - i|++>)/sqrt(2).
        """
        if sign not in (-1, 1):
            raise ParameterError(f"sign must be +1 or -1, got {sign}")
        delta = sign * 2 * math.sqrt(2 * K) * G
        return cls(Delta_MS=omega_m - delta, K=K, G=G, convention_factor=convention_factor, omega_m=omega_m)


@dataclass(frozen=True)
class Segment:
    duration: float
    values: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ParameterError(f"segment duration must be finite and > 0, got {self.duration}")
        object.__setattr__(self, "values", dict(self.values))


@dataclass(frozen=True)
class PulseSchedule:
    """Piecewise-constant couplings. Edges are instantaneous."""

    segments: Tuple[Segment, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ParameterError("a PulseSchedule needs at least one segment")

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def boundaries(self) -> np.ndarray:
        """[0, t1, t1+t2, ..., total]."""
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def segment_index(self, t: float) -> int:
        edges = self.boundaries()
        i = int(np.searchsorted(edges, t, side="right")) - 1
        return min(max(i, 0), len(self.segments) - 1)

    def value_at(self, t: float, name: str) -> float:
        return float(self.segments[self.segment_index(t)].values[name])

    def scaled(self, factor: float) -> "PulseSchedule":
        return PulseSchedule(tuple(Segment(s.duration * factor, s.values) for s in self.segments))


@dataclass(frozen=True)
class MaterialParams:
    E: float
    nu: float
    rho: float = 3539.0

    def __post_init__(self) -> None:
        if not self.E > 0:
            raise ParameterError(f"material.E must be > 0, got {self.E}")
        if not -1 < self.nu < 0.5:
            raise ParameterError(f"material.nu must be in (-1, 0.5), got {self.nu}")
        if not self.rho > 0:
            raise ParameterError(f"material.rho must be > 0, got {self.rho}")


# ----------------------------
# Spaces
# ----------------------------

def _cutoff(cutoffs: Mapping[str, int], label: str) -> int:
    return int(cutoffs.get(label, DEFAULT_CUTOFF))


def network_space(kind: str = SINGLE_SPIN, cutoffs: Optional[Mapping[str, int]] = None) -> CompositeSpace:
    """
    Five-mode space (S1, a1, b, a2, S2). ``cutoffs`` maps boson labels to their
    Hilbert dimension (Fock cutoff N+1); unspecified bosons get DEFAULT_CUTOFF.
    """
    if kind not in SPIN_KINDS:
        raise ParameterError(f"unknown spin kind {kind!r}")
    cutoffs = dict(cutoffs or {})
    unknown = set(cutoffs) - set(NETWORK_LABELS)
    if unknown:
        raise ParameterError(f"cutoffs given for unknown modes {sorted(unknown)}")
    specs = []
    for label in NETWORK_LABELS:
        if label.startswith("S") and kind == SINGLE_SPIN:
            if cutoffs.get(label, 2) != 2:
                raise ParameterError(f"{label} is a single spin (dim 2), cutoff {cutoffs[label]} given")
            specs.append((label, QUBIT, 2))
        else:
            specs.append((label, BOSON, _cutoff(cutoffs, label)))
    return CompositeSpace.build(*specs)


def supermode_space(cutoffs: Optional[Mapping[str, int]] = None) -> CompositeSpace:
    cutoffs = dict(cutoffs or {})
    return CompositeSpace.build(*[(label, BOSON, _cutoff(cutoffs, label)) for label in SUPERMODE_LABELS])


def ms_space(cutoff: int = DEFAULT_CUTOFF) -> CompositeSpace:
    return CompositeSpace.build(("S1", QUBIT, 2), ("S2", QUBIT, 2), ("m", BOSON, int(cutoff)))


def supermode_transform() -> np.ndarray:
    """
    Unitary T with (S+, a+, b, a-, S-) = T @ (S1, a1, b, a2, S2),
    where x+- = (x1 +- x2)/sqrt(2).
    """
    r = 1 / math.sqrt(2)
    return np.array(
        [
            [r, 0, 0, 0, r],
            [0, r, 0, r, 0],
            [0, 0, 1, 0, 0],
            [0, r, 0, -r, 0],
            [r, 0, 0, 0, -r],
        ],
        dtype=float,
    )


# ----------------------------
# Hamiltonians
# ----------------------------

def _require_labels(space: CompositeSpace, labels: Tuple[str, ...]) -> None:
    missing = [label for label in labels if label not in space]
    if missing:
        raise ParameterError(f"space is missing modes {missing} (has {list(space.labels)})")


def _exchange(x: QuantumOperator, y: QuantumOperator, rate: float) -> QuantumOperator:
    """rate * (x^dag y + y^dag x)."""
    return (rate * (x.dag() @ y)).with_hermitian_part()


def _couplings(
    mech: MechanicalParams,
    spins: Optional[SpinParams],
    values: Optional[Mapping[str, float]],
) -> Dict[str, float]:
    known = {"g", "G1", "G2", "delta1", "delta2"}
    merged: Dict[str, float] = {"g": mech.g, "delta1": mech.delta1, "delta2": mech.delta2}
    if spins is not None:
        merged.update(G1=spins.G1, G2=spins.G2)
    if values:
        extra = set(values) - known
        if extra:
            raise ParameterError(f"unknown coupling names {sorted(extra)} (expected {sorted(known)})")
        merged.update({k: float(v) for k, v in values.items()})
    for name in ("G1", "G2"):
        if name not in merged:
            raise ParameterError(f"missing coupling value {name!r}")
    return merged


def build_network_hamiltonian(
    space: CompositeSpace,
    mech: MechanicalParams,
    spins: Optional[SpinParams] = None,
    values: Optional[Mapping[str, float]] = None,
) -> QuantumOperator:
    """
    H/hbar = g b^dag (a1 + a2) + G1 S1 a1^dag + G2 S2 a2^dag + h.c.
             + delta1 b^dag b + (delta1 - delta2)(a2^dag a2 + S2^dag S2)

    ``values`` overrides any of g, G1, G2, delta1, delta2 (a pulse segment).
    The S modes are qubits (S = |-><+|) or bosons, as the space declares.
    """
    _require_labels(space, NETWORK_LABELS)
    c = _couplings(mech, spins, values)
    S1, a1, b, a2, S2 = (ladder(space, label) for label in NETWORK_LABELS)
    terms: List[QuantumOperator] = []
    if c["g"]:
        terms += [_exchange(b, a1, c["g"]), _exchange(b, a2, c["g"])]
    if c["G1"]:
        terms.append(_exchange(a1, S1, c["G1"]))
    if c["G2"]:
        terms.append(_exchange(a2, S2, c["G2"]))
    if c["delta1"]:
        terms.append(c["delta1"] * occupation(space, "b"))
    shift = c["delta1"] - c["delta2"]
    if shift:
        terms.append(shift * (occupation(space, "a2") + occupation(space, "S2")))
    return operator_sum(terms, space)


def build_supermode_hamiltonian(space: CompositeSpace, g: float, G: float) -> QuantumOperator:
    """H/hbar = sqrt(2) g b^dag a+ + G (S+^dag a+ + S-^dag a-) + h.c."""
    _require_labels(space, SUPERMODE_LABELS)
    for label in SUPERMODE_LABELS:
        if space.subsystem(label).kind != BOSON:
            raise ParameterError(f"super-mode form needs bosonized modes, {label!r} is a qubit")
    Sp, ap, b, am, Sm = (ladder(space, label) for label in SUPERMODE_LABELS)
    terms: List[QuantumOperator] = []
    if g:
        terms.append(_exchange(b, ap, math.sqrt(2) * g))
    if G:
        terms += [_exchange(Sp, ap, G), _exchange(Sm, am, G)]
    return operator_sum(terms, space)


EFFECTIVE_SITE_LABELS = ("S1", "a1", "a2", "S2")


def build_effective_hamiltonian(
    space: CompositeSpace,
    G: float,
    labels: Tuple[str, str] = ("S-", "a-"),
) -> QuantumOperator:
    """
    Beam splitter G (S-^dag a- + h.c.) on the antisymmetric pair, valid for G << Gamma.

    On a site-basis space (S1, a1, a2, S2) the pair is built as
    S- = (S1 - S2)/sqrt(2), a- = (a1 - a2)/sqrt(2).
    """
    if all(label in space for label in labels):
        S, a = (ladder(space, label) for label in labels)
    else:
        _require_labels(space, EFFECTIVE_SITE_LABELS)
        r = 1 / math.sqrt(2)
        S1, a1, a2, S2 = (ladder(space, label) for label in EFFECTIVE_SITE_LABELS)
        S, a = r * (S1 - S2), r * (a1 - a2)
    if not G:
        return zero_operator(space)
    return _exchange(S, a, G)


@dataclass(frozen=True)
class Oscillation:
    """Picklable time coefficient exp(i * omega * t)."""

    omega: float

    def __call__(self, t: float) -> complex:
        return complex(np.exp(1j * self.omega * t))


def _ms_check(space: CompositeSpace, ms: MSParams) -> float:
    _require_labels(space, MS_LABELS)
    if space.subsystem("m").kind != BOSON:
        raise ParameterError("MS mediating mode 'm' must be a boson")
    d = ms.delta
    if d == 0:
        raise ParameterError("ms: omega_m == Delta_MS, a resonant drive is not an MS gate")
    return d


def ms_hamiltonian_terms(space: CompositeSpace, ms: MSParams) -> List[Tuple[QuantumOperator, Oscillation]]:
    """
    Interaction-picture MS drive split as sum_k A_k f_k(t):
    c G Sx a e^{-i delta t} + c G Sx a^dag e^{+i delta t}, Sx = sigma_x1 + sigma_x2.
    """
    d = _ms_check(space, ms)
    sx = make_operator(space, "S1", "sigma_x") + make_operator(space, "S2", "sigma_x")
    a = make_operator(space, "m", "annihilation")
    amp = ms.convention_factor * ms.G
    return [
        (amp * (sx @ a), Oscillation(-d)),
        (amp * (sx @ a.dag()), Oscillation(d)),
    ]


def build_ms_hamiltonian(space: CompositeSpace, ms: MSParams, t: float) -> QuantumOperator:
    """H(t)/hbar = c G (sigma_x1 + sigma_x2)(a e^{-i delta t} + a^dag e^{i delta t})."""
    terms = ms_hamiltonian_terms(space, ms)
    m = sum((op.matrix * f(t) for op, f in terms), start=zero_operator(space).matrix)
    return QuantumOperator(space, m, hermitian=True)


# ----------------------------
# Derived rates
# ----------------------------

@dataclass(frozen=True)
class RamanRates:
    g_s: float
    G: float
    gamma_opt: float
    gamma_opt_plus: float
    gamma_opt_minus: float
    resonance_mismatch: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "g_s": self.g_s,
            "G": self.G,
            "gamma_opt": self.gamma_opt,
            "gamma_opt_plus": self.gamma_opt_plus,
            "gamma_opt_minus": self.gamma_opt_minus,
            "resonance_mismatch": self.resonance_mismatch,
        }


def single_phonon_coupling(p: RamanParams) -> float:
    """g_s = D k_m x_zpf / hbar, with D in eV."""
    return p.D * constants.e * p.k_m * p.x_zpf / constants.hbar


def raman_effective_coupling(p: RamanParams) -> RamanRates:
    """Effective spin-phonon rate G = g_s Om+ Om- / (4 |Delta+| omega_m) and the optical decoherence."""
    if p.Delta_plus == 0 or p.Delta_minus == 0:
        raise ParameterError("raman: zero dipole detuning, optical scattering rate diverges")
    g_s = single_phonon_coupling(p)
    G = g_s * p.Omega_plus * p.Omega_minus / (4 * abs(p.Delta_plus) * p.omega_m)
    gp = (p.Omega_plus / (2 * p.Delta_plus)) ** 2 * p.Gamma_ex
    gm = (p.Omega_minus / (2 * p.Delta_minus)) ** 2 * p.Gamma_ex
    mismatch = p.resonance_mismatch
    if abs(mismatch) > 1e-9 * max(abs(p.Delta_plus), p.omega_m):
        log.warning("[model] Raman legs off two-photon resonance by %.4g rad/s", mismatch)
    return RamanRates(g_s=g_s, G=G, gamma_opt=max(gp, gm), gamma_opt_plus=gp, gamma_opt_minus=gm, resonance_mismatch=mismatch)


def solve_phonon_wavevector(p: RamanParams, G_target: float) -> float:
    """k_m that makes raman_effective_coupling(p).G equal G_target (G is linear in k_m)."""
    if G_target <= 0:
        raise ParameterError(f"target G must be > 0, got {G_target}")
    if p.Omega_plus == 0 or p.Omega_minus == 0:
        raise ParameterError("raman: a zero Rabi frequency gives G = 0 for every k_m")
    per_k = raman_effective_coupling(p).G / p.k_m
    return G_target / per_k


def thermalization_rate(T: float, Q_m: float) -> float:
    """k_B T / (hbar Q_m), rad/s."""
    if T < 0:
        raise ParameterError(f"T must be >= 0, got {T}")
    if not Q_m > 0:
        raise ParameterError(f"Q_m must be > 0, got {Q_m}")
    return constants.k * T / (constants.hbar * Q_m)


@dataclass(frozen=True)
class LameConstants:
    lam: float
    mu: float

    def to_dict(self) -> Dict[str, float]:
        return {"lambda": self.lam, "mu": self.mu}


def lame_constants(m: MaterialParams) -> LameConstants:
    lam = m.nu * m.E / ((1 + m.nu) * (1 - 2 * m.nu))
    mu = m.E / (2 * (1 + m.nu))
    return LameConstants(lam=lam, mu=mu)


def triple_swap_schedule(G1: float, G2: float, g: float, epsilon: float = 0.0) -> PulseSchedule:
    """
    Spin 1 -> a1 (G1 on), a1 -> a2 through the waveguide (both off),
    a2 -> spin 2 (G2 on). g stays on throughout; every duration is scaled by 1+epsilon.
    """
    for name, rate in (("G1", G1), ("G2", G2), ("g", g)):
        if not rate > 0:
            raise ParameterError(f"{name} must be > 0, got {rate}")
    scale = 1.0 + epsilon
    if scale <= 0:
        raise ParameterError(f"epsilon must be > -1, got {epsilon}")
    return PulseSchedule(
        (
            Segment(scale * math.pi / (2 * G1), {"G1": G1, "G2": 0.0, "g": g}),
            Segment(scale * math.pi / (math.sqrt(2) * g), {"G1": 0.0, "G2": 0.0, "g": g}),
            Segment(scale * math.pi / (2 * G2), {"G1": 0.0, "G2": G2, "g": g}),
        )
    )
