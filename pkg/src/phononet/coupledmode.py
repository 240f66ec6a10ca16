"""Coupled-mode theory of two resonators sharing a multimode waveguide.

Resonators a1, a2 sit at the reference frequency; waveguide mode n sits at
Delta_n and couples as g_n [(a1 + (-1)^n a2) b_n^dag + h.c.]. With a single
waveguide mode the spectrum is the triplet {0, (Delta0 -+ Lambda)/2},
Lambda = sqrt(Delta0^2 + 8 g^2), and the middle line is the dark mode a1 - a2.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from .errors import ParameterError
from .hilbert import BOSON, CompositeSpace, QuantumOperator, ladder, occupation, operator_sum

log = logging.getLogger(__name__)

RESONATOR_LABELS = ("a1", "a2")


@dataclass(frozen=True)
class WaveguideMode:
    n: int
    Delta: float
    g: float

    @property
    def label(self) -> str:
        return f"b{self.n}"

    @property
    def parity(self) -> int:
        return -1 if self.n % 2 else 1


@dataclass(frozen=True)
class MultimodeWaveguideSpec:
    modes: Tuple[WaveguideMode, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise ParameterError("a waveguide needs at least one mode")
        indices = [m.n for m in self.modes]
        if len(set(indices)) != len(indices):
            raise ParameterError(f"waveguide mode indices must be unique, got {indices}")

    @classmethod
    def evenly_spaced(cls, count: int, spacing: float, g: float, Delta0: float = 0.0) -> "MultimodeWaveguideSpec":
        """``count`` modes centred on n = 0 at Delta0 + n * spacing, all with coupling g."""
        if count < 1:
            raise ParameterError(f"count must be >= 1, got {count}")
        first = -(count // 2)
        return cls(tuple(WaveguideMode(n, Delta0 + n * spacing, g) for n in range(first, first + count)))

    @property
    def labels(self) -> Tuple[str, ...]:
        return RESONATOR_LABELS + tuple(m.label for m in self.modes)


@dataclass(frozen=True)
class TripletFit:
    frequencies: Tuple[float, float, float]
    g: float
    Delta0: float
    lambda0: float
    residual: float

    def to_dict(self) -> Dict[str, object]:
        return {
            "frequencies_hz": list(self.frequencies),
            "g_hz": self.g,
            "Delta0_hz": self.Delta0,
            "lambda0_hz": self.lambda0,
            "residual_hz": self.residual,
        }


def predict_triplet(g: float, Delta0: float) -> Tuple[float, float, float]:
    """Eigenvalues relative to the resonator frequency, ascending."""
    if not g > 0:
        raise ParameterError(f"g must be > 0, got {g}")
    lam = math.sqrt(Delta0 * Delta0 + 8 * g * g)
    # the outer lines multiply to -2 g^2; take the small one from the large one
    if Delta0 >= 0:
        hi = 0.5 * (Delta0 + lam)
        return (-2 * g * g / hi, 0.0, hi)
    lo = 0.5 * (Delta0 - lam)
    return (lo, 0.0, -2 * g * g / lo)


def fit_triplet(freqs: Sequence[float]) -> TripletFit:
    """
    Invert a measured triplet (absolute Hz). The middle line is the dark mode
    and fixes the resonator frequency; Delta0 = l+ + l- - 2 l0 and
    g = sqrt((l0 - l-)(l+ - l0) / 2).
    """
    values = [float(f) for f in freqs]
    if len(values) != 3:
        raise ParameterError(f"need exactly three frequencies, got {len(values)}")
    if not all(math.isfinite(f) for f in values):
        raise ParameterError(f"frequencies must be finite, got {values}")
    lo, mid, hi = sorted(values)
    if lo == mid or mid == hi:
        raise ParameterError(f"frequencies must be distinct, got {values}")
    delta0 = hi + lo - 2 * mid
    g = math.sqrt((mid - lo) * (hi - mid) / 2)
    predicted = np.array(predict_triplet(g, delta0)) + mid
    residual = float(np.abs(predicted - np.array([lo, mid, hi])).max())
    log.debug("[coupledmode] triplet fit g=%.6g Hz Delta0=%.6g Hz residual=%.3g Hz", g, delta0, residual)
    return TripletFit(frequencies=(lo, mid, hi), g=g, Delta0=delta0, lambda0=mid, residual=residual)


def multimode_space(spec: MultimodeWaveguideSpec, dim: int = 2) -> CompositeSpace:
    return CompositeSpace.build(*[(label, BOSON, dim) for label in spec.labels])


def build_multimode_hamiltonian(space: CompositeSpace, spec: MultimodeWaveguideSpec) -> QuantumOperator:
    """H/hbar = sum_n Delta_n b_n^dag b_n + g_n [(a1 + (-1)^n a2) b_n^dag + h.c.]."""
    missing = [label for label in spec.labels if label not in space]
    if missing:
        raise ParameterError(f"space is missing modes {missing} (has {list(space.labels)})")
    a1, a2 = (ladder(space, label) for label in RESONATOR_LABELS)
    terms = []
    for mode in spec.modes:
        b = ladder(space, mode.label)
        if mode.Delta:
            terms.append(mode.Delta * occupation(space, mode.label))
        if mode.g:
            arm = a1 + mode.parity * a2
            terms.append((mode.g * (b.dag() @ arm)).with_hermitian_part())
    return operator_sum(terms, space)


def single_excitation_matrix(spec: MultimodeWaveguideSpec) -> np.ndarray:
    """Coupling matrix on (a1, a2, b_n...) in the one-excitation sector."""
    k = len(spec.modes)
    M = np.zeros((2 + k, 2 + k))
    for i, mode in enumerate(spec.modes, start=2):
        M[i, i] = mode.Delta
        M[0, i] = M[i, 0] = mode.g
        M[1, i] = M[i, 1] = mode.parity * mode.g
    return M


def multimode_spectrum(spec: MultimodeWaveguideSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and column eigenvectors of the one-excitation matrix."""
    return la.eigh(single_excitation_matrix(spec))


@dataclass(frozen=True)
class DarkMode:
    eigenvalue: float
    waveguide_weight: float
    vector: np.ndarray
    overlap: float


def dark_mode_waveguide_weight(spec: MultimodeWaveguideSpec) -> DarkMode:
    """
    The eigenmode closest to (a1 - a2)/sqrt(2) and the population it carries in
    the waveguide. Zero for a single mode; nonzero once odd-parity modes exist.
    """
    w, V = multimode_spectrum(spec)
    dark = np.zeros(V.shape[0])
    dark[0], dark[1] = 1 / math.sqrt(2), -1 / math.sqrt(2)
    overlaps = np.abs(dark @ V) ** 2
    k = int(np.argmax(overlaps))
    vec = V[:, k]
    return DarkMode(
        eigenvalue=float(w[k]),
        waveguide_weight=float(np.sum(np.abs(vec[2:]) ** 2)),
        vector=vec,
        overlap=float(overlaps[k]),
    )
