"""Fock-cutoff convergence: compare a run with its refined-cutoff rerun.

Summaries are flat {name: number} maps (fidelity, leakage, ...). Fields that
move by more than the tolerance between the two cutoffs are reported as diffs;
an empty diff list means the base cutoff is converged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

NOT_CHECKED = "n/a"
OUT_OF_DESK_SCALE = "out_of_desk_scale"


@dataclass(frozen=True)
class CutoffDiff:
    field: str
    base: float
    refined: float

    @property
    def delta(self) -> float:
        return self.refined - self.base


@dataclass(frozen=True)
class CutoffVerdict:
    """converged is None when no check ran (no truncated modes, or too large to rerun)."""

    converged: Optional[bool]
    base_cutoffs: Mapping[str, int]
    refined_cutoffs: Mapping[str, int] = field(default_factory=dict)
    diffs: Tuple[CutoffDiff, ...] = ()
    note: str = ""

    @property
    def flag(self) -> str:
        """CSV form: true, false, n/a or out_of_desk_scale."""
        if self.converged is None:
            return self.note if self.note == OUT_OF_DESK_SCALE else NOT_CHECKED
        return "true" if self.converged else "false"

    def to_dict(self) -> Dict[str, object]:
        return {
            "converged": self.converged,
            "flag": self.flag,
            "base_cutoffs": dict(self.base_cutoffs),
            "refined_cutoffs": dict(self.refined_cutoffs),
            "diffs": [{"field": d.field, "base": d.base, "refined": d.refined} for d in self.diffs],
            "note": self.note,
        }


def _norm(v: object) -> float:
    if v is None:
        return math.nan
    return float(v)  # type: ignore[arg-type]


def diff_results(base: Mapping[str, object], refined: Mapping[str, object], tolerance: float) -> List[CutoffDiff]:
    """
    Compare two run summaries field by field. A field missing on one side, or
    NaN on exactly one side, always counts as a diff.
    """
    diffs: List[CutoffDiff] = []
    for k in sorted(set(base) | set(refined)):
        a = _norm(base.get(k))
        b = _norm(refined.get(k))
        if math.isnan(a) and math.isnan(b):
            continue
        if math.isnan(a) or math.isnan(b) or abs(a - b) > tolerance:
            diffs.append(CutoffDiff(field=k, base=a, refined=b))
    return diffs


def fmt_diff(d: CutoffDiff, *, digits: int = 8) -> str:
    return f"  - {d.field}: {d.base:.{digits}g}  ->  {d.refined:.{digits}g}  (delta {d.delta:+.3e})"


def not_checked(cutoffs: Mapping[str, int], note: str = "no truncated modes") -> CutoffVerdict:
    return CutoffVerdict(converged=None, base_cutoffs=dict(cutoffs), note=note)
