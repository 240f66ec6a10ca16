"""Unit tests for phononet.protocols."""
import dataclasses
import math

import numpy as np
import pytest

from phononet.convergence import OUT_OF_DESK_SCALE
from phononet.errors import ConvergenceError, ParameterError
from phononet.fidelity import LOWER_BOUND, STATE_VS_STATE, SWAP_TARGET
from phononet.hilbert import thermal_tail
from phononet.model import BOSONIZED, MECHANICAL_LABELS, NETWORK_LABELS, MechanicalParams, MSParams, SpinParams
from phononet.protocols import (
    EXCITED,
    MS_VACUUM_CUTOFF,
    CutoffPolicy,
    EnsembleTransferSpec,
    MSGateSpec,
    TripleSwapSpec,
    auto_cutoff,
    calibrate_ms_convention,
    evaluate,
    run_ensemble_transfer,
    run_triple_swap,
)

TWO_PI = 2 * math.pi
G_WAVEGUIDE = TWO_PI * 0.1e6


def _swap_spec(ratio, **kwargs):
    G = ratio * G_WAVEGUIDE
    kwargs.setdefault("noise", False)
    return TripleSwapSpec(MechanicalParams(g=G_WAVEGUIDE), SpinParams(G1=G, G2=G), **kwargs)


def _ensemble_spec(**kwargs):
    mech = kwargs.pop("mech", MechanicalParams(g=TWO_PI * 1e6))
    kwargs.setdefault("noise", False)
    kwargs.setdefault("points", 3)
    return EnsembleTransferSpec(mech, SpinParams(0.0, 0.0, kind=BOSONIZED), **kwargs)


def _ms_spec(**kwargs):
    G = TWO_PI * 0.1e6
    ms = MSParams.for_closure(TWO_PI * 1e9, G)
    kwargs.setdefault("noise", False)
    return MSGateSpec(MechanicalParams(g=G), SpinParams(G, G), ms, **kwargs)


@pytest.mark.parametrize("nbar", [0.1, 1.6236, 9.927])
def test_auto_cutoff_bounds_thermal_tail(nbar):
    d = auto_cutoff(nbar)
    assert thermal_tail(nbar, d) <= 1e-4 < thermal_tail(nbar, d - 1)
    assert auto_cutoff(nbar, extra=8) == d + 8


def test_auto_cutoff_minimum():
    assert auto_cutoff(0.0) == 2
    assert auto_cutoff(0.0, minimum=MS_VACUUM_CUTOFF) == MS_VACUUM_CUTOFF


def test_triple_swap_large_ratio_is_near_perfect():
    run = _swap_spec(100).run()
    assert run.fidelity_report.kind == SWAP_TARGET
    assert run.fidelity_report.value > 0.99
    assert run.cutoff_verdict.flag == "n/a"
    total = sum(run.result.expectation(label) for label in ("S1", "a1", "b", "a2", "S2"))
    assert np.allclose(total, 1.0, atol=1e-9)
    # mode-2 occupation peaks at the end of the waveguide segment
    edges = run.diagnostics["segment_edges"]
    a2 = run.result.expectation("a2")
    t_peak = run.result.times[int(np.argmax(a2))]
    assert t_peak == pytest.approx(edges[2], rel=0.05)


def test_triple_swap_improves_with_ratio():
    low = _swap_spec(2).run(check_cutoffs=False).fidelity_report.value
    high = _swap_spec(50).run(check_cutoffs=False).fidelity_report.value
    assert low < high


def test_triple_swap_with_mechanical_noise():
    run = run_triple_swap(
        MechanicalParams(g=G_WAVEGUIDE, Q_m=1e7),
        SpinParams(50 * G_WAVEGUIDE, 50 * G_WAVEGUIDE),
        cutoffs={"a1": 2, "b": 2, "a2": 2},
    )
    assert run.result.convergence_report.method == "sector"
    assert 0.95 < run.fidelity_report.value < 1.0
    assert run.diagnostics["purity"] < 1.0
    assert "t" in run.traces and "S2" in run.traces


def test_triple_swap_rejects_ensembles():
    with pytest.raises(ParameterError, match="single spins"):
        TripleSwapSpec(MechanicalParams(g=1.0), SpinParams(1.0, 1.0, kind=BOSONIZED))


def test_channel_matches_single_run():
    spec = _swap_spec(50)
    channel = spec.build_channel()
    direct = spec.run(check_cutoffs=False).fidelity_report.value
    assert channel.fidelity_for(*EXCITED) == pytest.approx(direct, abs=1e-7)
    report, verdict = spec.lower_bound(mesh_size=16)
    assert report.kind == LOWER_BOUND
    assert report.value > 0.99
    assert verdict.flag == "n/a"


def test_ms_gate_vacuum_reaches_target():
    run = _ms_spec().run()
    assert run.fidelity_report.kind == STATE_VS_STATE
    assert run.fidelity_report.value > 0.999
    assert run.diagnostics["purity"] > 0.999
    assert run.diagnostics["mode_return"] < 1e-3
    assert run.diagnostics["gate_time"] == pytest.approx(TWO_PI / abs(run.diagnostics["delta"]))
    assert run.result.final_state.space.subsystem("m").dim == MS_VACUUM_CUTOFF


def test_ms_gate_thermal_mode_converged():
    spec = _ms_spec(nbar=0.5)
    assert spec.space().subsystem("m").dim == auto_cutoff(0.5, extra=8, minimum=MS_VACUUM_CUTOFF)
    run = spec.run()
    assert run.fidelity_report.value > 0.999
    assert run.cutoff_verdict.flag == "true"
    assert run.cutoff_verdict.refined_cutoffs["m"] == spec.space().subsystem("m").dim + 5


def test_ms_gate_has_no_swap_channel():
    with pytest.raises(ParameterError):
        _ms_spec().build_channel()


def test_ms_convention_calibration():
    cal = calibrate_ms_convention()
    assert cal.factor == pytest.approx(1 / math.sqrt(2))
    assert cal.fidelities[cal.factor] > 0.999
    assert min(cal.fidelities.values()) < 0.9


def test_cutoff_verdict_strict_and_lenient():
    lenient = _ms_spec(nbar=0.5)
    verdict = lenient.cutoff_verdict({"fidelity": 0.90}, lambda s: {"fidelity": 0.95})
    assert verdict.flag == "false"
    assert verdict.diffs[0].field == "fidelity"
    strict = _ms_spec(nbar=0.5, convergence=CutoffPolicy(strict=True))
    with pytest.raises(ConvergenceError, match="moved"):
        strict.cutoff_verdict({"fidelity": 0.90}, lambda s: {"fidelity": 0.95})


def test_refined_reports_desk_scale_and_missing_modes():
    hot = _ensemble_spec(mech=MechanicalParams(g=TWO_PI * 1e6, T=0.5), thermal=True)
    spec, note = hot.refined()
    assert spec is None and note == OUT_OF_DESK_SCALE
    spec, note = _ensemble_spec().refined()
    assert spec is None and note == "no truncated modes"
    spec, note = _ms_spec(nbar=0.5, convergence=CutoffPolicy(enabled=False)).refined()
    assert spec is None and note == "disabled"


@pytest.mark.parametrize("n", [1, 2])
def test_ensemble_transfer_is_perfect(n):
    run = _ensemble_spec(n=n).run()
    assert run.fidelity_report.value == pytest.approx(1.0, abs=1e-8)
    assert run.fidelity_report.leakage == pytest.approx(0.0, abs=1e-8)
    assert run.diagnostics["waveguide_return"] < 1e-8
    assert run.diagnostics["linear_max_deviation"] < 1e-8


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("b", [0, 1, 2])
def test_ensemble_transfer_independent_of_phonons(n, b):
    occupations = {"a1": 1, "b": b} if b else {"a1": 1}
    run = run_ensemble_transfer(MechanicalParams(g=TWO_PI * 1e6), SpinParams(0.0, 0.0, kind=BOSONIZED), n=n,
                                occupations=occupations, noise=False, points=3)
    final = [run.result.expectation(label)[-1] for label in ("S1", "a1", "b", "a2", "S2")]
    assert np.allclose(final, [0, 0, b, 1, 1], atol=1e-6)
    assert run.diagnostics["waveguide_return"] < 1e-6
    assert run.fidelity_report.value == pytest.approx(1.0, abs=1e-6)


def test_ensemble_effective_model():
    spec = _ensemble_spec(model="effective", G=TWO_PI * 0.1e6, occupations={"a1": 1})
    assert spec.space().labels == ("S1", "a1", "a2", "S2")
    run = spec.run()
    assert run.fidelity_report.value == pytest.approx(1.0, abs=1e-8)
    assert "waveguide_return" not in run.diagnostics
    assert run.result.expectation("a2")[-1] == pytest.approx(1.0, abs=1e-8)


def test_ensemble_detuned_coupling_loses_fidelity():
    off = _ensemble_spec(n=2, G_scale=1.2).run(check_cutoffs=False)
    assert off.fidelity_report.value < 0.999
    assert off.diagnostics["G"] == pytest.approx(1.2 * off.parameters["mech"]["g"] * math.sqrt(2 / 15))


def test_ensemble_validation():
    with pytest.raises(ParameterError, match="bosonized"):
        EnsembleTransferSpec(MechanicalParams(g=1.0), SpinParams(1.0, 1.0))
    with pytest.raises(ParameterError, match="non-mechanical"):
        _ensemble_spec(occupations={"S1": 1})
    with pytest.raises(ParameterError, match="not both"):
        _ensemble_spec(thermal=True, occupations={"b": 1})
    with pytest.raises(ParameterError, match="model"):
        _ensemble_spec(model="exact")


def test_evaluate_row():
    row = evaluate(_ensemble_spec())
    assert set(row) == {"fidelity", "fidelity_kind", "leakage", "waveguide_return", "converged"}
    assert row["fidelity_kind"] == SWAP_TARGET
    assert row["converged"] == "n/a"
    scan = evaluate(_swap_spec(50), scan=True, mesh_size=16)
    assert scan["fidelity_kind"] == LOWER_BOUND
    assert scan["waveguide_return"] is None


def test_thermal_ensemble_refines_every_mode():
    spec = _ensemble_spec(
        mech=MechanicalParams(g=TWO_PI * 1e6, T=0.03),
        thermal=True,
        cutoffs={label: 2 for label in NETWORK_LABELS},
        convergence=CutoffPolicy(max_dim=10**6),
    )
    assert spec.truncated_modes() == NETWORK_LABELS
    assert spec.refinement() == {label: 7 for label in NETWORK_LABELS}
    refined, note = spec.refined()
    assert note == ""
    assert refined.space().cutoffs() == {label: 7 for label in NETWORK_LABELS}
    verdict = spec.cutoff_verdict({"fidelity": 0.97}, lambda s: {"fidelity": 0.97})
    assert verdict.flag == "true"
    assert verdict.refined_cutoffs["S1"] == verdict.refined_cutoffs["S2"] == 7


def test_out_of_desk_scale_records_refused_cutoffs():
    spec = _ensemble_spec(
        mech=MechanicalParams(g=TWO_PI * 1e6, T=0.03),
        thermal=True,
        cutoffs={label: 2 for label in NETWORK_LABELS},
        convergence=CutoffPolicy(max_dim=100),
    )

    def never(_):
        raise AssertionError("rerun beyond max_dim")

    verdict = spec.cutoff_verdict({"fidelity": 0.97}, never)
    assert verdict.flag == OUT_OF_DESK_SCALE
    assert verdict.converged is None
    assert verdict.base_cutoffs == {label: 2 for label in NETWORK_LABELS}
    assert verdict.refined_cutoffs == {label: 7 for label in NETWORK_LABELS}
    assert math.prod(verdict.refined_cutoffs.values()) > 100


def test_heated_bath_refines_mechanics_without_thermal_start():
    spec = TripleSwapSpec(
        MechanicalParams(g=G_WAVEGUIDE, T=0.01),
        SpinParams(G1=3 * G_WAVEGUIDE, G2=3 * G_WAVEGUIDE),
        noise=True,
        convergence=CutoffPolicy(max_dim=10**6),
    )
    assert spec.thermal_modes() == {}
    assert spec.truncated_modes() == MECHANICAL_LABELS
    assert all(spec.space().subsystem(label).dim == 3 for label in MECHANICAL_LABELS)
    verdict = spec.cutoff_verdict({"fidelity": 0.99}, lambda s: {"fidelity": 0.99})
    assert verdict.flag == "true"
    assert {label: verdict.refined_cutoffs[label] for label in MECHANICAL_LABELS} == {label: 8 for label in MECHANICAL_LABELS}
    # the spins are never truncated
    assert verdict.refined_cutoffs["S1"] == 2
    # without a bath there is nothing to refine
    quiet = dataclasses.replace(spec, noise=False)
    assert quiet.truncated_modes() == ()
    assert quiet.refined() == (None, "no truncated modes")


def test_heated_bath_refines_ms_mode():
    spec = MSGateSpec(
        MechanicalParams(g=TWO_PI * 0.1e6, T=0.05),
        SpinParams(TWO_PI * 0.1e6, TWO_PI * 0.1e6),
        MSParams.for_closure(TWO_PI * 1e9, TWO_PI * 0.1e6),
        noise=True,
        convergence=CutoffPolicy(max_dim=10**6),
    )
    assert spec.mode_nbar() == 0.0
    assert spec.truncated_modes() == ("m",)
    assert spec.refinement() == {"m": spec.space().subsystem("m").dim + 5}
