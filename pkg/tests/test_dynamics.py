"""Unit tests for phononet.dynamics."""
import logging
import math

import numpy as np
import pytest

from phononet import dynamics
from phononet.dynamics import (
    POSITIVITY_DENSE_LIMIT,
    LindbladTerm,
    ScheduledHamiltonian,
    TimeDependentHamiltonian,
    evolve_lindblad,
    evolve_schrodinger,
    operator_shift,
    standard_noise_set,
)
from phononet.errors import ParameterError, SpaceMismatchError
from phononet.hilbert import (
    BOSON,
    QUBIT,
    CompositeSpace,
    DensityState,
    basis_state,
    excitation_numbers,
    ladder,
    make_operator,
    occupation,
    zero_operator,
)
from phononet.model import BOSONIZED, SINGLE_SPIN, MechanicalParams, PulseSchedule, Segment, SpinParams, network_space


@pytest.fixture
def qubit():
    return CompositeSpace.build(("S1", QUBIT, 2))


@pytest.fixture
def pair():
    return CompositeSpace.build(("a1", BOSON, 4), ("b", BOSON, 4))


def _hop(space, x, y, rate):
    return (rate * (ladder(space, x).dag() @ ladder(space, y))).with_hermitian_part()


def test_amplitude_damping(qubit):
    gamma = 2.0
    t = np.linspace(0.0, 2.0, 21)
    res = evolve_lindblad(
        zero_operator(qubit),
        [LindbladTerm(make_operator(qubit, "S1", "lower"), gamma, "decay")],
        basis_state(qubit, {"S1": 1}),
        t,
        e_ops={"n": occupation(qubit, "S1")},
    )
    assert res.convergence_report.method == "sector"
    assert np.allclose(res.expectation("n"), np.exp(-gamma * t), rtol=1e-6, atol=1e-9)
    assert len(res.states) == t.size
    assert res.convergence_report.trace_drift < 1e-8


def test_pure_dephasing(qubit):
    T2 = 0.5
    plus = DensityState(qubit, np.array([1.0, 1.0]) / math.sqrt(2))
    res = evolve_lindblad(
        zero_operator(qubit),
        [LindbladTerm(make_operator(qubit, "S1", "sigma_z"), 1 / (2 * T2))],
        plus,
        [0.0, 1.0],
        keep_states=False,
    )
    assert res.states == []
    assert abs(res.final_state.matrix[1, 0]) == pytest.approx(0.5 * math.exp(-1.0 / T2), rel=1e-6)
    assert res.final_state.matrix[1, 1].real == pytest.approx(0.5)


def test_exchange_swaps_excitation():
    space = CompositeSpace.build(("S1", QUBIT, 2), ("a1", BOSON, 2))
    G = 1.0
    res = evolve_schrodinger(
        _hop(space, "S1", "a1", G),
        basis_state(space, {"S1": 1}),
        [0.0, math.pi / (2 * G)],
        e_ops={"a1": occupation(space, "a1")},
    )
    assert res.convergence_report.method == "exact"
    assert res.expectation("a1")[-1] == pytest.approx(1.0, abs=1e-12)
    assert res.final_state.purity() == pytest.approx(1.0)


def test_sector_and_full_paths_agree(pair):
    H = _hop(pair, "a1", "b", 1.0)
    a = make_operator(pair, "a1", "annihilation")
    terms = [LindbladTerm(a, 0.1, "damping"), LindbladTerm(a.dag(), 0.05, "heating")]
    rho0 = basis_state(pair, {"a1": 1})
    t = np.linspace(0.0, 3.0, 7)
    blocks = evolve_lindblad(H, terms, rho0, t, use_blocks=True)
    full = evolve_lindblad(H, terms, rho0, t, use_blocks=False)
    assert blocks.convergence_report.method == "sector"
    assert full.convergence_report.method == "full"
    assert np.allclose(blocks.final_state.matrix, full.final_state.matrix, atol=1e-7)
    assert blocks.final_state.trace() == pytest.approx(1.0, abs=1e-8)
    assert blocks.convergence_report.positivity_floor > -1e-8


def test_noiseless_lindblad_uses_exact_propagator(pair):
    H = _hop(pair, "a1", "b", 1.0)
    rho0 = basis_state(pair, {"a1": 2})
    lind = evolve_lindblad(H, [], rho0, [0.0, 0.7])
    schr = evolve_schrodinger(H, rho0, [0.0, 0.7])
    assert lind.convergence_report.method == "exact"
    assert np.allclose(lind.final_state.matrix, schr.final_state.matrix, atol=1e-12)


def test_time_dependent_matches_static(qubit):
    sx = make_operator(qubit, "S1", "sigma_x")
    td = TimeDependentHamiltonian(zero_operator(qubit), ((0.8 * sx, lambda t: 1.0),))
    psi0 = basis_state(qubit, {"S1": 0})
    a = evolve_schrodinger(td, psi0, np.linspace(0, 2, 5))
    b = evolve_schrodinger(0.8 * sx, psi0, np.linspace(0, 2, 5))
    assert a.convergence_report.method == "ode"
    assert abs(np.vdot(a.final_state.vector, b.final_state.vector)) == pytest.approx(1.0, abs=1e-7)


def test_schedule_edges_join_output_grid(qubit):
    sx = make_operator(qubit, "S1", "sigma_x")
    schedule = PulseSchedule((Segment(1.0, {"on": 1.0}), Segment(2.0, {"on": 0.0})))
    H = ScheduledHamiltonian.from_builder(schedule, lambda v: v["on"] * (math.pi / 2) * sx)
    res = evolve_schrodinger(H, basis_state(qubit, {"S1": 0}), np.linspace(0.0, 3.0, 5), e_ops={"n": occupation(qubit, "S1")})
    assert 1.0 in res.times
    # pi pulse in the first segment, nothing after
    assert res.expectation("n")[-1] == pytest.approx(1.0, abs=1e-10)


def test_bad_grid_and_space(qubit, pair):
    with pytest.raises(ParameterError, match="increasing"):
        evolve_schrodinger(zero_operator(qubit), basis_state(qubit, {}), [0.0, 1.0, 0.5])
    with pytest.raises(SpaceMismatchError):
        evolve_lindblad(zero_operator(qubit), [], basis_state(pair, {}), [0.0, 1.0])
    with pytest.raises(ParameterError, match="rate"):
        LindbladTerm(zero_operator(qubit), -1.0)


def test_operator_shift(pair):
    numbers = excitation_numbers(pair)
    assert operator_shift(make_operator(pair, "a1", "annihilation"), numbers) == -1
    assert operator_shift(make_operator(pair, "b", "creation"), numbers) == 1
    assert operator_shift(_hop(pair, "a1", "b", 1.0), numbers) == 0
    mixed = make_operator(pair, "a1", "annihilation") + make_operator(pair, "a1", "creation")
    assert operator_shift(mixed, numbers) is None


def test_standard_noise_set_single_spins():
    space = network_space(SINGLE_SPIN, {"a1": 2, "b": 2, "a2": 2})
    terms = standard_noise_set(space, MechanicalParams(g=1.0, Q_m=100.0), SpinParams(1.0, 1.0, T1=1.0, T2_star=2.0))
    rates = {t.label: t.rate for t in terms}
    kappa = 2 * math.pi * 1e9 / 100.0
    assert rates == pytest.approx(
        {
            "damping:a1": kappa,
            "damping:b": kappa,
            "damping:a2": kappa,
            "dephasing:S1": 0.25,
            "decay:S1": 1.0,
            "dephasing:S2": 0.25,
            "decay:S2": 1.0,
        }
    )


def test_standard_noise_set_thermal_ensemble():
    space = network_space(BOSONIZED, {label: 2 for label in ("S1", "a1", "b", "a2", "S2")})
    mech = MechanicalParams(g=1.0, T=0.5)
    terms = {t.label: t for t in standard_noise_set(space, mech, SpinParams(1.0, 1.0, T2_star=2.0))}
    assert "heating:b" in terms
    assert terms["heating:b"].rate / terms["damping:b"].rate == pytest.approx(9.927 / 10.927, rel=1e-3)
    assert terms["dephasing:S1"].rate == pytest.approx(1.0)
    assert terms["dephasing:S1"].operator.hermitian
    assert "decay:S1" not in terms


def test_floor_and_drift_are_tracked_at_every_step(qubit, monkeypatch, caplog):
    rho0 = DensityState(qubit, np.eye(2, dtype=complex) / 2)
    dipped = np.diag([1.1, -0.1]).astype(complex).ravel()
    heavy = np.diag([0.7, 0.5]).astype(complex).ravel()
    monkeypatch.setattr(dynamics, "_integrate", lambda rhs, y0, times, rtol, atol: np.array([y0, dipped, heavy, y0]))
    terms = [LindbladTerm(make_operator(qubit, "S1", "lower"), 1.0, "decay")]
    with caplog.at_level(logging.WARNING, logger="phononet.dynamics"):
        res = evolve_lindblad(zero_operator(qubit), terms, rho0, [0.0, 1.0, 2.0, 3.0], use_blocks=False)
    report = res.convergence_report
    # the final state is clean; only the middle of the trajectory is not
    assert res.final_state.min_eigenvalue() == pytest.approx(0.5)
    assert report.positivity_floor == pytest.approx(-0.1)
    assert report.floor_time == 1.0
    assert report.trace_drift == pytest.approx(0.2)
    assert "min eigenvalue" in caplog.text
    assert "trace drift" in caplog.text
    assert report.to_dict()["floor_time"] == 1.0


def test_report_matches_recorded_states(pair):
    H = _hop(pair, "a1", "b", 1.0)
    a = make_operator(pair, "a1", "annihilation")
    terms = [LindbladTerm(a, 0.4, "damping"), LindbladTerm(a.dag(), 0.2, "heating")]
    res = evolve_lindblad(H, terms, basis_state(pair, {"a1": 1}), np.linspace(0.0, 2.0, 9), use_blocks=False,
                          rtol=1e-4, atol=1e-6)
    assert pair.dim <= POSITIVITY_DENSE_LIMIT
    report = res.convergence_report
    assert report.positivity_floor == pytest.approx(min(s.min_eigenvalue() for s in res.states), abs=1e-15)
    assert report.trace_drift == pytest.approx(max(abs(s.trace() - 1.0) for s in res.states), abs=1e-15)


def test_sector_blocks_give_dense_expectations():
    space = CompositeSpace.build(("S1", QUBIT, 2), ("a1", BOSON, 3), ("b", BOSON, 3))
    H = _hop(space, "S1", "a1", 1.0) + _hop(space, "a1", "b", 0.6)
    a = make_operator(space, "a1", "annihilation")
    terms = [
        LindbladTerm(a, 0.3, "damping"),
        LindbladTerm(a.dag(), 0.1, "heating"),
        LindbladTerm(make_operator(space, "S1", "sigma_z"), 0.2, "dephasing"),
    ]
    plus = np.array([1.0, 1.0]) / math.sqrt(2)
    rho0 = DensityState(space, np.kron(np.outer(plus, plus), np.kron(np.diag([0.6, 0.3, 0.1]), np.diag([1.0, 0.0, 0.0]))))
    e_ops = {
        "lower": ladder(space, "S1"),
        "hop": ladder(space, "a1").dag() @ ladder(space, "S1"),
        "n_b": occupation(space, "b"),
    }
    t = np.linspace(0.0, 2.0, 6)
    blocks = evolve_lindblad(H, terms, rho0, t, e_ops=e_ops, keep_states=False)
    full = evolve_lindblad(H, terms, rho0, t, e_ops=e_ops, keep_states=False, use_blocks=False)
    assert blocks.convergence_report.method == "sector"
    assert blocks.convergence_report.sectors == 2
    assert blocks.states == []
    for name in e_ops:
        assert np.allclose(blocks.expectations[name], full.expectations[name], atol=1e-7)
    assert abs(blocks.expectations["lower"][0]) == pytest.approx(0.5)
    assert np.allclose(blocks.final_state.matrix, full.final_state.matrix, atol=1e-7)


def test_halving_tolerance_keeps_final_state():
    space = CompositeSpace.build(("S1", QUBIT, 2), ("a1", BOSON, 3))
    H = _hop(space, "S1", "a1", 1.0)
    terms = [
        LindbladTerm(make_operator(space, "a1", "annihilation"), 0.2, "damping"),
        LindbladTerm(make_operator(space, "S1", "sigma_z"), 0.1, "dephasing"),
    ]
    rho0 = basis_state(space, {"S1": 1})
    t = [0.0, 3.0]
    coarse = evolve_lindblad(H, terms, rho0, t, rtol=1e-8, atol=1e-10, keep_states=False)
    fine = evolve_lindblad(H, terms, rho0, t, rtol=5e-9, atol=5e-11, keep_states=False)
    assert coarse.convergence_report.rtol == 2 * fine.convergence_report.rtol
    assert np.abs(coarse.final_state.matrix - fine.final_state.matrix).max() < 1e-6


def test_schrodinger_and_lindblad_agree_without_dissipators(pair):
    drive = make_operator(pair, "a1", "annihilation")
    H = TimeDependentHamiltonian(
        _hop(pair, "a1", "b", 0.7),
        ((0.3 * drive, lambda t: np.exp(-1j * 1.3 * t)), (0.3 * drive.dag(), lambda t: np.exp(1j * 1.3 * t))),
    )
    a1, b = ladder(pair, "a1"), ladder(pair, "b")
    e_ops = {
        "n_a1": occupation(pair, "a1"),
        "n_b": occupation(pair, "b"),
        "a1": a1,
        "b": b,
        "hop": a1.dag() @ b,
    }
    psi0 = basis_state(pair, {"a1": 1})
    t = np.linspace(0.0, 2.0, 11)
    schr = evolve_schrodinger(H, psi0, t, e_ops=e_ops, rtol=1e-10, atol=1e-12)
    lind = evolve_lindblad(H, [], psi0, t, e_ops=e_ops, rtol=1e-10, atol=1e-12)
    assert lind.convergence_report.method == "full"
    for name in e_ops:
        assert np.allclose(schr.expectations[name], lind.expectations[name], atol=1e-7), name
