"""Property-based checks across modules."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phononet.coupledmode import fit_triplet, predict_triplet
from phononet.dynamics import LindbladTerm, evolve_lindblad
from phononet.fidelity import uhlmann_fidelity
from phononet.hilbert import BOSON, CompositeSpace, basis_state, bose_occupation, ladder, occupation, operator_sum
from phononet.linear import transfer_condition

MHZ = st.floats(min_value=0.05, max_value=20.0)


def _random_state(seed, dim=3):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


@given(g=MHZ, delta0=st.floats(min_value=-20.0, max_value=20.0))
def test_fit_inverts_predict(g, delta0):
    fit = fit_triplet([x * 1e6 for x in predict_triplet(g, delta0)])
    assert fit.g == pytest.approx(g * 1e6, rel=1e-9)
    assert fit.Delta0 == pytest.approx(delta0 * 1e6, rel=1e-9, abs=1e-3)
    assert fit.residual < 1e-3


@given(g=MHZ, delta0=st.floats(min_value=-20.0, max_value=20.0), f0=st.floats(min_value=0.5, max_value=3.0))
def test_fit_on_absolute_frequencies(g, delta0, f0):
    # GHz carriers leave about 1e-6 Hz of rounding in each line
    offset = f0 * 1e9
    fit = fit_triplet([x * 1e6 + offset for x in predict_triplet(g, delta0)])
    assert fit.g == pytest.approx(g * 1e6, rel=1e-5)
    assert fit.Delta0 == pytest.approx(delta0 * 1e6, abs=1e-2)
    assert fit.lambda0 == pytest.approx(offset, rel=1e-12)


@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=0, max_value=2**32 - 1))
def test_uhlmann_symmetric_and_bounded(seed_a, seed_b):
    rho, sigma = _random_state(seed_a), _random_state(seed_b)
    f = uhlmann_fidelity(rho, sigma)
    assert f == pytest.approx(uhlmann_fidelity(sigma, rho), abs=1e-8)
    assert -1e-12 <= f <= 1 + 1e-9
    assert uhlmann_fidelity(rho, rho) == pytest.approx(1.0, abs=1e-7)


@settings(max_examples=15, deadline=None)
@given(
    hop=st.floats(min_value=0.1, max_value=3.0),
    loss=st.floats(min_value=0.0, max_value=1.0),
    heat=st.floats(min_value=0.0, max_value=0.5),
)
def test_lindblad_preserves_trace(hop, loss, heat):
    space = CompositeSpace.build(("a1", BOSON, 3), ("b", BOSON, 3))
    a, b = ladder(space, "a1"), ladder(space, "b")
    H = operator_sum([(hop * (a.dag() @ b)).with_hermitian_part()], space)
    terms = [LindbladTerm(a, loss, "loss"), LindbladTerm(b.dag(), heat, "heat")]
    total = operator_sum([occupation(space, "a1"), occupation(space, "b")], space)
    res = evolve_lindblad(H, terms, basis_state(space, {"a1": 1}), np.linspace(0.0, 1.0, 5), e_ops={"N": total})
    assert res.convergence_report.trace_drift < 1e-7
    assert res.final_state.purity() <= 1 + 1e-9
    if loss == 0 and heat == 0:
        assert np.allclose(res.expectation("N"), 1.0, atol=1e-9)
        assert res.final_state.purity() == pytest.approx(1.0, abs=1e-8)


@given(g=st.floats(min_value=1e3, max_value=1e8), n=st.integers(min_value=1, max_value=6))
def test_transfer_condition(g, n):
    G = transfer_condition(g, n)
    assert math.sqrt(2 * g * g + G * G) == pytest.approx(2 * n * G, rel=1e-12)


@given(
    omega=st.floats(min_value=1e8, max_value=1e11),
    t1=st.floats(min_value=1e-3, max_value=10.0),
    t2=st.floats(min_value=1e-3, max_value=10.0),
)
def test_bose_occupation_monotone_in_temperature(omega, t1, t2):
    lo, hi = sorted((t1, t2))
    assert bose_occupation(omega, lo) <= bose_occupation(omega, hi)
