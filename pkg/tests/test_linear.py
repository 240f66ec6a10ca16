"""Unit tests for phononet.linear."""
import math

import numpy as np
import pytest

from phononet.errors import ParameterError
from phononet.linear import (
    build_drift,
    closed_form_S1,
    effective_drift,
    gamma,
    occupation_trajectory,
    propagate_amplitudes,
    propagator,
    transfer_condition,
)
from phononet.model import supermode_transform

# closed_form_S1 lists (b, a+, a-, S+, S-); supermode_transform rows are (S+, a+, b, a-, S-)
_CLOSED_FORM_ORDER = [2, 1, 3, 0, 4]


def _S1_row_in_supermodes(g, G, t):
    U = propagator(build_drift(g, G), t)
    return (U[0, :] @ supermode_transform().T)[_CLOSED_FORM_ORDER]


def test_drift_is_hamiltonian():
    M = build_drift(1.0, 0.3, delta1=0.2, delta2=-0.1)
    assert M.is_hamiltonian()
    assert M.coupling[2, 2] == pytest.approx(0.2)
    assert M.coupling[3, 3] == pytest.approx(0.3)
    assert M.index("b") == 2
    with pytest.raises(ParameterError, match="unknown mode"):
        M.index("zz")


def test_closed_form_matches_propagator():
    rng = np.random.default_rng(7)
    for g, G in rng.uniform(0.1, 2.0, size=(50, 2)):
        for t in np.linspace(0.0, 4 * math.pi / G, 9):
            assert np.allclose(closed_form_S1(t, g, G), _S1_row_in_supermodes(g, G, t), atol=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_transfer_condition(n):
    g = 2 * math.pi * 1e6
    G = transfer_condition(g, n)
    assert gamma(g, G) == pytest.approx(2 * n * G)
    U = propagator(build_drift(g, G), math.pi / G)
    # S1 -> S2 with unit amplitude and no phase
    assert U[4, 0] == pytest.approx(1.0, abs=1e-9)
    assert abs(U[0, 0]) == pytest.approx(0.0, abs=1e-9)


def test_transfer_condition_rejects_bad_order():
    with pytest.raises(ParameterError):
        transfer_condition(1.0, 0)
    with pytest.raises(ParameterError):
        transfer_condition(1.0, 1.5)


def test_occupations_swap_mechanics_and_keep_waveguide():
    g = 1.0
    G = transfer_condition(g, 1)
    traj = occupation_trajectory(build_drift(g, G), [1, 1, 1, 0, 0], [0.0, math.pi / G])
    assert np.allclose(traj.values[-1], [0, 0, 1, 1, 1], atol=1e-9)
    assert traj.column("b")[-1] == pytest.approx(1.0)


def test_amplitudes_conserve_norm():
    M = build_drift(1.0, 0.4, delta1=0.3)
    traj = propagate_amplitudes(M, [1, 0, 0, 0, 0], np.linspace(0, 10, 11))
    assert np.allclose(np.sum(np.abs(traj.values) ** 2, axis=1), 1.0)
    rows = traj.as_rows()
    assert rows[0]["S1"] == pytest.approx(1.0)
    with pytest.raises(ParameterError, match="shape"):
        propagate_amplitudes(M, [1, 0], [0.0])


def test_effective_drift_swaps_in_half_period():
    G = 0.5
    U = propagator(effective_drift(G), math.pi / (2 * G))
    assert abs(U[1, 0]) == pytest.approx(1.0)
