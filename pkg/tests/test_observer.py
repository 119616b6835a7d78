import math

import numpy as np
import pytest

from petreg import default_scenario, run
from petreg.engine import sampling_bound_for
from petreg.errors import CausalityError, ConfigError, DimensionError
from petreg.exosystem import Exosystem, leader_state
from petreg.graph import CommGraph, h_matrix
from petreg.observer import (
    BroadcastRecord,
    ObserverParams,
    ObserverState,
    SamplingGrid,
    leader_record,
    observer_rhs_case1,
    observer_rhs_case2,
    petm_a_fire,
    petm_case2_conditions,
    petm_case2_fire,
    predict_broadcast,
    sampling_period_bound,
)

ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])


def test_prediction_at_event_time_is_held_value():
    rec = BroadcastRecord(0.3, np.array([0.2, -0.7]), ROT)
    np.testing.assert_array_equal(predict_broadcast(rec, None, 0.3), [0.2, -0.7])


def test_leader_prediction_is_exact_state():
    exo = Exosystem(ROT, np.array([1.0, 0.0]))
    rec = leader_record(exo)
    for t in (0.0, 0.37, 5.0, 29.99):
        np.testing.assert_allclose(predict_broadcast(rec, exo.A, t), leader_state(exo, t), atol=1e-13)


def test_prediction_quarter_turn():
    rec = BroadcastRecord(0.0, np.array([1.0, 0.0]), ROT)
    np.testing.assert_allclose(predict_broadcast(rec, ROT, math.pi / 2), [0.0, -1.0], atol=1e-14)


def test_prediction_before_event_is_rejected():
    rec = BroadcastRecord(1.0, np.zeros(2), ROT)
    with pytest.raises(CausalityError):
        predict_broadcast(rec, ROT, 0.5)


def test_case1_single_pinned_agent():
    st = ObserverState(np.zeros(2), ROT.copy())
    rhs = observer_rhs_case1(st, ROT, np.zeros(2), [(1.0, np.array([1.0, 0.0]))], ObserverParams(mu2=2.0))
    np.testing.assert_allclose(rhs, [2.0, 0.0])


def test_case1_without_coupling_is_free_flow():
    # mu2 must be positive in a configuration, so check the limit numerically
    st = ObserverState(np.array([0.3, -0.4]), ROT.copy())
    rhs = observer_rhs_case1(st, ROT, st.nu_hat, [(1.0, np.array([9.0, 9.0]))], ObserverParams(mu2=1e-300))
    np.testing.assert_allclose(rhs, ROT @ st.nu_hat)


def test_case1_dimension_check():
    st = ObserverState(np.zeros(2), ROT.copy())
    with pytest.raises(DimensionError):
        observer_rhs_case1(st, ROT, np.zeros(2), [(1.0, np.zeros(3))], ObserverParams())


def test_case2_pinned_agent_matrix_dynamics():
    st = ObserverState(np.zeros(2), np.zeros((2, 2)))
    a_dot, nu_dot = observer_rhs_case2(st, np.zeros((2, 2)), [(1.0, ROT)], np.zeros(2),
                                       [(1.0, np.array([1.0, 0.0]))], ObserverParams(mu1=2.0, mu2=2.0))
    np.testing.assert_allclose(a_dot, [[0.0, 2.0], [-2.0, 0.0]])
    np.testing.assert_allclose(nu_dot, [2.0, 0.0])


def test_case2_with_exact_matrix_reduces_to_case1():
    rng = np.random.default_rng(0)
    p = ObserverParams()
    for _ in range(20):
        st = ObserverState(rng.normal(size=2), ROT.copy())
        own = rng.normal(size=2)
        nbrs = [(1.0, rng.normal(size=2)), (1.0, rng.normal(size=2))]
        a_dot, nu_dot = observer_rhs_case2(st, ROT, [(1.0, ROT), (1.0, ROT)], own, nbrs, p)
        np.testing.assert_array_equal(a_dot, np.zeros((2, 2)))
        np.testing.assert_array_equal(nu_dot, observer_rhs_case1(st, ROT, own, nbrs, p))


def test_petm_a_threshold():
    p = ObserverParams(iota_nu=1.0, gamma_nu=0.1)
    assert not petm_a_fire(np.array([0.5, 0.0]), np.zeros(2), 0.0, p)
    assert petm_a_fire(np.array([1.5, 0.0]), np.zeros(2), 0.0, p)


def test_petm_a_is_strict_at_the_threshold():
    p = ObserverParams(iota_nu=0.5, gamma_nu=0.25)
    tau = 2.0
    edge = 0.5 * math.exp(-0.25 * tau)
    assert not petm_a_fire(np.array([edge, 0.0]), np.zeros(2), tau, p)
    assert petm_a_fire(np.array([math.nextafter(edge, 1.0), 0.0]), np.zeros(2), tau, p)


def test_petm_case2_or_semantics():
    p = ObserverParams(iota_A=0.1, gamma_A=0.1, iota_nu=0.1, gamma_nu=0.1)
    small_a, big_a = 0.01 * ROT, 1.0 * ROT
    small_nu, big_nu = np.array([0.01, 0.0]), np.array([1.0, 0.0])
    z = np.zeros((2, 2))
    assert not petm_case2_fire(small_a, z, small_nu, np.zeros(2), 0.0, p)
    assert petm_case2_fire(big_a, z, small_nu, np.zeros(2), 0.0, p)
    assert petm_case2_fire(small_a, z, big_nu, np.zeros(2), 0.0, p)
    assert petm_case2_fire(big_a, z, big_nu, np.zeros(2), 0.0, p)
    assert petm_case2_conditions(big_a, z, small_nu, np.zeros(2), 0.0, p) == (True, False)


def test_sampling_grid():
    g = SamplingGrid(0.015, 0.005)
    assert g.contains(0.005) and g.contains(0.005 + 7 * 0.015)
    assert not g.contains(0.0) and not g.contains(0.012)
    with pytest.raises(ConfigError):
        SamplingGrid(0.0)


def test_params_must_be_positive():
    with pytest.raises(ConfigError):
        ObserverParams(mu2=0.0)


# -- sampling bound -----------------------------------------------------------------

def test_bound_scalar_fixture():
    b = sampling_period_bound(1.0, 0.1, [[1.0]])
    assert abs(b.term_gain - (1 / 6 - 0.1 / 3)) < 1e-12
    assert abs(b.term_delay - 1 / 4.1) < 1e-12
    assert abs(b.value - 0.1333333333) < 1e-6
    np.testing.assert_allclose(b.P, [[1.0]])
    assert b.feasible and b.admits(0.13) and not b.admits(0.14)


def test_bound_increases_as_gamma_shrinks():
    h = h_matrix(CommGraph.chain(4))
    values = [sampling_period_bound(2.0, g, h).value for g in (0.4, 0.2, 0.1, 0.01, 1e-6)]
    assert all(a < b for a, b in zip(values, values[1:]))
    b0 = sampling_period_bound(2.0, 1e-12, h)
    ph = np.linalg.norm(b0.P @ h, 2)
    nh = np.linalg.norm(h, 2)
    limit = min(1 / (6 * 2 * nh**2), 1 / (2 * ph + 12 * ph))
    assert abs(b0.value - limit) < 1e-9


def test_bound_shrinks_for_large_gain():
    h = h_matrix(CommGraph.chain(4))
    values = [sampling_period_bound(mu, 0.1, h).value for mu in (2.0, 20.0, 200.0, 2000.0)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-6


def test_bound_infeasible_for_fast_rate():
    b = sampling_period_bound(2.0, 10.0, h_matrix(CommGraph.chain(4)))
    assert not b.feasible and b.value < 0.0
    assert not b.admits(1e-9)


def test_engine_uses_the_same_bound():
    s = default_scenario()
    ref = sampling_period_bound(2.0, 0.1, h_matrix(CommGraph.chain(4)))
    assert sampling_bound_for(s).value == ref.value


# -- engine-level observer behaviour ------------------------------------------------

def test_case2_with_exact_initial_matrix_matches_case1():
    a = ROT.tolist()
    overrides = {f"agents__{i}__A_hat0": a for i in range(1, 5)}
    s1 = default_scenario(engine__t_end=3.0)
    s2 = default_scenario(engine__t_end=3.0, observer__case=2, **overrides)
    log1, log2 = run(s1), run(s2)
    np.testing.assert_array_equal(log1.nu_err, log2.nu_err)
    np.testing.assert_array_equal(log1.y, log2.y)
    assert np.all(log2.A_err == 0.0)
    assert [(e.step, e.agent) for e in log1.events if e.channel == "observer"] == \
           [(e.step, e.agent) for e in log2.events if e.channel == "observer"]
