import math

import numpy as np
import pytest

from petreg import default_scenario, run
from petreg.engine import (
    CHANNELS,
    AgentConfig,
    EngineConfig,
    Event,
    Scenario,
    SimLog,
    event_statistics,
    fit_exponential_rate,
    inter_event_gaps,
)
from petreg.errors import ConfigError, DivergenceError, GraphError, InputError
from petreg.exosystem import Exosystem
from petreg.graph import CommGraph
from petreg.internal_model import InternalModel
from petreg.plants import StrictFeedbackPlant


def csv_pair(log):
    return log.timeseries_csv(), log.events_csv()


# -- contracts on the full default run ----------------------------------------------

def test_default_run_is_finite_and_bounded(default_run):
    log, _ = default_run
    for arr in (log.y, log.e, log.u, log.u_bar, log.nu_err, *log.xi_hat, *log.eta):
        assert np.all(np.isfinite(arr))
    assert max(np.max(np.abs(eta)) for eta in log.eta) < 1e3


def test_saturation_never_exceeded(default_run):
    log, _ = default_run
    r = default_scenario().agents[0].controller.sat_R
    assert np.max(np.abs(log.u_bar)) <= r


def test_events_live_on_their_own_grid(default_run):
    log, _ = default_run
    s = default_scenario()
    for ev in log.events:
        ag = s.agents[ev.agent - 1]
        period = ag.obs_period if ev.channel == "observer" else ag.ctrl_period
        m = round(period / log.h_int)
        assert ev.step % m == 0
        assert math.isclose(ev.t, ev.step * log.h_int, rel_tol=0, abs_tol=1e-12)


def test_check_counts_match_grid_sizes(default_run):
    log, _ = default_run
    n_steps = 30000
    for agent, m in zip(range(1, 5), (10, 15, 20, 25)):
        assert log.checks[(agent, "observer")] == n_steps // m + 1
        assert log.checks[(agent, "petm_b")] == n_steps // m + 1
        assert log.checks[(agent, "petm_c")] == 0


def test_zeno_exclusion_all_channels(default_run):
    log, _ = default_run
    rows = event_statistics(log)
    assert {(r["agent"], r["channel"]) for r in rows} == {(a, c) for a in range(1, 5) for c in ("observer", "petm_b")}
    for r in rows:
        assert r["multiples_ok"], r
        m = log.periods[(r["agent"], r["channel"])]
        assert r["min_gap"] >= m * log.h_int - 1e-12


def test_initial_events_at_time_zero(default_run):
    log, _ = default_run
    for a in range(1, 5):
        for c in ("observer", "petm_b"):
            assert log.event_steps(a, c)[0] == 0
    assert all(e.detail == "initial" for e in log.events if e.step == 0 and e.channel == "observer")


def test_trigger_contract_between_events(default_run):
    _, trace = default_run
    assert trace
    seen = set()
    for channel, agent, step, lhs, thr, fired in trace:
        seen.add(channel)
        if not fired:
            assert lhs <= thr, (channel, agent, step, lhs, thr)
        elif step > 0:
            assert lhs > thr
    assert seen == {"observer", "petm_b"}


def test_event_log_agrees_with_trace(default_run):
    log, trace = default_run
    fired = sorted((c, a, k) for c, a, k, _, _, f in trace if f)
    logged = sorted((e.channel, e.agent, e.step) for e in log.events)
    assert fired == logged


def test_petm_b_sends_fewer_than_it_checks(default_run):
    log, _ = default_run
    assert log.event_count("petm_b") < log.check_count("petm_b")


def test_csv_layout(default_run):
    log, _ = default_run
    ts, ev = csv_pair(log)
    header = ts.splitlines()[0].split(",")
    assert header[:2] == ["t", "y0"] and header[-1] == "nu_err_4" and len(header) == 2 + 4 * 4
    assert len(ts.splitlines()) == 1 + 3001
    assert ev.splitlines()[0] == "t,agent,channel,payload_norm"
    assert len(ev.splitlines()) == 1 + len(log.events)


# -- short runs --------------------------------------------------------------------

def test_identical_runs_are_byte_identical(short_scenario):
    assert csv_pair(run(short_scenario(2.0))) == csv_pair(run(short_scenario(2.0)))


def test_seed_changes_initial_conditions(short_scenario):
    a = run(short_scenario(0.5))
    b = run(short_scenario(0.5, plant__init__seed=7))
    assert not np.array_equal(a.y[0], b.y[0])


def test_zero_threshold_sends_every_sample(short_scenario):
    log = run(short_scenario(3.0, controller__iota_e=0.0))
    for a in range(1, 5):
        assert log.event_count("petm_b", a) == log.check_count("petm_b", a)


def test_actuator_trigger_with_zero_threshold_matches_no_trigger(short_scenario):
    off = run(short_scenario(3.0))
    on = run(short_scenario(3.0, controller__petm_c__enabled=True, controller__iota_omega=0.0))
    np.testing.assert_array_equal(off.y, on.y)
    np.testing.assert_array_equal(off.u, on.u)
    assert on.check_count("petm_c") > 0


def test_phase_shifts_first_sample(short_scenario):
    log = run(short_scenario(0.2, agents__2__obs_phase=0.005, agents__2__ctrl_phase=0.003))
    assert log.event_steps(2, "observer")[0] == 5
    assert log.event_steps(2, "petm_b")[0] == 3
    assert log.checks[(2, "observer")] == (200 - 5) // 15 + 1


def test_log_decimation(short_scenario):
    log = run(short_scenario(0.1, engine__log_decimation=7))
    steps = np.round(log.t / log.h_int).astype(int)
    assert steps[0] == 0 and steps[-1] == 100
    assert np.all(np.diff(steps)[:-1] == 7)


def test_case2_logs_matrix_error(short_scenario):
    log = run(short_scenario(1.0, observer__case=2))
    assert log.A_err is not None and log.A_err.shape == log.nu_err.shape
    assert "A_err_1" in log.timeseries_csv().splitlines()[0]
    details = {e.detail for e in log.events if e.channel == "observer" and e.step > 0}
    assert details <= {"A", "nu", "A+nu"} and details


# -- configuration errors ------------------------------------------------------------

def test_period_off_grid_is_rejected(short_scenario):
    with pytest.raises(ConfigError, match="integer multiple"):
        run(short_scenario(1.0, agents__1__obs_period=0.0105))


def test_unreachable_follower_is_named(short_scenario):
    s = short_scenario(1.0, graph__edges=[[1, 2], [2, 3]])
    with pytest.raises(GraphError) as exc:
        run(s)
    assert exc.value.unreachable == (4,)
    assert "[4]" in str(exc.value)


def test_non_hurwitz_observer_polynomial_is_rejected(short_scenario):
    with pytest.raises(ConfigError, match="Hurwitz"):
        run(short_scenario(1.0, controller__d=[-1.0, 1.0]))


def _blowup_scenario():
    plant = StrictFeedbackPlant(n=2, n_z=0, rhs=lambda s, nu, u: np.array([s[1], s[1] ** 2 + u]))
    exo = Exosystem(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.array([1.0, 0.0]))
    ag = AgentConfig(plant=plant, x0=np.array([0.0, 50.0]),
                     internal_model=InternalModel.from_polynomials([3.0, 2.0], [0.0, 1.0]))
    return Scenario(exo, CommGraph.chain(1), [ag], EngineConfig(t_end=2.0))


def test_divergence_is_reported():
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as exc:
            run(_blowup_scenario())
    assert exc.value.t is not None and exc.value.t < 2.0


# -- analysis helpers ----------------------------------------------------------------

def test_rate_fit_exact_exponential():
    t = np.linspace(0.0, 10.0, 1001)
    assert abs(fit_exponential_rate(t, 3.0 * np.exp(-0.7 * t), (0.0, 10.0)) + 0.7) < 1e-6


def test_rate_fit_constant():
    t = np.linspace(0.0, 10.0, 101)
    assert abs(fit_exponential_rate(t, np.full_like(t, 2.5), (0.0, 10.0))) < 1e-9


def test_rate_fit_perturbed():
    t = np.linspace(0.0, 10.0, 1001)
    v = 0.4 * np.exp(-0.3 * t) * (1.0 + 0.01 * np.sin(t))
    assert abs(fit_exponential_rate(t, v, (0.0, 10.0)) + 0.3) < 0.05 * 0.3


def test_rate_fit_input_errors():
    t = np.linspace(0.0, 1.0, 11)
    with pytest.raises(InputError):
        fit_exponential_rate(t, np.zeros_like(t), (0.0, 1.0))
    with pytest.raises(InputError):
        fit_exponential_rate(t, np.ones_like(t), (5.0, 6.0))


def _synthetic_log(event_times, h=1e-3, period_steps=10):
    n = 1
    z = np.zeros((1, n))
    events = [Event(int(round(t / h)), t, 1, "petm_b", 0.0) for t in event_times]
    return SimLog(t=np.zeros(1), y0=np.zeros(1), y=z, e=z, u=z, u_bar=z, nu_err=z, A_err=None,
                  xi_hat=[], eta=[], events=events, checks={(1, "petm_b"): 6},
                  periods={(1, c): period_steps for c in CHANNELS}, h_int=h, observer_case=1)


def test_event_statistics_recognises_grid_multiples():
    log = _synthetic_log([0.0, 0.02, 0.05])
    assert inter_event_gaps(log.event_steps(1, "petm_b")) == [20, 30]
    (row,) = event_statistics(log)
    assert row["events"] == 3 and row["checks"] == 6 and row["multiples_ok"]
    assert row["min_gap"] == pytest.approx(0.02) and row["max_gap"] == pytest.approx(0.03)


def test_event_statistics_flags_off_grid_gap():
    (row,) = event_statistics(_synthetic_log([0.0, 0.015]))
    assert not row["multiples_ok"]
