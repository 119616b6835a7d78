"""Deterministic multi-rate closed-loop simulation.

The global clock advances in fixed RK4 steps of ``h_int``.  Every sampling
period is an integer number of steps, so each agent's sampling instants are
exact grid points, identified by integer step counters rather than by
comparing floats.

Per global step the order is fixed:

1. advance all continuous states one RK4 step with the held discrete values;
2. observer triggers of the agents sampling at this instant, ascending index;
3. controller updates of the agents sampling at this instant, ascending index
   (surrogate error, sensor trigger, control recomputation, actuator trigger);
4. logging.

At ``t = 0`` steps 2-4 run before the first integration step and every
channel whose grid contains 0 transmits unconditionally.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .controller import ControllerParams, feedback_term, petm_b_fire, petm_c_fire
from .errors import ConfigError, DivergenceError, GraphError, InputError
from .exosystem import Exosystem
from .graph import CommGraph, h_matrix, unreachable_followers
from .internal_model import InternalModel
from .linalg import expm, rk4_step
from .observer import ObserverParams
from .plants import StrictFeedbackPlant

CHANNELS = ("observer", "petm_b", "petm_c")


@dataclass
class AgentConfig:
    plant: StrictFeedbackPlant
    x0: np.ndarray
    internal_model: InternalModel
    controller: ControllerParams = field(default_factory=ControllerParams)
    observer: ObserverParams = field(default_factory=ObserverParams)
    obs_period: float = 0.01
    ctrl_period: float = 0.01
    obs_phase: float = 0.0
    ctrl_phase: float = 0.0
    nu_hat0: Optional[np.ndarray] = None
    A_hat0: Optional[np.ndarray] = None
    xi_hat0: Optional[np.ndarray] = None


@dataclass
class EngineConfig:
    t_end: float = 30.0
    h_int: float = 1e-3
    log_decimation: int = 10
    rng_seed: int = 0


@dataclass
class Scenario:
    exosystem: Exosystem
    graph: CommGraph
    agents: list
    engine: EngineConfig = field(default_factory=EngineConfig)
    observer_case: int = 1
    petm_c_enabled: bool = False

    @property
    def n_agents(self) -> int:
        return len(self.agents)


@dataclass(frozen=True)
class Event:
    step: int
    t: float
    agent: int  # 1-based
    channel: str
    payload_norm: float
    detail: str = ""


@dataclass
class SimLog:
    t: np.ndarray
    y0: np.ndarray
    y: np.ndarray  # (n_log, N)
    e: np.ndarray
    u: np.ndarray
    u_bar: np.ndarray
    nu_err: np.ndarray
    A_err: Optional[np.ndarray]
    xi_hat: list  # per agent, (n_log, n)
    eta: list  # per agent, (n_log, order)
    events: list
    checks: dict  # (agent, channel) -> number of trigger evaluations
    periods: dict  # (agent, channel) -> period in steps
    h_int: float
    observer_case: int

    @property
    def n_agents(self) -> int:
        return self.y.shape[1]

    def event_steps(self, agent: int, channel: str) -> list[int]:
        return [ev.step for ev in self.events if ev.agent == agent and ev.channel == channel]

    def event_count(self, channel: str, agent: Optional[int] = None) -> int:
        return sum(1 for ev in self.events if ev.channel == channel and (agent is None or ev.agent == agent))

    def check_count(self, channel: str, agent: Optional[int] = None) -> int:
        return sum(v for (a, c), v in self.checks.items() if c == channel and (agent is None or a == agent))

    def timeseries_csv(self) -> str:
        n = self.n_agents
        header = ["t", "y0"]
        header += [f"y{i}" for i in range(1, n + 1)]
        header += [f"e{i}" for i in range(1, n + 1)]
        header += [f"u{i}" for i in range(1, n + 1)]
        header += [f"nu_err_{i}" for i in range(1, n + 1)]
        cols = [self.t[:, None], self.y0[:, None], self.y, self.e, self.u, self.nu_err]
        if self.A_err is not None:
            header += [f"A_err_{i}" for i in range(1, n + 1)]
            cols.append(self.A_err)
        data = np.hstack(cols)
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for row in data:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def events_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "agent", "channel", "payload_norm"])
        for ev in self.events:
            w.writerow([_fmt(ev.t), ev.agent, ev.channel, _fmt(ev.payload_norm)])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _steps(value: float, h: float, what: str, allow_zero: bool = False) -> int:
    m = int(round(value / h))
    if abs(m * h - value) > 1e-9 * max(1.0, abs(value)) or m < (0 if allow_zero else 1):
        raise ConfigError(f"{what} = {value} is not a positive integer multiple of h_int = {h}")
    return m


def validate_scenario(s: Scenario) -> None:
    """Raise ``ConfigError`` on anything that would prevent a run."""
    n = s.graph.n_followers
    if len(s.agents) != n:
        raise ConfigError(f"graph has {n} followers but {len(s.agents)} agents are configured")
    missing = unreachable_followers(s.graph)
    if missing:
        raise GraphError(f"no directed path from the leader to follower(s) {missing}", missing)
    if s.observer_case not in (1, 2):
        raise ConfigError("observer_case must be 1 or 2")
    eng = s.engine
    if not (eng.h_int > 0.0 and eng.t_end > 0.0):
        raise ConfigError("h_int and t_end must be positive")
    if eng.log_decimation < 1:
        raise ConfigError("log_decimation must be >= 1")
    _steps(eng.t_end, eng.h_int, "t_end")
    for i, ag in enumerate(s.agents, start=1):
        _steps(ag.obs_period, eng.h_int, f"agent {i} observer period")
        _steps(ag.ctrl_period, eng.h_int, f"agent {i} controller period")
        _steps(ag.obs_phase, eng.h_int, f"agent {i} observer phase", allow_zero=True)
        _steps(ag.ctrl_phase, eng.h_int, f"agent {i} controller phase", allow_zero=True)
        if not ag.controller.d_is_hurwitz():
            raise ConfigError(f"agent {i}: observer coefficients d={list(ag.controller.d)} are not Hurwitz")
        if ag.plant.n != ag.controller.order:
            raise ConfigError(f"agent {i}: controller order {ag.controller.order} != plant order {ag.plant.n}")
        if np.asarray(ag.x0).size != ag.plant.dim:
            raise ConfigError(f"agent {i}: initial state needs {ag.plant.dim} entries")


class _Channel:
    """Grid bookkeeping for one trigger channel (integer step arithmetic)."""

    __slots__ = ("period", "phase")

    def __init__(self, period: int, phase: int):
        self.period = period
        self.phase = phase

    def hits(self, k: int) -> bool:
        return k >= self.phase and (k - self.phase) % self.period == 0


def run(s: Scenario, trace=None) -> SimLog:
    """Simulate ``s``.

    ``trace``, when given, is called at every trigger evaluation as
    ``trace(channel, agent, step, lhs, threshold, fired)`` where the trigger
    condition is ``lhs > threshold`` (initial transmissions report
    ``fired=True`` regardless).
    """
    validate_scenario(s)
    return _Simulation(s, trace).execute()


class _Simulation:
    def __init__(self, s: Scenario, trace=None):
        self.s = s
        self.trace = trace
        exo = s.exosystem
        eng = s.engine
        self.h = eng.h_int
        self.n_steps = _steps(eng.t_end, self.h, "t_end")
        self.N = N = s.n_agents
        self.nv = nv = exo.dim
        self.case2 = s.observer_case == 2
        A = exo.A

        # observer weights, column 0 is the leader
        W = np.zeros((N, N + 1))
        W[:, 0] = s.graph.pinning
        W[:, 1:] = s.graph.adjacency
        self.W = W
        self.deg = W.sum(axis=1)
        self.mu1 = np.array([ag.observer.mu1 for ag in s.agents])
        self.mu2 = np.array([ag.observer.mu2 for ag in s.agents])

        # state layout: [nu_hat (N*nv) | A_hat (N*nv*nv, case 2) | lin block | plants]
        off = 0
        self.sl_nu = slice(off, off + N * nv)
        off += N * nv
        if self.case2:
            self.sl_A = slice(off, off + N * nv * nv)
            off += N * nv * nv
        self.lin_start = off
        self.sl_eta, self.sl_xi = [], []
        for ag in s.agents:
            r = ag.internal_model.order
            self.sl_eta.append(slice(off, off + r))
            off += r
            n = ag.controller.order
            self.sl_xi.append(slice(off, off + n))
            off += n
        self.sl_lin = slice(self.lin_start, off)
        self.sl_plant = []
        for ag in s.agents:
            self.sl_plant.append(slice(off, off + ag.plant.dim))
            off += ag.plant.dim
        self.dim = off

        # constant linear dynamics of (eta, xi_hat) for all agents
        n_lin = off - self.lin_start - sum(ag.plant.dim for ag in s.agents)
        G = np.zeros((n_lin, n_lin))
        for ag, se, sx in zip(s.agents, self.sl_eta, self.sl_xi):
            e0, x0 = se.start - self.lin_start, sx.start - self.lin_start
            r, n = ag.internal_model.order, ag.controller.order
            G[e0:e0 + r, e0:e0 + r] = ag.internal_model.M
            gains = ag.controller.hgo_gains()
            G[x0:x0 + n, x0:x0 + n] = np.eye(n, k=1)
            G[x0:x0 + n, x0] -= gains
        self.G = G
        self.lin_input = np.zeros(n_lin)

        # initial state
        x = np.zeros(self.dim)
        A_hat0 = []
        for i, ag in enumerate(s.agents):
            if ag.nu_hat0 is not None:
                x[self.sl_nu][i * nv:(i + 1) * nv] = ag.nu_hat0
            a0 = np.zeros((nv, nv)) if ag.A_hat0 is None else np.asarray(ag.A_hat0, dtype=float)
            A_hat0.append(a0)
            if self.case2:
                x[self.sl_A][i * nv * nv:(i + 1) * nv * nv] = a0.reshape(-1)
            x[self.sl_eta[i]] = ag.internal_model.eta
            if ag.xi_hat0 is not None:
                x[self.sl_xi[i]] = ag.xi_hat0
            x[self.sl_plant[i]] = ag.x0
        self.x = x

        # broadcast records: held matrices, predictions at the current grid time
        # and the two sub-step propagators for every channel (index 0 = leader)
        self.A_held = np.empty((N + 1, nv, nv))
        self.A_held[0] = A
        for i in range(N):
            self.A_held[i + 1] = A_hat0[i] if self.case2 else A
        self.pred = np.zeros((N + 1, nv))
        self.pred[0] = exo.nu0
        for i, ag in enumerate(s.agents):
            if ag.nu_hat0 is not None:
                self.pred[i + 1] = ag.nu_hat0
        self.E_half = np.empty_like(self.A_held)
        self.E_full = np.empty_like(self.A_held)
        for j in range(N + 1):
            self._refresh_propagators(j)
        self.A_dot = np.zeros((N, nv, nv))
        if self.case2:
            self._refresh_A_dot()

        # discrete controller state
        self.e_held = np.zeros(N)
        self.u_bar = np.zeros(N)
        self.omega_held = np.zeros(N)
        self.u_applied = np.zeros(N)
        for i in range(N):
            self._refresh_lin_input(i)

        self.obs_ch = [_Channel(_steps(ag.obs_period, self.h, "period"), _steps(ag.obs_phase, self.h, "phase", True))
                       for ag in s.agents]
        self.ctrl_ch = [_Channel(_steps(ag.ctrl_period, self.h, "period"), _steps(ag.ctrl_phase, self.h, "phase", True))
                        for ag in s.agents]
        self.first_obs = [True] * N
        self.first_ctrl = [True] * N
        self.events: list[Event] = []
        self.checks = {(i + 1, c): 0 for i in range(N) for c in CHANNELS}
        self._stage_preds = None

    # -- precomputation helpers -------------------------------------------------
    def _refresh_propagators(self, j: int) -> None:
        self.E_half[j] = expm(self.A_held[j], 0.5 * self.h)
        self.E_full[j] = expm(self.A_held[j], self.h)

    def _refresh_A_dot(self) -> None:
        held = self.A_held
        coupled = np.einsum("ij,jkl->ikl", self.W, held) - self.deg[:, None, None] * held[1:]
        self.A_dot = self.mu1[:, None, None] * coupled

    def _refresh_lin_input(self, i: int) -> None:
        ag = self.s.agents[i]
        ctrl = ag.controller
        se = slice(self.sl_eta[i].start - self.lin_start, self.sl_eta[i].stop - self.lin_start)
        sx = slice(self.sl_xi[i].start - self.lin_start, self.sl_xi[i].stop - self.lin_start)
        self.lin_input[se] = ag.internal_model.N * self.u_applied[i]
        xi_in = ctrl.hgo_gains() * self.e_held[i]
        xi_in[-1] += ctrl.b_hat * self.u_bar[i]
        self.lin_input[sx] = xi_in

    # -- continuous dynamics ----------------------------------------------------
    def _rhs(self, t: float, x: np.ndarray) -> np.ndarray:
        stage = int(round(2.0 * (t - self._t_step) / self.h))
        preds = self._stage_preds[stage]
        N, nv = self.N, self.nv
        out = np.empty_like(x)
        nu_hat = x[self.sl_nu].reshape(N, nv)
        coupling = self.W @ preds - self.deg[:, None] * preds[1:]
        nu_dot = np.einsum("ijk,ik->ij", self.A_held[1:], nu_hat) + self.mu2[:, None] * coupling
        out[self.sl_nu] = nu_dot.reshape(-1)
        if self.case2:
            out[self.sl_A] = self.A_dot.reshape(-1)
        out[self.sl_lin] = self.G @ x[self.sl_lin] + self.lin_input
        nu = preds[0]
        for i, ag in enumerate(self.s.agents):
            sp = self.sl_plant[i]
            out[sp] = ag.plant.rhs(x[sp], nu, self.u_applied[i])
        return out

    def _advance(self, k: int) -> None:
        self._t_step = k * self.h
        p0 = self.pred
        p_half = np.einsum("jab,jb->ja", self.E_half, p0)
        p_full = np.einsum("jab,jb->ja", self.E_full, p0)
        self._stage_preds = (p0, p_half, p_full)
        try:
            self.x = rk4_step(self._rhs, self.x, self._t_step, self.h)
        except DivergenceError as exc:
            raise DivergenceError(f"simulation diverged at t={self._t_step:.6g}: non-finite state", t=self._t_step) from exc
        self.pred = p_full
        self._check_finite(k + 1)

    def _check_finite(self, k: int) -> None:
        if np.all(np.isfinite(self.x)):
            return
        t = k * self.h
        for i in range(self.N):
            if not np.all(np.isfinite(self.x[self.sl_plant[i]])) or not np.all(np.isfinite(self.x[self.sl_xi[i]])):
                raise DivergenceError(f"agent {i + 1} diverged at t={t:.6g}", t=t, agent=i + 1)
        raise DivergenceError(f"simulation diverged at t={t:.6g}", t=t)

    # -- discrete updates ---------------------------------------------------------
    def _nu_hat(self, i: int) -> np.ndarray:
        return self.x[self.sl_nu][i * self.nv:(i + 1) * self.nv]

    def _A_hat(self, i: int) -> np.ndarray:
        nv2 = self.nv * self.nv
        return self.x[self.sl_A][i * nv2:(i + 1) * nv2].reshape(self.nv, self.nv)

    def _observer_update(self, k: int, i: int) -> bool:
        t = k * self.h
        params = self.s.agents[i].observer
        self.checks[(i + 1, "observer")] += 1
        nu_hat = self._nu_hat(i)
        first = self.first_obs[i]
        self.first_obs[i] = False
        h_nu = float(np.linalg.norm(nu_hat - self.pred[i + 1])) - params.iota_nu * math.exp(-params.gamma_nu * t)
        fire_nu = h_nu > 0.0
        fire_A = False
        if self.case2:
            a_hat = self._A_hat(i)
            h_A = float(np.linalg.norm(a_hat - self.A_held[i + 1], 2)) - params.iota_A * math.exp(-params.gamma_A * t)
            fire_A = h_A > 0.0
        if self.trace is not None:
            fired = first or fire_nu or fire_A
            thr = params.iota_nu * math.exp(-params.gamma_nu * t)
            self.trace("observer", i + 1, k, h_nu + thr, thr, fired)
            if self.case2:
                thr_A = params.iota_A * math.exp(-params.gamma_A * t)
                self.trace("observer_A", i + 1, k, h_A + thr_A, thr_A, fired)
        if not (first or fire_nu or fire_A):
            return False
        self.pred[i + 1] = nu_hat
        detail = "initial" if first else "+".join(n for n, f in (("A", fire_A), ("nu", fire_nu)) if f)
        if self.case2:
            self.A_held[i + 1] = self._A_hat(i)
            self._refresh_propagators(i + 1)
        self.events.append(Event(k, t, i + 1, "observer", float(np.linalg.norm(nu_hat)), detail))
        return True

    def _controller_update(self, k: int, i: int) -> None:
        t = k * self.h
        ag = self.s.agents[i]
        ctrl = ag.controller
        self.checks[(i + 1, "petm_b")] += 1
        first = self.first_ctrl[i]
        self.first_ctrl[i] = False
        y = self.x[self.sl_plant[i]][ag.plant.output_index]
        e_now = float(y - self.s.exosystem.q0(self._nu_hat(i)))
        fire_b = first or petm_b_fire(e_now, self.e_held[i], ctrl.iota_e)
        if self.trace is not None:
            self.trace("petm_b", i + 1, k, abs(e_now - self.e_held[i]), ctrl.iota_e * abs(e_now), fire_b)
        if fire_b:
            self.e_held[i] = e_now
            self.events.append(Event(k, t, i + 1, "petm_b", abs(e_now)))
        xi = self.x[self.sl_xi[i]]
        self.u_bar[i] = feedback_term(xi, ctrl)
        omega = self.u_bar[i] + ag.internal_model.output(self.x[self.sl_eta[i]])
        if self.s.petm_c_enabled:
            self.checks[(i + 1, "petm_c")] += 1
            fire_c = first or petm_c_fire(omega, self.omega_held[i], ctrl.iota_omega)
            if self.trace is not None:
                self.trace("petm_c", i + 1, k, abs(omega - self.omega_held[i]), ctrl.iota_omega * abs(omega), fire_c)
            if fire_c:
                self.omega_held[i] = omega
                self.events.append(Event(k, t, i + 1, "petm_c", abs(omega)))
            self.u_applied[i] = self.omega_held[i]
        else:
            self.u_applied[i] = omega
        self._refresh_lin_input(i)

    def _discrete(self, k: int) -> None:
        fired = False
        for i in range(self.N):
            if self.obs_ch[i].hits(k):
                fired |= self._observer_update(k, i)
        if fired and self.case2:
            self._refresh_A_dot()
        for i in range(self.N):
            if self.ctrl_ch[i].hits(k):
                self._controller_update(k, i)

    # -- main loop ----------------------------------------------------------------
    def _loop(self, log_steps, buf, xi_log, eta_log) -> None:
        exo = self.s.exosystem
        n_log = len(log_steps)
        li = 0
        next_log = log_steps[0]
        for k in range(self.n_steps + 1):
            if k > 0:
                self._advance(k - 1)
            self._discrete(k)
            if k == next_log:
                nu = self.pred[0]
                buf["y0"][li] = exo.q0(nu)
                for i, ag in enumerate(self.s.agents):
                    buf["y"][li, i] = self.x[self.sl_plant[i]][ag.plant.output_index]
                    buf["nu_err"][li, i] = np.linalg.norm(self._nu_hat(i) - nu)
                    if self.case2:
                        buf["A_err"][li, i] = np.linalg.norm(self._A_hat(i) - exo.A, "fro")
                    xi_log[i][li] = self.x[self.sl_xi[i]]
                    eta_log[i][li] = self.x[self.sl_eta[i]]
                buf["u"][li] = self.u_applied
                buf["u_bar"][li] = self.u_bar
                li += 1
                if li < n_log:
                    next_log = log_steps[li]

    def execute(self) -> SimLog:
        dec = self.s.engine.log_decimation
        log_steps = list(range(0, self.n_steps + 1, dec))
        if log_steps[-1] != self.n_steps:
            log_steps.append(self.n_steps)
        n_log = len(log_steps)
        N = self.N
        buf = {
            "y0": np.empty(n_log), "y": np.empty((n_log, N)), "u": np.empty((n_log, N)),
            "u_bar": np.empty((n_log, N)), "nu_err": np.empty((n_log, N)), "A_err": np.empty((n_log, N)),
        }
        xi_log = [np.empty((n_log, ag.controller.order)) for ag in self.s.agents]
        eta_log = [np.empty((n_log, ag.internal_model.order)) for ag in self.s.agents]
        # overflow is detected explicitly after every step
        with np.errstate(over="ignore", invalid="ignore"):
            self._loop(log_steps, buf, xi_log, eta_log)
        t = np.array(log_steps, dtype=float) * self.h
        periods = {}
        for i in range(N):
            periods[(i + 1, "observer")] = self.obs_ch[i].period
            periods[(i + 1, "petm_b")] = self.ctrl_ch[i].period
            periods[(i + 1, "petm_c")] = self.ctrl_ch[i].period
        return SimLog(
            t=t, y0=buf["y0"], y=buf["y"], e=buf["y"] - buf["y0"][:, None], u=buf["u"], u_bar=buf["u_bar"],
            nu_err=buf["nu_err"], A_err=buf["A_err"] if self.case2 else None,
            xi_hat=xi_log, eta=eta_log, events=self.events, checks=dict(self.checks), periods=periods,
            h_int=self.h, observer_case=self.s.observer_case,
        )


def fit_exponential_rate(t: Sequence[float], values: Sequence[float], window: tuple[float, float]) -> float:
    """Least-squares slope of ``log(values)`` against ``t`` on ``window``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    mask = (t >= window[0]) & (t <= window[1])
    if mask.sum() < 2:
        raise InputError("need at least two samples inside the fit window")
    if np.any(v[mask] <= 0.0):
        raise InputError("exponential fit needs strictly positive values")
    slope, _ = np.polyfit(t[mask], np.log(v[mask]), 1)
    return float(slope)


def inter_event_gaps(steps: Sequence[int]) -> list[int]:
    return [b - a for a, b in zip(steps, steps[1:])]


def event_statistics(log: SimLog) -> list[dict]:
    """Per agent and channel: events, trigger evaluations and inter-event gaps.

    ``multiples_ok`` is true iff every gap is a positive integer multiple of
    the channel's sampling period.
    """
    rows = []
    for agent in range(1, log.n_agents + 1):
        for channel in CHANNELS:
            checks = log.checks.get((agent, channel), 0)
            if checks == 0:
                continue
            steps = log.event_steps(agent, channel)
            period = log.periods[(agent, channel)]
            gaps = inter_event_gaps(steps)
            gap_t = [g * log.h_int for g in gaps]
            rows.append({
                "agent": agent,
                "channel": channel,
                "events": len(steps),
                "checks": checks,
                "min_gap": min(gap_t) if gap_t else float("nan"),
                "mean_gap": float(np.mean(gap_t)) if gap_t else float("nan"),
                "max_gap": max(gap_t) if gap_t else float("nan"),
                "multiples_ok": all(g >= period and g % period == 0 for g in gaps),
            })
    return rows


def sampling_bound_for(s: Scenario):
    """Sampling bound for the scenario's graph using agent 1's observer gains."""
    from .observer import sampling_period_bound

    p = s.agents[0].observer
    return sampling_period_bound(p.mu2, p.gamma_nu, h_matrix(s.graph))
