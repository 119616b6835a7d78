"""Scenario files: JSON documents with exosystem/graph/agents/engine sections.

Shared ``observer``, ``controller``, ``internal_model`` and ``plant`` blocks
apply to every agent; entries of ``agents`` may override any of them per
agent.  Dotted-key overrides (``controller.iota_e=0.2``,
``agents.2.ctrl_period=0.01``) are applied to the raw document before it is
built, and must name keys that exist or that the schema declares.
"""
from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional

import jsonschema
import numpy as np

from .controller import ControllerParams
from .engine import AgentConfig, EngineConfig, Scenario
from .errors import ConfigError
from .exosystem import Exosystem
from .graph import CommGraph
from .internal_model import InternalModel
from .observer import ObserverParams
from .plants import LorenzAgent, StrictFeedbackPlant

DEFAULT_SCENARIO = "lorenz4.scenario"
SCHEMA_FILE = "scenario.schema.json"


def _data_text(name: str) -> str:
    return resources.files("petreg").joinpath("data", name).read_text(encoding="utf-8")


def schema() -> dict:
    return json.loads(_data_text(SCHEMA_FILE))


def default_config() -> dict:
    return json.loads(_data_text(DEFAULT_SCENARIO))


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"scenario file not found: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    check_schema(cfg)
    return cfg


def check_schema(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from exc


def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, key: str, value: Any) -> None:
    """Set a dotted ``key`` in ``cfg``.

    The key must either exist already or be declared by the schema at that
    position (optional fields such as ``agents.2.x0``).  ``agents.N`` uses
    1-based agent numbers; other list indices are 0-based.
    """
    parts = key.split(".")
    if not key or any(not p for p in parts):
        raise ConfigError(f"override {key!r}: empty key component")
    node: Any = cfg
    sch: Optional[dict] = schema()
    root = sch
    for depth, part in enumerate(parts):
        last = depth == len(parts) - 1
        sch = _resolve(root, sch)
        if isinstance(node, list):
            try:
                idx = int(part) - 1 if depth > 0 and parts[depth - 1] == "agents" else int(part)
            except ValueError as exc:
                raise ConfigError(f"override {key!r}: {part!r} is not a list index") from exc
            if not 0 <= idx < len(node):
                raise ConfigError(f"override {key!r}: index {part} out of range")
            sch = (sch or {}).get("items")
            if last:
                node[idx] = value
            else:
                node = node[idx]
            continue
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r}: {parts[depth - 1]!r} is not a section")
        child_schema = ((sch or {}).get("properties") or {}).get(part)
        if part not in node:
            if child_schema is None:
                raise ConfigError(f"override {key!r}: unknown key {part!r}")
            if not last:
                node[part] = {}
        if last:
            node[part] = value
        else:
            node = node[part]
        sch = child_schema


def _resolve(root: dict, sch: Optional[dict]) -> Optional[dict]:
    while sch is not None and "$ref" in sch:
        ref = sch["$ref"]
        if not ref.startswith("#/"):
            raise ConfigError(f"unsupported schema reference {ref!r}")
        target: Any = root
        for part in ref[2:].split("/"):
            target = target[part]
        sch = target
    return sch


def apply_overrides(cfg: dict, overrides: Iterable[str]) -> dict:
    out = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, text = item.split("=", 1)
        apply_override(out, key.strip(), parse_value(text.strip()))
    check_schema(out)
    return out


def _merged(shared: dict, local: dict | None) -> dict:
    out = copy.deepcopy(shared)
    for k, v in (local or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merged(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _build_plant(block: dict) -> StrictFeedbackPlant:
    model = block.get("model", "lorenz")
    if model == "lorenz":
        return LorenzAgent(**block.get("params", {})).plant()
    raise ConfigError(f"plant model {model!r} cannot be built from a scenario file; "
                      "construct custom plants in Python")


def _build_internal_model(block: dict) -> InternalModel:
    if "M" in block:
        return InternalModel(np.array(block["M"], dtype=float), np.array(block["N"], dtype=float),
                             Phi=None if block.get("Phi") is None else np.array(block["Phi"], dtype=float))
    return InternalModel.from_polynomials(block["m_poly"], block.get("psi_poly"), block.get("Phi"))


def _controller_params(block: dict) -> ControllerParams:
    fields = {k: v for k, v in block.items() if k != "petm_c"}
    if "d" in fields:
        fields["d"] = tuple(fields["d"])
    if "Q" in fields:
        fields["Q"] = tuple(fields["Q"])
    return ControllerParams(**fields)


def _observer_params(block: dict) -> ObserverParams:
    return ObserverParams(**{k: v for k, v in block.items() if k != "case"})


def build_scenario(cfg: dict) -> Scenario:
    check_schema(cfg)
    exo_cfg = cfg["exosystem"]
    exo = Exosystem(np.array(exo_cfg["A"], dtype=float), np.array(exo_cfg["nu0"], dtype=float),
                    output_row=np.array(exo_cfg.get("output_row", [1.0] + [0.0] * (len(exo_cfg["nu0"]) - 1))))
    g = cfg["graph"]
    graph = CommGraph.from_edges(g["n_followers"], [tuple(e) for e in g.get("edges", [])], g.get("pinned", []))
    eng_cfg = cfg.get("engine", {})
    engine = EngineConfig(**eng_cfg)

    agent_cfgs = cfg.get("agents", [])
    if len(agent_cfgs) != graph.n_followers:
        raise ConfigError(f"graph has {graph.n_followers} followers but {len(agent_cfgs)} agent entries")
    plant_shared = cfg.get("plant", {})
    init = plant_shared.get("init", {})
    rng = np.random.default_rng(init.get("seed", engine.rng_seed))
    lo, hi = init.get("low", -0.5), init.get("high", 0.5)

    agents = []
    for i, a in enumerate(agent_cfgs, start=1):
        plant = _build_plant(_merged(plant_shared, a.get("plant")))
        x0_rand = rng.uniform(lo, hi, plant.dim)  # drawn for every agent so seeds stay aligned
        x0 = np.array(a["x0"], dtype=float) if "x0" in a else x0_rand
        ctrl = _controller_params(_merged(cfg.get("controller", {}), a.get("controller")))
        obs = _observer_params(_merged(cfg.get("observer", {}), a.get("observer")))
        im = _build_internal_model(_merged(cfg.get("internal_model", {}), a.get("internal_model")))
        agents.append(AgentConfig(
            plant=plant, x0=x0, internal_model=im, controller=ctrl, observer=obs,
            obs_period=a["obs_period"], ctrl_period=a["ctrl_period"],
            obs_phase=a.get("obs_phase", 0.0), ctrl_phase=a.get("ctrl_phase", 0.0),
            nu_hat0=None if "nu_hat0" not in a else np.array(a["nu_hat0"], dtype=float),
            A_hat0=None if "A_hat0" not in a else np.array(a["A_hat0"], dtype=float),
        ))
    return Scenario(
        exosystem=exo, graph=graph, agents=agents, engine=engine,
        observer_case=int(cfg.get("observer", {}).get("case", 1)),
        petm_c_enabled=bool(cfg.get("controller", {}).get("petm_c", {}).get("enabled", False)),
    )


def default_scenario(**overrides: Any) -> Scenario:
    """The bundled four-agent Lorenz benchmark, with optional dotted overrides
    given as keyword arguments using ``__`` for dots."""
    cfg = default_config()
    for k, v in overrides.items():
        apply_override(cfg, k.replace("__", "."), v)
    return build_scenario(cfg)


def validation_report(s: Scenario) -> list[tuple[str, bool, str]]:
    """Structural checks on a built scenario as ``(name, passed, detail)``."""
    from .engine import _steps
    from .graph import h_matrix, unreachable_followers
    from .linalg import is_controllable, is_hurwitz, is_skew_symmetric
    from .plants import validate_plant

    rows = []
    exo = s.exosystem
    rows.append(("leader matrix skew-symmetric", is_skew_symmetric(exo.A), f"A={exo.A.tolist()}"))
    missing = unreachable_followers(s.graph)
    rows.append(("leader spanning tree", not missing,
                 "all followers reachable" if not missing else f"unreachable follower(s) {missing}"))
    rows.append(("-H Hurwitz", is_hurwitz(-h_matrix(s.graph)), ""))
    rows.append(("agent count matches graph", len(s.agents) == s.graph.n_followers,
                 f"{len(s.agents)} agents, {s.graph.n_followers} followers"))
    h = s.engine.h_int
    for i, ag in enumerate(s.agents, start=1):
        im = ag.internal_model
        rows.append((f"agent {i}: M Hurwitz", is_hurwitz(im.M), ""))
        rows.append((f"agent {i}: (M, N) controllable", is_controllable(im.M, im.N), ""))
        rows.append((f"agent {i}: d-polynomial Hurwitz", ag.controller.d_is_hurwitz(), f"d={list(ag.controller.d)}"))
        rows.append((f"agent {i}: controller order matches plant", ag.controller.order == ag.plant.n, ""))
        for what, value, zero_ok in (("observer period", ag.obs_period, False), ("controller period", ag.ctrl_period, False),
                                     ("observer phase", ag.obs_phase, True), ("controller phase", ag.ctrl_phase, True)):
            try:
                _steps(value, h, what, allow_zero=zero_ok)
                rows.append((f"agent {i}: {what} on integration grid", True, f"{value} = {round(value / h)} x h_int"))
            except ConfigError as exc:
                rows.append((f"agent {i}: {what} on integration grid", False, str(exc)))
        rep = validate_plant(ag.plant, nu_dim=exo.dim)
        for name, ok in rep.probes.items():
            rows.append((f"agent {i}: plant {name}", ok, ""))
    return rows
