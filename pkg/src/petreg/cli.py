"""``petreg`` command line: run, sweep, bound and validate.

Every subcommand takes ``--scenario`` (default: the bundled four-agent Lorenz
benchmark).  Output directories default to ``$PETREG_OUT/<scenario stem>``,
with ``PETREG_OUT`` falling back to ``./petreg_runs``.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .engine import SimLog, event_statistics, fit_exponential_rate, run, validate_scenario
from .errors import ConfigError, DivergenceError, GraphError, NoSolutionError, PetregError
from .graph import h_matrix
from .observer import sampling_period_bound
from .scenario import (
    DEFAULT_SCENARIO,
    apply_override,
    apply_overrides,
    build_scenario,
    check_schema,
    default_config,
    load_config,
    parse_value,
    validation_report,
)

log = logging.getLogger("petreg")

OUT_ENV = "PETREG_OUT"
DEFAULT_OUT_ROOT = "petreg_runs"

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_USAGE = 2  # argparse's own code
EXIT_MISSING_FILE = 3
EXIT_SCHEMA = 4
EXIT_GRAPH = 5
EXIT_DIVERGED = 6
EXIT_CONFIG = 7

RATE_WINDOW = (2.0, 10.0)


def _load(path: Optional[str]) -> tuple[dict, str]:
    if path is None:
        return default_config(), Path(DEFAULT_SCENARIO).stem
    return load_config(path), Path(path).stem


def _out_dir(arg: Optional[str], stem: str) -> Path:
    if arg:
        return Path(arg)
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT_ROOT)) / stem


def steady_window_start(t_end: float) -> float:
    """Start of the window used for steady-state error figures (last 5 s)."""
    return t_end - min(5.0, 0.5 * t_end)


def summarize(log_: SimLog, cfg: dict, runtime_s: float) -> dict:
    t = log_.t
    t_end = float(t[-1])
    steady = t > steady_window_start(t_end)
    abs_e = np.abs(log_.e)
    gamma_nu = float(cfg.get("observer", {}).get("gamma_nu", 0.1))
    window = (RATE_WINDOW[0], min(RATE_WINDOW[1], t_end))
    try:
        rate = fit_exponential_rate(t, log_.nu_err.max(axis=1), window)
    except PetregError:
        rate = None
    label = "PASS" if rate is not None and rate <= -gamma_nu else "INFO"
    events: dict[str, Any] = {}
    for row in event_statistics(log_):
        events.setdefault(str(row["agent"]), {})[row["channel"]] = {
            "events": row["events"], "checks": row["checks"], "min_gap": row["min_gap"],
        }
    totals = {ch: {"events": log_.event_count(ch), "checks": log_.check_count(ch)}
              for ch in ("observer", "petm_b", "petm_c")}
    out = {
        "t_end": t_end,
        "observer_case": log_.observer_case,
        "final_abs_e": abs_e[-1].tolist(),
        "steady_window_start": steady_window_start(t_end),
        "steady_max_abs_e": abs_e[steady].max(axis=0).tolist() if steady.any() else abs_e[-1].tolist(),
        "final_nu_err": log_.nu_err[-1].tolist(),
        "events": events,
        "totals": totals,
        "observer_rate": {"fitted": rate, "gamma_nu": gamma_nu, "window": list(window), "label": label},
        "runtime_s": runtime_s,
    }
    if log_.A_err is not None:
        out["final_A_err"] = log_.A_err[-1].tolist()
    return out


def execute_run(cfg: dict, out: Path) -> dict:
    """Build, run and write ``timeseries.csv``, ``events.csv``,
    ``summary.json`` and ``effective_config.json`` into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    scenario = build_scenario(cfg)
    t0 = time.perf_counter()
    result = run(scenario)
    runtime = time.perf_counter() - t0
    (out / "timeseries.csv").write_text(result.timeseries_csv(), encoding="utf-8")
    (out / "events.csv").write_text(result.events_csv(), encoding="utf-8")
    summary = summarize(result, cfg, runtime)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return summary


def _fail(exc: BaseException) -> int:
    """Map an exception to a diagnostic on stderr and an exit code."""
    if isinstance(exc, FileNotFoundError):
        code, kind = EXIT_MISSING_FILE, "missing file"
    elif isinstance(exc, GraphError):
        code, kind = EXIT_GRAPH, "graph"
    elif isinstance(exc, ConfigError) and str(exc).startswith("schema violation"):
        code, kind = EXIT_SCHEMA, "schema"
    elif isinstance(exc, ConfigError) and "invalid JSON" in str(exc):
        code, kind = EXIT_SCHEMA, "schema"
    elif isinstance(exc, DivergenceError):
        code, kind = EXIT_DIVERGED, "divergence"
    else:
        code, kind = EXIT_CONFIG, "config"
    print(f"petreg: error ({kind}): {exc}", file=sys.stderr)
    return code


def _print_summary(summary: dict, out: Path) -> None:
    print(f"wrote {out}/timeseries.csv, events.csv, summary.json, effective_config.json")
    print(f"runtime {summary['runtime_s']:.2f} s, t_end {summary['t_end']:g} s")
    print("steady-state max |e_i|: " + ", ".join(f"{v:.3e}" for v in summary["steady_max_abs_e"]))
    for ch, tot in summary["totals"].items():
        if tot["checks"]:
            print(f"{ch}: {tot['events']} events / {tot['checks']} checks")
    r = summary["observer_rate"]
    fitted = "n/a" if r["fitted"] is None else f"{r['fitted']:.4f}"
    print(f"observer decay rate {fitted} vs -gamma_nu = {-r['gamma_nu']:g}: {r['label']}")


def cmd_run(args) -> int:
    try:
        cfg, stem = _load(args.scenario)
        cfg = apply_overrides(cfg, args.set or [])
        out = _out_dir(args.out, stem)
        summary = execute_run(cfg, out)
    except (PetregError, FileNotFoundError) as exc:
        return _fail(exc)
    _print_summary(summary, out)
    return EXIT_OK


def _sweep_one(cfg: dict, key: str, value: Any, out: str) -> dict:
    local = json.loads(json.dumps(cfg))
    apply_override(local, key, value)
    check_schema(local)
    return execute_run(local, Path(out))


def _column_name(value: Any) -> str:
    return value if isinstance(value, str) else json.dumps(value)


def write_sweep_table(path: Path, key: str, values: Sequence[Any], results: dict) -> None:
    """Rows ``sampled-data`` (sensor trigger evaluations) and ``PET`` (sensor
    transmissions), then steady-state errors per agent; one column per value."""
    cols = [_column_name(v) for v in values]
    n_agents = max((len(r["steady_max_abs_e"]) for r in results.values() if isinstance(r, dict)), default=0)

    def cell(col, fn):
        r = results.get(col)
        if not isinstance(r, dict):
            return "error"
        return fn(r)

    rows = [
        ["sampled-data"] + [cell(c, lambda r: r["totals"]["petm_b"]["checks"]) for c in cols],
        ["PET"] + [cell(c, lambda r: r["totals"]["petm_b"]["events"]) for c in cols],
        ["petm_c"] + [cell(c, lambda r: r["totals"]["petm_c"]["events"]) for c in cols],
    ]
    for i in range(n_agents):
        rows.append([f"steady_max_abs_e_{i + 1}"]
                    + [cell(c, lambda r, i=i: f"{r['steady_max_abs_e'][i]:.17g}") for c in cols])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([key] + cols)
        w.writerows(rows)


def cmd_sweep(args) -> int:
    try:
        cfg, stem = _load(args.scenario)
        cfg = apply_overrides(cfg, args.set or [])
        values = [parse_value(v.strip()) for v in args.values.split(",") if v.strip()]
        if not values:
            raise ConfigError("--values needs at least one value")
        # resolve the key once up front so a typo fails before any run starts
        probe = json.loads(json.dumps(cfg))
        apply_override(probe, args.key, values[0])
    except (PetregError, FileNotFoundError) as exc:
        return _fail(exc)
    root = _out_dir(args.out, stem + "_sweep")
    root.mkdir(parents=True, exist_ok=True)
    cols = [_column_name(v) for v in values]
    dirs = {c: str(root / f"{args.key}={c}") for c in cols}
    results: dict[str, Any] = {}
    codes = []
    if args.jobs <= 1:
        for v, c in zip(values, cols):
            try:
                results[c] = _sweep_one(cfg, args.key, v, dirs[c])
            except (PetregError, FileNotFoundError) as exc:
                results[c] = str(exc)
                codes.append(_fail(exc))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futs = {pool.submit(_sweep_one, cfg, args.key, v, dirs[c]): c for v, c in zip(values, cols)}
            for fut in concurrent.futures.as_completed(futs):
                c = futs[fut]
                try:
                    results[c] = fut.result()
                except (PetregError, FileNotFoundError) as exc:
                    results[c] = str(exc)
                    codes.append(_fail(exc))
    table = root / "sweep_table.csv"
    write_sweep_table(table, args.key, values, results)
    print(table.read_text(encoding="utf-8"), end="")
    print(f"wrote {table}")
    return max(codes) if codes else EXIT_OK


def cmd_bound(args) -> int:
    try:
        cfg, _ = _load(args.scenario)
        cfg = apply_overrides(cfg, args.set or [])
        s = build_scenario(cfg)
        p = s.agents[0].observer
        b = sampling_period_bound(p.mu2, p.gamma_nu, h_matrix(s.graph))
    except NoSolutionError as exc:
        print(f"petreg: error (lyapunov): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PetregError, FileNotFoundError) as exc:
        return _fail(exc)
    print(f"mu2 = {p.mu2:g}, gamma_nu = {p.gamma_nu:g}")
    print(f"gain term  = {b.term_gain:.6g}")
    print(f"delay term = {b.term_delay:.6g}")
    print(f"bound T < {b.value:.6g}")
    print(f"feasible: {'yes' if b.feasible else 'no'}")
    for i, ag in enumerate(s.agents, start=1):
        verdict = "pass" if b.admits(ag.obs_period) else "fail"
        print(f"agent {i}: T = {ag.obs_period:g} {verdict}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg, _ = _load(args.scenario)
        cfg = apply_overrides(cfg, args.set or [])
    except (PetregError, FileNotFoundError) as exc:
        return _fail(exc)
    try:
        s = build_scenario(cfg)
    except PetregError as exc:
        print(f"FAIL  scenario builds: {exc}")
        return EXIT_CHECKS_FAILED
    rows = validation_report(s)
    try:
        validate_scenario(s)
        rows.append(("engine accepts scenario", True, ""))
    except PetregError as exc:
        rows.append(("engine accepts scenario", False, str(exc)))
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    failed = [r for r in rows if not r[1]]
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    return EXIT_OK if not failed else EXIT_CHECKS_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="petreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--scenario", help="scenario JSON file (default: bundled benchmark)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted-key override, repeatable (agents.N is 1-based)")
        if out:
            p.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<scenario>)")

    p = sub.add_parser("run", help="simulate one scenario")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="one run per value of a config key")
    common(p)
    p.add_argument("--key", required=True, help="dotted config key, e.g. controller.iota_e")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs (default 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bound", help="observer sampling-period bound")
    common(p, out=False)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("validate", help="structural checks on a scenario")
    common(p, out=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
