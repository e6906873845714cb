"""Command-line front end.

    endqt <scenario> [--config file.json] [--seed N] [--out dir] [scenario flags]

Scenarios: trace, sdc, bell, chsh, ewf, mz, ccm. Flags mirror the
``parameters`` object of the config file one to one and override it.
Exit status is 0 on success, 1 on a runtime failure and 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import causal_classical as cc
from . import causal_quantum as cq
from . import decoherence as dc
from . import interferometer as mz
from . import io
from . import sdc

SEED_MAX = 2**64 - 1
TOP_LEVEL_FIELDS = {"scenario", "parameters", "seed", "output_dir"}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Param:
    kind: str  # int, float, bool, str, delta, int_list, json
    default: Any = None
    lo: float | None = None
    hi: float | None = None
    choices: tuple | None = None
    help: str = ""


def _p(kind, default=None, **kw) -> Param:
    return Param(kind, default, **kw)


SCENARIOS: dict[str, dict[str, Param]] = {
    "trace": {
        "bath_sizes": _p("int_list", [6, 12, 17, 30], lo=1, hi=dc.MAX_EXACT_BATH * 50, help="bath sizes G"),
        "coupling_lo": _p("float", 0.0, help="lower coupling bound"),
        "coupling_hi": _p("float", 1.0, help="upper coupling bound"),
        "t_max": _p("float", dc.DEFAULT_T_MAX, lo=0.0, help="trace length (s)"),
        "dt": _p("float", dc.DEFAULT_DT, lo=0.0, help="sample spacing (s)"),
        "epsilon": _p("float", dc.DEFAULT_EPSILON, lo=0.0, hi=1.0, help="decoherence threshold"),
        "window": _p("float", dc.DEFAULT_WINDOW, lo=0.0, help="persistence window (s)"),
    },
    "sdc": {
        "layers": _p("int", 4, lo=2, help="number of layers"),
        "last_layer": _p("int", 5, lo=1, help="systems in the final layer"),
        "group_size": _p("int", 30, lo=1, help="environment group size G"),
        "delta": _p("delta", "auto", help="step duration in seconds or 'auto'"),
        "coupling_lo": _p("float", 0.0, help="lower coupling bound"),
        "coupling_hi": _p("float", 1.0, help="upper coupling bound"),
        "dissolve_after": _p("int", None, lo=0, help="cut the chain after this step"),
        "epsilon": _p("float", dc.DEFAULT_EPSILON, lo=0.0, hi=1.0, help="decoherence threshold"),
        "window": _p("float", dc.DEFAULT_WINDOW, lo=0.0, help="persistence window (s)"),
        "trace_groups": _p("int", 32, lo=1, help="groups per step with a full trace"),
        "node_cap": _p("int", sdc.DEFAULT_NODE_CAP, lo=1, help="refuse larger graphs"),
    },
    "bell": {
        "angle_a": _p("float", 0.0, help="A's measurement angle"),
        "angle_b": _p("float", np.pi / 4, help="B's measurement angle"),
        "state": _p("str", "singlet", choices=("singlet", "product", "classical"), help="source state"),
    },
    "chsh": {
        "a": _p("float", cq.TSIRELSON_ANGLES[0]),
        "a2": _p("float", cq.TSIRELSON_ANGLES[1]),
        "b": _p("float", cq.TSIRELSON_ANGLES[2]),
        "b2": _p("float", cq.TSIRELSON_ANGLES[3]),
        "state": _p("str", "singlet", choices=("singlet", "product", "classical"), help="source state"),
    },
    "ewf": {
        "isolated": _p("bool", True, help="friends isolated from any chain"),
        "wigner_a": _p("float", 0.0, help="first Wigner's angle"),
        "wigner_b": _p("float", np.pi / 4, help="second Wigner's angle"),
    },
    "mz": {
        "detector_d3": _p("bool", False, help="place the which-path detector"),
        "sdc_connected": _p("bool", True, help="detectors belong to a chain"),
        "shots": _p("int", 0, lo=0, help="sampled photons (needs a seed)"),
    },
    "ccm": {
        "dag": _p("json", None, help="DAG as JSON (default: five-node example DAG)"),
        "table": _p("json", None, help="joint table as JSON (default: random Markov table)"),
    },
}


def _stochastic(scenario: str, params: dict) -> bool:
    if scenario in ("trace", "sdc"):
        return True
    if scenario == "mz":
        return params["shots"] > 0
    if scenario == "ccm":
        return params["table"] is None
    return False


def _coerce(name: str, spec: Param, value):
    kind = spec.kind
    try:
        if value is None:
            if spec.default is None:
                return None
            raise TypeError
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            v = int(value)
        elif kind == "float":
            if isinstance(value, bool):
                raise TypeError
            v = float(value)
            if not np.isfinite(v):
                raise TypeError
        elif kind == "bool":
            if isinstance(value, str) and value.lower() in ("true", "false"):
                value = value.lower() == "true"
            if not isinstance(value, bool):
                raise TypeError
            v = value
        elif kind == "str":
            if not isinstance(value, str):
                raise TypeError
            v = value
        elif kind == "delta":
            if value == "auto":
                return "auto"
            if isinstance(value, bool):
                raise TypeError
            v = float(value)
            if not v > 0:
                raise ConfigError(name, f"must be a positive number or 'auto', got {value!r}")
            return v
        elif kind == "int_list":
            if isinstance(value, str):
                value = [int(x) for x in value.split(",") if x.strip()]
            if not isinstance(value, list) or not value or any(isinstance(x, bool) for x in value):
                raise TypeError
            v = [int(x) for x in value]
            for x in v:
                _range_check(name, spec, x)
            return v
        elif kind == "json":
            v = json.loads(value) if isinstance(value, str) else value
            if not isinstance(v, dict):
                raise TypeError
            return v
        else:
            raise AssertionError(kind)
    except ConfigError:
        raise
    except (TypeError, ValueError, json.JSONDecodeError):
        raise ConfigError(name, f"expected {kind}, got {value!r}") from None
    _range_check(name, spec, v)
    if spec.choices and v not in spec.choices:
        raise ConfigError(name, f"must be one of {list(spec.choices)}, got {v!r}")
    return v


def _range_check(name: str, spec: Param, v) -> None:
    if spec.lo is not None and v < spec.lo:
        raise ConfigError(name, f"must be >= {spec.lo}, got {v!r}")
    if spec.hi is not None and v > spec.hi:
        raise ConfigError(name, f"must be <= {spec.hi}, got {v!r}")


@dataclass
class ScenarioConfig:
    scenario: str
    parameters: dict
    seed: int | None
    output_dir: Path

    def echo(self) -> dict:
        return {"scenario": self.scenario, "parameters": self.parameters, "seed": self.seed}


def load_config(scenario: str, file_doc: dict | None, overrides: dict, seed: int | None,
                out: str | None) -> ScenarioConfig:
    """Merge file values with flag overrides and validate every field."""
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {scenario!r}")
    doc = dict(file_doc or {})
    unknown = set(doc) - TOP_LEVEL_FIELDS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    if "scenario" in doc and doc["scenario"] != scenario:
        raise ConfigError("scenario", f"config names {doc['scenario']!r} but command line names {scenario!r}")
    schema = SCENARIOS[scenario]
    raw = doc.get("parameters", {}) or {}
    if not isinstance(raw, dict):
        raise ConfigError("parameters", "must be an object")
    for k in raw:
        if k not in schema:
            raise ConfigError(k, f"unknown parameter for scenario {scenario!r}")
    merged = {k: raw.get(k, spec.default) for k, spec in schema.items()}
    merged.update({k: v for k, v in overrides.items() if v is not None})
    params = {k: _coerce(k, schema[k], merged[k]) for k in schema}
    _cross_check(scenario, params)

    seed = doc.get("seed") if seed is None else seed
    if seed is not None:
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= SEED_MAX:
            raise ConfigError("seed", f"must be an integer in [0, 2^64), got {seed!r}")
    elif _stochastic(scenario, params):
        raise ConfigError("seed", f"scenario {scenario!r} is stochastic and needs a seed")
    out_dir = Path(out if out is not None else doc.get("output_dir", f"endqt_{scenario}"))
    return ScenarioConfig(scenario, params, seed, out_dir)


def _cross_check(scenario: str, p: dict) -> None:
    if "coupling_lo" in p and not p["coupling_lo"] < p["coupling_hi"]:
        raise ConfigError("coupling_hi", "must exceed coupling_lo")
    for name in ("t_max", "dt", "window"):
        if name in p and not p[name] > 0:
            raise ConfigError(name, f"must be > 0, got {p[name]!r}")
    if scenario == "trace" and p["window"] > p["t_max"]:
        raise ConfigError("window", "must not exceed t_max")
    if scenario == "sdc" and p["dissolve_after"] is not None and p["dissolve_after"] >= p["layers"] - 1:
        raise ConfigError("dissolve_after", f"must be < {p['layers'] - 1}")


@dataclass
class RunReport:
    scenario: dict
    wall_seconds: float
    artifacts: list[str] = field(default_factory=list)
    headline: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config": self.scenario, "wall_seconds": self.wall_seconds,
                "artifacts": self.artifacts, "headline": self.headline}


def _source_state(name: str) -> np.ndarray:
    if name == "singlet":
        return np.outer(cq.SINGLET, cq.SINGLET.conj())
    if name == "product":
        return np.diag([0.0, 1.0, 0.0, 0.0]).astype(complex)
    return np.diag([0.0, 0.5, 0.5, 0.0]).astype(complex)


def _run_trace(cfg: ScenarioConfig, out: Path, art: list) -> dict:
    p = cfg.parameters
    times = dc.default_times(p["t_max"], p["dt"])
    dist = dc.CouplingDistribution("uniform", p["coupling_lo"], p["coupling_hi"])
    traces, headline = {}, {}
    for G in p["bath_sizes"]:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(G,)))
        g = dist.sample(G, rng)
        tr = dc.analyze_trace(dc.compute_trace(g, times), p["epsilon"], p["window"])
        traces[G] = tr
        art.append(io.write_trace(tr, out / f"trace_G{G}.csv"))
        art.append(io.emit_plot_data(tr, out / f"plot_G{G}.csv"))
        side = {"bath_size": G, "couplings": g, "gamma": tr.gamma, "decoherence_time": tr.decoherence_time,
                "epsilon": p["epsilon"], "window": p["window"]}
        art.append(io.write_json(out / f"trace_G{G}.json", side))
        headline[f"G{G}"] = {"decoherence_time": tr.decoherence_time, "gamma": tr.gamma,
                             "time_averaged_abs_z": dc.time_averaged_abs_z(tr, 2.0, min(10.0, p["t_max"]))
                             if p["t_max"] >= 2.0 else None}
    art.append(io.plot_traces(traces, out / "traces.png"))
    return headline


def _run_sdc(cfg: ScenarioConfig, out: Path, art: list) -> dict:
    p = cfg.parameters
    chain = sdc.ChainConfig(
        num_layers=p["layers"], last_layer_count=p["last_layer"], group_size=p["group_size"],
        coupling_dist=dc.CouplingDistribution("uniform", p["coupling_lo"], p["coupling_hi"]),
        step_duration=p["delta"], seed=cfg.seed, dissolve_after_layer=p["dissolve_after"],
        epsilon=p["epsilon"], window=p["window"], trace_groups=p["trace_groups"], node_cap=p["node_cap"],
    )
    run = sdc.simulate_chain(chain)
    violations = sdc.validate_cdc(run.graph)
    run.events.to_csv(out / "events.csv")
    art.append(out / "events.csv")
    systems = sdc.system_records(run)
    art.append(io.write_columns(out / "systems.csv", systems))
    rows = [(s.step, s.basis, s.time, s.n_targets, s.mean_abs_z, s.mean_differentiation, s.plus_fraction,
             s.decoherence_time, s.gamma) for s in run.steps]
    art.append(io.write_csv(out / "steps.csv", ("step", "basis", "time_s", "n_targets", "mean_abs_z",
                                                "mean_differentiation", "plus_fraction",
                                                "decoherence_time_s", "gamma"), rows))
    art.append(io.plot_step_summary([s.time for s in run.steps], [s.mean_abs_z for s in run.steps],
                                    [s.mean_differentiation for s in run.steps], out / "steps.png"))
    counts = sdc.event_counts(chain)
    measured = [t for t in run.step_decoherence_times if t is not None]
    ordering = sdc.timescale_ordering_check(measured) if len(measured) >= 2 else None
    return {
        "total": counts["systems"],
        "edges": counts["edges"],
        "group_interactions": counts["group_interactions"],
        "event_rows": len(run.events),
        "systems_determined": int(systems["node_id"].size),
        "delta_s": run.delta,
        "final_event_time_s": float(run.events.time.max()) if len(run.events) else None,
        "cdc_violations": [f"{v.rule}: {v.detail}" for v in violations],
        "timescale_ordering_passed": None if ordering is None else ordering.passed,
    }


def _bell_rows(a: float, b: float, table: dict) -> list:
    return [(a, b, x, y, table[(x, y)]) for x in (1, -1) for y in (1, -1)]


def _run_bell(cfg: ScenarioConfig, out: Path, art: list) -> dict:
    p = cfg.parameters
    table = cq.bell_scenario(p["angle_a"], p["angle_b"], _source_state(p["state"]))
    art.append(io.write_probability_table(out / "probabilities.csv", _bell_rows(p["angle_a"], p["angle_b"], table)))
    art.append(io.plot_bar({f"{x:+d},{y:+d}": table[(x, y)] for x in (1, -1) for y in (1, -1)},
                           out / "probabilities.png"))
    return {"correlator": cq.correlator(table), "singlet_prediction": -np.cos(p["angle_a"] - p["angle_b"])}


def _run_chsh(cfg: ScenarioConfig, out: Path, art: list) -> dict:
    p = cfg.parameters
    rho = _source_state(p["state"])
    rows, E = [], {}
    for s in (p["a"], p["a2"]):
        for t in (p["b"], p["b2"]):
            table = cq.bell_scenario(s, t, rho)
            rows += _bell_rows(s, t, table)
            E[(s, t)] = cq.correlator(table)
    S = E[(p["a"], p["b"])] + E[(p["a"], p["b2"])] + E[(p["a2"], p["b"])] - E[(p["a2"], p["b2"])]
    art.append(io.write_probability_table(out / "probabilities.csv", rows))
    art.append(io.plot_bar({"E(a,b)": E[(p["a"], p["b"])], "E(a,b')": E[(p["a"], p["b2"])],
                            "E(a',b)": E[(p["a2"], p["b"])], "E(a',b')": E[(p["a2"], p["b2"])]},
                           out / "correlators.png", ylabel="correlator"))
    return {"chsh": S, "lhv_bound": cc.lhv_chsh_max(), "tsirelson_bound": 2 * np.sqrt(2)}


def _run_ewf(cfg: ScenarioConfig, out: Path, art: list) -> dict:
    p = cfg.parameters
    res = cq.ewf_scenario(p["isolated"], (p["wigner_a"], p["wigner_b"]))
    art.append(io.write_probability_table(out / "probabilities.csv",
                                          _bell_rows(p["wigner_a"], p["wigner_b"], res.wigner_table)))
    head = {"isolated": p["isolated"], "reversal_fidelity": res.reversal_fidelity,
            "wigner_correlator": cq.correlator(res.wigner_table)}
    if res.friend_table is not None:
        art.append(io.write_probability_table(out / "friends.csv", _bell_rows("z", "z", res.friend_table)))
        head["friend_correlator"] = cq.correlator(res.friend_table)
    return head


def _run_mz(cfg: ScenarioConfig, out: Path, art: list) -> dict:
    p = cfg.parameters
    res = mz.run_mz(p["detector_d3"], mz.DetectorModel(sdc_connected=p["sdc_connected"]))
    art.append(io.write_csv(out / "state.csv", ("basis", "re", "im"), res.state.to_csv_rows()))
    head: dict = {"detector_d3": p["detector_d3"], "sdc_connected": p["sdc_connected"],
                  "state_norm": float(np.linalg.norm(res.state.amplitudes))}
    if res.table is not None:
        art.append(io.write_json(out / "mz.json", res.table))
        art.append(io.plot_bar(res.table, out / "mz.png"))
        head["table"] = res.table
        if p["shots"]:
            counts = mz.sample_detections(res.table, p["shots"], cfg.seed)
            art.append(io.write_json(out / "counts.json", counts))
            head["counts"] = counts
    return head


def _run_ccm(cfg: ScenarioConfig, out: Path, art: list) -> dict:
    p = cfg.parameters
    try:
        dag = cc.example_dag() if p["dag"] is None else cc.dag_from_dict(p["dag"])
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError("dag", str(e)) from None
    if p["table"] is None:
        table = cc.random_markov_table(dag, np.random.default_rng(np.random.SeedSequence(cfg.seed)))
    else:
        try:
            table = cc.table_from_dict(p["table"], dag)
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError("table", str(e)) from None
    markov, violations = cc.markov_check(dag, table)
    rows = []
    nodes = dag.nodes
    for a_i, a in enumerate(nodes):
        for b in nodes[a_i + 1:]:
            others = [u for u in nodes if u not in (a, b)]
            for r in range(len(others) + 1):
                for z in itertools.combinations(others, r):
                    sep = cc.d_separated(dag, {a}, {b}, set(z))
                    d = table.ci_defect([a], [b], z)
                    rows.append((a, b, " ".join(z), sep, d, d <= cc.PROB_TOL))
    art.append(io.write_csv(out / "independencies.csv",
                            ("x", "y", "given", "d_separated", "ci_defect", "independent"), rows))
    screening = {}
    if markov:
        for a_i, a in enumerate(nodes):
            for b in nodes[a_i + 1:]:
                u = cc.crccp_screening_set(dag, table, a, b)
                if u is not None:
                    screening[f"{a},{b}"] = sorted(u)
    head = {"markov": markov, "violations": [[list(v.x), list(v.y), list(v.z), v.defect] for v in violations],
            "screening_sets": screening,
            "soundness_holds": all(ind for *_, sep, _, ind in rows if sep) if markov else None}
    if p["dag"] is None:
        head["listed_independencies_hold"] = [
            bool(cc.d_separated(dag, X, Y, Z) and table.independent(sorted(X), sorted(Y), sorted(Z)))
            for X, Y, Z in cc.EXAMPLE_DAG_INDEPENDENCIES
        ]
    art.append(io.write_json(out / "markov.json", head))
    return head


RUNNERS: dict[str, Callable[[ScenarioConfig, Path, list], dict]] = {
    "trace": _run_trace, "sdc": _run_sdc, "bell": _run_bell, "chsh": _run_chsh,
    "ewf": _run_ewf, "mz": _run_mz, "ccm": _run_ccm,
}


def run(cfg: ScenarioConfig) -> RunReport:
    """Execute one scenario, write its artifacts and ``report.json``."""
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    art: list = []
    headline = RUNNERS[cfg.scenario](cfg, out, art)
    names = sorted({Path(a).name for a in art})
    report = RunReport(cfg.echo(), time.perf_counter() - t0, names, headline)
    missing = [n for n in names if not (out / n).exists()]
    if missing:
        raise RuntimeError(f"artifacts missing after run: {missing}")
    io.write_json(out / "report.json", report.to_dict())
    return report


def _run_one(cfg: ScenarioConfig) -> dict:
    return run(cfg).to_dict()


def _threads() -> int:
    raw = os.environ.get("ENDQT_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigError("ENDQT_THREADS", f"must be a positive integer, got {raw!r}")
    return n


def run_batch(cfg: ScenarioConfig, n: int) -> dict:
    """Independent seeds ``seed, seed+1, ...`` in parallel, one subdirectory each."""
    base = 0 if cfg.seed is None else cfg.seed
    if base + n - 1 > SEED_MAX:
        raise ConfigError("batch_seeds", "seed range overflows 64 bits")
    jobs = [ScenarioConfig(cfg.scenario, cfg.parameters, base + i, cfg.output_dir / f"seed_{base + i}")
            for i in range(n)]
    workers = min(_threads(), n)
    if workers == 1:
        reports = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_one, jobs))
    summary = {"scenario": cfg.scenario, "seeds": [j.seed for j in jobs],
               "runs": [{"seed": j.seed, "dir": j.output_dir.name, "headline": r["headline"]}
                        for j, r in zip(jobs, reports)]}
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    io.write_json(cfg.output_dir / "batch_report.json", summary)
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="endqt", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="scenario", required=True, metavar="scenario")
    for name, schema in SCENARIOS.items():
        sp = sub.add_parser(name, help=f"run the {name} scenario")
        sp.add_argument("--config", type=Path, help="JSON config file")
        sp.add_argument("--seed", type=int, help="64-bit seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--batch-seeds", type=int, metavar="N", help="run N consecutive seeds in parallel")
        for pname, spec in schema.items():
            flag = "--" + pname.replace("_", "-")
            if spec.kind == "bool":
                sp.add_argument(flag, dest=pname, action=argparse.BooleanOptionalAction, default=None,
                                help=spec.help)
            else:
                sp.add_argument(flag, dest=pname, default=None, help=spec.help or None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    scenario = args.scenario
    overrides = {k: getattr(args, k) for k in SCENARIOS[scenario]}
    try:
        doc = None
        if args.config is not None:
            try:
                doc = json.loads(args.config.read_text())
            except OSError as e:
                raise ConfigError("config", f"cannot read {args.config}: {e.strerror}") from None
            except json.JSONDecodeError as e:
                raise ConfigError("config", f"line {e.lineno}: {e.msg}") from None
            if not isinstance(doc, dict):
                raise ConfigError("config", "top level must be an object")
        cfg = load_config(scenario, doc, overrides, args.seed, args.out)
        if args.batch_seeds is not None:
            if args.batch_seeds < 1:
                raise ConfigError("batch_seeds", "must be >= 1")
            result = run_batch(cfg, args.batch_seeds)
        else:
            result = run(cfg).to_dict()
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    print(json.dumps(io._clean(result.get("headline", result)), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
