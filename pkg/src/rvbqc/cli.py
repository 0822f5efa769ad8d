"""Command-line front end: ``rvbqc run | sweep | optimize``.

Configuration is an INI file with optional sections ``[fixed]``, ``[tunable]``,
``[run]``, ``[graph]``, ``[sweep]`` and ``[optimize]``; anything left out takes
its default. Exit codes: 0 success, 2 configuration, 3 simulation, 4 I/O.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import __version__, qcore
from .analysis import (MODEL_DECISIONS, SWEEP_RANGES, ErrorEstimate, SimulationSetup, SweepBudget,
                       ThresholdConfig, estimate_error, find_min_requirement, resolve_workers)
from .devices import calibrate_waveplate_sigma
from .optimizer import GAConfig, optimize
from .params import TUNABLE_NAMES, FixedParams, TunableParams
from .protocol import LINE5, GraphSpec, RoundOptions

EXIT_OK, EXIT_CONFIG, EXIT_SIMULATION, EXIT_IO = 0, 2, 3, 4
MODES = ("run", "sweep", "optimize")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSettings:
    param: str = "entangling_gate_fidelity"
    coarse_points: int = 10
    coarse_rounds: int = 2000
    fine_rounds: int = 70000
    max_halvings: int = 12
    synthetic: bool = False  # replace the simulator by rate(x) = x

    def budget(self) -> SweepBudget:
        return SweepBudget(self.coarse_points, self.coarse_rounds, self.fine_rounds, self.max_halvings)


@dataclass(frozen=True)
class RunConfig:
    mode: str = "run"
    fixed: FixedParams = field(default_factory=FixedParams)
    tunable: TunableParams = field(default_factory=TunableParams)
    graph: GraphSpec = LINE5
    options: RoundOptions = field(default_factory=RoundOptions)
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    ga: GAConfig = field(default_factory=GAConfig)
    rounds: int = 20000
    seed: int = 0
    workers: int | None = None
    out: str = "rvbqc-out"

    def to_dict(self, execution: bool = False) -> dict:
        """Resolved settings; worker count and output path only with ``execution``
        since they do not change any result."""
        d = {
            "mode": self.mode, "rounds": self.rounds, "seed": self.seed,
            "fixed": self.fixed.to_dict(), "tunable": self.tunable.to_dict(),
            "graph": {"nodes": list(self.graph.nodes), "edges": [list(e) for e in self.graph.edges]},
            "options": dataclasses.asdict(self.options), "threshold": dataclasses.asdict(self.threshold),
            "sweep": dataclasses.asdict(self.sweep), "optimize": _ga_dict(self.ga),
        }
        if execution:
            d.update(workers=self.workers, out=self.out)
        return d


def _ga_dict(ga: GAConfig) -> dict:
    d = dataclasses.asdict(ga)
    d["grid"] = list(ga.grid)
    return d


# --- INI parsing --------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_float(text: str) -> float:
    v = float(text)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _parse_grid(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _parse_edges(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for tok in text.replace(",", " ").split():
        a, b = tok.split("-")
        out.append((int(a), int(b)))
    return tuple(out)


def _field_parser(cls, name):
    typ = {f.name: f.type for f in fields(cls)}[name]
    if "bool" in str(typ):
        return _parse_bool
    if "int" in str(typ) and "float" not in str(typ) and "tuple" not in str(typ):
        return int
    if name == "grid":
        return _parse_grid
    if "str" in str(typ):
        return str
    return _parse_float


def _section_values(cp, section, cls, skip=()) -> dict:
    if not cp.has_section(section):
        return {}
    known = {f.name for f in fields(cls)} - set(skip)
    out = {}
    for key, raw in cp.items(section):
        if key not in known:
            raise ConfigError(f"[{section}] {key}: unknown key (expected one of {', '.join(sorted(known))})")
        try:
            out[key] = _field_parser(cls, key)(raw)
        except ValueError as e:
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}: {e}") from None
    return out


def _build(section, cls, values):
    try:
        return cls(**values)
    except ValueError as e:
        raise ConfigError(f"[{section}] {e}") from None


RUN_KEYS = ("mode", "rounds", "seed", "workers", "out", "k", "p", "fast_forward", "shared_rate",
            "strict_trap_check", "max_wall_time")


def parse_config_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    for s in cp.sections():
        if s not in ("fixed", "tunable", "run", "graph", "sweep", "optimize"):
            raise ConfigError(f"[{s}]: unknown section")
    fixed = _build("fixed", FixedParams, _section_values(cp, "fixed", FixedParams))
    tunable = _build("tunable", TunableParams, _section_values(cp, "tunable", TunableParams))
    sweep = _build("sweep", SweepSettings, _section_values(cp, "sweep", SweepSettings))
    if sweep.param not in SWEEP_RANGES:
        raise ConfigError(f"[sweep] param: expected one of {', '.join(TUNABLE_NAMES)}, got {sweep.param!r}")
    ga = _build("optimize", GAConfig, _section_values(cp, "optimize", GAConfig))

    graph = LINE5
    if cp.has_section("graph"):
        g = dict(cp.items("graph"))
        extra = set(g) - {"nodes", "edges"}
        if extra:
            raise ConfigError(f"[graph] {sorted(extra)[0]}: unknown key (expected nodes, edges)")
        try:
            n = int(g.get("nodes", 5))
            edges = _parse_edges(g["edges"]) if "edges" in g else tuple((i, i + 1) for i in range(n - 1))
            graph = GraphSpec(tuple(range(n)), edges)
        except (ValueError, KeyError) as e:
            raise ConfigError(f"[graph] {e}") from None
        if not 1 <= n <= 6:
            raise ConfigError("[graph] nodes: expected 1..6 qubits")

    run = dict(cp.items("run")) if cp.has_section("run") else {}
    for key in run:
        if key not in RUN_KEYS:
            raise ConfigError(f"[run] {key}: unknown key (expected one of {', '.join(RUN_KEYS)})")
    try:
        mode = run.get("mode", "run")
        if mode not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}")
        rounds = int(run.get("rounds", 20000))
        seed = int(run.get("seed", 0))
        workers = int(run["workers"]) if run.get("workers", "").strip() not in ("", "auto") else None
        if rounds < 1 or seed < 0 or (workers is not None and workers < 1):
            raise ValueError("rounds and workers must be positive, seed non-negative")
        thr = ThresholdConfig(int(run.get("k", 2)), _parse_float(run.get("p", "0")))
        options = RoundOptions(
            fast_forward=_parse_bool(run.get("fast_forward", "true")),
            shared_rate=_parse_bool(run.get("shared_rate", "false")),
            strict_trap_check=_parse_bool(run.get("strict_trap_check", "false")),
            max_wall_time=_parse_float(run.get("max_wall_time", str(RoundOptions().max_wall_time))),
        )
    except ValueError as e:
        raise ConfigError(f"[run] {e}") from None
    return RunConfig(mode, fixed, tunable, graph, options, thr, sweep, ga, rounds, seed, workers,
                     run.get("out", "rvbqc-out"))


def parse_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config_text(text)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return " ".join(str(x) for x in v)
    return str(v)


def emit_config(cfg: RunConfig) -> str:
    """INI text that :func:`parse_config_text` maps back to ``cfg``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp["run"] = {
        "mode": cfg.mode, "rounds": str(cfg.rounds), "seed": str(cfg.seed),
        "workers": "auto" if cfg.workers is None else str(cfg.workers), "out": cfg.out,
        "k": str(cfg.threshold.k), "p": repr(float(cfg.threshold.p)),
        "fast_forward": _fmt(cfg.options.fast_forward), "shared_rate": _fmt(cfg.options.shared_rate),
        "strict_trap_check": _fmt(cfg.options.strict_trap_check),
        "max_wall_time": repr(float(cfg.options.max_wall_time)),
    }
    cp["fixed"] = {k: _fmt(float(v)) for k, v in cfg.fixed.to_dict().items()}
    cp["tunable"] = {k: _fmt(float(v)) for k, v in cfg.tunable.to_dict().items()}
    cp["graph"] = {"nodes": str(len(cfg.graph.nodes)), "edges": " ".join(f"{a}-{b}" for a, b in cfg.graph.edges)}
    cp["sweep"] = {k: _fmt(v) for k, v in dataclasses.asdict(cfg.sweep).items()}
    cp["optimize"] = {f.name: _fmt(getattr(cfg.ga, f.name)) for f in fields(GAConfig)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# --- outputs ------------------------------------------------------------------

def _clean(o):
    """Replace infinities by strings so the JSON stays standard."""
    if isinstance(o, float) and not math.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def provenance(cfg: RunConfig) -> dict:
    return {"version": __version__, "seed": cfg.seed, "config": cfg.to_dict()}


def write_csv(path: Path, cfg: RunConfig, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(_clean(provenance(cfg)), sort_keys=True) + "\n")
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _clean(r.get(k)) for k in header})


def _out_dir(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_run(cfg: RunConfig, stdout=None) -> dict:
    stdout = stdout or sys.stdout
    out = _out_dir(cfg)
    setup = SimulationSetup(cfg.tunable, cfg.fixed, cfg.graph, cfg.options)
    tpath = out / "transcript.jsonl"
    with open(tpath, "w") as fh:
        fh.write(json.dumps({"type": "header", **_clean(provenance(cfg))}, sort_keys=True) + "\n")

        def write(rec):
            fh.write(json.dumps({"type": "round", **_clean(rec.to_dict())}, sort_keys=True) + "\n")
        est = estimate_error(setup, cfg.rounds, cfg.seed, cfg.workers, on_record=write)
    report = {**provenance(cfg), "estimate": est.to_dict(), "threshold": cfg.threshold.threshold,
              "below_threshold": est.rate <= cfg.threshold.threshold, "model_decisions": list(MODEL_DECISIONS),
              "waveplate_sigma": calibrate_waveplate_sigma(cfg.fixed.waveplate_error_prob),
              "cz_single_qubit_gates": qcore.CZ_SINGLE_QUBIT_GATES}
    (out / "report.json").write_text(dumps(report))
    print(f"failure rate {est.rate:.4f} +/- {est.ci_half_width:.4f} ({est.w}/{est.t} rounds, "
          f"{est.aborted} aborted)", file=stdout)
    return report


def cmd_sweep(cfg: RunConfig, stdout=None) -> dict:
    stdout = stdout or sys.stdout
    out = _out_dir(cfg)
    s = cfg.sweep
    if s.synthetic:
        import numpy as np

        def synthetic(x, t):
            return ErrorEstimate(int(round(min(max(x, 0.0), 1.0) * t)), t)
        res = find_min_requirement(s.param, synthetic, cfg.threshold, s.budget(),
                                   grid=np.linspace(0.0, 1.0, s.coarse_points))
        res.param = "synthetic"
    else:
        res = find_min_requirement(s.param, None, cfg.threshold, s.budget(), cfg.seed, cfg.workers, cfg.fixed)
    write_csv(out / "sweep.csv", cfg, ["value", "stage", "w", "t", "rate", "ci_half_width", "aborted"],
              [p.to_dict() for p in res.probes])
    report = {**provenance(cfg), "result": res.to_dict()}
    (out / "sweep.json").write_text(dumps(report))
    if res.found:
        print(f"{res.param}: minimal value {res.value:.6g} +/- {res.uncertainty:.2g} "
              f"({res.trials_used} rounds)", file=stdout)
    else:
        print(f"{res.param}: no threshold crossing in the probed range ({res.trials_used} rounds)", file=stdout)
    return report


def cmd_optimize(cfg: RunConfig, stdout=None) -> dict:
    stdout = stdout or sys.stdout
    out = _out_dir(cfg)
    b = cfg.tunable
    res = optimize(cfg.ga, cfg.seed, b=b, fixed=cfg.fixed, tcfg=cfg.threshold, workers=cfg.workers)
    header = ["generation", "member", *TUNABLE_NAMES, "rate", "ci_half_width", "hardware_cost", "cost"]
    rows = [{"generation": g, "member": i, **s.row()} for g, gen in enumerate(res.ga.generations)
            for i, s in enumerate(gen)]
    write_csv(out / "generations.csv", cfg, header, rows)
    final = res.params
    table = [{"parameter": n, "baseline": getattr(b, n), "improved": getattr(final, n),
              "improvement_factor": res.report.factors[n]} for n in TUNABLE_NAMES]
    report = {**provenance(cfg), "feasible": res.feasible, "parameters": table,
              "hardware_cost": res.report.hardware_cost, "total_cost": res.report.total,
              "rate": res.report.rate, "best_cost_trace": res.ga.best_trace,
              "local_search_steps": res.final.steps if res.final else 0,
              "violation": max(0.0, (res.report.rate or 0.0) - cfg.threshold.threshold),
              "ga_choices": {"selection": "cheapest parents", "crossover": "uniform per parameter",
                             "mutation": "resample uniformly in p_NI", "elitism": True}}
    if res.final is not None:
        report["estimate"] = res.final.estimate.to_dict()
    (out / "optimize.json").write_text(dumps(report))
    (out / "radar.json").write_text(dumps({**provenance(cfg), "axes": list(TUNABLE_NAMES),
                                           "improvement_factors": [res.report.factors[n] for n in TUNABLE_NAMES]}))
    state = "feasible" if res.feasible else "INFEASIBLE"
    print(f"{state}: H_c = {res.report.hardware_cost:.3f}, rate = {res.report.rate:.4f}", file=stdout)
    for row in table:
        print(f"  {row['parameter']:<26} {row['baseline']:>10.4g} -> {row['improved']:<10.4g} "
              f"k = {row['improvement_factor']:.3f}", file=stdout)
    return report


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "optimize": cmd_optimize}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rvbqc", description="Simulate verification test rounds over a lossy link.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in MODES:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--rounds", type=int)
        p.add_argument("--workers", type=int, help="process count (default: RVBQC_WORKERS or all cores)")
        p.add_argument("--out", help="output directory")
        if name == "sweep":
            p.add_argument("--param", choices=sorted(SWEEP_RANGES))
            p.add_argument("--synthetic", action="store_true", help="use rate(x) = x instead of the simulator")
    return ap


def resolve(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    changes = {"mode": args.command}
    for key in ("seed", "rounds", "workers", "out"):
        v = getattr(args, key, None)
        if v is not None:
            changes[key] = v
    if changes.get("rounds", 1) < 1 or changes.get("seed", 0) < 0 or changes.get("workers", 1) < 1:
        raise ConfigError("--rounds and --workers must be positive, --seed non-negative")
    if args.command == "sweep" and (args.param or args.synthetic):
        sweep = cfg.sweep
        if args.param:
            sweep = dataclasses.replace(sweep, param=args.param)
        if args.synthetic:
            sweep = dataclasses.replace(sweep, synthetic=True)
        changes["sweep"] = sweep
    cfg = dataclasses.replace(cfg, **changes)
    resolve_workers(cfg.workers)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](cfg)
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except Exception as e:  # noqa: BLE001 - anything else is a simulation failure
        print(f"simulation error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_SIMULATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
