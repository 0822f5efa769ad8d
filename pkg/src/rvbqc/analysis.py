"""Error-probability estimation and the per-parameter minimal-requirement search."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import qcore
from .devices import calibrate_waveplate_sigma
from .params import FixedParams, TunableParams
from .protocol import LINE5, GraphSpec, RoundOptions, RoundRecord, run_test_round

CONFIDENCE = 0.95


def hoeffding_half_width(t: int, confidence: float = CONFIDENCE) -> float:
    """Two-sided Hoeffding half-width for a mean of ``t`` Bernoulli trials."""
    if t < 1:
        raise ValueError("need at least one trial")
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * t))


@dataclass(frozen=True)
class ErrorEstimate:
    w: int
    t: int
    aborted: int = 0  # rounds abandoned at the wall-clock cap, counted in w

    def __post_init__(self):
        if not 0 <= self.w <= self.t or self.t < 1:
            raise ValueError(f"need 0 <= w <= t and t >= 1, got w={self.w}, t={self.t}")

    @property
    def rate(self) -> float:
        return self.w / self.t

    @property
    def ci_half_width(self) -> float:
        return hoeffding_half_width(self.t)

    @property
    def lower(self) -> float:
        return self.rate - self.ci_half_width

    @property
    def upper(self) -> float:
        return self.rate + self.ci_half_width

    def to_dict(self) -> dict:
        return {"w": self.w, "t": self.t, "rate": self.rate, "ci_half_width": self.ci_half_width,
                "aborted": self.aborted}


@dataclass(frozen=True)
class ThresholdConfig:
    k: int = 2  # colouring number
    p: float = 0.0  # inherent error probability of the computation

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("colouring number k must be at least 2")
        if not 0.0 <= self.p < 0.5:
            raise ValueError("p must lie in [0, 0.5)")

    @property
    def threshold(self) -> float:
        return threshold(self)


def threshold(cfg: ThresholdConfig) -> float:
    """Largest tolerable fraction of failed test rounds, (1/k)(2p-1)/(2p-2)."""
    if not 0.0 <= cfg.p < 0.5:
        raise ValueError("p must lie in [0, 0.5)")
    return (2 * cfg.p - 1) / (2 * cfg.p - 2) / cfg.k


# --- Monte Carlo over rounds --------------------------------------------------

@dataclass(frozen=True)
class SimulationSetup:
    """Everything a worker needs to reproduce a block of rounds."""

    tunable: TunableParams
    fixed: FixedParams = field(default_factory=FixedParams)
    graph: GraphSpec = LINE5
    options: RoundOptions = field(default_factory=RoundOptions)


def _seed_key(seed) -> list[int]:
    key = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    if not all(isinstance(s, (int, np.integer)) and s >= 0 for s in key):
        raise ValueError(f"seed must be a non-negative integer or tuple of them, got {seed!r}")
    return [int(s) for s in key]


def round_rng(seed, index: int) -> np.random.Generator:
    """Independent stream for round ``index``; depends on nothing else."""
    return np.random.default_rng(_seed_key(seed) + [int(index)])


def simulate_block(setup: SimulationSetup, seed, start: int, stop: int,
                   keep_records: bool = False) -> tuple[int, int, list[RoundRecord] | None]:
    w = aborted = 0
    records = [] if keep_records else None
    for i in range(start, stop):
        rec = run_test_round(setup.tunable, setup.fixed, round_rng(seed, i), setup.graph, setup.options)
        rec.seed = _seed_key(seed) + [i]
        w += not rec.passed
        aborted += rec.aborted
        if keep_records:
            records.append(rec)
    return w, aborted, records


def _warm_worker(sigma_for: float) -> None:
    calibrate_waveplate_sigma(sigma_for)


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get("RVBQC_WORKERS")
        workers = int(env) if env else (os.cpu_count() or 1)
    if workers < 1:
        raise ValueError("worker count must be positive")
    return workers


def estimate_error(setup: SimulationSetup | TunableParams, t: int, seed=0, workers: int | None = None,
                   on_record: Callable[[RoundRecord], None] | None = None) -> ErrorEstimate:
    """Run rounds 0..t-1 and count failures.

    Round i always uses ``round_rng(seed, i)``, so the result (and the record
    stream passed to ``on_record``, which arrives in round order) does not
    depend on ``workers``.
    """
    if t < 1:
        raise ValueError("need at least one trial")
    if isinstance(setup, TunableParams):
        setup = SimulationSetup(setup)
    workers = min(resolve_workers(workers), t)
    keep = on_record is not None
    if workers == 1:
        blocks = [simulate_block(setup, seed, 0, t, keep)]
    else:
        edges = np.linspace(0, t, workers * 4 + 1).astype(int)
        spans = [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        with ProcessPoolExecutor(workers, initializer=_warm_worker,
                                 initargs=(setup.fixed.waveplate_error_prob,)) as pool:
            futs = [pool.submit(simulate_block, setup, seed, a, b, keep) for a, b in spans]
            blocks = [f.result() for f in futs]
    w = aborted = 0
    for bw, ba, recs in blocks:
        w += bw
        aborted += ba
        if keep:
            for r in recs:
                on_record(r)
    return ErrorEstimate(w, t, aborted)


# --- requirement search -------------------------------------------------------

class DegenerateBracket(ValueError):
    pass


def interpolate_crossing(p1: tuple[float, float], p2: tuple[float, float], y_star: float,
                         extrapolate: bool = False) -> float:
    """x where the line through ``p1`` and ``p2`` reaches ``y_star``."""
    (x1, y1), (x2, y2) = p1, p2
    if y1 == y2:
        raise DegenerateBracket("bracket endpoints have equal rates")
    if not extrapolate and not min(y1, y2) <= y_star <= max(y1, y2):
        raise DegenerateBracket(f"{y_star} is not between {y1} and {y2}")
    return x1 + (y_star - y1) * (x2 - x1) / (y2 - y1)


@dataclass(frozen=True)
class SweepBudget:
    coarse_points: int = 10
    coarse_rounds: int = 2000
    fine_rounds: int = 70000
    max_halvings: int = 12


@dataclass
class Probe:
    value: float
    estimate: ErrorEstimate
    stage: str

    def to_dict(self) -> dict:
        return {"value": self.value, "stage": self.stage, **self.estimate.to_dict()}


@dataclass
class RequirementResult:
    param: str
    found: bool
    value: float | None
    uncertainty: float | None
    probes: list[Probe]
    metadata: dict = field(default_factory=dict)

    @property
    def trials_used(self) -> int:
        return sum(p.estimate.t for p in self.probes)

    def to_dict(self) -> dict:
        return {"param": self.param, "found": self.found, "min_value": self.value,
                "uncertainty": self.uncertainty, "trials_used": self.trials_used, "metadata": self.metadata}


# Probe ranges, ordered from good hardware to bad.
SWEEP_RANGES = {
    "sq_gate_fidelity": (0.999, 0.5),
    "entangling_gate_fidelity": (0.999, 0.5),
    "emission_fidelity": (0.999, 0.5),
    "coherence_time": (5000.0, 5.0),
    "server_efficiency": (1.0, 1e-3),
}


def sweep_grid(param: str, points: int = 10) -> np.ndarray:
    """Coarse probe values, geometric in the distance from perfect, best first."""
    good, bad = SWEEP_RANGES[param]
    if param.endswith("fidelity"):
        return 1.0 - np.geomspace(1.0 - good, 1.0 - bad, points)
    return np.geomspace(good, bad, points)


def find_crossing(evaluate: Callable[[float, int], ErrorEstimate], grid: Sequence[float],
                  cfg: ThresholdConfig = ThresholdConfig(), budget: SweepBudget = SweepBudget(),
                  param: str = "x") -> RequirementResult:
    """Locate where the failure rate crosses the threshold along ``grid``.

    ``grid`` is ordered so the rate is expected to increase along it.
    ``evaluate(x, t)`` returns an :class:`ErrorEstimate` from ``t`` rounds.
    """
    thr = threshold(cfg)
    probes = [Probe(float(x), evaluate(float(x), budget.coarse_rounds), "coarse") for x in grid]
    meta = {"grid": [float(x) for x in grid], "budget": budget.__dict__, "threshold": thr}
    pair = next(((a, b) for a, b in zip(probes, probes[1:])
                 if a.estimate.rate <= thr < b.estimate.rate), None)
    if pair is None:
        return RequirementResult(param, False, None, None, probes, meta)

    lo = Probe(pair[0].value, evaluate(pair[0].value, budget.fine_rounds), "bracket")
    hi = Probe(pair[1].value, evaluate(pair[1].value, budget.fine_rounds), "bracket")
    probes += [lo, hi]
    # coarse noise can put the bracket one cell off; walk it outward at fine resolution
    i = probes.index(pair[0])
    while lo.estimate.rate > thr and i > 0:
        i -= 1
        hi, lo = lo, Probe(probes[i].value, evaluate(probes[i].value, budget.fine_rounds), "bracket")
        probes.append(lo)
    j = probes.index(pair[1])
    while hi.estimate.rate <= thr and j + 1 < len(grid):
        j += 1
        lo, hi = hi, Probe(probes[j].value, evaluate(probes[j].value, budget.fine_rounds), "bracket")
        probes.append(hi)
    for _ in range(budget.max_halvings):
        if lo.estimate.rate > thr or hi.estimate.rate <= thr:
            break  # the refined bracket no longer straddles the line
        mid_x = 0.5 * (lo.value + hi.value)
        mid = Probe(mid_x, evaluate(mid_x, budget.fine_rounds), "refine")
        probes.append(mid)
        if mid.estimate.rate <= thr:
            lo = mid
        else:
            hi = mid
        if mid.estimate.lower <= thr <= mid.estimate.upper:
            break

    # closest fine points on either side of the line
    fine = [p for p in probes if p.stage != "coarse"]
    below = [p for p in fine if p.estimate.rate <= thr]
    above = [p for p in fine if p.estimate.rate > thr]
    if not below or not above:
        meta["note"] = "fine evaluations did not straddle the threshold"
        below = below or [pair[0]]
        above = above or [pair[1]]
    a = min(below, key=lambda p: thr - p.estimate.rate)
    b = min(above, key=lambda p: p.estimate.rate - thr)
    ya, yb = a.estimate.rate, b.estimate.rate
    x = interpolate_crossing((a.value, ya), (b.value, yb), thr)
    edges = []
    for s in (-1, 1):
        try:
            edges.append(interpolate_crossing((a.value, ya + s * a.estimate.ci_half_width),
                                              (b.value, yb + s * b.estimate.ci_half_width), thr,
                                              extrapolate=True))
        except DegenerateBracket:
            pass
    unc = max((abs(e - x) for e in edges), default=abs(b.value - a.value))
    return RequirementResult(param, True, x, unc, probes, meta)


def perfect_except(param: str, value: float, fixed: FixedParams | None = None) -> tuple[TunableParams, FixedParams]:
    """All tunables perfect and client optics ideal, fibre loss kept, except ``param``."""
    fixed = fixed or FixedParams()
    opt = FixedParams.perfect_optics(channel_length=fixed.channel_length, fiber_loss=fixed.fiber_loss)
    return TunableParams.perfect().replace(**{param: value}), opt


def simulator_evaluator(param: str, seed=0, workers: int | None = None, fixed: FixedParams | None = None,
                        graph: GraphSpec = LINE5, options: RoundOptions = RoundOptions()):
    calls = [0]

    def evaluate(value: float, t: int) -> ErrorEstimate:
        tunable, fx = perfect_except(param, value, fixed)
        calls[0] += 1
        return estimate_error(SimulationSetup(tunable, fx, graph, options), t, (*_seed_key(seed), calls[0]),
                              workers)
    return evaluate


def find_min_requirement(param: str, evaluate=None, cfg: ThresholdConfig = ThresholdConfig(),
                         budget: SweepBudget = SweepBudget(), seed=0, workers: int | None = None,
                         fixed: FixedParams | None = None, grid: Sequence[float] | None = None) -> RequirementResult:
    """Smallest acceptable value of ``param`` with everything else perfect but fibre loss."""
    if param not in SWEEP_RANGES:
        raise ValueError(f"unknown parameter {param!r}")
    evaluate = evaluate or simulator_evaluator(param, seed, workers, fixed)
    grid = sweep_grid(param, budget.coarse_points) if grid is None else grid
    res = find_crossing(evaluate, grid, cfg, budget, param)
    res.metadata["cz_single_qubit_gates"] = qcore.CZ_SINGLE_QUBIT_GATES
    return res


# Modelling choices that move the baseline number; reported next to it.
MODEL_DECISIONS = (
    f"CZ compiled to {qcore.CZ_SINGLE_QUBIT_GATES} single-qubit rotations and one Rxx, executed serially",
    "gate, emission fidelity F mapped to depolarising weight q = (4F-1)/3 on the gate targets",
    "waveplate retardation and axis deviations Gaussian, sigma calibrated so the mean wrong-outcome "
    "probability equals the configured waveplate error probability",
    "double click is an invalid attempt and is retried; a lone dark click heralds with a random outcome",
    "one dephasing rate per ion, resampled at every initialisation",
    "trap check b = r xor d with d the parity of neighbouring dummy RSP outcomes",
    "cutoff at half the coherence time applied to stored ions during preparation only",
)
