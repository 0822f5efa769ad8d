"""Hardware cost model, genetic algorithm and local search for minimal improvements.

Every tunable parameter is mapped to a probability of no imperfection p_NI in
(0, 1]; improving a parameter by a factor k means p_NI(x) = p_NI(b)^(1/k),
so k = ln p_NI(b) / ln p_NI(x).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analysis import ErrorEstimate, SimulationSetup, ThresholdConfig, estimate_error, threshold
from .params import FIDELITY_NAMES, TUNABLE_NAMES, FixedParams, TunableParams
from .protocol import LINE5, GraphSpec, RoundOptions

COHERENCE_TIMESCALE = 1.0  # ms; cancels out of every improvement factor


def p_no_imperfection(name: str, value: float, t: float = COHERENCE_TIMESCALE) -> float:
    if name == "server_efficiency":
        if not 0 < value <= 1:
            raise ValueError("efficiency must lie in (0, 1]")
        return float(value)
    if name == "coherence_time":
        if not value > 0:
            raise ValueError("coherence time must be positive")
        return math.exp(-(t / value) ** 2)
    if name in FIDELITY_NAMES:
        if not 0.25 < value <= 1:
            raise ValueError(f"{name} must lie in (0.25, 1]")
        return (4 * value - 1) / 3
    raise ValueError(f"unknown parameter {name!r}")


def value_from_p(name: str, p: float, t: float = COHERENCE_TIMESCALE) -> float:
    """Inverse of :func:`p_no_imperfection`."""
    if not 0 < p <= 1:
        raise ValueError("p_NI must lie in (0, 1]")
    if name == "server_efficiency":
        return float(p)
    if name == "coherence_time":
        return math.inf if p == 1 else t / math.sqrt(-math.log(p))
    if name in FIDELITY_NAMES:
        return (3 * p + 1) / 4
    raise ValueError(f"unknown parameter {name!r}")


def improvement_factor(b: float, x: float, name: str) -> float:
    """ln p_NI(b) / ln p_NI(x); +inf for a perfect ``x``."""
    if name == "coherence_time":
        if x < b:
            raise ValueError(f"{name}={x} is worse than the baseline {b}")
        return math.inf if math.isinf(x) else (x / b) ** 2
    pb, px = p_no_imperfection(name, b), p_no_imperfection(name, x)
    if px < pb:
        raise ValueError(f"{name}={x} is worse than the baseline {b}")
    if px == 1.0:
        return math.inf
    if pb == px:
        return 1.0
    return math.log(pb) / math.log(px)


@dataclass(frozen=True)
class CostWeights:
    w1: float = 1e6
    w2: float = 1.0

    def __post_init__(self):
        if not self.w2 > 0 or self.w1 / self.w2 < 1e4:
            raise ValueError("need w2 > 0 and w1 / w2 >= 1e4")


@dataclass(frozen=True)
class CostReport:
    factors: dict
    hardware_cost: float
    constraint_term: float
    total: float
    rate: float | None = None

    def to_dict(self) -> dict:
        return {"factors": dict(self.factors), "hardware_cost": self.hardware_cost,
                "constraint_term": self.constraint_term, "total": self.total, "rate": self.rate}


def improvement_factors(x: TunableParams, b: TunableParams | None = None) -> dict:
    b = b or TunableParams.baseline()
    return {n: improvement_factor(getattr(b, n), getattr(x, n), n) for n in TUNABLE_NAMES}


def hardware_cost(x: TunableParams, b: TunableParams | None = None) -> float:
    """Sum of the five improvement factors; rejects a perfect parameter."""
    total = sum(improvement_factors(x, b).values())
    if math.isinf(total):
        raise ValueError("a perfect parameter has infinite hardware cost")
    return total


def constraint_term(rate: float, cfg: ThresholdConfig = ThresholdConfig(),
                    weights: CostWeights = CostWeights()) -> float:
    excess = rate - threshold(cfg)
    return weights.w1 * (1 + excess ** 2) if excess > 0 else 0.0


def total_cost(rate: float, x: TunableParams, b: TunableParams | None = None,
               cfg: ThresholdConfig = ThresholdConfig(), weights: CostWeights = CostWeights()) -> float:
    return constraint_term(rate, cfg, weights) + weights.w2 * hardware_cost(x, b)


def cost_report(rate: float, x: TunableParams, b: TunableParams | None = None,
                cfg: ThresholdConfig = ThresholdConfig(), weights: CostWeights = CostWeights()) -> CostReport:
    factors = improvement_factors(x, b)
    hc = sum(factors.values())
    ct = constraint_term(rate, cfg, weights)
    return CostReport(factors, hc, ct, ct + weights.w2 * hc, rate)


# --- genetic algorithm --------------------------------------------------------

@dataclass(frozen=True)
class GAConfig:
    grid: tuple[int, ...] = (3, 4, 2, 3, 2)  # draws per parameter, in TUNABLE_NAMES order
    parents: int = 8
    mutation_prob: float = 0.2
    generations: int = 20
    rounds_per_eval: int = 20000
    local_search_rounds: int = 70000
    coherence_cap: float = 1000.0  # ms
    step_fraction: float = 0.02
    verify_candidates: int = 5

    def __post_init__(self):
        if len(self.grid) != len(TUNABLE_NAMES) or min(self.grid) < 1:
            raise ValueError("grid needs one positive draw count per tunable parameter")
        if not 2 <= self.parents <= self.population:
            raise ValueError("need at least two parents and no more than the population")
        if not 0 <= self.mutation_prob <= 1:
            raise ValueError("mutation probability must lie in [0, 1]")
        if self.generations < 1 or self.rounds_per_eval < 1 or self.local_search_rounds < 1:
            raise ValueError("generations and round counts must be positive")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step fraction must lie in (0, 1)")

    @property
    def population(self) -> int:
        return math.prod(self.grid)


def p_bounds(name: str, b: TunableParams, cfg: GAConfig) -> tuple[float, float]:
    lo = p_no_imperfection(name, getattr(b, name))
    hi = p_no_imperfection(name, cfg.coherence_cap) if name == "coherence_time" else 1.0
    return lo, hi


def draw_value(name: str, b: TunableParams, cfg: GAConfig, rng: np.random.Generator) -> float:
    """Uniform in p_NI between the baseline and perfect (capped coherence)."""
    lo, hi = p_bounds(name, b, cfg)
    return value_from_p(name, rng.uniform(lo, hi))


def init_population(b: TunableParams, cfg: GAConfig, rng: np.random.Generator) -> list[TunableParams]:
    draws = [[draw_value(n, b, cfg, rng) for _ in range(k)] for n, k in zip(TUNABLE_NAMES, cfg.grid)]
    return [TunableParams.from_values(v) for v in itertools.product(*draws)]


Evaluator = Callable[[TunableParams], ErrorEstimate]


@dataclass
class Scored:
    params: TunableParams
    estimate: ErrorEstimate
    report: CostReport

    @property
    def cost(self) -> float:
        return self.report.total

    def row(self) -> dict:
        return {**self.params.to_dict(), "rate": self.estimate.rate, "ci_half_width": self.estimate.ci_half_width,
                "hardware_cost": self.report.hardware_cost, "cost": self.cost}


@dataclass
class GAResult:
    best: Scored
    generations: list[list[Scored]]
    best_trace: list[float]
    ranked: list[Scored] = field(default_factory=list)  # every distinct member seen, cheapest first


class CachedEvaluator:
    """Memoises an evaluator on the exact parameter values."""

    def __init__(self, evaluator: Evaluator):
        self.evaluator = evaluator
        self.cache: dict = {}

    def __call__(self, x: TunableParams) -> ErrorEstimate:
        key = x.values()
        if key not in self.cache:
            self.cache[key] = self.evaluator(x)
        return self.cache[key]


def _score(x, evaluate, b, tcfg, weights) -> Scored:
    est = evaluate(x)
    return Scored(x, est, cost_report(est.rate, x, b, tcfg, weights))


def evolve(population: list[TunableParams], cfg: GAConfig, evaluator: Evaluator, rng: np.random.Generator,
           b: TunableParams | None = None, tcfg: ThresholdConfig = ThresholdConfig(),
           weights: CostWeights = CostWeights()) -> GAResult:
    """Truncation selection of the cheapest parents, uniform crossover, resampling mutation, elitism."""
    b = b or TunableParams.baseline()
    evaluate = evaluator if isinstance(evaluator, CachedEvaluator) else CachedEvaluator(evaluator)
    seen: dict = {}
    history, trace = [], []
    pop = list(population)
    best = None
    for gen in range(cfg.generations):
        scored = [_score(x, evaluate, b, tcfg, weights) for x in pop]
        for s in scored:
            seen[s.params.values()] = s
        history.append(scored)
        ranked = sorted(scored, key=lambda s: s.cost)
        if best is None or ranked[0].cost < best.cost:
            best = ranked[0]
        trace.append(best.cost)
        if gen == cfg.generations - 1:
            break
        parents = ranked[:cfg.parents]
        children = [best.params]
        while len(children) < len(pop):
            i, j = rng.choice(len(parents), size=2, replace=False)
            pa, pb = parents[i].params.values(), parents[j].params.values()
            genes = []
            for k, name in enumerate(TUNABLE_NAMES):
                g = pa[k] if rng.random() < 0.5 else pb[k]
                if rng.random() < cfg.mutation_prob:
                    g = draw_value(name, b, cfg, rng)
                genes.append(g)
            children.append(TunableParams.from_values(genes))
        pop = children
    ranked_all = sorted(seen.values(), key=lambda s: s.cost)
    return GAResult(best, history, trace, ranked_all)


# --- local search -------------------------------------------------------------

class ConstraintViolation(ValueError):
    pass


@dataclass
class LocalSearchResult:
    params: TunableParams
    estimate: ErrorEstimate
    steps: int
    history: list[Scored]


def local_search(x0: TunableParams, evaluator: Evaluator, b: TunableParams | None = None,
                 tcfg: ThresholdConfig = ThresholdConfig(), weights: CostWeights = CostWeights(),
                 step_fraction: float = 0.02, max_sweeps: int = 1000) -> LocalSearchResult:
    """Walk each parameter toward the baseline in ln p_NI steps while the constraint holds.

    Step i is ``step_fraction`` of the initial gap ln p_NI(x0_i) - ln p_NI(b_i).
    A parameter whose step breaks the constraint, or that reaches the baseline,
    is frozen; the search ends when every parameter is frozen.
    """
    b = b or TunableParams.baseline()
    thr = threshold(tcfg)
    est = evaluator(x0)
    if est.rate > thr:
        raise ConstraintViolation(f"start point fails the constraint (rate {est.rate:.4f} > {thr})")
    logp = {n: math.log(p_no_imperfection(n, getattr(x0, n))) for n in TUNABLE_NAMES}
    logb = {n: math.log(p_no_imperfection(n, getattr(b, n))) for n in TUNABLE_NAMES}
    steps = {n: step_fraction * (logp[n] - logb[n]) for n in TUNABLE_NAMES}
    active = [n for n in TUNABLE_NAMES if steps[n] > 0]
    x, history, taken = x0, [_score(x0, lambda _: est, b, tcfg, weights)], 0
    for _ in range(max_sweeps):
        if not active:
            break
        for n in list(active):
            target = logp[n] - steps[n]
            at_base = target <= logb[n] + 1e-12 * abs(logb[n])
            value = getattr(b, n) if at_base else value_from_p(n, math.exp(target))
            cand = x.replace(**{n: value})
            cest = evaluator(cand)
            history.append(_score(cand, lambda _: cest, b, tcfg, weights))
            if cest.rate <= thr:
                x, est, taken = cand, cest, taken + 1
                logp[n] = logb[n] if at_base else target
                if at_base:
                    active.remove(n)
            else:
                active.remove(n)
    return LocalSearchResult(x, est, taken, history)


# --- full pipeline ------------------------------------------------------------

def simulation_evaluator(fixed: FixedParams, rounds: int, seed=0, workers: int | None = None,
                         graph: GraphSpec = LINE5, options: RoundOptions = RoundOptions()) -> CachedEvaluator:
    """Failure estimate from ``rounds`` rounds; one seed for all candidates (common random numbers)."""
    def evaluate(x: TunableParams) -> ErrorEstimate:
        return estimate_error(SimulationSetup(x, fixed, graph, options), rounds, seed, workers)
    return CachedEvaluator(evaluate)


@dataclass
class OptimizationResult:
    ga: GAResult
    start: Scored | None  # first GA candidate confirmed at local-search precision
    final: LocalSearchResult | None
    feasible: bool
    report: CostReport

    @property
    def params(self) -> TunableParams:
        if self.final is not None:
            return self.final.params
        return self.ga.best.params


def optimize(cfg: GAConfig = GAConfig(), seed: int = 0, ga_evaluator: Evaluator | None = None,
             ls_evaluator: Evaluator | None = None, b: TunableParams | None = None,
             fixed: FixedParams | None = None, tcfg: ThresholdConfig = ThresholdConfig(),
             weights: CostWeights = CostWeights(), workers: int | None = None) -> OptimizationResult:
    """GA at ``rounds_per_eval``, then local search at ``local_search_rounds`` from the
    cheapest candidate that stays feasible at the higher precision."""
    b = b or TunableParams.baseline()
    fixed = fixed or FixedParams()
    rng = np.random.default_rng([seed, 0])
    ga_eval = ga_evaluator or simulation_evaluator(fixed, cfg.rounds_per_eval, (seed, 1), workers)
    ls_eval = ls_evaluator or simulation_evaluator(fixed, cfg.local_search_rounds, (seed, 2), workers)
    ls_eval = ls_eval if isinstance(ls_eval, CachedEvaluator) else CachedEvaluator(ls_eval)
    ga = evolve(init_population(b, cfg, rng), cfg, ga_eval, rng, b, tcfg, weights)
    thr = threshold(tcfg)
    start = None
    for cand in ga.ranked[:cfg.verify_candidates]:
        if cand.report.constraint_term > 0:
            break
        s = _score(cand.params, ls_eval, b, tcfg, weights)
        if s.estimate.rate <= thr:
            start = s
            break
    if start is None:
        best = ga.best
        return OptimizationResult(ga, None, None, False, best.report)
    final = local_search(start.params, ls_eval, b, tcfg, weights, cfg.step_fraction)
    report = cost_report(final.estimate.rate, final.params, b, tcfg, weights)
    return OptimizationResult(ga, start, final, True, report)
