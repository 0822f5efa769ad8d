from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rvbqc import analysis as A
from rvbqc.params import FixedParams, TunableParams

from . import oracles as O


def test_hoeffding_examples():
    assert A.hoeffding_half_width(70_000) == pytest.approx(0.00513, abs=1e-4)
    assert A.hoeffding_half_width(20_000) == pytest.approx(0.0096, abs=1e-4)
    with pytest.raises(ValueError):
        A.hoeffding_half_width(0)


@given(st.integers(1, 10**7))
def test_hoeffding_matches_oracle_and_shrinks(t):
    assert A.hoeffding_half_width(t) == pytest.approx(O.hoeffding(t), rel=1e-12)
    assert A.hoeffding_half_width(t + 1) < A.hoeffding_half_width(t)


def test_error_estimate():
    e = A.ErrorEstimate(17_500, 70_000)
    assert e.rate == 0.25
    assert e.upper - e.lower == pytest.approx(2 * A.hoeffding_half_width(70_000))
    with pytest.raises(ValueError):
        A.ErrorEstimate(5, 4)
    assert A.ErrorEstimate(3, 10, 1).to_dict()["aborted"] == 1


@pytest.mark.parametrize("k,p,expected", [(2, 0.0, 0.25), (3, 0.0, 1 / 6), (2, 0.25, 1 / 6)])
def test_threshold_examples(k, p, expected):
    assert A.threshold(A.ThresholdConfig(k, p)) == pytest.approx(expected, abs=1e-15)
    assert A.ThresholdConfig(2, 0.0).threshold == 0.25


@pytest.mark.parametrize("k,p", [(1, 0.0), (2, 0.5), (2, -0.1)])
def test_threshold_rejects(k, p):
    with pytest.raises(ValueError):
        A.ThresholdConfig(k, p)


@given(st.integers(2, 12), st.floats(0, 0.49))
def test_threshold_bounded_by_half_k(k, p):
    thr = A.threshold(A.ThresholdConfig(k, p))
    assert 0 < thr <= 1 / (2 * k) + 1e-15


def test_interpolate_examples():
    assert A.interpolate_crossing((0.9, 0.2), (0.8, 0.3), 0.25) == pytest.approx(0.85)
    assert A.interpolate_crossing((2.0, 0.1), (4.0, 0.4), 0.25) == pytest.approx(3.0)
    with pytest.raises(A.DegenerateBracket):
        A.interpolate_crossing((1.0, 0.2), (2.0, 0.2), 0.25)
    with pytest.raises(A.DegenerateBracket):
        A.interpolate_crossing((1.0, 0.1), (2.0, 0.2), 0.25)
    assert A.interpolate_crossing((1.0, 0.1), (2.0, 0.2), 0.25, extrapolate=True) == pytest.approx(2.5)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 1), st.floats(0.0, 1.0))
def test_interpolate_returns_point_on_line(x1, dx, slope, frac):
    if abs(dx) < 1e-3:
        return
    x2 = x1 + dx
    y1, y2 = 0.1, 0.1 + slope
    ystar = y1 + frac * (y2 - y1)
    x = A.interpolate_crossing((x1, y1), (x2, y2), ystar)
    assert min(x1, x2) - 1e-9 <= x <= max(x1, x2) + 1e-9
    assert y1 + (x - x1) * (y2 - y1) / (x2 - x1) == pytest.approx(ystar, abs=1e-9)


def test_sweep_grids():
    g = A.sweep_grid("entangling_gate_fidelity", 10)
    assert len(g) == 10 and g[0] == pytest.approx(0.999) and g[-1] == pytest.approx(0.5)
    assert np.all(np.diff(g) < 0)
    c = A.sweep_grid("coherence_time", 6)
    assert c[0] == pytest.approx(5000.0) and np.all(np.diff(c) < 0)


def synthetic(x_star, slope=0.8, seed=0):
    """Binomial draws from a linear rate crossing 0.25 at ``x_star`` (rate rises as x falls)."""
    rng = np.random.default_rng(seed)

    def evaluate(x, t):
        p = min(max(0.25 + slope * (x_star - x), 0.0), 1.0)
        return A.ErrorEstimate(int(rng.binomial(t, p)), t)
    return evaluate


@pytest.mark.parametrize("x_star", [0.93, 0.71])
@pytest.mark.parametrize("points", [6, 11])
@pytest.mark.parametrize("seed", range(4))
def test_find_crossing_recovers_synthetic(x_star, points, seed):
    grid = np.linspace(1.0, 0.5, points)
    res = A.find_crossing(synthetic(x_star, seed=seed), grid, budget=A.SweepBudget(points, 2000, 70_000, 12))
    assert res.found
    # the CI on the rate maps to about 0.005 / slope on x
    assert abs(res.value - x_star) < 3 * max(res.uncertainty, 1e-3)
    assert res.uncertainty < 0.02
    stages = {p.stage for p in res.probes}
    assert {"coarse", "bracket"} <= stages
    assert res.trials_used == sum(p.estimate.t for p in res.probes)


def test_find_crossing_not_found():
    grid = np.linspace(1.0, 0.5, 6)
    res = A.find_crossing(lambda x, t: A.ErrorEstimate(0, t), grid, budget=A.SweepBudget(6, 100, 1000, 3))
    assert not res.found and res.value is None
    assert res.to_dict()["found"] is False


def test_find_min_requirement_validates_param():
    with pytest.raises(ValueError):
        A.find_min_requirement("fiber_loss", evaluate=synthetic(0.9))


def test_find_min_requirement_with_injected_evaluator():
    res = A.find_min_requirement("sq_gate_fidelity", evaluate=synthetic(0.97, slope=5.0),
                                 budget=A.SweepBudget(10, 2000, 70_000, 12))
    assert res.found and abs(res.value - 0.97) < 0.01
    assert res.metadata["cz_single_qubit_gates"] == 7


def test_round_rng_is_positional():
    a = A.round_rng(5, 3).random(4)
    b = A.round_rng((5,), 3).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, A.round_rng(5, 4).random(4))
    with pytest.raises(ValueError):
        A.round_rng(-1, 0)


def test_perfect_params_give_zero_rate():
    tun, fx = A.perfect_except("server_efficiency", 1.0)
    assert tun == TunableParams.perfect() and fx.fiber_loss == 0.2 and fx.dark_count_prob == 0.0
    est = A.estimate_error(A.SimulationSetup(tun, fx), 200, seed=1, workers=1)
    assert est.w == 0 and est.aborted == 0


def test_estimate_independent_of_workers():
    setup = A.SimulationSetup(TunableParams.baseline().replace(server_efficiency=0.6))
    streams = {}
    for workers in (1, 2):
        recs = []
        est = A.estimate_error(setup, 24, seed=(3, 1), workers=workers, on_record=lambda r: recs.append(r.to_dict()))
        streams[workers] = (est, recs)
    assert streams[1] == streams[2]
    assert [r["seed"] for r in streams[1][1]] == [[3, 1, i] for i in range(24)]


def test_resolve_workers(monkeypatch):
    monkeypatch.setenv("RVBQC_WORKERS", "3")
    assert A.resolve_workers() == 3
    assert A.resolve_workers(1) == 1
    with pytest.raises(ValueError):
        A.resolve_workers(0)


def test_model_decisions_listed():
    assert len(A.MODEL_DECISIONS) >= 5
    assert any("CZ" in d for d in A.MODEL_DECISIONS)
