from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rvbqc import protocol as P, qcore
from rvbqc.devices import TrappedIonServer
from rvbqc.params import FixedParams, TunableParams

from . import oracles as O

PERFECT = TunableParams.perfect()
IDEAL_OPTICS = FixedParams.perfect_optics()
LINE3 = P.GraphSpec((0, 1, 2), ((0, 1), (1, 2)))


def test_graph_validation():
    with pytest.raises(ValueError):
        P.GraphSpec((0, 1), ((0, 0),))
    with pytest.raises(ValueError):
        P.GraphSpec((1, 2), ())
    assert P.LINE5.neighbours(2) == [1, 3] and P.LINE5.is_line()
    with pytest.raises(NotImplementedError):
        P.trap_sets(P.GraphSpec((0, 1, 2), ((0, 1), (1, 2), (0, 2))))


def test_trap_sets_and_coloring_uniform():
    assert P.trap_sets() == ((1, 3), (0, 2, 4))
    rng = np.random.default_rng(0)
    n = 20_000
    odd = sum(P.choose_coloring(rng) == (1, 3) for _ in range(n))
    assert abs(odd / n - 0.5) < 3 * math.sqrt(0.25 / n)


@pytest.mark.parametrize("theta,m,r,expected", [
    (math.pi / 4, 0, 0, math.pi / 4),
    (math.pi / 4, 1, 0, 5 * math.pi / 4),
    (math.pi / 4, 1, 1, math.pi / 4),
    (7 * math.pi / 4, 0, 1, 3 * math.pi / 4),
])
def test_compute_delta_trap(theta, m, r, expected):
    assert P.compute_delta(P.TRAP, theta, m, r) == pytest.approx(expected)


def test_dummy_delta_uniform():
    rng = np.random.default_rng(1)
    ks = [round(P.compute_delta(P.DUMMY, None, None, None, rng) / P.EIGHTH) for _ in range(16_000)]
    counts = np.bincount(ks, minlength=8)
    assert len(counts) == 8
    assert stats.chisquare(counts).pvalue > 1e-3


@pytest.mark.parametrize("b,r,dummies,strict,ok", [
    (0, 0, [], False, True),
    (1, 0, [1], False, True),
    (1, 0, [1, 1], False, False),
    (0, 1, [0, 1], False, True),
    (1, 1, [0, 1], False, False),
    (1, 1, [1, 1], False, True),
    (1, 0, [1], True, False),
    (1, 1, [1], True, True),
])
def test_verify_trap_examples(b, r, dummies, strict, ok):
    assert P.verify_trap(b, r, dummies, strict) is ok


@pytest.mark.parametrize("theta_k", range(8))
def test_trap_identity_statevector_oracle(theta_k):
    theta = theta_k * math.pi / 4
    for m, r, ml, mr in itertools.product((0, 1), repeat=4):
        assert O.trap_line_outcome_prob(theta, m, r, ml, mr) == pytest.approx(1.0, abs=1e-12)


def _line3_trap_bit(theta, m, r, ml, mr, rng):
    srv = TrappedIonServer(PERFECT, IDEAL_OPTICS, num_slots=3)
    for v, psi in enumerate((O.ket(ml), O.plus(theta + m * math.pi), O.ket(mr))):
        srv.init_ion(v, srv.now, rng)
        srv.store(v, qcore.from_pure(psi), srv.now)
    P.form_graph(srv, LINE3)
    return srv.measure_ion(1, P.compute_delta(P.TRAP, theta, m, r), rng)


def test_trap_identity_through_server(rng):
    for k, m, r, ml, mr in itertools.product(range(8), (0, 1), (0, 1), (0, 1), (0, 1)):
        theta = k * math.pi / 4
        b = _line3_trap_bit(theta, m, r, ml, mr, rng)
        assert P.verify_trap(b, r, [ml, mr])
        if ml ^ mr:
            assert not P.verify_trap(b, r, [ml, mr], strict=True)


@pytest.mark.parametrize("edges", [((0, 1), (1, 2), (2, 3), (3, 4)), ((3, 4), (0, 1), (2, 3), (1, 2))])
def test_form_graph_is_linear_cluster(edges, rng):
    g = P.GraphSpec(tuple(range(5)), edges)
    srv = TrappedIonServer(PERFECT, IDEAL_OPTICS, num_slots=5)
    for v in range(5):
        srv.init_ion(v, srv.now, rng)
        srv.store(v, qcore.from_pure(O.plus(0)), srv.now)
    P.form_graph(srv, g)
    rho = srv.register.data
    for k in O.linear_cluster_stabilizers(5):
        assert np.trace(k @ rho).real == pytest.approx(1.0, abs=1e-10)


def test_noiseless_rounds_always_pass():
    rng = np.random.default_rng(4)
    for _ in range(100):
        rec = P.run_test_round(PERFECT, IDEAL_OPTICS, rng)
        assert rec.passed and not rec.aborted
        assert all(rec.qubits[v].b is not None for v in range(5))
        assert rec.cutoff_discards == 0


def test_noiseless_rounds_other_line_lengths():
    rng = np.random.default_rng(6)
    for n in (2, 3, 4, 6):
        g = P.GraphSpec(tuple(range(n)), tuple((i, i + 1) for i in range(n - 1)))
        for _ in range(10):
            assert P.run_test_round(PERFECT, IDEAL_OPTICS, rng, graph=g).passed


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_reverify_matches_pass_flag(seed, strict):
    rng = np.random.default_rng(seed)
    rec = P.run_test_round(TunableParams.baseline().replace(server_efficiency=0.5), FixedParams(), rng,
                           options=P.RoundOptions(strict_trap_check=strict))
    assert P.reverify(rec, strict=strict) == rec.passed
    for t in rec.traps:
        q = rec.qubits[t]
        assert q.d == P._parity(rec.qubits[u].m for u in P.LINE5.neighbours(t) if u not in rec.traps)


def test_transcript_delta_uniform_for_every_role():
    """The server-visible angles carry no trap/dummy signature."""
    rng = np.random.default_rng(7)
    deltas = {P.TRAP: [], P.DUMMY: []}
    for _ in range(600):
        rec = P.run_test_round(PERFECT, IDEAL_OPTICS, rng)
        for q in rec.qubits:
            deltas[q.role].append(round(q.delta / P.EIGHTH) % 8)
    for role, ks in deltas.items():
        counts = np.bincount(ks, minlength=8)
        assert stats.chisquare(counts).pvalue > 1e-3, role
    table = np.array([np.bincount(deltas[P.TRAP], minlength=8), np.bincount(deltas[P.DUMMY], minlength=8)])
    assert stats.chi2_contingency(table).pvalue > 1e-3


def test_infeasible_cutoff_aborts():
    tiny = PERFECT.replace(coherence_time=1.0)  # cutoff 500 us < five attempt cycles
    rec = P.run_test_round(tiny, IDEAL_OPTICS, np.random.default_rng(0))
    assert rec.aborted and not rec.passed and not P.reverify(rec)


def test_wall_time_cap_aborts():
    rec = P.run_test_round(TunableParams.baseline(), FixedParams(), np.random.default_rng(0),
                           options=P.RoundOptions(max_wall_time=1000.0))
    assert rec.aborted and not rec.passed


def test_cutoff_discards_happen_at_baseline():
    rng = np.random.default_rng(9)
    discards = [P.run_test_round(TunableParams.baseline(), FixedParams(), rng).cutoff_discards for _ in range(30)]
    assert sum(discards) > 0


def test_rsp_latency_mean():
    rng = np.random.default_rng(10)
    lat = P.rsp_latencies(TunableParams.baseline(), FixedParams(dark_count_prob=0.0), rng, 100_000)
    assert abs(lat.mean() / 1e3 - 37.8) / 37.8 < 0.02


def test_fast_forward_matches_faithful_attempt_statistics():
    tun = PERFECT.replace(server_efficiency=0.1325)
    fixed = FixedParams(dark_count_prob=0.0)
    p = P.TestRound(tun, fixed, np.random.default_rng(0)).p_herald
    out = {}
    for ff in (True, False):
        rng = np.random.default_rng(11)
        att = [P.run_test_round(tun, fixed, rng, options=P.RoundOptions(fast_forward=ff)).rsp_attempts
               for _ in range(300)]
        out[ff] = np.array(att) / 5
    sd = math.sqrt((1 - p) / p**2 / (300 * 5))
    for ff, per_node in out.items():
        assert abs(per_node.mean() - 1 / p) < 4 * sd, ff


def test_fast_forward_matches_faithful_failure_rate():
    tun = TunableParams.baseline().replace(server_efficiency=1.0, coherence_time=math.inf)
    rates = {}
    for ff in (True, False):
        rng = np.random.default_rng(12)
        rates[ff] = np.mean([not P.run_test_round(tun, FixedParams(), rng,
                                                  options=P.RoundOptions(fast_forward=ff)).passed
                             for _ in range(1500)])
    se = math.sqrt(2 * 0.25 / 1500)
    assert abs(rates[True] - rates[False]) < 4 * se


def _rate(tun, n, seed):
    rng = np.random.default_rng(seed)
    return np.mean([not P.run_test_round(tun, FixedParams(), rng).passed for _ in range(n)])


def test_failure_rate_monotone_in_gate_fidelity():
    base = TunableParams.perfect()
    lo = _rate(base.replace(entangling_gate_fidelity=0.9), 800, 13)
    hi = _rate(base.replace(entangling_gate_fidelity=0.98), 800, 13)
    assert lo > hi


def test_shared_rate_mode_runs():
    rng = np.random.default_rng(14)
    tun = PERFECT.replace(coherence_time=62.0, server_efficiency=1.0)
    recs = [P.run_test_round(tun, IDEAL_OPTICS, rng, options=P.RoundOptions(shared_rate=True)) for _ in range(50)]
    assert all(P.reverify(r) == r.passed for r in recs)


def test_record_serialises():
    rec = P.run_test_round(PERFECT, IDEAL_OPTICS, np.random.default_rng(0))
    d = rec.to_dict()
    assert d["traps"] == list(rec.traps) and len(d["qubits"]) == 5


# --- computation-round helpers ----------------------------------------------

def test_phi_prime():
    assert P.compute_phi_prime(0.3, 0, 0) == pytest.approx(0.3)
    assert P.compute_phi_prime(0.3, 1, 0) == pytest.approx(-0.3)
    assert P.compute_phi_prime(0.3, 1, 1) == pytest.approx(math.pi - 0.3)


def test_majority():
    assert P.majority_output([1, 1, 0]) == 1
    assert P.majority_output([1, 0]) is None
    assert P.majority_output([]) is None
    assert P.majority_output([[0, 1], [0, 1], [1, 1]]) == (0, 1)


def test_line_flow_dependencies():
    f = P.FlowSpec.line([0.1] * 5)
    assert f.x_dependencies(2) == {1}
    assert f.z_dependencies(2) == {0}
    assert f.x_dependencies(0) == set() and f.z_dependencies(0) == set()
    outcomes = {0: 1, 1: 1}
    assert f.signals(2, outcomes) == (1, 1)
    assert f.adapted_angle(2, outcomes) == pytest.approx(-0.1 + math.pi)


def test_line_flow_reproduces_deterministic_mbqc():
    """Feeding forward the signals makes the output of a 2-node line independent of the first outcome."""
    alpha = 0.7
    f = P.FlowSpec.line([alpha, 0.0], LINE3.__class__((0, 1), ((0, 1),)))
    psi = O.cz(0, 1, 2) @ np.kron(O.plus(0), O.plus(0))
    outs = []
    for s in (0, 1):
        bra = O.plus(alpha + s * math.pi).conj()
        out = np.kron(bra, np.eye(2)) @ psi
        out = out / np.linalg.norm(out)
        # X^s correction on the output node, driven by x_dependencies
        sx, _ = f.signals(1, {0: s})
        out = np.linalg.matrix_power(O.X, sx) @ out
        outs.append(out)
    assert abs(np.vdot(outs[0], outs[1])) == pytest.approx(1.0, abs=1e-12)
