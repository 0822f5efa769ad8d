"""Test rounds of the robust verifiable blind computation protocol.

A round: the client picks a trap colouring, remotely prepares every graph
node on the server by measuring the ion-entangled photon, the server
entangles the nodes with CZ gates, then measures each node at the angle the
client sends and returns the bit. Every trap must satisfy b = r XOR d, where
d is the parity of the RSP outcomes of its dummy neighbours.
"""
from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import qcore
from .devices import VALID, MeasurementClient, TrappedIonServer
from .params import FixedParams, TunableParams
from .simkernel import (CLASSICAL_MESSAGE, PHOTON_ARRIVAL, TIMER, ChannelSpec, EventQueue,
                        arrival_probability, one_way_delay, send_photon)

TRAP, DUMMY = "trap", "dummy"
EIGHTH = math.pi / 4


@dataclass(frozen=True)
class GraphSpec:
    nodes: tuple[int, ...] = (0, 1, 2, 3, 4)
    edges: tuple[tuple[int, int], ...] = ((0, 1), (1, 2), (2, 3), (3, 4))
    coloring: int = 2

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(v) for v in self.nodes))
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        if self.nodes != tuple(range(len(self.nodes))):
            raise ValueError("nodes must be labelled 0..n-1")
        for a, b in self.edges:
            if a == b or a not in self.nodes or b not in self.nodes:
                raise ValueError(f"edge ({a}, {b}) does not join two distinct nodes")

    def neighbours(self, v: int) -> list[int]:
        return sorted({b for a, b in self.edges if a == v} | {a for a, b in self.edges if b == v})

    def is_line(self) -> bool:
        n = len(self.nodes)
        return set(map(frozenset, self.edges)) == {frozenset((i, i + 1)) for i in range(n - 1)}


LINE5 = GraphSpec()


def trap_sets(graph: GraphSpec = LINE5) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if not graph.is_line() or len(graph.nodes) < 2:
        raise NotImplementedError("trap colourings are only implemented for line graphs")
    odd = tuple(v for v in graph.nodes if v % 2 == 1)
    even = tuple(v for v in graph.nodes if v % 2 == 0)
    return odd, even


def choose_coloring(rng: np.random.Generator, graph: GraphSpec = LINE5) -> tuple[int, ...]:
    """Uniformly pick the odd-position or the even-position nodes as traps."""
    return trap_sets(graph)[int(rng.integers(2))]


def angle(k: int) -> float:
    return (k % 8) * EIGHTH


def compute_delta(role: str, theta: float | None, m: int | None, r: int | None,
                  rng: np.random.Generator | None = None) -> float:
    """Measurement angle sent to the server; traps get (theta + m pi + r pi) mod 2 pi."""
    if role == TRAP:
        return (theta + (m + r) * math.pi) % (2 * math.pi)
    return angle(int(rng.integers(8)))


def verify_trap(b: int, r: int, dummy_neighbor_outcomes: Sequence[int], strict: bool = False) -> bool:
    """b == r XOR d with d the parity of the neighbouring dummies' RSP outcomes.

    ``strict=True`` checks b == r only, ignoring the dummy correction.
    """
    d = 0 if strict else _parity(dummy_neighbor_outcomes)
    return int(b) == (int(r) ^ d)


def _parity(bits) -> int:
    p = 0
    for x in bits:
        p ^= int(x)
    return p


# --- computation-round helpers ------------------------------------------------

def compute_phi_prime(phi: float, s_x: int, s_z: int) -> float:
    return (-1) ** int(s_x) * phi + int(s_z) * math.pi


def majority_output(outputs: Sequence) -> object | None:
    """The value occurring in more than half of ``outputs``, else None."""
    if not outputs:
        return None
    value, count = Counter(map(_hashable, outputs)).most_common(1)[0]
    return value if count > len(outputs) / 2 else None


def _hashable(x):
    return tuple(x) if isinstance(x, list) else x


@dataclass(frozen=True)
class FlowSpec:
    """Measurement angles and flow for an MBQC pattern; ``flow[v]`` is f(v)."""

    angles: tuple[float, ...]
    flow: dict
    graph: GraphSpec = LINE5

    @classmethod
    def line(cls, angles: Sequence[float], graph: GraphSpec = LINE5) -> "FlowSpec":
        n = len(graph.nodes)
        return cls(tuple(angles), {v: v + 1 for v in range(n - 1)}, graph)

    def x_dependencies(self, v: int) -> set[int]:
        return {l for l, fl in self.flow.items() if fl == v}

    def z_dependencies(self, v: int) -> set[int]:
        return {l for l, fl in self.flow.items() if l != v and v in self.graph.neighbours(fl)}

    def signals(self, v: int, outcomes: dict) -> tuple[int, int]:
        s_x = _parity(outcomes[l] for l in self.x_dependencies(v))
        s_z = _parity(outcomes[l] for l in self.z_dependencies(v))
        return s_x, s_z

    def adapted_angle(self, v: int, outcomes: dict) -> float:
        s_x, s_z = self.signals(v, outcomes)
        return compute_phi_prime(self.angles[v], s_x, s_z)


# --- round records ------------------------------------------------------------

@dataclass
class RoundQubitRecord:
    role: str
    theta: float | None = None
    m: int | None = None
    r: int | None = None
    delta: float | None = None
    b: int | None = None
    d: int | None = None

    def forget_preparation(self) -> None:
        self.theta = self.m = None


@dataclass
class RoundRecord:
    qubits: list[RoundQubitRecord]
    traps: tuple[int, ...]
    passed: bool = False
    aborted: bool = False
    rsp_attempts: int = 0
    cutoff_discards: int = 0
    wall_time: float = 0.0  # us
    seed: object = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["traps"] = list(self.traps)
        return d


def reverify(record: RoundRecord, graph: GraphSpec = LINE5, strict: bool = False) -> bool:
    """Recompute the pass flag from the transcript bits."""
    if record.aborted:
        return False
    for v in record.traps:
        q = record.qubits[v]
        dummies = [record.qubits[u].m for u in graph.neighbours(v) if u not in record.traps]
        if not verify_trap(q.b, q.r, dummies, strict):
            return False
    return True


@dataclass(frozen=True)
class RoundOptions:
    fast_forward: bool = True  # sample the number of failed RSP attempts instead of stepping them
    shared_rate: bool = False  # one dephasing rate for every ion in the trap
    strict_trap_check: bool = False
    max_wall_time: float = 120e6  # us of simulated time before a round is abandoned


class TestRound:
    """Event-driven simulation of one test round."""

    def __init__(self, tunable: TunableParams, fixed: FixedParams, rng: np.random.Generator,
                 graph: GraphSpec = LINE5, options: RoundOptions = RoundOptions()):
        self.tunable, self.fixed, self.graph, self.rng, self.options = tunable, fixed, graph, rng, options
        self.queue = EventQueue()
        self.channel = ChannelSpec(fixed.channel_length, fixed.fiber_loss)
        self.delay = one_way_delay(self.channel)
        n = len(graph.nodes)
        self.server = TrappedIonServer(tunable, fixed, num_slots=n, shared_rate=options.shared_rate, rng=rng)
        self.client = MeasurementClient(fixed)
        self.cutoff = tunable.coherence_time * 1e3 / 2
        self.attempt_time = (fixed.init_duration + fixed.emission_duration) * 1e-3 + 2 * self.delay
        real, fake = self.client.herald_split(arrival_probability(self.channel, tunable.server_efficiency))
        self.p_herald = real + fake
        self.p_real = real / self.p_herald if self.p_herald > 0 else 0.0
        self.pending: deque[int] = deque(graph.nodes)
        self.timers: dict = {}
        self.attempts = 0
        self.discards = 0
        self.finished = False

    def feasible(self) -> bool:
        """False when the cutoff is too short to ever hold every node at once."""
        return self.p_herald > 0 and self.cutoff >= len(self.graph.nodes) * self.attempt_time

    def run(self) -> RoundRecord:
        traps = choose_coloring(self.rng, self.graph)
        self.record = RoundRecord([RoundQubitRecord(TRAP if v in traps else DUMMY) for v in self.graph.nodes],
                                  traps)
        if not self.feasible():
            self.record.aborted = True
            return self.record
        # graph description (I, G) goes to the server first
        self.queue.schedule(self.delay, CLASSICAL_MESSAGE, lambda ev: self._next_attempt())
        self.queue.run_until_idle(until=self.options.max_wall_time)
        rec = self.record
        rec.rsp_attempts, rec.cutoff_discards = self.attempts, self.discards
        if not self.finished:
            rec.aborted = True
            rec.wall_time = self.queue.now
            return rec
        rec.passed = reverify(rec, self.graph, self.options.strict_trap_check)
        return rec

    # -- remote state preparation

    def _next_attempt(self) -> None:
        v = self.pending[0]
        k = int(self.rng.geometric(self.p_herald)) if self.options.fast_forward else 1
        self.attempts += k
        start = self.queue.now + (k - 1) * self.attempt_time
        self.queue.schedule_at(start, TIMER, self._attempt, v)

    def _attempt(self, ev) -> None:
        v = ev.payload
        self.server.init_ion(v, self.queue.now, self.rng)
        photon = self.server.emit_photon(v, self.rng)
        if self.options.fast_forward:
            delivered = photon if self.rng.random() < self.p_real else None
            self.queue.schedule_at(self.server.now + self.delay, PHOTON_ARRIVAL, self._on_photon,
                                   (v, delivered, photon))
        else:
            def depart(_ev):
                arrival = send_photon(self.queue, photon, self.channel, self.tunable.server_efficiency, self.rng,
                                      self._on_photon)
                arrival.payload = (v, arrival.payload, photon)
            self.queue.schedule_at(self.server.now, TIMER, depart)

    def _on_photon(self, ev) -> None:
        v, photon, emitted = ev.payload
        rec = self.record.qubits[v]
        basis = qcore.STANDARD
        theta = None
        if rec.role == TRAP:
            theta = angle(int(self.rng.integers(8)))
            basis = theta
        out = self.client.measure_photon(photon, basis, self.rng, heralded=self.options.fast_forward,
                                         emitted=emitted)
        if out.status == VALID:
            rec.theta, rec.m = theta, out.m
            self.queue.schedule(self.delay, CLASSICAL_MESSAGE, self._on_confirm, (v, out.ion))
        else:
            self.queue.schedule(self.delay, CLASSICAL_MESSAGE, self._on_lost, v)

    def _on_lost(self, ev) -> None:
        self.server.discard(ev.payload)
        self._next_attempt()

    def _on_confirm(self, ev) -> None:
        v, ion = ev.payload
        slot = self.server.slots[v]
        if self.queue.now - slot.initialized_at > self.cutoff:
            self._drop(v)
            self._next_attempt()
            return
        self.server.store(v, ion, self.queue.now)
        self.pending.popleft()
        if math.isfinite(self.cutoff):
            self.timers[v] = self.queue.schedule_at(slot.initialized_at + self.cutoff, TIMER, self._on_cutoff, v)
        if not self.pending:
            for t in self.timers.values():
                t.cancel()
            self._form_graph()
        else:
            self._next_attempt()

    def _drop(self, v: int) -> None:
        # the client is told of the discard and forgets its basis and outcome
        self.server.discard(v)
        self.record.qubits[v].forget_preparation()
        self.discards += 1

    def _on_cutoff(self, ev) -> None:
        v = ev.payload
        if not self.server.slots[v].stored:
            return
        self._drop(v)
        self.timers.pop(v, None)
        self.pending.append(v)

    # -- graph formation and measurement

    def _form_graph(self) -> None:
        self.server.advance_to(self.queue.now)
        form_graph(self.server, self.graph)
        self.queue.schedule_at(self.server.now + self.delay, CLASSICAL_MESSAGE, self._send_delta, 0)

    def _send_delta(self, ev) -> None:
        v = ev.payload if hasattr(ev, "payload") else ev
        rec = self.record.qubits[v]
        if rec.role == TRAP:
            rec.r = int(self.rng.integers(2))
        rec.delta = compute_delta(rec.role, rec.theta, rec.m, rec.r, self.rng)
        self.queue.schedule(self.delay, CLASSICAL_MESSAGE, self._server_measure, v)

    def _server_measure(self, ev) -> None:
        v = ev.payload
        b = self.server.measure_ion(v, self.record.qubits[v].delta, self.rng, now=self.queue.now)
        self.queue.schedule_at(self.server.now + self.delay, CLASSICAL_MESSAGE, self._receive_b, (v, b))

    def _receive_b(self, ev) -> None:
        v, b = ev.payload
        self.record.qubits[v].b = b
        order = self.graph.nodes
        i = order.index(v)
        if i + 1 < len(order):
            self._send_delta(order[i + 1])
            return
        for t in self.record.traps:
            self.record.qubits[t].d = _parity(self.record.qubits[u].m for u in self.graph.neighbours(t)
                                              if u not in self.record.traps)
        self.record.wall_time = self.queue.now
        self.finished = True
        self.queue.stop()


def form_graph(server: TrappedIonServer, graph: GraphSpec = LINE5) -> None:
    """CZ on every edge, in the listed order, through the server's noisy native gates."""
    for a, b in graph.edges:
        for g in qcore.cz_sequence(a, b):
            server.apply_gate(g)


def run_test_round(tunable: TunableParams, fixed: FixedParams, rng: np.random.Generator,
                   graph: GraphSpec = LINE5, options: RoundOptions = RoundOptions()) -> RoundRecord:
    return TestRound(tunable, fixed, rng, graph, options).run()


def rsp_latencies(tunable: TunableParams, fixed: FixedParams, rng: np.random.Generator, n: int) -> np.ndarray:
    """Time (us) to get ``n`` independent nodes remotely prepared, one attempt cycle per trial."""
    probe = TestRound(tunable, fixed, rng, LINE5)
    if probe.p_herald <= 0:
        return np.full(n, math.inf)
    return rng.geometric(probe.p_herald, size=n) * probe.attempt_time
