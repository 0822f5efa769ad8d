"""Discrete-event scheduler plus the fibre and classical channels.

All times are in microseconds.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

PHOTON_ARRIVAL = "photon-arrival"
CLASSICAL_MESSAGE = "classical-message"
TIMER = "timer"


@dataclass(order=True)
class Event:
    time: float
    seq: int
    kind: str = field(compare=False)
    action: Callable[[], Any] | None = field(compare=False, default=None)
    payload: Any = field(compare=False, default=None)
    cancelled: bool = field(compare=False, default=False)

    def cancel(self) -> None:
        self.cancelled = True


class ClockError(RuntimeError):
    pass


class EventQueue:
    """Time-ordered event queue; equal times fire in insertion order."""

    def __init__(self):
        self.now = 0.0
        self._heap: list[Event] = []
        self._counter = itertools.count()
        self.processed = 0
        self.stopped = False

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, delay: float, kind: str, action=None, payload=None) -> Event:
        if delay < 0:
            raise ClockError(f"cannot schedule {delay} us in the past")
        return self.schedule_at(self.now + delay, kind, action, payload)

    def schedule_at(self, time: float, kind: str, action=None, payload=None) -> Event:
        if time < self.now:
            raise ClockError(f"event time {time} precedes current time {self.now}")
        ev = Event(float(time), next(self._counter), kind, action, payload)
        heapq.heappush(self._heap, ev)
        return ev

    def stop(self) -> None:
        self.stopped = True

    def run_until_idle(self, until: float = float("inf")) -> None:
        """Fire events in order until the queue empties, ``stop`` is called, or ``until`` passes."""
        self.stopped = False
        while self._heap and not self.stopped:
            if self._heap[0].time > until:
                return
            ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self.now = ev.time
            self.processed += 1
            if ev.action is not None:
                ev.action(ev)


@dataclass(frozen=True)
class ChannelSpec:
    length: float = 50.0  # km
    loss: float = 0.2  # dB/km
    refractive_index: float = 1.5
    light_speed: float = 3e5  # km/s

    def __post_init__(self):
        if self.length < 0 or self.loss < 0:
            raise ValueError("channel length and loss must be non-negative")


def transmission_probability(ch: ChannelSpec) -> float:
    return 10.0 ** (-ch.loss * ch.length / 10.0)


def one_way_delay(ch: ChannelSpec) -> float:
    """Propagation time in microseconds."""
    return ch.length / (ch.light_speed / ch.refractive_index) * 1e6


def arrival_probability(ch: ChannelSpec, server_efficiency: float) -> float:
    return server_efficiency * transmission_probability(ch)


def send_photon(queue: EventQueue, photon, ch: ChannelSpec, server_efficiency: float,
                rng: np.random.Generator, on_arrival=None) -> Event:
    """Schedule the photon's arrival window at the far end.

    Survival is decided here with probability efficiency x transmission; a lost
    photon still opens the detection window, with ``payload`` set to None.
    """
    arrived = rng.random() < arrival_probability(ch, server_efficiency)
    return queue.schedule(one_way_delay(ch), PHOTON_ARRIVAL, on_arrival,
                          photon if arrived else None)


def send_message(queue: EventQueue, ch: ChannelSpec, message, on_receive=None) -> Event:
    """Classical messages travel at the fibre light speed and are never lost."""
    return queue.schedule(one_way_delay(ch), CLASSICAL_MESSAGE, on_receive, message)
