"""Noise channels for the ion-trap server.

Collective Gaussian dephasing is simulated by drawing a rate ``r`` from a
standard normal once per ion initialisation and then rotating the ion by
exp(-i r (t / tau) Z) for every elapsed interval ``t``. Gate and emission
imperfections are depolarising mixtures parameterised by a fidelity ``F``
with mixing weight q = (4F - 1) / 3.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .qcore import DensityMatrix, _check_targets, apply_z_phases


@dataclass(frozen=True)
class DephasingRate:
    r: float
    sampled_at: float = 0.0  # us

    def __post_init__(self):
        if not np.isfinite(self.r):
            raise ValueError("dephasing rate must be finite")


def sample_rate(rng: np.random.Generator, now: float = 0.0) -> DephasingRate:
    return DephasingRate(float(rng.standard_normal()), now)


def dephasing_angle(r: float, elapsed: float, coherence_time: float) -> float:
    """Angle ``a`` of exp(-i a Z) accumulated over ``elapsed`` (same unit as ``coherence_time``)."""
    if elapsed < 0:
        raise ValueError("elapsed time must be non-negative")
    if coherence_time <= 0:
        raise ValueError("coherence time must be positive")
    if np.isinf(coherence_time):
        return 0.0
    return r * elapsed / coherence_time


def dephase(state: DensityMatrix, target: int, r: DephasingRate | float, elapsed: float,
            coherence_time: float) -> DensityMatrix:
    """Rotate ``target`` by exp(-i r (elapsed / coherence_time) Z)."""
    n = state.num_qubits
    (target,) = _check_targets([target], n)
    rate = r.r if isinstance(r, DephasingRate) else float(r)
    angles = np.zeros(n)
    angles[target] = dephasing_angle(rate, elapsed, coherence_time)
    return apply_z_phases(state, angles)


def mixing_weight(fidelity: float) -> float:
    """q = (4F - 1) / 3; the probability that no depolarising error occurs."""
    fidelity = float(fidelity)
    if not 0.25 <= fidelity <= 1.0:
        raise ValueError(f"fidelity must lie in [0.25, 1], got {fidelity}")
    return (4.0 * fidelity - 1.0) / 3.0


def _twirl(t: np.ndarray, n: int, q: int) -> np.ndarray:
    """Replace qubit ``q`` of the (2,)*2n tensor by I/2 (x) its partial trace."""
    out = np.zeros_like(t)
    sl = [slice(None)] * (2 * n)

    def at(a, b):
        s = list(sl)
        s[q], s[n + q] = a, b
        return tuple(s)

    avg = 0.5 * (t[at(0, 0)] + t[at(1, 1)])
    out[at(0, 0)] = avg
    out[at(1, 1)] = avg
    return out


def depolarize(state: DensityMatrix, targets: Sequence[int], fidelity: float) -> DensityMatrix:
    """rho -> q rho + (1 - q) (I_d / d (x) Tr_targets rho), q = (4F - 1) / 3."""
    n = state.num_qubits
    targets = _check_targets(targets, n)
    if len(targets) not in (1, 2):
        raise ValueError("depolarize acts on one or two qubits")
    q = mixing_weight(fidelity)
    if q == 1.0:
        return state
    t = state.data.reshape((2,) * (2 * n))
    mixed = t
    for tq in targets:
        mixed = _twirl(mixed, n, tq)
    rho = q * state.data + (1.0 - q) * mixed.reshape(2**n, 2**n)
    return DensityMatrix(rho, n)


EMISSION_STATE = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)  # (|0H> + |1V>)/sqrt(2)


def werner_emission(fidelity: float) -> DensityMatrix:
    """Ion (x) photon Werner state with fidelity ``fidelity`` to (|0H> + |1V>)/sqrt(2)."""
    return _werner(float(fidelity))


@lru_cache(maxsize=64)
def _werner(fidelity: float) -> DensityMatrix:
    q = mixing_weight(fidelity)
    pure = np.outer(EMISSION_STATE, EMISSION_STATE.conj())
    rho = q * pure + (1.0 - q) * np.eye(4) / 4.0
    rho.flags.writeable = False  # shared between photons
    return DensityMatrix(rho, 2)
