"""Hardware parameter sets: fixed setup values and the tunable (optimised) ones."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields


def _check_prob(name, value, lo=0.0, hi=1.0, lo_open=False):
    ok = (lo < value if lo_open else lo <= value) and value <= hi
    if not ok or math.isnan(value):
        bracket = "(" if lo_open else "["
        raise ValueError(f"{name}={value} outside {bracket}{lo}, {hi}]")


@dataclass(frozen=True)
class FixedParams:
    """Setup parameters that are not optimised over. Units are in the field comments."""

    channel_length: float = 50.0  # km
    fiber_loss: float = 0.2  # dB/km
    waveplate_error_prob: float = 0.001
    dark_count_prob: float = 0.0002  # per detector per window
    pbs_crosstalk: float = 0.0001
    rotation_duration: float = 12.0  # us
    entangling_duration: float = 107.0  # us
    init_duration: float = 300.0  # ns
    emission_duration: float = 300.0  # ns
    readout_duration: float = 100.0  # us

    def __post_init__(self):
        for name in ("waveplate_error_prob", "dark_count_prob", "pbs_crosstalk"):
            _check_prob(name, getattr(self, name))
        for name in ("channel_length", "fiber_loss", "rotation_duration", "entangling_duration",
                     "init_duration", "emission_duration", "readout_duration"):
            v = getattr(self, name)
            if not v >= 0:
                raise ValueError(f"{name}={v} must be non-negative")

    @classmethod
    def perfect_optics(cls, **overrides) -> "FixedParams":
        """Client optics and detectors made ideal; fibre loss retained."""
        base = dict(waveplate_error_prob=0.0, dark_count_prob=0.0, pbs_crosstalk=0.0)
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "FixedParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


TUNABLE_NAMES = ("server_efficiency", "coherence_time", "sq_gate_fidelity",
                 "entangling_gate_fidelity", "emission_fidelity")
FIDELITY_NAMES = ("sq_gate_fidelity", "entangling_gate_fidelity", "emission_fidelity")


@dataclass(frozen=True)
class TunableParams:
    """Hardware parameters varied by the requirement searches.

    ``coherence_time`` is in ms; ``math.inf`` removes the dephasing model.
    """

    server_efficiency: float = 0.1325
    sq_gate_fidelity: float = 0.99
    entangling_gate_fidelity: float = 0.95
    emission_fidelity: float = 0.974
    coherence_time: float = 62.0  # ms

    def __post_init__(self):
        _check_prob("server_efficiency", self.server_efficiency, lo_open=True)
        for name in FIDELITY_NAMES:
            _check_prob(name, getattr(self, name), lo=0.25, lo_open=True)
        if not self.coherence_time > 0:
            raise ValueError(f"coherence_time={self.coherence_time} must be positive")

    @classmethod
    def baseline(cls) -> "TunableParams":
        return cls()

    @classmethod
    def perfect(cls) -> "TunableParams":
        return cls(1.0, 1.0, 1.0, 1.0, math.inf)

    def replace(self, **changes) -> "TunableParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, n) for n in TUNABLE_NAMES)

    @classmethod
    def from_values(cls, values) -> "TunableParams":
        return cls(**dict(zip(TUNABLE_NAMES, values)))


# Minimally improved set reported for the 50 km, 5-qubit line.
REPORTED_OPTIMUM = TunableParams(server_efficiency=0.393, sq_gate_fidelity=0.997,
                                 entangling_gate_fidelity=0.988, emission_fidelity=0.982,
                                 coherence_time=124.0)
# An alternative optimum of similar cost.
REPORTED_ALTERNATIVE = TunableParams(server_efficiency=0.594, sq_gate_fidelity=0.998,
                                     entangling_gate_fidelity=0.986, emission_fidelity=0.988,
                                     coherence_time=103.0)
