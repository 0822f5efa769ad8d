"""Simulation of verifiable blind quantum computation test rounds on a trapped-ion server."""
from __future__ import annotations

from .params import FixedParams, TunableParams, REPORTED_OPTIMUM, REPORTED_ALTERNATIVE
from .protocol import GraphSpec, RoundOptions, RoundRecord, run_test_round

__version__ = "0.1.0"
