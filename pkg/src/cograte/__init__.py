"""Cooperative cognitive relaying: closed-form analysis, allocation search and slot simulation."""

from .optimizer import GridSpec, OptResult, optimize, sweep_lambda
from .protocols import Allocation, Protocol, ProtocolMetrics, SystemParams, evaluate
from .simulator import SimConfig, SimReport, replicate, run

__version__ = "0.1.0"
