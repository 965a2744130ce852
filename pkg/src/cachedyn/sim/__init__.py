"""Discrete-event simulator used as the oracle of the analytic engine."""
from .engine import NodeStats, SimConfig, SimResult, replay_policy_unit, simulate, simulate_many
from .kernel import BACKEND
from .workload import IndependentOnOff, SnmRectangular, SynchronizedOnOff, Workload, WorkloadMode

__all__ = [
    "BACKEND",
    "IndependentOnOff",
    "NodeStats",
    "SimConfig",
    "SimResult",
    "SnmRectangular",
    "SynchronizedOnOff",
    "Workload",
    "WorkloadMode",
    "replay_policy_unit",
    "simulate",
    "simulate_many",
]
