"""Utility-aware task offloading for multi-edge/multi-robot systems.

The package pairs an offloading orchestrator (gateway, scheduler, executor)
with a deterministic discrete-event simulator that compares local, static and
dynamic strategies on resource-utilization and task-latency metrics.
"""

from .errors import (
    AgentUnreachable,
    ConfigError,
    CyclicGraph,
    Deadlock,
    DemandOutOfRange,
    EdgeSchedError,
    InvalidWeights,
    MissingLink,
    ModelError,
    NoEdges,
    NoFreshEdges,
    NotCompleted,
    ProtocolError,
    UnknownReference,
    UnknownSource,
    ZeroCapacity,
)
from .model import (
    AssignmentPlan,
    DemandTotals,
    EdgeState,
    LinkState,
    ResourceDemand,
    SystemSnapshot,
    TaskGraph,
    TaskSpec,
    WeightVector,
    WEIGHT_VARIANTS,
)
from .scenario import Scenario, load_scenario, validate_scenario
from .scheduler import SchedulerConfig, plan_to_messages, schedule, sequence_tasks
from .sim import compare_strategies, contention_service_rate, run_scenario

__version__ = "0.1.0"

__all__ = [
    "AgentUnreachable",
    "AssignmentPlan",
    "ConfigError",
    "CyclicGraph",
    "Deadlock",
    "DemandOutOfRange",
    "DemandTotals",
    "EdgeSchedError",
    "EdgeState",
    "InvalidWeights",
    "LinkState",
    "MissingLink",
    "ModelError",
    "NoEdges",
    "NoFreshEdges",
    "NotCompleted",
    "ProtocolError",
    "ResourceDemand",
    "Scenario",
    "SchedulerConfig",
    "SystemSnapshot",
    "TaskGraph",
    "TaskSpec",
    "UnknownReference",
    "UnknownSource",
    "WeightVector",
    "WEIGHT_VARIANTS",
    "ZeroCapacity",
    "compare_strategies",
    "contention_service_rate",
    "load_scenario",
    "plan_to_messages",
    "run_scenario",
    "schedule",
    "sequence_tasks",
    "validate_scenario",
]
