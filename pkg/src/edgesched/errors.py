"""Exception hierarchy shared by all edgesched components."""

from __future__ import annotations


class EdgeSchedError(Exception):
    """Base class for every error raised by this package."""


class ModelError(EdgeSchedError):
    """An invalid domain object was constructed."""


class CyclicGraph(ModelError):
    """The task precedence relation contains a cycle.

    ``cycle`` holds one offending task-id sequence, first id repeated last.
    """

    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        super().__init__(" -> ".join(self.cycle))


class UnknownReference(ModelError):
    """An id refers to an entity that does not exist in the scenario."""


class DemandOutOfRange(ModelError):
    """A resource demand component falls outside [0, 100]."""


class InvalidWeights(ModelError):
    """Weight components outside [0, 1] or not summing to 1."""


class ConfigError(EdgeSchedError):
    """A scenario configuration is invalid.

    ``violations`` lists every problem found, one exception per entry, so a
    single validation pass reports all of them.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class ZeroCapacity(EdgeSchedError):
    """A utility was requested against a zero-capacity resource."""


class MissingLink(EdgeSchedError):
    """An edge has no link entry for the task's owning robot."""


class NoEdges(EdgeSchedError):
    """Edge selection was attempted over an empty candidate set."""


class IllegalTransition(EdgeSchedError):
    """A task lifecycle transition not permitted by the state machine."""


class NotCompleted(EdgeSchedError):
    """Unload was requested for a task that has not completed."""


class AgentUnreachable(EdgeSchedError):
    """The agent on the target device did not answer."""


class ProtocolError(EdgeSchedError):
    """A malformed or out-of-contract wire message."""


class UnknownSource(EdgeSchedError):
    """Telemetry arrived from a source that was never registered."""


class NoFreshEdges(EdgeSchedError):
    """Every registered edge is stale; no snapshot can be produced."""


class Deadlock(EdgeSchedError):
    """Simulation stalled: incomplete tasks remain but no event is pending."""
