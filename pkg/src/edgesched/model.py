"""Core domain types shared by the scheduler, executor, gateway and simulator.

Everything here is an immutable value object: instances are safe to share
across threads and may be used as dict keys where hashable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .errors import (
    CyclicGraph,
    DemandOutOfRange,
    InvalidWeights,
    ModelError,
    UnknownReference,
)

EdgeId = str
RobotId = str
TaskId = str

WEIGHT_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ResourceDemand:
    """A task's demand triple, in percentage points of a device's capacity."""

    cpu_pct: float = 0.0
    mem_pct: float = 0.0
    thp_pct: float = 0.0

    def __post_init__(self):
        for name in ("cpu_pct", "mem_pct", "thp_pct"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise DemandOutOfRange(f"{name}={value!r} not in [0, 100]")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.cpu_pct, self.mem_pct, self.thp_pct)


@dataclass(frozen=True)
class LinkState:
    """Throughput state of one edge-to-robot link (percent of capacity scale)."""

    thp_capacity: float = 100.0
    thp_used: float = 0.0

    def __post_init__(self):
        if self.thp_capacity <= 0:
            raise ModelError(f"thp_capacity must be > 0, got {self.thp_capacity!r}")
        if self.thp_used < 0:
            raise ModelError(f"thp_used must be >= 0, got {self.thp_used!r}")


@dataclass(frozen=True)
class EdgeState:
    """One edge device: capacities, current usage and per-robot link state."""

    id: EdgeId
    cpu_capacity: float = 100.0
    mem_capacity: float = 100.0
    cpu_used: float = 0.0
    mem_used: float = 0.0
    links: Mapping[RobotId, LinkState] = field(default_factory=dict)
    running_tasks: frozenset[TaskId] = frozenset()

    def __post_init__(self):
        if not self.id:
            raise ModelError("edge id must be non-empty")
        if self.cpu_capacity <= 0 or self.mem_capacity <= 0:
            raise ModelError(f"edge {self.id}: capacities must be > 0")
        if self.cpu_used < 0 or self.mem_used < 0:
            raise ModelError(f"edge {self.id}: usage must be >= 0")
        object.__setattr__(self, "links", dict(self.links))
        object.__setattr__(self, "running_tasks", frozenset(self.running_tasks))

    def with_usage(self, *, cpu_used=None, mem_used=None, link_used=None):
        """Copy with adjusted usage; ``link_used`` maps robot id -> thp_used."""
        edge = self
        if cpu_used is not None or mem_used is not None:
            edge = replace(
                edge,
                cpu_used=edge.cpu_used if cpu_used is None else cpu_used,
                mem_used=edge.mem_used if mem_used is None else mem_used,
            )
        if link_used:
            links = dict(edge.links)
            for robot, used in link_used.items():
                links[robot] = replace(links[robot], thp_used=used)
            edge = replace(edge, links=links)
        return edge


@dataclass(frozen=True)
class TaskSpec:
    """An atomic task: owner robot, demand triple and predecessor set."""

    id: TaskId
    owner: RobotId
    demand: ResourceDemand = field(default_factory=ResourceDemand)
    priority: int = 0
    predecessors: frozenset[TaskId] = frozenset()

    def __post_init__(self):
        if not self.id:
            raise ModelError("task id must be non-empty")
        if not self.owner:
            raise ModelError(f"task {self.id}: owner must be non-empty")
        preds = frozenset(self.predecessors)
        if self.id in preds:
            raise CyclicGraph([self.id, self.id])
        object.__setattr__(self, "predecessors", preds)


class TaskGraph:
    """Immutable DAG of tasks keyed by id; validated on construction."""

    def __init__(self, tasks: Iterable[TaskSpec]):
        self.tasks: dict[TaskId, TaskSpec] = {}
        for spec in tasks:
            if spec.id in self.tasks:
                raise ModelError(f"duplicate task id {spec.id!r}")
            self.tasks[spec.id] = spec
        for spec in self.tasks.values():
            for pred in spec.predecessors:
                if pred not in self.tasks:
                    raise UnknownReference(
                        f"task {spec.id!r} references unknown predecessor {pred!r}"
                    )
        cycle = self._find_cycle()
        if cycle:
            raise CyclicGraph(cycle)

    def _find_cycle(self):
        # Iterative DFS over the predecessor relation; returns one cycle if any.
        WHITE, GREY, BLACK = 0, 1, 2
        color = {tid: WHITE for tid in self.tasks}
        parent: dict[TaskId, TaskId] = {}
        for root in self.tasks:
            if color[root] != WHITE:
                continue
            stack = [(root, iter(sorted(self.tasks[root].predecessors)))]
            color[root] = GREY
            while stack:
                node, it = stack[-1]
                advanced = False
                for nxt in it:
                    if color[nxt] == GREY:
                        cycle = [nxt, node]
                        cur = node
                        while cur != nxt:
                            cur = parent[cur]
                            cycle.append(cur)
                        cycle.reverse()
                        return cycle
                    if color[nxt] == WHITE:
                        color[nxt] = GREY
                        parent[nxt] = node
                        stack.append((nxt, iter(sorted(self.tasks[nxt].predecessors))))
                        advanced = True
                        break
                if not advanced:
                    color[node] = BLACK
                    stack.pop()
        return None

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks.values())

    def __contains__(self, tid: TaskId):
        return tid in self.tasks

    def depth(self) -> int:
        """Length, in tasks, of the longest predecessor chain."""
        memo: dict[TaskId, int] = {}

        def chain(tid: TaskId) -> int:
            if tid not in memo:
                spec = self.tasks[tid]
                memo[tid] = 1 + max(
                    (chain(p) for p in spec.predecessors), default=0
                )
            return memo[tid]

        return max((chain(t) for t in self.tasks), default=0)

    def successors(self, tid: TaskId) -> set[TaskId]:
        return {s.id for s in self.tasks.values() if tid in s.predecessors}

    def subgraph_without(self, removed: Iterable[TaskId]) -> "TaskGraph":
        """Graph with ``removed`` tasks dropped and their ids stripped from
        predecessor sets (used to prune completed tasks between rounds)."""
        gone = set(removed)
        kept = []
        for spec in self.tasks.values():
            if spec.id in gone:
                continue
            preds = spec.predecessors - gone
            kept.append(
                spec if preds == spec.predecessors else replace(spec, predecessors=preds)
            )
        return TaskGraph(kept)


@dataclass(frozen=True)
class WeightVector:
    """Weights applied to the four utility components; must sum to 1."""

    cpu: float
    mem: float
    net: float
    task: float

    def __post_init__(self):
        for name in ("cpu", "mem", "net", "task"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidWeights(f"weight {name}={value!r} not in [0, 1]")
        total = self.cpu + self.mem + self.net + self.task
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise InvalidWeights(f"weights sum to {total!r}, expected 1.0")


#: Named weight variants. Each one puts the dominant weight on its namesake
#: component; "all" weighs the four components equally.
WEIGHT_VARIANTS: dict[str, WeightVector] = {
    "cpu": WeightVector(cpu=0.55, mem=0.15, net=0.15, task=0.15),
    "mem": WeightVector(cpu=0.15, mem=0.55, net=0.15, task=0.15),
    "net": WeightVector(cpu=0.15, mem=0.15, net=0.55, task=0.15),
    "all": WeightVector(cpu=0.25, mem=0.25, net=0.25, task=0.25),
}


@dataclass(frozen=True)
class SystemSnapshot:
    """A consistent, timestamped view of all edges, links and running tasks."""

    timestamp: int
    edges: Mapping[EdgeId, EdgeState]
    placements: Mapping[TaskId, EdgeId] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "edges", dict(self.edges))
        object.__setattr__(self, "placements", dict(self.placements))
        for tid, eid in self.placements.items():
            if eid not in self.edges:
                raise UnknownReference(
                    f"placement {tid!r} -> {eid!r}: unknown edge"
                )
        for eid, edge in self.edges.items():
            if edge.id != eid:
                raise ModelError(f"edge key {eid!r} != edge id {edge.id!r}")
        seen: dict[TaskId, EdgeId] = {}
        for eid, edge in self.edges.items():
            for tid in edge.running_tasks:
                if tid in seen:
                    raise ModelError(
                        f"task {tid!r} running on both {seen[tid]!r} and {eid!r}"
                    )
                seen[tid] = eid
        for tid, eid in self.placements.items():
            if tid not in self.edges[eid].running_tasks:
                raise ModelError(
                    f"placement {tid!r} -> {eid!r} missing from running_tasks"
                )

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "edges": {
                eid: {
                    "cpu_capacity": e.cpu_capacity,
                    "mem_capacity": e.mem_capacity,
                    "cpu_used": e.cpu_used,
                    "mem_used": e.mem_used,
                    "links": {
                        r: {"thp_capacity": l.thp_capacity, "thp_used": l.thp_used}
                        for r, l in sorted(e.links.items())
                    },
                    "running_tasks": sorted(e.running_tasks),
                }
                for eid, e in sorted(self.edges.items())
            },
            "placements": dict(sorted(self.placements.items())),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SystemSnapshot":
        edges = {
            eid: EdgeState(
                id=eid,
                cpu_capacity=e["cpu_capacity"],
                mem_capacity=e["mem_capacity"],
                cpu_used=e["cpu_used"],
                mem_used=e["mem_used"],
                links={r: LinkState(**l) for r, l in e["links"].items()},
                running_tasks=frozenset(e["running_tasks"]),
            )
            for eid, e in data["edges"].items()
        }
        return cls(
            timestamp=data["timestamp"],
            edges=edges,
            placements=dict(data["placements"]),
        )


@dataclass(frozen=True)
class AssignmentPlan:
    """One scheduling round's proposed task-to-edge map.

    ``expected_usage`` is the per-edge ledger: the sum of the demands of the
    tasks assigned to that edge in this plan, accumulated in assignment order.
    ``unassigned`` lists tasks the round could not place, with a reason.
    """

    round: int
    assignments: tuple[tuple[TaskId, EdgeId], ...] = ()
    expected_usage: Mapping[EdgeId, "DemandTotals"] = field(default_factory=dict)
    unassigned: tuple[tuple[TaskId, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "assignments", tuple(self.assignments))
        object.__setattr__(self, "expected_usage", dict(self.expected_usage))
        object.__setattr__(self, "unassigned", tuple(self.unassigned))
        seen = set()
        for tid, _ in self.assignments:
            if tid in seen:
                raise ModelError(f"task {tid!r} assigned more than once")
            seen.add(tid)

    def as_mapping(self) -> dict[TaskId, EdgeId]:
        return dict(self.assignments)


@dataclass(frozen=True)
class DemandTotals:
    """Component-wise demand sum; unlike ResourceDemand it may exceed 100."""

    cpu_pct: float = 0.0
    mem_pct: float = 0.0
    thp_pct: float = 0.0

    def plus(self, d: ResourceDemand) -> "DemandTotals":
        return DemandTotals(
            self.cpu_pct + d.cpu_pct,
            self.mem_pct + d.mem_pct,
            self.thp_pct + d.thp_pct,
        )


def accumulate_usage(demands: Iterable[ResourceDemand]) -> DemandTotals:
    """Sum demands in iteration order.

    Order matters for float reproducibility: a ledger rebuilt from a plan's
    assignment order reproduces the original values exactly.
    """
    total = DemandTotals()
    for d in demands:
        total = total.plus(d)
    return total
