"""Round scheduler: sequences the task DAG and assigns each task to the edge
with the maximum weighted utility, carrying an expected-usage ledger so later
tasks in the same round see the load proposed for earlier ones."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import AbstractSet, Iterable

from .errors import CyclicGraph, NoEdges
from .model import (
    AssignmentPlan,
    DemandTotals,
    EdgeId,
    SystemSnapshot,
    TaskGraph,
    TaskId,
    WeightVector,
    WEIGHT_VARIANTS,
)
from .utility import (
    headroom,
    normalize_task_rewards,
    select_edge,
    task_reward,
    total_utility,
)

__all__ = [
    "SchedulerConfig",
    "sequence_tasks",
    "schedule",
    "plan_to_messages",
    "messages_to_lines",
]


@dataclass(frozen=True)
class SchedulerConfig:
    weights: WeightVector = field(default_factory=lambda: WEIGHT_VARIANTS["all"])
    reschedule_interval_ms: int = 2000
    variant_name: str = "all"

    def __post_init__(self):
        if self.reschedule_interval_ms <= 0:
            raise ValueError("reschedule_interval_ms must be > 0")


def sequence_tasks(graph: TaskGraph) -> list[TaskId]:
    """Topological order over the predecessor relation.

    Among ready tasks the lower priority value goes first, then the
    lexicographically smaller id, so the order is fully deterministic.
    """
    pending = {tid: len(spec.predecessors) for tid, spec in graph.tasks.items()}
    ready = [
        (spec.priority, tid)
        for tid, spec in graph.tasks.items()
        if not spec.predecessors
    ]
    heapq.heapify(ready)
    order: list[TaskId] = []
    while ready:
        _, tid = heapq.heappop(ready)
        order.append(tid)
        for succ in graph.successors(tid):
            pending[succ] -= 1
            if pending[succ] == 0:
                heapq.heappush(ready, (graph.tasks[succ].priority, succ))
    if len(order) != len(graph):
        blocked = sorted(t for t, n in pending.items() if n > 0)
        raise CyclicGraph(blocked + blocked[:1])
    return order


def schedule(
    snapshot: SystemSnapshot,
    graph: TaskGraph,
    cfg: SchedulerConfig,
    completed: AbstractSet[TaskId] = frozenset(),
    round_no: int = 0,
) -> AssignmentPlan:
    """Build one round's AssignmentPlan.

    Walks the task sequence; for each task it evaluates every linked edge's
    utility against the *expected* usage (snapshot usage plus the demands of
    tasks placed earlier in this round) and assigns the argmax edge, breaking
    ties toward the smaller edge id.

    A task that is already running counts inside the snapshot's usage figures,
    so while evaluating that task its own demand is subtracted from its
    current edge, and if the round relocates it the demand is transferred in
    the expected-usage bookkeeping. Without this, an edge would be charged
    twice for a task it is already hosting, and every round would bounce
    running tasks between edges.

    Tasks in ``completed`` are skipped. Tasks whose owner has no link on any
    edge are reported in ``plan.unassigned`` instead of being placed.
    """
    if not snapshot.edges:
        raise NoEdges("snapshot contains no edges")
    edge_ids = sorted(snapshot.edges)
    exp_cpu = {eid: snapshot.edges[eid].cpu_used for eid in edge_ids}
    exp_mem = {eid: snapshot.edges[eid].mem_used for eid in edge_ids}
    exp_thp = {
        (eid, robot): link.thp_used
        for eid in edge_ids
        for robot, link in snapshot.edges[eid].links.items()
    }

    assignments: list[tuple[TaskId, EdgeId]] = []
    unassigned: list[tuple[TaskId, str]] = []
    ledger: dict[EdgeId, DemandTotals] = {}

    for tid in sequence_tasks(graph):
        if tid in completed:
            continue
        task = graph.tasks[tid]
        demand = task.demand
        owner = task.owner
        current = snapshot.placements.get(tid)
        candidates = [
            eid for eid in edge_ids if owner in snapshot.edges[eid].links
        ]
        if not candidates:
            unassigned.append((tid, f"no edge has a link for robot {owner!r}"))
            continue

        raw = {
            eid: task_reward(task, snapshot.edges[eid], snapshot.placements)
            for eid in candidates
        }
        rewards = normalize_task_rewards(raw)

        totals: dict[EdgeId, float] = {}
        for eid in candidates:
            edge = snapshot.edges[eid]
            own_cpu = demand.cpu_pct if current == eid else 0.0
            own_mem = demand.mem_pct if current == eid else 0.0
            own_thp = demand.thp_pct if current == eid else 0.0
            cpu = headroom(
                edge.cpu_capacity, max(0.0, exp_cpu[eid] - own_cpu), demand.cpu_pct
            )
            mem = headroom(
                edge.mem_capacity, max(0.0, exp_mem[eid] - own_mem), demand.mem_pct
            )
            link = edge.links[owner]
            net = headroom(
                link.thp_capacity,
                max(0.0, exp_thp[(eid, owner)] - own_thp),
                demand.thp_pct,
            )
            totals[eid] = total_utility(cpu, mem, net, rewards[eid], cfg.weights).total

        chosen = select_edge(totals)
        if current in totals and totals[current] == totals[chosen]:
            # Sticky tie: relocating a running task is only worth it for a
            # strict utility improvement; an equal-utility move would be a
            # pure handoff cost on a stable system.
            chosen = current
        assignments.append((tid, chosen))
        ledger[chosen] = ledger.get(chosen, DemandTotals()).plus(demand)
        if current != chosen:
            if current is not None:
                exp_cpu[current] = max(0.0, exp_cpu[current] - demand.cpu_pct)
                exp_mem[current] = max(0.0, exp_mem[current] - demand.mem_pct)
                key = (current, owner)
                if key in exp_thp:
                    exp_thp[key] = max(0.0, exp_thp[key] - demand.thp_pct)
            exp_cpu[chosen] += demand.cpu_pct
            exp_mem[chosen] += demand.mem_pct
            exp_thp[(chosen, owner)] += demand.thp_pct

    return AssignmentPlan(
        round=round_no,
        assignments=tuple(assignments),
        expected_usage=ledger,
        unassigned=tuple(unassigned),
    )


def plan_to_messages(plan: AssignmentPlan, variant: str = "all") -> list[dict]:
    """One publishable record per assignment, in sequence order."""
    return [
        {"round": plan.round, "variant": variant, "task": tid, "edge": eid}
        for tid, eid in plan.assignments
    ]


def messages_to_lines(messages: Iterable[dict]) -> list[str]:
    """Serialize assignment records for the executor / audit log."""
    return [json.dumps(m, sort_keys=True) for m in messages]
