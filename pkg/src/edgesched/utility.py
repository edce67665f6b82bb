"""Headroom utilities, task-affinity rewards and weighted edge selection.

All functions are pure and stateless. A utility is the normalized headroom an
edge would retain after accepting a task: (capacity - used - demand) /
capacity. Values are <= 1 by construction and go negative when the demand
exceeds the remaining headroom; negative values are meaningful over-commit
signals and are deliberately not clamped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from .errors import MissingLink, NoEdges, ZeroCapacity
from .model import EdgeId, EdgeState, LinkState, ResourceDemand, TaskId, TaskSpec, WeightVector

UtilityScore = float


def headroom(capacity: float, used: float, demand: float) -> UtilityScore:
    """Remaining capacity fraction after current usage and the new demand."""
    if capacity <= 0:
        raise ZeroCapacity(f"capacity={capacity!r}")
    return (capacity - used - demand) / capacity


def cpu_utility(edge: EdgeState, demand: ResourceDemand) -> UtilityScore:
    return headroom(edge.cpu_capacity, edge.cpu_used, demand.cpu_pct)


def mem_utility(edge: EdgeState, demand: ResourceDemand) -> UtilityScore:
    """Memory headroom; callers pass an edge whose mem_used already reflects
    any expected usage accumulated earlier in the same scheduling round."""
    return headroom(edge.mem_capacity, edge.mem_used, demand.mem_pct)


def net_utility(link: Optional[LinkState], demand: ResourceDemand) -> UtilityScore:
    """Throughput headroom on the edge-to-owner link; None means no link."""
    if link is None:
        raise MissingLink("edge has no link for the task's robot")
    return headroom(link.thp_capacity, link.thp_used, demand.thp_pct)


def task_reward(
    task: TaskSpec, edge: EdgeState, placements: Mapping[TaskId, EdgeId]
) -> float:
    """Affinity reward for running ``task`` on ``edge``.

    +1 when a predecessor currently runs on this edge, -1 when one runs on a
    different edge, 0 when the task has no precedence signal. With several
    predecessors the net count is clamped to [-1, +1].
    """
    positive = negative = 0
    for pred in task.predecessors:
        placed = placements.get(pred)
        if placed is None:
            continue
        if placed == edge.id:
            positive += 1
        else:
            negative += 1
    if positive == 0 and negative == 0:
        return 0.0
    return float(max(-1, min(1, positive - negative)))


def normalize_task_rewards(rewards: Mapping[EdgeId, float]) -> dict[EdgeId, float]:
    """Dense-rank rewards into [0, 1], best edge first.

    Edges sharing a raw reward share a normalized value. With k distinct
    values the edge at dense rank d gets (k - d) / (k - 1); a single rank
    (all rewards equal, or a single edge) normalizes to 1.0.
    """
    if not rewards:
        raise NoEdges("no edges to rank")
    distinct = sorted(set(rewards.values()), reverse=True)
    k = len(distinct)
    if k == 1:
        return {eid: 1.0 for eid in rewards}
    rank = {value: i for i, value in enumerate(distinct)}
    return {eid: (k - 1 - rank[value]) / (k - 1) for eid, value in rewards.items()}


@dataclass(frozen=True)
class UtilityBreakdown:
    """Component utilities for one (task, edge) pairing and their weighted total."""

    cpu: UtilityScore
    mem: UtilityScore
    net: UtilityScore
    task: float
    total: float


def total_utility(
    cpu: UtilityScore,
    mem: UtilityScore,
    net: UtilityScore,
    task: float,
    weights: WeightVector,
) -> UtilityBreakdown:
    total = (
        weights.cpu * cpu + weights.mem * mem + weights.task * task + weights.net * net
    )
    return UtilityBreakdown(cpu=cpu, mem=mem, net=net, task=task, total=total)


def select_edge(totals: Mapping[EdgeId, float]) -> EdgeId:
    """Argmax over total utilities; ties break to the smallest edge id.

    Iterates edges in sorted-id order with a strict improvement test, so the
    result is independent of the mapping's iteration order.
    """
    if not totals:
        raise NoEdges("no candidate edges")
    best_id = None
    best_total = None
    for eid in sorted(totals):
        value = totals[eid]
        if best_total is None or value > best_total:
            best_id, best_total = eid, value
    return best_id
