"""Executor: plan diffing, task lifecycle ownership and agent dispatch.

The executor is the single writer of lifecycle state. It compares each new
assignment plan against what is currently placed, keeps unchanged tasks in
place (a kept task is never reinitialized), dispatches stops before starts,
and removes completed tasks from their edges so they stop competing for
resources.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Protocol

from .errors import AgentUnreachable, IllegalTransition, NotCompleted
from .model import AssignmentPlan, EdgeId, TaskId


class LifecycleState(str, Enum):
    PENDING = "pending"
    STARTING = "starting"
    RUNNING = "running"
    COMPLETED = "completed"
    REMOVED = "removed"


_LEGAL = {
    LifecycleState.PENDING: {LifecycleState.STARTING},
    LifecycleState.STARTING: {LifecycleState.RUNNING},
    LifecycleState.RUNNING: {
        LifecycleState.COMPLETED,
        LifecycleState.REMOVED,
        LifecycleState.STARTING,  # explicit handoff only
    },
    LifecycleState.COMPLETED: set(),
    LifecycleState.REMOVED: set(),
}


@dataclass
class TaskLifecycle:
    task: TaskId
    state: LifecycleState = LifecycleState.PENDING
    placed_on: Optional[EdgeId] = None
    dispatched_at: Optional[int] = None
    ready_at: Optional[int] = None
    started_at: Optional[int] = None
    completed_at: Optional[int] = None
    last_placed: Optional[EdgeId] = None
    unloaded: bool = False


@dataclass(frozen=True)
class ActionSet:
    """Start/stop/keep decisions produced by diffing two assignments.

    A task appearing in both ``starts`` and ``stops`` is a move (handoff);
    ``keeps`` is always disjoint from the other two lists.
    """

    starts: tuple[tuple[TaskId, EdgeId], ...] = ()
    stops: tuple[tuple[TaskId, EdgeId], ...] = ()
    keeps: tuple[tuple[TaskId, EdgeId], ...] = ()

    def __post_init__(self):
        kept = {t for t, _ in self.keeps}
        if kept & {t for t, _ in self.starts} or kept & {t for t, _ in self.stops}:
            raise ValueError("keeps overlaps starts/stops")

    def moves(self) -> set[TaskId]:
        """Tasks stopped on one edge and started on a different one."""
        stop_map = dict(self.stops)
        return {
            t for t, e in self.starts if t in stop_map and stop_map[t] != e
        }

    def restarted(self) -> set[TaskId]:
        """Tasks stopped and started again on the same edge."""
        stop_map = dict(self.stops)
        return {
            t for t, e in self.starts if t in stop_map and stop_map[t] == e
        }


def diff_plan(
    previous: Mapping[TaskId, EdgeId], next_plan: AssignmentPlan
) -> ActionSet:
    """Diff currently running placements against the next plan.

    Tasks whose assigned edge is unchanged are kept and continue executing
    without reinitialization. New or moved tasks are starts; moved tasks' old
    placements, and running tasks absent from the plan, are stops.
    """
    plan_map = next_plan.as_mapping()
    keeps = []
    starts = []
    for tid, eid in next_plan.assignments:
        if previous.get(tid) == eid:
            keeps.append((tid, eid))
        else:
            starts.append((tid, eid))
    stops = [
        (tid, eid)
        for tid, eid in sorted(previous.items())
        if plan_map.get(tid) != eid
    ]
    return ActionSet(starts=tuple(starts), stops=tuple(stops), keeps=tuple(keeps))


@dataclass(frozen=True)
class Receipt:
    action: str
    task: TaskId
    edge: EdgeId
    accepted: bool
    at: int
    agent_ts: Optional[int] = None
    note: str = ""


class AgentTransport(Protocol):
    """Message channel to the agent process on one device."""

    def send_start(self, task: TaskId, edge: EdgeId, at: int, handoff: bool) -> int:
        """Dispatch a start; returns the agent's timestamp."""
        ...

    def send_stop(self, task: TaskId, edge: EdgeId, at: int) -> int:
        ...


class LoopbackTransport:
    """In-process transport: every registered agent accepts instantly.

    Devices listed in ``unreachable`` raise AgentUnreachable, which the
    executor converts into rejected receipts.
    """

    def __init__(self, devices=(), unreachable=()):
        self.devices = set(devices)
        self.unreachable = set(unreachable)
        self.sent: list[tuple[str, TaskId, EdgeId, int]] = []

    def _check(self, edge: EdgeId):
        if edge in self.unreachable or (self.devices and edge not in self.devices):
            raise AgentUnreachable(edge)

    def send_start(self, task, edge, at, handoff):
        self._check(edge)
        self.sent.append(("start", task, edge, at))
        return at

    def send_stop(self, task, edge, at):
        self._check(edge)
        self.sent.append(("stop", task, edge, at))
        return at


class Executor:
    """Owns all task lifecycles and the append-only action log."""

    def __init__(
        self,
        transport: AgentTransport,
        start_latency_ms: int = 500,
        handoff_penalty_ms: int = 1500,
    ):
        self.transport = transport
        self.start_latency_ms = start_latency_ms
        self.handoff_penalty_ms = handoff_penalty_ms
        self.lifecycles: dict[TaskId, TaskLifecycle] = {}
        self.action_log: list[dict] = []

    # -- lifecycle bookkeeping -------------------------------------------

    def lifecycle(self, task: TaskId) -> TaskLifecycle:
        if task not in self.lifecycles:
            self.lifecycles[task] = TaskLifecycle(task=task)
        return self.lifecycles[task]

    def _transition(self, lc: TaskLifecycle, new_state: LifecycleState):
        if new_state not in _LEGAL[lc.state]:
            raise IllegalTransition(f"{lc.task}: {lc.state.value} -> {new_state.value}")
        lc.state = new_state

    def current_placements(self) -> dict[TaskId, EdgeId]:
        return {
            tid: lc.placed_on
            for tid, lc in sorted(self.lifecycles.items())
            if lc.state in (LifecycleState.STARTING, LifecycleState.RUNNING)
        }

    def promote_due(self, now: int):
        """Move every Starting task whose init window elapsed to Running."""
        for lc in self.lifecycles.values():
            if lc.state is LifecycleState.STARTING and lc.ready_at is not None:
                if lc.ready_at <= now:
                    self._transition(lc, LifecycleState.RUNNING)
                    lc.started_at = lc.ready_at

    def mark_running(self, task: TaskId, now: int):
        lc = self.lifecycle(task)
        self._transition(lc, LifecycleState.RUNNING)
        lc.started_at = now

    def mark_completed(self, task: TaskId, now: int):
        lc = self.lifecycle(task)
        self._transition(lc, LifecycleState.COMPLETED)
        lc.completed_at = now
        lc.last_placed = lc.placed_on
        lc.placed_on = None

    # -- dispatch ---------------------------------------------------------

    def _log(self, round_no, now, action, task, edge, result):
        self.action_log.append(
            {
                "round": round_no,
                "t": now,
                "action": action,
                "task": task,
                "edge": edge,
                "result": result,
            }
        )

    def apply_actions(self, actions: ActionSet, round_no: int, now: int) -> list[Receipt]:
        """Dispatch an ActionSet: all stops first, then starts in plan order.

        A rejected start leaves the task Pending so the next round retries it.
        Unreachable agents reject the individual send; other devices in the
        same round are unaffected.
        """
        receipts: list[Receipt] = []
        moves = actions.moves()
        started_again = moves | actions.restarted()

        for tid, eid in actions.stops:
            lc = self.lifecycle(tid)
            try:
                agent_ts = self.transport.send_stop(tid, eid, now)
                accepted, note = True, ""
            except AgentUnreachable as exc:
                agent_ts, accepted, note = None, False, f"unreachable: {exc}"
            receipts.append(Receipt("stop", tid, eid, accepted, now, agent_ts, note))
            self._log(round_no, now, "stop", tid, eid, "accept" if accepted else "reject")
            if accepted and tid not in started_again:
                # Dropped from the plan entirely: the task is torn down.
                lc.last_placed = lc.placed_on
                lc.placed_on = None
                self._transition(lc, LifecycleState.REMOVED)

        for tid, eid in actions.starts:
            lc = self.lifecycle(tid)
            handoff = tid in moves
            try:
                agent_ts = self.transport.send_start(tid, eid, now, handoff)
                accepted, note = True, ""
            except AgentUnreachable as exc:
                agent_ts, accepted, note = None, False, f"unreachable: {exc}"
            action = "handoff" if handoff else "start"
            receipts.append(Receipt(action, tid, eid, accepted, now, agent_ts, note))
            self._log(round_no, now, action, tid, eid, "accept" if accepted else "reject")
            if accepted:
                if lc.state is not LifecycleState.STARTING:
                    self._transition(lc, LifecycleState.STARTING)
                lc.placed_on = eid
                lc.dispatched_at = now
                penalty = self.handoff_penalty_ms if handoff else self.start_latency_ms
                lc.ready_at = now + penalty
            elif handoff:
                # Stop went through but the new edge refused: back to Pending
                # for a retry next round.
                lc.placed_on = None
                lc.state = LifecycleState.PENDING
        return receipts

    def unload_completed(self, task: TaskId, round_no: int, now: int) -> list[Receipt]:
        """Remove a completed task from its edge.

        Raises NotCompleted if invoked before completion; a second unload of
        the same task is a no-op that returns a warning receipt.
        """
        lc = self.lifecycle(task)
        if lc.state is not LifecycleState.COMPLETED:
            raise NotCompleted(f"{task} is {lc.state.value}")
        if lc.unloaded:
            receipt = Receipt("unload", task, lc.last_placed, False, now, None, "already unloaded")
            self._log(round_no, now, "unload", task, lc.last_placed, "noop")
            return [receipt]
        lc.unloaded = True
        edge = lc.last_placed
        try:
            agent_ts = self.transport.send_stop(task, edge, now)
            accepted, note = True, ""
        except AgentUnreachable as exc:
            agent_ts, accepted, note = None, False, f"unreachable: {exc}"
        self._log(round_no, now, "unload", task, edge, "accept" if accepted else "reject")
        return [Receipt("unload", task, edge, accepted, now, agent_ts, note)]

    def action_log_lines(self) -> list[str]:
        return [json.dumps(rec, sort_keys=True) for rec in self.action_log]


__all__ = [
    "ActionSet",
    "AgentTransport",
    "Executor",
    "LifecycleState",
    "LoopbackTransport",
    "Receipt",
    "TaskLifecycle",
    "diff_plan",
]
