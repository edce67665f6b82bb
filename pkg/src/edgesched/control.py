"""Round controller: glue between gateway, scheduler and executor.

One controller instance drives one scenario run. Each round it snapshots the
system (dynamic strategy only), plans the runnable frontier, diffs the plan
against current placements and dispatches the resulting actions. The same
code path serves the simulator and the wire-fed controller, which is what
makes their action logs comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol

from .errors import ModelError, NoFreshEdges
from .executor import ActionSet, Executor, LifecycleState, LoopbackTransport, Receipt, diff_plan
from .gateway import Gateway
from .model import AssignmentPlan, DemandTotals, SystemSnapshot, TaskGraph, TaskId
from .scenario import Scenario
from .scheduler import SchedulerConfig, plan_to_messages, schedule, sequence_tasks


class Planner(Protocol):
    requires_snapshot: bool
    variant: str

    def plan(
        self, snapshot: Optional[SystemSnapshot], frontier: TaskGraph, round_no: int
    ) -> AssignmentPlan:
        ...


@dataclass
class DynamicPlanner:
    cfg: SchedulerConfig
    requires_snapshot: bool = True

    @property
    def variant(self) -> str:
        return self.cfg.variant_name

    def plan(self, snapshot, frontier, round_no):
        return schedule(snapshot, frontier, self.cfg, round_no=round_no)


@dataclass
class FixedPlanner:
    """Constant task-to-device map: static pre-assignment or local execution."""

    mapping: dict[TaskId, str]
    variant: str = "static"
    requires_snapshot: bool = False

    def plan(self, snapshot, frontier, round_no):
        assignments = []
        ledger: dict[str, DemandTotals] = {}
        for tid in sequence_tasks(frontier):
            device = self.mapping[tid]
            assignments.append((tid, device))
            ledger[device] = ledger.get(device, DemandTotals()).plus(
                frontier.tasks[tid].demand
            )
        return AssignmentPlan(
            round=round_no, assignments=tuple(assignments), expected_usage=ledger
        )


@dataclass
class RoundOutcome:
    round_no: int
    plan: Optional[AssignmentPlan]
    actions: ActionSet
    receipts: list[Receipt]
    diagnostics: list[str] = field(default_factory=list)


class RoundController:
    """Owns round numbering, the completed set and action dispatch.

    ``pins`` maps tasks that are launched outside the scheduler to their fixed
    device; they never appear in plans. ``force_reassign`` disables the
    keep-in-place diff (every planned task is stopped and restarted each
    round), which exists to measure the cost of handoffs.
    """

    def __init__(
        self,
        graph: TaskGraph,
        pins: dict[TaskId, str],
        planner: Planner,
        executor: Executor,
        gateway: Gateway,
        allow_preinit_handoff: bool = False,
        force_reassign: bool = False,
    ):
        self.graph = graph
        self.pins = dict(pins)
        self.planner = planner
        self.executor = executor
        self.gateway = gateway
        self.allow_preinit_handoff = allow_preinit_handoff
        self.force_reassign = force_reassign
        self.completed: set[TaskId] = set()
        self.round_no = -1
        self.assignment_log: list[dict] = []

    # -- task-set views ----------------------------------------------------

    def is_runnable(self, tid: TaskId) -> bool:
        return self.graph.tasks[tid].predecessors <= self.completed

    def frontier(self) -> TaskGraph:
        """Schedulable tasks that are incomplete and runnable right now."""
        keep = [
            tid
            for tid in self.graph.tasks
            if tid not in self.pins
            and tid not in self.completed
            and self.is_runnable(tid)
        ]
        drop = set(self.graph.tasks) - set(keep)
        return self.graph.subgraph_without(drop)

    def pending_pinned(self) -> list[tuple[TaskId, str]]:
        """Pinned tasks that are runnable but not yet dispatched."""
        out = []
        for tid, device in sorted(self.pins.items()):
            if tid in self.completed or not self.is_runnable(tid):
                continue
            lc = self.executor.lifecycle(tid)
            if lc.state is LifecycleState.PENDING:
                out.append((tid, device))
        return out

    # -- dispatch ------------------------------------------------------------

    def _schedulable_placements(self) -> dict[TaskId, str]:
        return {
            tid: dev
            for tid, dev in self.executor.current_placements().items()
            if tid not in self.pins
        }

    def _filter_actions(self, actions: ActionSet) -> ActionSet:
        """Drop starts that cannot be dispatched this round.

        Not-yet-runnable tasks stay pending without an agent call. Moves of a
        task still in its init window are skipped entirely (kept in place)
        unless pre-init handoff is enabled.
        """
        stop_map = dict(actions.stops)
        starts = []
        dropped_moves = set()
        for tid, eid in actions.starts:
            if not self.is_runnable(tid):
                continue
            if tid in stop_map:
                lc = self.executor.lifecycle(tid)
                if (
                    lc.state is LifecycleState.STARTING
                    and not self.allow_preinit_handoff
                ):
                    dropped_moves.add(tid)
                    continue
            starts.append((tid, eid))
        stops = [
            (tid, eid) for tid, eid in actions.stops if tid not in dropped_moves
        ]
        return ActionSet(starts=tuple(starts), stops=tuple(stops), keeps=actions.keeps)

    def run_round(self, now: int) -> RoundOutcome:
        self.round_no += 1
        # Init windows that elapsed by now are promoted first, so plan
        # filtering sees the same lifecycle states on every drive path.
        self.executor.promote_due(now)
        diagnostics: list[str] = []
        frontier = self.frontier()
        snapshot = None
        if self.planner.requires_snapshot:
            try:
                snapshot = self.gateway.snapshot(now)
            except NoFreshEdges as exc:
                diagnostics.append(f"round {self.round_no}: {exc}")
                return RoundOutcome(self.round_no, None, ActionSet(), [], diagnostics)
        plan = self.planner.plan(snapshot, frontier, self.round_no)
        for record in plan_to_messages(plan, self.planner.variant):
            self.assignment_log.append(record)
        for tid, reason in plan.unassigned:
            diagnostics.append(f"round {self.round_no}: {tid} unassigned: {reason}")

        previous = self._schedulable_placements()
        if self.force_reassign:
            actions = ActionSet(
                starts=plan.assignments,
                stops=tuple(sorted(previous.items())),
                keeps=(),
            )
        else:
            actions = diff_plan(previous, plan)
        actions = self._filter_actions(actions)
        receipts = self.executor.apply_actions(actions, self.round_no, now)
        self._sync_gateway(receipts)
        return RoundOutcome(self.round_no, plan, actions, receipts, diagnostics)

    def _sync_gateway(self, receipts: Iterable[Receipt]):
        for r in receipts:
            if not r.accepted:
                continue
            if r.action == "stop":
                self.gateway.note_stopped(r.task)
            elif r.action in ("start", "handoff"):
                self.gateway.note_started(r.task, r.edge)

    def dispatch_pinned(self, tid: TaskId, device: str, now: int) -> list[Receipt]:
        receipts = self.executor.apply_actions(
            ActionSet(starts=((tid, device),)), self.round_no, now
        )
        self._sync_gateway(receipts)
        return receipts

    def note_completed(self, tid: TaskId, now: int, unload: bool) -> list[Receipt]:
        """Record completion; with unloading enabled the task is also removed
        from its device so it stops occupying resources."""
        self.executor.mark_completed(tid, now)
        self.completed.add(tid)
        if not unload:
            return []
        receipts = self.executor.unload_completed(tid, self.round_no, now)
        if receipts and receipts[0].accepted:
            self.gateway.note_stopped(tid)
        return receipts

    def all_completed(self) -> bool:
        return len(self.completed) == len(self.graph)


def resolve_planner(scenario: Scenario, label: str) -> tuple[Planner, str, bool]:
    """Map a strategy label to (planner, canonical label, periodic rounds).

    Labels: ``local``, ``static``, ``dynamic`` (scenario's default variant) or
    ``dynamic-<variant>``. Only dynamic strategies reschedule periodically.
    """
    if label == "local":
        mapping = {tid: spec.owner for tid, spec in scenario.graph.tasks.items()}
        return FixedPlanner(mapping, variant="local"), "local", False
    if label == "static":
        missing = [
            tid
            for tid in sorted(scenario.graph.tasks)
            if tid not in scenario.pins and tid not in scenario.strategy.static_map
        ]
        if missing:
            raise ModelError(f"static strategy: static_map misses tasks {missing}")
        mapping = {
            tid: scenario.strategy.static_map[tid]
            for tid in scenario.graph.tasks
            if tid not in scenario.pins
        }
        return FixedPlanner(mapping, variant="static"), "static", False
    if label == "dynamic":
        variant = scenario.strategy.variant
    elif label.startswith("dynamic-"):
        variant = label.split("-", 1)[1]
    else:
        raise ModelError(f"unknown strategy {label!r}")
    cfg = SchedulerConfig(
        weights=scenario.variant_weights(variant),
        reschedule_interval_ms=scenario.sim.reschedule_tick_ms,
        variant_name=variant,
    )
    return DynamicPlanner(cfg), f"dynamic-{variant}", True


def make_controller(
    scenario: Scenario,
    strategy: str = "dynamic",
    force_reassign: bool = False,
) -> tuple[RoundController, str, bool]:
    """Wire gateway, executor and planner for one scenario run."""
    planner, label, periodic = resolve_planner(scenario, strategy)
    gateway = Gateway(staleness_window_ms=scenario.sim.staleness_window_ms)
    for eid, spec in sorted(scenario.edges.items()):
        gateway.register(
            eid,
            schedulable=True,
            cpu_capacity=spec.cpu_capacity,
            mem_capacity=spec.mem_capacity,
            link_capacity={r: l.thp_capacity for r, l in spec.links.items()},
        )
    for rid, spec in sorted(scenario.robots.items()):
        gateway.register(
            rid,
            schedulable=False,
            cpu_capacity=spec.cpu_capacity,
            mem_capacity=spec.mem_capacity,
        )
    executor = Executor(
        LoopbackTransport(),
        start_latency_ms=scenario.sim.start_latency_ms,
        handoff_penalty_ms=scenario.sim.handoff_penalty_ms,
    )
    pins = {} if label == "local" else dict(scenario.pins)
    controller = RoundController(
        graph=scenario.graph,
        pins=pins,
        planner=planner,
        executor=executor,
        gateway=gateway,
        allow_preinit_handoff=scenario.sim.allow_preinit_handoff,
        force_reassign=force_reassign,
    )
    return controller, label, periodic
