"""Deterministic discrete-event simulator of edges, robots and tasks.

Time is integer milliseconds. Work is measured in work-units where one unit
equals one millisecond of execution on an uncontended speed-1.0 device. CPU
contention slows every task on a device proportionally; memory and link usage
are tracked for metrics but do not gate progress.

Event ordering at equal timestamps is fixed (completions first, then init
transitions, then telemetry, then scheduling), which makes every run a pure
function of (config, strategy, seed).
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from random import Random
from typing import Optional

from .control import make_controller
from .errors import Deadlock, ModelError
from .executor import LifecycleState, Receipt
from .gateway import (
    CompletionNotice,
    PinnedStartNotice,
    TelemetryMessage,
    encode_line,
    KIND_DEVICE,
    KIND_NETWORK,
    KIND_TASK,
)
from .metrics import DeviceSeries, MetricsReport
from .model import ResourceDemand, TaskId
from .scenario import Scenario
from .scheduler import messages_to_lines

EVENT_RANK = {
    "task_completed": 0,
    "handoff_done": 1,
    "task_started": 2,
    "telemetry_tick": 3,
    "reschedule_tick": 4,
}

STRATEGY_LABELS = (
    "local",
    "static",
    "dynamic",
    "dynamic-cpu",
    "dynamic-mem",
    "dynamic-net",
    "dynamic-all",
)


def contention_service_rate(cpu_capacity: float, total_cpu_demand: float) -> float:
    """Progress multiplier under proportional CPU sharing.

    Below (or exactly at) full commitment every task runs at full speed; past
    it, everything on the device slows by capacity / total demand.
    """
    if total_cpu_demand <= 0:
        return 1.0
    return min(1.0, cpu_capacity / total_cpu_demand)


@dataclass
class _Occupant:
    demand: ResourceDemand
    owner: str


@dataclass
class _Device:
    id: str
    is_edge: bool
    cpu_capacity: float
    mem_capacity: float
    speed_factor: float
    base_cpu: float
    base_mem: float
    link_capacity: dict[str, float] = field(default_factory=dict)
    base_link: dict[str, float] = field(default_factory=dict)
    occupants: dict[TaskId, _Occupant] = field(default_factory=dict)

    def eff_cpu_total(self) -> float:
        return sum(
            o.demand.cpu_pct / self.speed_factor for o in self.occupants.values()
        )

    def cpu_pct(self) -> float:
        return min(100.0, self.base_cpu + self.eff_cpu_total())

    def mem_pct(self) -> float:
        return min(
            100.0,
            self.base_mem + sum(o.demand.mem_pct for o in self.occupants.values()),
        )

    def rate(self) -> float:
        return self.speed_factor * contention_service_rate(
            self.cpu_capacity, self.eff_cpu_total()
        )


@dataclass
class _TaskRun:
    tid: TaskId
    owner: str
    work_total: float
    done: float = 0.0
    gen: int = 0


@dataclass
class RunResult:
    report: MetricsReport
    event_lines: list[str]
    action_lines: list[str]
    trace_lines: list[str]
    assignment_lines: list[str]
    diagnostics: list[str]


class SimEngine:
    """One scenario run under one strategy and seed."""

    def __init__(
        self,
        scenario: Scenario,
        strategy: str = "dynamic",
        seed: int = 1,
        force_reassign: bool = False,
        unload_completed: bool = True,
        collect_trace: bool = True,
    ):
        self.scenario = scenario
        self.seed = seed
        self.unload_enabled = unload_completed
        self.collect_trace = collect_trace
        self.sim = scenario.sim
        self.controller, label, periodic = make_controller(
            scenario, strategy, force_reassign=force_reassign
        )
        self.strategy_label = label
        self.periodic_rounds = periodic

        self.devices: dict[str, _Device] = {}
        for eid, spec in sorted(scenario.edges.items()):
            self.devices[eid] = _Device(
                id=eid,
                is_edge=True,
                cpu_capacity=spec.cpu_capacity,
                mem_capacity=spec.mem_capacity,
                speed_factor=spec.speed_factor,
                base_cpu=spec.cpu_used,
                base_mem=spec.mem_used,
                link_capacity={r: l.thp_capacity for r, l in spec.links.items()},
                base_link={r: l.thp_used for r, l in spec.links.items()},
            )
        for rid, spec in sorted(scenario.robots.items()):
            self.devices[rid] = _Device(
                id=rid,
                is_edge=False,
                cpu_capacity=spec.cpu_capacity,
                mem_capacity=spec.mem_capacity,
                speed_factor=spec.speed_factor,
                base_cpu=spec.cpu_used,
                base_mem=spec.mem_used,
            )

        self.tasks: dict[TaskId, _TaskRun] = {}
        for tid, spec in sorted(scenario.graph.tasks.items()):
            jitter = Random(f"{seed}:{tid}").uniform(
                1.0 - self.sim.work_jitter, 1.0 + self.sim.work_jitter
            )
            self.tasks[tid] = _TaskRun(
                tid=tid, owner=spec.owner, work_total=scenario.work_ms[tid] * jitter
            )

        self.now = 0
        self.heap: list[tuple[int, int, str, str, int]] = []
        self.pending_round_times: set[int] = set()
        self.last_advance = 0
        self.last_progress_ms = 0
        self.end_time: Optional[int] = None
        self.event_lines: list[str] = []
        self.trace_lines: list[str] = []
        self.diagnostics: list[str] = []
        self.series = {did: DeviceSeries() for did in sorted(self.devices)}
        self.handoffs = 0
        self.restarts = 0
        self.completed_at: dict[TaskId, int] = {}
        self.completed_on: dict[TaskId, Optional[str]] = {}
        self.runnable_at: dict[TaskId, int] = {tid: 0 for tid in self.tasks}
        # Inter-edge transfer load: task -> [(source_edge, robot, thp_pct)].
        self.surcharges: dict[TaskId, list[tuple[str, str, float]]] = {}

    # -- event plumbing ----------------------------------------------------

    def _push(self, t: int, kind: str, key: str = "", gen: int = 0):
        heapq.heappush(self.heap, (t, EVENT_RANK[kind], key, kind, gen))

    def _log_event(self, t: int, kind: str, **detail):
        record = {"t": t, "kind": kind}
        record.update(detail)
        self.event_lines.append(json.dumps(record, sort_keys=True))

    def _trace(self, msg):
        if self.collect_trace:
            self.trace_lines.append(encode_line(msg))

    def _request_round(self, t: int):
        if t not in self.pending_round_times:
            self.pending_round_times.add(t)
            self._push(t, "reschedule_tick")

    # -- physics -------------------------------------------------------------

    def _advance(self, t: int):
        dt = t - self.last_advance
        if dt <= 0:
            return
        executor = self.controller.executor
        for did in sorted(self.devices):
            device = self.devices[did]
            if not device.occupants:
                continue
            rate = device.rate()
            for tid in sorted(device.occupants):
                lc = executor.lifecycles.get(tid)
                if lc is not None and lc.state is LifecycleState.RUNNING:
                    run = self.tasks[tid]
                    run.done = min(run.work_total, run.done + rate * dt)
        self.last_advance = t

    def _reschedule_completions(self, t: int):
        """Refresh predicted completion events for every running task."""
        executor = self.controller.executor
        for did in sorted(self.devices):
            device = self.devices[did]
            if not device.occupants:
                continue
            rate = device.rate()
            for tid in sorted(device.occupants):
                lc = executor.lifecycles.get(tid)
                if lc is None or lc.state is not LifecycleState.RUNNING:
                    continue
                run = self.tasks[tid]
                run.gen += 1
                remaining = run.work_total - run.done
                finish = t + max(1, math.ceil(remaining / rate - 1e-9))
                self._push(finish, "task_completed", tid, run.gen)

    def _occupy(self, tid: TaskId, device_id: str, t: int):
        spec = self.scenario.graph.tasks[tid]
        self.devices[device_id].occupants[tid] = _Occupant(
            demand=spec.demand, owner=spec.owner
        )
        # Input produced on a different edge is streamed from there while the
        # task runs: the source edge's link to the owner carries an extra copy
        # of the task's throughput demand. Input from the owner robot itself
        # is the normal path and costs nothing extra.
        sources = sorted(
            {
                self.completed_on[p]
                for p in spec.predecessors
                if self.completed_on.get(p) not in (None, device_id, spec.owner)
            }
        )
        self.surcharges[tid] = [
            (src, spec.owner, spec.demand.thp_pct) for src in sources
        ]

    def _vacate(self, tid: TaskId):
        for device in self.devices.values():
            device.occupants.pop(tid, None)
        self.surcharges.pop(tid, None)

    def _link_used(self, device_id: str, robot: str) -> float:
        device = self.devices[device_id]
        used = device.base_link.get(robot, 0.0)
        for o in device.occupants.values():
            if o.owner == robot:
                used += o.demand.thp_pct
        for entries in self.surcharges.values():
            for src, rob, thp in entries:
                if src == device_id and rob == robot:
                    used += thp
        return used

    def _thp_total(self, device_id: str) -> float:
        device = self.devices[device_id]
        return sum(self._link_used(device_id, r) for r in sorted(device.link_capacity))

    # -- event handlers --------------------------------------------------------

    def _apply_receipts(self, receipts: list[Receipt], t: int):
        for r in receipts:
            if not r.accepted:
                continue
            if r.action in ("start", "handoff"):
                if self.tasks[r.task].done > 0 and r.action == "start":
                    self.restarts += 1
                self._vacate(r.task)
                self._occupy(r.task, r.edge, t)
                lc = self.controller.executor.lifecycle(r.task)
                kind = "handoff_done" if r.action == "handoff" else "task_started"
                self._push(lc.ready_at, kind, r.task)
                if r.action == "handoff":
                    self.handoffs += 1
                    self._log_event(t, "handoff_begun", task=r.task, edge=r.edge)
                self.last_progress_ms = t
            elif r.action in ("stop", "unload"):
                self._vacate(r.task)
        self._reschedule_completions(t)

    def _run_round(self, t: int):
        outcome = self.controller.run_round(t)
        self._log_event(t, "reschedule_tick", round=outcome.round_no)
        self.diagnostics.extend(outcome.diagnostics)
        self._apply_receipts(outcome.receipts, t)

    def _dispatch_pinned(self, t: int):
        for tid, device in self.controller.pending_pinned():
            receipts = self.controller.dispatch_pinned(tid, device, t)
            self._trace(
                PinnedStartNotice(source=device, timestamp=t, task=tid, device=device)
            )
            self._apply_receipts(receipts, t)

    def _handle_started(self, tid: TaskId, t: int, kind: str):
        lc = self.controller.executor.lifecycle(tid)
        if lc.state is not LifecycleState.STARTING or lc.ready_at != t:
            return  # superseded dispatch
        self.controller.executor.mark_running(tid, t)
        self._log_event(t, kind, task=tid, device=lc.placed_on)
        self._reschedule_completions(t)

    def _handle_completed(self, tid: TaskId, gen: int, t: int):
        run = self.tasks[tid]
        if gen != run.gen:
            return  # stale prediction
        lc = self.controller.executor.lifecycle(tid)
        if lc.state is not LifecycleState.RUNNING:
            return
        run.done = run.work_total
        run.gen += 1
        device = lc.placed_on
        self.completed_at[tid] = t
        self.completed_on[tid] = device
        self.last_progress_ms = t
        self._log_event(t, "task_completed", task=tid, device=device)
        self._trace(CompletionNotice(source=run.owner, timestamp=t, task=tid))
        self.controller.note_completed(tid, t, unload=self.unload_enabled)
        if self.unload_enabled:
            self._vacate(tid)
        for succ in sorted(self.scenario.graph.successors(tid)):
            if self.controller.is_runnable(succ) and succ not in self.completed_at:
                self.runnable_at[succ] = t
        self._dispatch_pinned(t)
        self._reschedule_completions(t)
        self._request_round(t)
        if self.controller.all_completed():
            self.end_time = t + self.sim.cooldown_ms

    def _sample_telemetry(self, t: int):
        gateway = self.controller.gateway
        for did in sorted(self.devices):
            device = self.devices[did]
            cpu = device.cpu_pct()
            mem = device.mem_pct()
            thp = self._thp_total(did) if device.is_edge else 0.0
            self.series[did].sample(t, cpu, mem, thp)
            msg = TelemetryMessage(
                source=did, timestamp=t, kind=KIND_DEVICE, cpu_used=cpu, mem_used=mem
            )
            gateway.ingest(msg)
            self._trace(msg)
            if device.is_edge:
                net = TelemetryMessage(
                    source=did,
                    timestamp=t,
                    kind=KIND_NETWORK,
                    link_used={
                        r: self._link_used(did, r) for r in sorted(device.link_capacity)
                    },
                )
                gateway.ingest(net)
                self._trace(net)
                if device.occupants:
                    observed = TelemetryMessage(
                        source=did,
                        timestamp=t,
                        kind=KIND_TASK,
                        task_demands={
                            tid: occ.demand
                            for tid, occ in sorted(device.occupants.items())
                        },
                    )
                    gateway.ingest(observed)
                    self._trace(observed)
        executor = self.controller.executor
        for tid in sorted(self.tasks):
            lc = executor.lifecycles.get(tid)
            if lc is not None and lc.state is LifecycleState.RUNNING:
                self._log_event(
                    t,
                    "task_progress",
                    task=tid,
                    device=lc.placed_on,
                    done_ms=round(self.tasks[tid].done, 3),
                )

    # -- stall / deadlock detection ---------------------------------------------

    def _check_stalled(self, t: int):
        executor = self.controller.executor
        for lc in executor.lifecycles.values():
            if lc.state in (LifecycleState.RUNNING, LifecycleState.STARTING):
                self.last_progress_ms = t
                return
        window = max(4 * self.sim.reschedule_tick_ms, 8000)
        if t - self.last_progress_ms <= window:
            return
        blocked = []
        for tid in sorted(self.tasks):
            if tid in self.completed_at:
                continue
            spec = self.scenario.graph.tasks[tid]
            missing = sorted(p for p in spec.predecessors if p not in self.completed_at)
            lc = executor.lifecycles.get(tid)
            state = lc.state.value if lc else "pending"
            blocked.append(f"{tid}(state={state}, waiting_on={missing})")
        raise Deadlock(
            f"no progress since t={self.last_progress_ms}ms; incomplete: "
            + ", ".join(blocked)
        )

    # -- main loop ------------------------------------------------------------------

    def run(self) -> RunResult:
        self._push(0, "telemetry_tick")
        self._request_round(0)
        self._dispatch_pinned(0)

        while self.heap:
            t, _, key, kind, gen = heapq.heappop(self.heap)
            if self.end_time is not None and t > self.end_time:
                break
            if t > self.sim.max_sim_ms:
                self._check_stalled(t)
                raise Deadlock(f"exceeded max_sim_ms={self.sim.max_sim_ms}")
            self.now = t
            self._advance(t)
            if kind == "task_completed":
                self._handle_completed(key, gen, t)
            elif kind in ("task_started", "handoff_done"):
                self._handle_started(key, t, kind)
            elif kind == "telemetry_tick":
                self._sample_telemetry(t)
                self._check_stalled(t)
                if (
                    self.end_time is None
                    or t + self.sim.telemetry_tick_ms <= self.end_time
                ):
                    self._push(t + self.sim.telemetry_tick_ms, "telemetry_tick")
            elif kind == "reschedule_tick":
                self.pending_round_times.discard(t)
                self._run_round(t)
                if self.periodic_rounds and t % self.sim.reschedule_tick_ms == 0:
                    nxt = t + self.sim.reschedule_tick_ms
                    if self.end_time is None or nxt <= self.end_time:
                        self._request_round(nxt)

        if not self.controller.all_completed():
            missing = sorted(set(self.tasks) - set(self.completed_at))
            raise Deadlock(f"event queue drained with incomplete tasks: {missing}")

        return RunResult(
            report=self._build_report(),
            event_lines=list(self.event_lines),
            action_lines=self.controller.executor.action_log_lines(),
            trace_lines=list(self.trace_lines),
            assignment_lines=messages_to_lines(self.controller.assignment_log),
            diagnostics=list(self.diagnostics),
        )

    def _build_report(self) -> MetricsReport:
        latencies = {
            tid: float(self.completed_at[tid] - self.runnable_at[tid])
            for tid in sorted(self.tasks)
        }
        return MetricsReport(
            scenario=self.scenario.name,
            strategy=self.strategy_label,
            seed=self.seed,
            series=self.series,
            edge_ids=sorted(self.scenario.edges),
            robot_ids=sorted(self.scenario.robots),
            task_latency_ms=latencies,
            task_runnable_at=dict(self.runnable_at),
            task_completed_at=dict(self.completed_at),
            handoffs=self.handoffs,
            restarts=self.restarts,
            unassigned_warnings=sum(
                1 for d in self.diagnostics if "unassigned" in d
            ),
            last_completion_ms=max(self.completed_at.values(), default=0),
            duration_ms=self.now,
        )


def run_scenario(
    scenario: Scenario,
    strategy: str = "dynamic",
    seed: int = 1,
    force_reassign: bool = False,
    unload_completed: bool = True,
) -> RunResult:
    """Run one scenario to completion and return its metrics and logs."""
    engine = SimEngine(
        scenario,
        strategy=strategy,
        seed=seed,
        force_reassign=force_reassign,
        unload_completed=unload_completed,
    )
    return engine.run()


def compare_strategies(scenario: Scenario, strategies: list[str], seeds: list[int]):
    """Run every (strategy, seed) cell and aggregate mean/STD per metric.

    Cells run as isolated engine instances on a small thread pool; results
    are collected in deterministic order.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .metrics import build_comparison

    if len(strategies) < 2:
        raise ModelError("need at least two strategies to compare")
    if not seeds:
        raise ModelError("need at least one seed")

    def one(args):
        label, seed = args
        return label, seed, run_scenario(scenario, strategy=label, seed=seed)

    cells = [(label, seed) for label in strategies for seed in seeds]
    per_run: dict[str, dict[int, MetricsReport]] = {s: {} for s in strategies}
    with ThreadPoolExecutor(max_workers=min(4, len(cells))) as pool:
        for label, seed, result in pool.map(one, cells):
            per_run[label][seed] = result.report
    return build_comparison(scenario.name, per_run, strategies, seeds), per_run
