"""Gateway: ingests profiler telemetry and produces consistent snapshots.

Three message kinds mirror the three profilers: ``device`` (CPU/memory usage
percents), ``network`` (per-robot link throughput usage) and ``task``
(per-task observed demand, smoothed into the demand catalog). Placements are
reported by the executor through ``note_started``/``note_stopped``; telemetry
never moves tasks.

Wire format is one JSON object per line with fields ``v, src, ts, kind,
payload``. Simulation bypasses the wire and calls ``ingest`` directly with
the same message objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from .errors import NoFreshEdges, ProtocolError, UnknownSource
from .model import (
    EdgeId,
    EdgeState,
    LinkState,
    ResourceDemand,
    RobotId,
    SystemSnapshot,
    TaskId,
)

WIRE_VERSION = 1

KIND_DEVICE = "device"
KIND_NETWORK = "network"
KIND_TASK = "task"
KIND_COMPLETED = "completed"
KIND_PINNED_STARTED = "pinned_started"


@dataclass(frozen=True)
class TelemetryMessage:
    """One profiler report from one source device."""

    source: str
    timestamp: int
    kind: str
    cpu_used: Optional[float] = None
    mem_used: Optional[float] = None
    link_used: Mapping[RobotId, float] = field(default_factory=dict)
    task_demands: Mapping[TaskId, ResourceDemand] = field(default_factory=dict)

    def payload(self) -> dict:
        if self.kind == KIND_DEVICE:
            return {"cpu_used": self.cpu_used, "mem_used": self.mem_used}
        if self.kind == KIND_NETWORK:
            return {"links": dict(sorted(self.link_used.items()))}
        if self.kind == KIND_TASK:
            return {
                "tasks": {
                    tid: {"cpu": d.cpu_pct, "mem": d.mem_pct, "thp": d.thp_pct}
                    for tid, d in sorted(self.task_demands.items())
                }
            }
        raise ProtocolError(f"unknown telemetry kind {self.kind!r}")


@dataclass(frozen=True)
class CompletionNotice:
    """Prompt from a robot that one of its tasks finished."""

    source: str
    timestamp: int
    task: TaskId


@dataclass(frozen=True)
class PinnedStartNotice:
    """A pinned task was launched outside the scheduler on ``device``."""

    source: str
    timestamp: int
    task: TaskId
    device: str


WireMessage = Union[TelemetryMessage, CompletionNotice, PinnedStartNotice]


def encode_line(msg: WireMessage) -> str:
    if isinstance(msg, CompletionNotice):
        body = {"task": msg.task}
        kind = KIND_COMPLETED
    elif isinstance(msg, PinnedStartNotice):
        body = {"task": msg.task, "device": msg.device}
        kind = KIND_PINNED_STARTED
    else:
        body = msg.payload()
        kind = msg.kind
    return json.dumps(
        {"v": WIRE_VERSION, "src": msg.source, "ts": msg.timestamp, "kind": kind, "payload": body},
        sort_keys=True,
    )


def parse_line(line: str) -> WireMessage:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"bad json: {exc}") from exc
    if not isinstance(data, dict):
        raise ProtocolError("message must be a json object")
    try:
        version = data["v"]
        src = data["src"]
        ts = data["ts"]
        kind = data["kind"]
        payload = data["payload"]
    except KeyError as exc:
        raise ProtocolError(f"missing field {exc}") from exc
    if version != WIRE_VERSION:
        raise ProtocolError(f"unsupported version {version!r}")
    if not isinstance(ts, int):
        raise ProtocolError(f"ts must be an integer, got {ts!r}")
    if kind == KIND_DEVICE:
        return TelemetryMessage(
            source=src,
            timestamp=ts,
            kind=kind,
            cpu_used=float(payload["cpu_used"]),
            mem_used=float(payload["mem_used"]),
        )
    if kind == KIND_NETWORK:
        return TelemetryMessage(
            source=src,
            timestamp=ts,
            kind=kind,
            link_used={r: float(u) for r, u in payload["links"].items()},
        )
    if kind == KIND_TASK:
        try:
            demands = {
                tid: ResourceDemand(float(d["cpu"]), float(d["mem"]), float(d["thp"]))
                for tid, d in payload["tasks"].items()
            }
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"bad task payload: {exc}") from exc
        return TelemetryMessage(source=src, timestamp=ts, kind=kind, task_demands=demands)
    if kind == KIND_COMPLETED:
        return CompletionNotice(source=src, timestamp=ts, task=payload["task"])
    if kind == KIND_PINNED_STARTED:
        return PinnedStartNotice(
            source=src, timestamp=ts, task=payload["task"], device=payload["device"]
        )
    raise ProtocolError(f"unknown kind {kind!r}")


class DemandCatalog:
    """Per-task demand estimates learned from task-profiler observations."""

    def __init__(self, alpha: float = 0.3):
        self.alpha = alpha
        self._demands: dict[TaskId, ResourceDemand] = {}

    def observe(self, task: TaskId, observed: ResourceDemand):
        prior = self._demands.get(task)
        if prior is None:
            self._demands[task] = observed
            return
        a = self.alpha
        self._demands[task] = ResourceDemand(
            a * observed.cpu_pct + (1 - a) * prior.cpu_pct,
            a * observed.mem_pct + (1 - a) * prior.mem_pct,
            a * observed.thp_pct + (1 - a) * prior.thp_pct,
        )

    def get(self, task: TaskId) -> Optional[ResourceDemand]:
        return self._demands.get(task)

    def as_dict(self) -> dict[TaskId, ResourceDemand]:
        return dict(self._demands)


@dataclass
class _SourceState:
    schedulable: bool
    cpu_capacity: float
    mem_capacity: float
    link_capacity: dict[RobotId, float]
    cpu_used: float = 0.0
    mem_used: float = 0.0
    link_used: dict[RobotId, float] = field(default_factory=dict)
    last_ts: dict[str, int] = field(default_factory=dict)

    def newest(self) -> Optional[int]:
        return max(self.last_ts.values(), default=None)


class Gateway:
    """Central store of the freshest per-device state.

    Writes go through a single caller (the round controller); snapshots are
    fresh copies, so readers never observe partial updates.
    """

    def __init__(self, staleness_window_ms: int = 5000, alpha: float = 0.3):
        self.staleness_window_ms = staleness_window_ms
        self.catalog = DemandCatalog(alpha=alpha)
        self._sources: dict[str, _SourceState] = {}
        self._placements: dict[TaskId, str] = {}
        self.dropped_stale = 0
        self.stale_excluded: list[tuple[int, str]] = []

    def register(
        self,
        source: str,
        *,
        schedulable: bool,
        cpu_capacity: float = 100.0,
        mem_capacity: float = 100.0,
        link_capacity: Optional[Mapping[RobotId, float]] = None,
    ):
        self._sources[source] = _SourceState(
            schedulable=schedulable,
            cpu_capacity=cpu_capacity,
            mem_capacity=mem_capacity,
            link_capacity=dict(link_capacity or {}),
        )

    @property
    def sources(self) -> list[str]:
        return sorted(self._sources)

    def ingest(self, msg: TelemetryMessage):
        """Apply one telemetry message; late messages are dropped and counted."""
        state = self._sources.get(msg.source)
        if state is None:
            raise UnknownSource(msg.source)
        last = state.last_ts.get(msg.kind)
        if last is not None and msg.timestamp < last:
            self.dropped_stale += 1
            return
        state.last_ts[msg.kind] = msg.timestamp
        if msg.kind == KIND_DEVICE:
            state.cpu_used = msg.cpu_used
            state.mem_used = msg.mem_used
        elif msg.kind == KIND_NETWORK:
            state.link_used.update(msg.link_used)
        elif msg.kind == KIND_TASK:
            for tid, demand in sorted(msg.task_demands.items()):
                self.catalog.observe(tid, demand)
        else:
            raise ProtocolError(f"unknown telemetry kind {msg.kind!r}")

    # Placements are owned by the executor; the controller relays them here
    # so snapshots stay internally consistent.
    def note_started(self, task: TaskId, device: str):
        self._placements[task] = device

    def note_stopped(self, task: TaskId):
        self._placements.pop(task, None)

    def placements(self) -> dict[TaskId, str]:
        return dict(self._placements)

    def snapshot(self, now: int) -> SystemSnapshot:
        """Consistent view of all fresh schedulable edges at time ``now``.

        Edges whose newest telemetry is older than the staleness window are
        excluded (and recorded in ``stale_excluded``); if every edge is stale
        the snapshot cannot be formed and NoFreshEdges is raised.
        """
        edges: dict[EdgeId, EdgeState] = {}
        for source in sorted(self._sources):
            state = self._sources[source]
            if not state.schedulable:
                continue
            newest = state.newest()
            if newest is None or now - newest > self.staleness_window_ms:
                self.stale_excluded.append((now, source))
                continue
            links = {
                robot: LinkState(
                    thp_capacity=cap, thp_used=state.link_used.get(robot, 0.0)
                )
                for robot, cap in sorted(state.link_capacity.items())
            }
            running = frozenset(
                tid for tid, dev in self._placements.items() if dev == source
            )
            edges[source] = EdgeState(
                id=source,
                cpu_capacity=state.cpu_capacity,
                mem_capacity=state.mem_capacity,
                cpu_used=state.cpu_used,
                mem_used=state.mem_used,
                links=links,
                running_tasks=running,
            )
        if not edges:
            raise NoFreshEdges(f"all edges stale at t={now}")
        placements = {
            tid: dev for tid, dev in self._placements.items() if dev in edges
        }
        return SystemSnapshot(timestamp=now, edges=edges, placements=placements)
