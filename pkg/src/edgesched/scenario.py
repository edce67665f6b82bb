"""Scenario configuration: parsing, validation and the shipped scenarios.

A scenario file is a JSON document with sections ``edges``, ``robots``,
``tasks``, ``weights``, ``strategy``, ``seed`` and ``sim`` (see the config
reference in the README). Unknown keys anywhere are a hard error, as are
cycles, dangling references and out-of-range demands; validation reports
every violation it finds, not just the first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

from .errors import ConfigError, EdgeSchedError, ModelError, UnknownReference
from .model import (
    EdgeId,
    EdgeState,
    LinkState,
    ResourceDemand,
    RobotId,
    SystemSnapshot,
    TaskGraph,
    TaskId,
    TaskSpec,
    WeightVector,
    WEIGHT_VARIANTS,
)

BUILTIN_SCENARIOS = ("scenario1", "scenario2")


@dataclass(frozen=True)
class DeviceSpec:
    """Config-side description of one device (edge or robot)."""

    id: str
    cpu_capacity: float = 100.0
    mem_capacity: float = 100.0
    cpu_used: float = 0.0
    mem_used: float = 0.0
    speed_factor: float = 1.0
    links: Mapping[RobotId, LinkState] = field(default_factory=dict)


@dataclass(frozen=True)
class StrategySpec:
    kind: str = "dynamic"  # local | static | dynamic
    variant: str = "all"
    static_map: Mapping[TaskId, EdgeId] = field(default_factory=dict)


@dataclass(frozen=True)
class SimParams:
    telemetry_tick_ms: int = 500
    reschedule_tick_ms: int = 2000
    start_latency_ms: int = 500
    handoff_penalty_ms: int = 1500
    staleness_window_ms: int = 5000
    cooldown_ms: int = 3000
    work_jitter: float = 0.15
    max_sim_ms: int = 3_600_000
    allow_preinit_handoff: bool = False


@dataclass(frozen=True)
class Scenario:
    """A validated scenario: the task graph, the initial system snapshot and
    everything the simulator and controllers need to run it."""

    name: str
    graph: TaskGraph
    snapshot: SystemSnapshot
    edges: Mapping[EdgeId, DeviceSpec]
    robots: Mapping[RobotId, DeviceSpec]
    pins: Mapping[TaskId, str]
    work_ms: Mapping[TaskId, float]
    weights: Mapping[str, WeightVector]
    strategy: StrategySpec
    seed: int
    sim: SimParams

    def variant_weights(self, variant: str) -> WeightVector:
        try:
            return self.weights[variant]
        except KeyError:
            raise ConfigError([UnknownReference(f"unknown weight variant {variant!r}")])

    def offloadable_tasks(self) -> list[TaskId]:
        return sorted(t for t in self.graph.tasks if t not in self.pins)


_EDGE_KEYS = {"cpu_capacity", "mem_capacity", "cpu_used", "mem_used", "speed_factor", "links"}
_ROBOT_KEYS = {"cpu_capacity", "mem_capacity", "cpu_used", "mem_used", "speed_factor"}
_LINK_KEYS = {"thp_capacity", "thp_used"}
_TASK_KEYS = {"owner", "cpu", "mem", "thp", "priority", "predecessors", "work_ms", "pin"}
_STRATEGY_KEYS = {"kind", "variant", "static_map"}
_SIM_KEYS = {
    "telemetry_tick_ms",
    "reschedule_tick_ms",
    "start_latency_ms",
    "handoff_penalty_ms",
    "staleness_window_ms",
    "cooldown_ms",
    "work_jitter",
    "max_sim_ms",
    "allow_preinit_handoff",
}
_TOP_KEYS = {"name", "edges", "robots", "tasks", "weights", "strategy", "seed", "sim"}
_WEIGHT_KEYS = {"cpu", "mem", "net", "task"}


def _check_keys(section: str, data: dict, allowed: set, problems: list):
    unknown = sorted(set(data) - allowed)
    if unknown:
        problems.append(ModelError(f"{section}: unknown keys {unknown}"))


def _number(section, data, key, default, problems, minimum=None):
    value = data.get(key, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        problems.append(ModelError(f"{section}.{key}: expected a number, got {value!r}"))
        return default
    if minimum is not None and value < minimum:
        problems.append(ModelError(f"{section}.{key}: must be >= {minimum}, got {value!r}"))
        return default
    return float(value)


def validate_scenario(config: dict, name: str = "scenario") -> Scenario:
    """Validate a parsed config document into a Scenario.

    Raises the single violation when there is exactly one, otherwise a
    ConfigError listing every violation found.
    """
    problems: list[Exception] = []
    if not isinstance(config, dict):
        raise ConfigError([ModelError("config must be a json object")])
    _check_keys("config", config, _TOP_KEYS, problems)
    name = config.get("name", name)

    robots: dict[str, DeviceSpec] = {}
    for rid, body in sorted(config.get("robots", {}).items()):
        body = body or {}
        _check_keys(f"robots.{rid}", body, _ROBOT_KEYS, problems)
        robots[rid] = DeviceSpec(
            id=rid,
            cpu_capacity=_number(f"robots.{rid}", body, "cpu_capacity", 100.0, problems, 1e-9),
            mem_capacity=_number(f"robots.{rid}", body, "mem_capacity", 100.0, problems, 1e-9),
            cpu_used=_number(f"robots.{rid}", body, "cpu_used", 0.0, problems, 0.0),
            mem_used=_number(f"robots.{rid}", body, "mem_used", 0.0, problems, 0.0),
            speed_factor=_number(f"robots.{rid}", body, "speed_factor", 0.35, problems, 1e-9),
        )

    edges: dict[str, DeviceSpec] = {}
    for eid, body in sorted(config.get("edges", {}).items()):
        body = body or {}
        _check_keys(f"edges.{eid}", body, _EDGE_KEYS, problems)
        links: dict[str, LinkState] = {}
        raw_links = body.get("links")
        if raw_links is None:
            # Default: a clean full-capacity link to every robot.
            links = {rid: LinkState() for rid in robots}
        else:
            for rid, lbody in sorted(raw_links.items()):
                lbody = lbody or {}
                _check_keys(f"edges.{eid}.links.{rid}", lbody, _LINK_KEYS, problems)
                if rid not in robots:
                    problems.append(
                        UnknownReference(f"edges.{eid}.links: unknown robot {rid!r}")
                    )
                    continue
                cap = _number(f"edges.{eid}.links.{rid}", lbody, "thp_capacity", 100.0, problems, 1e-9)
                used = _number(f"edges.{eid}.links.{rid}", lbody, "thp_used", 0.0, problems, 0.0)
                try:
                    links[rid] = LinkState(thp_capacity=cap, thp_used=used)
                except EdgeSchedError as exc:
                    problems.append(exc)
        edges[eid] = DeviceSpec(
            id=eid,
            cpu_capacity=_number(f"edges.{eid}", body, "cpu_capacity", 100.0, problems, 1e-9),
            mem_capacity=_number(f"edges.{eid}", body, "mem_capacity", 100.0, problems, 1e-9),
            cpu_used=_number(f"edges.{eid}", body, "cpu_used", 0.0, problems, 0.0),
            mem_used=_number(f"edges.{eid}", body, "mem_used", 0.0, problems, 0.0),
            speed_factor=_number(f"edges.{eid}", body, "speed_factor", 1.0, problems, 1e-9),
            links=links,
        )
    if set(robots) & set(edges):
        problems.append(ModelError(f"ids used for both edge and robot: {sorted(set(robots) & set(edges))}"))

    specs: list[TaskSpec] = []
    pins: dict[str, str] = {}
    work_ms: dict[str, float] = {}
    devices = set(robots) | set(edges)
    for tid, body in sorted(config.get("tasks", {}).items()):
        body = body or {}
        _check_keys(f"tasks.{tid}", body, _TASK_KEYS, problems)
        owner = body.get("owner")
        if owner not in robots:
            problems.append(UnknownReference(f"tasks.{tid}: unknown owner {owner!r}"))
            continue
        try:
            demand = ResourceDemand(
                cpu_pct=_number(f"tasks.{tid}", body, "cpu", 0.0, problems),
                mem_pct=_number(f"tasks.{tid}", body, "mem", 0.0, problems),
                thp_pct=_number(f"tasks.{tid}", body, "thp", 0.0, problems),
            )
        except EdgeSchedError as exc:
            problems.append(exc)
            # Placeholder keeps the task defined so one bad demand does not
            # cascade into dangling-reference noise for its successors.
            demand = ResourceDemand()
        preds = body.get("predecessors", [])
        if not isinstance(preds, list):
            problems.append(ModelError(f"tasks.{tid}.predecessors: expected a list"))
            preds = []
        try:
            specs.append(
                TaskSpec(
                    id=tid,
                    owner=owner,
                    demand=demand,
                    priority=int(body.get("priority", 0)),
                    predecessors=frozenset(preds),
                )
            )
        except EdgeSchedError as exc:
            problems.append(exc)
            continue
        work_ms[tid] = _number(f"tasks.{tid}", body, "work_ms", 10000.0, problems, 1e-9)
        pin = body.get("pin")
        if pin is not None:
            if pin not in devices:
                problems.append(UnknownReference(f"tasks.{tid}: unknown pin {pin!r}"))
            else:
                pins[tid] = pin

    graph: Optional[TaskGraph] = None
    try:
        graph = TaskGraph(specs)
    except EdgeSchedError as exc:
        problems.append(exc)

    weights = dict(WEIGHT_VARIANTS)
    for variant, body in sorted(config.get("weights", {}).items()):
        body = body or {}
        _check_keys(f"weights.{variant}", body, _WEIGHT_KEYS, problems)
        try:
            weights[variant] = WeightVector(
                cpu=float(body.get("cpu", 0.0)),
                mem=float(body.get("mem", 0.0)),
                net=float(body.get("net", 0.0)),
                task=float(body.get("task", 0.0)),
            )
        except EdgeSchedError as exc:
            problems.append(exc)

    strat_body = config.get("strategy", {}) or {}
    _check_keys("strategy", strat_body, _STRATEGY_KEYS, problems)
    kind = strat_body.get("kind", "dynamic")
    if kind not in ("local", "static", "dynamic"):
        problems.append(ModelError(f"strategy.kind: unknown kind {kind!r}"))
        kind = "dynamic"
    variant = strat_body.get("variant", "all")
    if variant not in weights:
        problems.append(UnknownReference(f"strategy.variant: unknown variant {variant!r}"))
        variant = "all"
    static_map = dict(strat_body.get("static_map", {}))
    for tid, eid in sorted(static_map.items()):
        if graph is not None and tid not in graph:
            problems.append(UnknownReference(f"strategy.static_map: unknown task {tid!r}"))
        if eid not in devices:
            problems.append(UnknownReference(f"strategy.static_map: unknown device {eid!r}"))
    strategy = StrategySpec(kind=kind, variant=variant, static_map=static_map)

    sim_body = config.get("sim", {}) or {}
    _check_keys("sim", sim_body, _SIM_KEYS, problems)
    sim_kwargs = {}
    defaults = SimParams()
    for key in _SIM_KEYS:
        if key not in sim_body:
            continue
        if key == "allow_preinit_handoff":
            sim_kwargs[key] = bool(sim_body[key])
        elif key == "work_jitter":
            sim_kwargs[key] = _number("sim", sim_body, key, defaults.work_jitter, problems, 0.0)
        else:
            sim_kwargs[key] = int(_number("sim", sim_body, key, getattr(defaults, key), problems, 1))
    sim = SimParams(**sim_kwargs)

    seed = config.get("seed", 1)
    if not isinstance(seed, int) or isinstance(seed, bool):
        problems.append(ModelError(f"seed: expected an integer, got {seed!r}"))
        seed = 1

    if not edges:
        problems.append(ModelError("config defines no edges"))
    if graph is not None and strategy.kind == "static":
        missing = [
            t for t in sorted(graph.tasks) if t not in pins and t not in static_map
        ]
        if missing:
            problems.append(ModelError(f"strategy.static_map misses tasks {missing}"))

    if problems:
        if len(problems) == 1:
            raise problems[0]
        raise ConfigError(problems)

    snapshot = SystemSnapshot(
        timestamp=0,
        edges={
            eid: EdgeState(
                id=eid,
                cpu_capacity=spec.cpu_capacity,
                mem_capacity=spec.mem_capacity,
                cpu_used=spec.cpu_used,
                mem_used=spec.mem_used,
                links=dict(spec.links),
            )
            for eid, spec in edges.items()
        },
    )
    return Scenario(
        name=name,
        graph=graph,
        snapshot=snapshot,
        edges=edges,
        robots=robots,
        pins=pins,
        work_ms=work_ms,
        weights=weights,
        strategy=strategy,
        seed=seed,
        sim=sim,
    )


def load_scenario(path_or_name: str) -> Scenario:
    """Load a scenario from a file path or a builtin name (scenario1/2)."""
    if path_or_name in BUILTIN_SCENARIOS:
        text = (
            resources.files("edgesched.scenarios")
            .joinpath(f"{path_or_name}.json")
            .read_text(encoding="utf-8")
        )
        default_name = path_or_name
    else:
        path = Path(path_or_name)
        if not path.is_file():
            raise ConfigError([ModelError(f"config file not found: {path}")])
        text = path.read_text(encoding="utf-8")
        default_name = path.stem
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([ModelError(f"config is not valid json: {exc}")]) from exc
    return validate_scenario(config, name=default_name)
