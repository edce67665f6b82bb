"""Core model types: validation, graph checks, serialization round-trips."""

from __future__ import annotations

import copy
import json
from random import Random

import pytest

from edgesched.errors import (
    ConfigError,
    CyclicGraph,
    DemandOutOfRange,
    InvalidWeights,
    ModelError,
    UnknownReference,
)
from edgesched.model import (
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
    accumulate_usage,
)
from edgesched.scenario import load_scenario, validate_scenario

from helpers import rand_graph


def make_config():
    return {
        "edges": {"e1": {}, "e2": {}},
        "robots": {"r1": {}},
        "tasks": {
            "a": {"owner": "r1", "cpu": 10, "mem": 5, "thp": 5, "work_ms": 1000},
            "b": {"owner": "r1", "cpu": 10, "mem": 5, "thp": 5, "predecessors": ["a"], "work_ms": 1000},
            "c": {"owner": "r1", "cpu": 10, "mem": 5, "thp": 5, "predecessors": ["b"], "work_ms": 1000},
        },
        "strategy": {"kind": "dynamic", "variant": "all"},
        "seed": 7,
        "sim": {},
    }


def test_demand_bounds():
    ResourceDemand(0, 0, 0)
    ResourceDemand(100, 100, 100)
    with pytest.raises(DemandOutOfRange):
        ResourceDemand(cpu_pct=120)
    with pytest.raises(DemandOutOfRange):
        ResourceDemand(mem_pct=-1)


def test_task_spec_rejects_self_predecessor():
    with pytest.raises(CyclicGraph) as err:
        TaskSpec(id="x", owner="r1", predecessors=frozenset({"x"}))
    assert "x" in str(err.value)


def test_graph_chain_depth():
    cfg = make_config()
    scenario = validate_scenario(cfg)
    assert scenario.graph.depth() == 3
    assert len(scenario.graph) == 3


def test_graph_dangling_predecessor():
    with pytest.raises(UnknownReference):
        TaskGraph([TaskSpec(id="a", owner="r1", predecessors=frozenset({"ghost"}))])


def test_graph_cycle_detection_names_cycle():
    specs = [
        TaskSpec(id="a", owner="r1", predecessors=frozenset({"b"})),
        TaskSpec(id="b", owner="r1", predecessors=frozenset({"a"})),
    ]
    with pytest.raises(CyclicGraph) as err:
        TaskGraph(specs)
    assert set(err.value.cycle) >= {"a", "b"}


def test_graph_random_dags_and_injected_back_edges():
    rng = Random(1234)
    checked = 0
    for _ in range(200):
        graph = rand_graph(rng, rng.randrange(2, 9), ["r1", "r2"], edge_prob=0.4)
        with_preds = [s for s in graph if s.predecessors]
        if not with_preds:
            continue
        # Close one existing dependency into a loop: if victim depends on
        # pred, adding victim to pred's predecessors must be rejected.
        victim = rng.choice(with_preds)
        pred = sorted(victim.predecessors)[0]
        specs = []
        for spec in graph:
            if spec.id == pred:
                specs.append(
                    TaskSpec(
                        id=spec.id,
                        owner=spec.owner,
                        demand=spec.demand,
                        priority=spec.priority,
                        predecessors=spec.predecessors | {victim.id},
                    )
                )
            else:
                specs.append(spec)
        with pytest.raises(CyclicGraph):
            TaskGraph(specs)
        checked += 1
    assert checked >= 100


def test_weight_vector_validation():
    with pytest.raises(InvalidWeights):
        WeightVector(cpu=0.5, mem=0.5, net=0.5, task=0.5)
    with pytest.raises(InvalidWeights):
        WeightVector(cpu=1.2, mem=-0.2, net=0.0, task=0.0)
    for vec in WEIGHT_VARIANTS.values():
        assert abs(vec.cpu + vec.mem + vec.net + vec.task - 1.0) <= 1e-9


def test_snapshot_validation():
    edge = EdgeState(id="e1", links={"r1": LinkState()}, running_tasks=frozenset({"t"}))
    snap = SystemSnapshot(timestamp=5, edges={"e1": edge}, placements={"t": "e1"})
    assert snap.placements["t"] == "e1"
    with pytest.raises(UnknownReference):
        SystemSnapshot(timestamp=5, edges={"e1": edge}, placements={"t": "e9"})
    with pytest.raises(ModelError):
        # placement not reflected in running_tasks
        SystemSnapshot(
            timestamp=5,
            edges={"e1": EdgeState(id="e1")},
            placements={"t": "e1"},
        )
    with pytest.raises(ModelError):
        # one task running on two edges
        SystemSnapshot(
            timestamp=5,
            edges={
                "e1": EdgeState(id="e1", running_tasks=frozenset({"t"})),
                "e2": EdgeState(id="e2", running_tasks=frozenset({"t"})),
            },
        )


def test_snapshot_round_trip():
    rng = Random(99)
    edges = {}
    for eid in ("e1", "e2"):
        edges[eid] = EdgeState(
            id=eid,
            cpu_used=rng.uniform(0, 80),
            mem_used=rng.uniform(0, 80),
            links={"r1": LinkState(thp_used=rng.uniform(0, 50))},
            running_tasks=frozenset({f"task_{eid}"}),
        )
    snap = SystemSnapshot(
        timestamp=1234,
        edges=edges,
        placements={"task_e1": "e1", "task_e2": "e2"},
    )
    restored = SystemSnapshot.from_dict(json.loads(json.dumps(snap.to_dict())))
    assert restored == snap


def test_plan_rejects_duplicates_and_recomputes_ledger():
    with pytest.raises(ModelError):
        AssignmentPlan(round=0, assignments=(("t", "e1"), ("t", "e2")))
    demands = {
        "a": ResourceDemand(10.5, 3.25, 1.0),
        "b": ResourceDemand(20.25, 6.5, 2.0),
        "c": ResourceDemand(30.125, 9.75, 3.0),
    }
    plan = AssignmentPlan(
        round=1,
        assignments=(("a", "e1"), ("b", "e2"), ("c", "e1")),
        expected_usage={
            "e1": accumulate_usage([demands["a"], demands["c"]]),
            "e2": accumulate_usage([demands["b"]]),
        },
    )
    # Exactly recomputable from assignments + demands, in assignment order.
    rebuilt: dict[str, DemandTotals] = {}
    for tid, eid in plan.assignments:
        rebuilt[eid] = rebuilt.get(eid, DemandTotals()).plus(demands[tid])
    assert rebuilt == dict(plan.expected_usage)


def test_validate_scenario_happy_path():
    scenario = validate_scenario(make_config())
    assert scenario.snapshot.timestamp == 0
    assert sorted(scenario.snapshot.edges) == ["e1", "e2"]
    assert scenario.seed == 7


def test_validate_scenario_self_loop_raises_cyclic():
    cfg = make_config()
    cfg["tasks"]["x"] = {
        "owner": "r1", "cpu": 1, "mem": 1, "thp": 1, "predecessors": ["x"],
    }
    with pytest.raises(CyclicGraph) as err:
        validate_scenario(cfg)
    assert "x" in str(err.value)


def test_validate_scenario_demand_out_of_range():
    cfg = make_config()
    cfg["tasks"]["a"]["cpu"] = 120
    with pytest.raises(DemandOutOfRange):
        validate_scenario(cfg)


def test_validate_scenario_reports_every_violation():
    cfg = make_config()
    cfg["tasks"]["a"]["cpu"] = 120
    cfg["tasks"]["b"]["predecessors"] = ["ghost"]
    cfg["tasks"]["x"] = {"owner": "r1", "predecessors": ["x"]}
    with pytest.raises(ConfigError) as err:
        validate_scenario(cfg)
    text = str(err.value)
    assert len(err.value.violations) >= 3
    assert "120" in text and "ghost" in text and "x" in text


def test_validate_scenario_unknown_keys_hard_error():
    cfg = make_config()
    cfg["grues"] = {}
    with pytest.raises(ModelError) as err:
        validate_scenario(cfg)
    assert "grues" in str(err.value)
    cfg = make_config()
    cfg["tasks"]["a"]["sharpness"] = 11
    with pytest.raises(ModelError):
        validate_scenario(cfg)


def test_builtin_scenarios_load():
    for name in ("scenario1", "scenario2"):
        scenario = load_scenario(name)
        assert len(scenario.graph) == 13
        assert len(scenario.edges) == 3
        assert len(scenario.robots) == 3
        assert scenario.graph.depth() == 3


def test_subgraph_without_strips_predecessors():
    scenario = validate_scenario(make_config())
    sub = scenario.graph.subgraph_without({"a"})
    assert "a" not in sub
    assert sub.tasks["b"].predecessors == frozenset()
    assert sub.tasks["c"].predecessors == {"b"}


def test_config_reference_copy_semantics():
    cfg = make_config()
    snapshot_before = copy.deepcopy(cfg)
    validate_scenario(cfg)
    assert cfg == snapshot_before  # validation never mutates the input
