"""Shared test helpers: random model generators and the brute-force oracle.

The oracle reimplements per-round assignment from scratch on plain dicts:
naive repeated-scan topological ordering, direct headroom arithmetic, dense
ranking and an exhaustive argmax per task. It shares no code with the
scheduler; only the documented accounting discipline (expected usage with
self-exclusion and transfer for already-running tasks) is mirrored.
"""

from __future__ import annotations

from random import Random

from edgesched.model import (
    EdgeState,
    LinkState,
    ResourceDemand,
    SystemSnapshot,
    TaskGraph,
    TaskSpec,
    WeightVector,
)
from edgesched.scenario import validate_scenario


def rand_demand(rng: Random, hi: float = 40.0) -> ResourceDemand:
    return ResourceDemand(
        cpu_pct=rng.uniform(0.0, hi),
        mem_pct=rng.uniform(0.0, hi),
        thp_pct=rng.uniform(0.0, hi),
    )


def rand_weights(rng: Random) -> WeightVector:
    parts = [rng.random() + 0.05 for _ in range(4)]
    total = sum(parts)
    return WeightVector(
        cpu=parts[0] / total,
        mem=parts[1] / total,
        net=parts[2] / total,
        task=parts[3] / total,
    )


def rand_graph(rng: Random, n_tasks: int, robots: list[str], edge_prob=0.3) -> TaskGraph:
    ids = [f"t{i:02d}" for i in range(n_tasks)]
    specs = []
    for i, tid in enumerate(ids):
        preds = frozenset(ids[j] for j in range(i) if rng.random() < edge_prob)
        specs.append(
            TaskSpec(
                id=tid,
                owner=rng.choice(robots),
                demand=rand_demand(rng),
                priority=rng.randrange(3),
                predecessors=preds,
            )
        )
    return TaskGraph(specs)


def rand_snapshot(
    rng: Random,
    graph: TaskGraph,
    n_edges: int,
    robots: list[str],
):
    """Consistent random snapshot plus a matching completed set.

    Some runnable tasks are pre-placed on edges (exercising the scheduler's
    running-task accounting and the reward term); completed sets are closed
    under predecessors.
    """
    completed: set[str] = set()
    for tid in sorted(graph.tasks):
        if rng.random() < 0.25 and graph.tasks[tid].predecessors <= completed:
            completed.add(tid)
    runnable = [
        tid
        for tid in sorted(graph.tasks)
        if tid not in completed and graph.tasks[tid].predecessors <= completed
    ]
    edge_ids = [f"e{i}" for i in range(n_edges)]
    placements = {}
    for tid in runnable:
        if rng.random() < 0.5:
            placements[tid] = rng.choice(edge_ids)
    edges = {}
    for eid in edge_ids:
        links = {
            robot: LinkState(thp_capacity=100.0, thp_used=rng.uniform(0.0, 70.0))
            for robot in robots
        }
        edges[eid] = EdgeState(
            id=eid,
            cpu_used=rng.uniform(0.0, 70.0),
            mem_used=rng.uniform(0.0, 70.0),
            links=links,
            running_tasks=frozenset(
                t for t, e in placements.items() if e == eid
            ),
        )
    snapshot = SystemSnapshot(
        timestamp=rng.randrange(100_000), edges=edges, placements=placements
    )
    return snapshot, completed


def oracle_sequence(graph: TaskGraph) -> list[str]:
    emitted: list[str] = []
    seen: set[str] = set()
    while len(emitted) < len(graph):
        ready = [
            tid
            for tid in graph.tasks
            if tid not in seen and set(graph.tasks[tid].predecessors) <= seen
        ]
        assert ready, "oracle found a cycle"
        ready.sort(key=lambda t: (graph.tasks[t].priority, t))
        emitted.append(ready[0])
        seen.add(ready[0])
    return emitted


def oracle_schedule(snapshot, graph, weights, completed=frozenset()):
    """Exhaustive per-task argmax with the documented ledger discipline."""
    exp = {
        eid: {
            "cpu": e.cpu_used,
            "mem": e.mem_used,
            "thp": {r: l.thp_used for r, l in e.links.items()},
        }
        for eid, e in snapshot.edges.items()
    }
    assignments = []
    for tid in oracle_sequence(graph):
        if tid in completed:
            continue
        spec = graph.tasks[tid]
        d = spec.demand
        cands = sorted(
            eid for eid in snapshot.edges if spec.owner in snapshot.edges[eid].links
        )
        if not cands:
            continue
        raw = {}
        for eid in cands:
            pos = neg = 0
            for p in spec.predecessors:
                at = snapshot.placements.get(p)
                if at is None:
                    continue
                if at == eid:
                    pos += 1
                else:
                    neg += 1
            raw[eid] = 0.0 if pos == neg == 0 else float(max(-1, min(1, pos - neg)))
        distinct = sorted(set(raw.values()), reverse=True)
        if len(distinct) == 1:
            norm = {eid: 1.0 for eid in cands}
        else:
            norm = {
                eid: (len(distinct) - 1 - distinct.index(raw[eid]))
                / (len(distinct) - 1)
                for eid in cands
            }
        cur = snapshot.placements.get(tid)
        totals = {}
        for eid in cands:
            e = snapshot.edges[eid]
            g_cpu = exp[eid]["cpu"] - (d.cpu_pct if cur == eid else 0.0)
            g_mem = exp[eid]["mem"] - (d.mem_pct if cur == eid else 0.0)
            g_thp = exp[eid]["thp"][spec.owner] - (d.thp_pct if cur == eid else 0.0)
            u_cpu = (e.cpu_capacity - max(0.0, g_cpu) - d.cpu_pct) / e.cpu_capacity
            u_mem = (e.mem_capacity - max(0.0, g_mem) - d.mem_pct) / e.mem_capacity
            cap_t = e.links[spec.owner].thp_capacity
            u_net = (cap_t - max(0.0, g_thp) - d.thp_pct) / cap_t
            totals[eid] = (
                weights.cpu * u_cpu
                + weights.mem * u_mem
                + weights.task * norm[eid]
                + weights.net * u_net
            )
        best = None
        for eid in cands:
            if best is None or totals[eid] > totals[best]:
                best = eid
        if cur in totals and totals[cur] == totals[best]:
            best = cur
        assignments.append((tid, best))
        if cur != best:
            if cur is not None:
                exp[cur]["cpu"] = max(0.0, exp[cur]["cpu"] - d.cpu_pct)
                exp[cur]["mem"] = max(0.0, exp[cur]["mem"] - d.mem_pct)
                if spec.owner in exp[cur]["thp"]:
                    exp[cur]["thp"][spec.owner] = max(
                        0.0, exp[cur]["thp"][spec.owner] - d.thp_pct
                    )
            exp[best]["cpu"] += d.cpu_pct
            exp[best]["mem"] += d.mem_pct
            exp[best]["thp"][spec.owner] += d.thp_pct
    return assignments


def small_scenario_config(rng: Random):
    """Random small scenario config for end-to-end simulator runs."""
    n_edges = rng.randrange(2, 4)
    n_robots = rng.randrange(1, 4)
    n_tasks = rng.randrange(2, 7)
    robots = {
        f"r{i}": {"speed_factor": round(rng.uniform(0.3, 1.0), 2)}
        for i in range(n_robots)
    }
    edges = {f"e{i}": {} for i in range(n_edges)}
    ids = [f"t{i:02d}" for i in range(n_tasks)]
    tasks = {}
    for i, tid in enumerate(ids):
        preds = [ids[j] for j in range(i) if rng.random() < 0.35]
        tasks[tid] = {
            "owner": rng.choice(sorted(robots)),
            "cpu": round(rng.uniform(5.0, 60.0), 1),
            "mem": round(rng.uniform(5.0, 50.0), 1),
            "thp": round(rng.uniform(0.0, 40.0), 1),
            "priority": rng.randrange(2),
            "predecessors": preds,
            "work_ms": rng.randrange(1500, 6000),
        }
    config = {
        "name": "randsim",
        "edges": edges,
        "robots": robots,
        "tasks": tasks,
        "strategy": {"kind": "dynamic", "variant": rng.choice(["cpu", "mem", "net", "all"])},
        "seed": rng.randrange(1000),
        "sim": {"work_jitter": 0.1},
    }
    return validate_scenario(config, "randsim")


def audit_precedence(event_lines, graph) -> list[str]:
    """Post-hoc log audit: no task may start before its predecessors complete.

    Returns a list of violation descriptions (empty when safe).
    """
    import json

    completed_idx: dict[str, int] = {}
    violations = []
    for i, line in enumerate(event_lines):
        rec = json.loads(line)
        if rec["kind"] == "task_completed":
            completed_idx[rec["task"]] = i
        elif rec["kind"] == "task_started":
            tid = rec["task"]
            for pred in graph.tasks[tid].predecessors:
                if pred not in completed_idx or completed_idx[pred] > i:
                    violations.append(
                        f"{tid} started at log index {i} before {pred} completed"
                    )
    return violations
