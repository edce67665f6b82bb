"""Utility math: hand-computed values at 1e-9 and randomized property suites."""

from __future__ import annotations

from random import Random

import pytest

from edgesched.errors import MissingLink, NoEdges, ZeroCapacity
from edgesched.model import (
    EdgeState,
    LinkState,
    ResourceDemand,
    TaskSpec,
    WeightVector,
    WEIGHT_VARIANTS,
)
from edgesched.utility import (
    cpu_utility,
    headroom,
    mem_utility,
    net_utility,
    normalize_task_rewards,
    select_edge,
    task_reward,
    total_utility,
)

from helpers import rand_weights

TOL = 1e-9


def edge(eid="e1", cpu_used=0.0, mem_used=0.0, **kw):
    return EdgeState(id=eid, cpu_used=cpu_used, mem_used=mem_used, **kw)


# -- component utilities ------------------------------------------------------


def test_cpu_utility_hand_values():
    assert cpu_utility(edge(), ResourceDemand()) == pytest.approx(1.0, abs=TOL)
    assert cpu_utility(edge(cpu_used=40), ResourceDemand(cpu_pct=20)) == pytest.approx(
        0.40, abs=TOL
    )
    assert cpu_utility(edge(cpu_used=90), ResourceDemand(cpu_pct=20)) == pytest.approx(
        -0.10, abs=TOL
    )


def test_mem_utility_hand_values():
    assert mem_utility(edge(), ResourceDemand()) == pytest.approx(1.0, abs=TOL)
    assert mem_utility(edge(mem_used=50), ResourceDemand(mem_pct=25)) == pytest.approx(
        0.25, abs=TOL
    )
    # Ledger-adjusted usage from a prior assignment this round.
    assert mem_utility(
        edge(mem_used=50 + 25), ResourceDemand(mem_pct=25)
    ) == pytest.approx(0.0, abs=TOL)


def test_net_utility_hand_values():
    assert net_utility(LinkState(), ResourceDemand()) == pytest.approx(1.0, abs=TOL)
    assert net_utility(
        LinkState(thp_used=30), ResourceDemand(thp_pct=30)
    ) == pytest.approx(0.40, abs=TOL)
    with pytest.raises(MissingLink):
        net_utility(None, ResourceDemand())


def test_zero_capacity():
    with pytest.raises(ZeroCapacity):
        headroom(0.0, 0.0, 0.0)
    with pytest.raises(ZeroCapacity):
        headroom(-5.0, 0.0, 0.0)


# -- task reward ----------------------------------------------------------------


def task(tid="nav", preds=()):
    return TaskSpec(id=tid, owner="r1", predecessors=frozenset(preds))


def test_task_reward_same_edge():
    t = task(preds=["slam"])
    assert task_reward(t, edge("e1"), {"slam": "e1"}) == 1.0


def test_task_reward_other_edge():
    t = task(preds=["slam"])
    assert task_reward(t, edge("e1"), {"slam": "e2"}) == -1.0


def test_task_reward_no_predecessors():
    assert task_reward(task(), edge("e1"), {}) == 0.0
    # Predecessors exist but none are running yet.
    assert task_reward(task(preds=["slam"]), edge("e1"), {}) == 0.0


def test_task_reward_mixed_clamped():
    t = task(preds=["a", "b", "c"])
    placements = {"a": "e1", "b": "e1", "c": "e2"}
    assert task_reward(t, edge("e1"), placements) == 1.0
    assert task_reward(t, edge("e2"), placements) == -1.0
    assert task_reward(t, edge("e3"), placements) == -1.0


# -- rank normalization ---------------------------------------------------------


def test_normalize_dense_rank():
    assert normalize_task_rewards({"e1": 1.0, "e2": -1.0, "e3": -1.0}) == {
        "e1": 1.0,
        "e2": 0.0,
        "e3": 0.0,
    }


def test_normalize_all_equal():
    assert normalize_task_rewards({"e1": 0.0, "e2": 0.0}) == {"e1": 1.0, "e2": 1.0}


def test_normalize_single_edge():
    assert normalize_task_rewards({"e1": -1.0}) == {"e1": 1.0}


def test_normalize_three_ranks():
    assert normalize_task_rewards({"a": 1.0, "b": 0.0, "c": -1.0}) == {
        "a": 1.0,
        "b": 0.5,
        "c": 0.0,
    }


# -- total utility & selection ------------------------------------------------


def test_total_utility_hand_value():
    w = WEIGHT_VARIANTS["all"]
    bd = total_utility(0.4, 0.6, 0.2, 1.0, w)
    assert bd.total == pytest.approx(0.55, abs=TOL)
    assert bd.cpu == 0.4 and bd.net == 0.2


def test_total_utility_projection():
    w = WeightVector(cpu=1.0, mem=0.0, net=0.0, task=0.0)
    assert total_utility(0.37, 0.9, -0.5, 1.0, w).total == pytest.approx(0.37, abs=TOL)


def test_total_utility_ones():
    for w in WEIGHT_VARIANTS.values():
        assert total_utility(1.0, 1.0, 1.0, 1.0, w).total == pytest.approx(1.0, abs=TOL)


def test_select_edge_argmax():
    assert select_edge({"e1": 0.55, "e2": 0.30, "e3": 0.41}) == "e1"


def test_select_edge_tie_breaks_lexicographic():
    assert select_edge({"e3": 0.55, "e1": 0.55}) == "e1"


def test_select_edge_empty():
    with pytest.raises(NoEdges):
        select_edge({})


def test_select_edge_iteration_order_independent():
    a = {"e2": 0.1, "e1": 0.3, "e3": 0.2}
    b = {"e3": 0.2, "e2": 0.1, "e1": 0.3}
    assert select_edge(a) == select_edge(b) == "e1"


# -- property suites (>= 1000 cases each, deterministic seeds) ----------------


def test_property_headroom_strictly_decreasing_in_usage():
    rng = Random(2024)
    for _ in range(1000):
        cap = rng.uniform(10.0, 200.0)
        demand = rng.uniform(0.0, 100.0)
        g1 = rng.uniform(0.0, 150.0)
        g2 = g1 + rng.uniform(1e-6, 50.0)
        assert headroom(cap, g1, demand) > headroom(cap, g2, demand)


def test_property_argmax_scale_invariance():
    rng = Random(2025)
    for _ in range(1000):
        n = rng.randrange(1, 6)
        totals = {f"e{i}": rng.uniform(-1.0, 1.0) for i in range(n)}
        scale = rng.choice([0.25, 0.5, 2.0, 4.0, 1024.0]) * rng.choice([1, 1, 1, 1])
        scaled = {eid: scale * v for eid, v in totals.items()}
        assert select_edge(totals) == select_edge(scaled)


def test_property_total_utility_linearity():
    rng = Random(2026)
    for _ in range(1000):
        w = rand_weights(rng)
        comps = [rng.uniform(-1.0, 1.0) for _ in range(4)]
        alpha = rng.uniform(0.1, 5.0)
        lhs = total_utility(*(alpha * c for c in comps), w).total
        rhs = alpha * total_utility(*comps, w).total
        assert lhs == pytest.approx(rhs, abs=TOL)


def test_property_normalize_bounds_order_and_shift_invariance():
    rng = Random(2027)
    for _ in range(1000):
        n = rng.randrange(1, 7)
        # Raw rewards live on the clamped integer scale; shifts stay dyadic
        # so float addition is exact and ranks cannot collapse.
        raw = {f"e{i}": float(rng.choice([-1, 0, 1])) for i in range(n)}
        norm = normalize_task_rewards(raw)
        assert all(0.0 <= v <= 1.0 for v in norm.values())
        for a in raw:
            for b in raw:
                if raw[a] > raw[b]:
                    assert norm[a] > norm[b]
                elif raw[a] == raw[b]:
                    assert norm[a] == norm[b]
        shift = rng.choice([-2.0, -0.5, 0.25, 1.0, 3.0])
        shifted = normalize_task_rewards({e: v + shift for e, v in raw.items()})
        assert shifted == norm


def test_property_select_edge_deterministic():
    rng = Random(2028)
    for _ in range(1000):
        n = rng.randrange(1, 7)
        items = [(f"e{i}", rng.uniform(-1.0, 1.0)) for i in range(n)]
        rng.shuffle(items)
        first = select_edge(dict(items))
        rng.shuffle(items)
        assert select_edge(dict(items)) == first
