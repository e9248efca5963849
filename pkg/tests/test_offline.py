"""Offline schedulers, the closed-form optimum, and the dual certificates."""

from __future__ import annotations

import numpy as np
import pytest

from slasim import SlaVector
from slasim.core import DegenerateSlaError
from slasim.offline import (
    DualSolution,
    InfeasibleDualError,
    dual_value,
    offline_optimal_value,
    proportional_greedy,
    simple_greedy,
    switch_dual,
)


def test_optimal_value_hand_cases():
    # One unit of load up front, horizon 3, full capacity: all of it fits.
    loads = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
    assert offline_optimal_value(loads) == pytest.approx(3.0 * 0 + 1.0)
    # Load exceeding what the remaining steps can carry is left behind.
    loads = np.array([[3.0, 0.0], [0.0, 0.0]])
    assert offline_optimal_value(loads) == pytest.approx(2.0)
    # Restricted capacity: the same prefix/suffix tradeoff at 1 - eps.
    assert offline_optimal_value(loads, eps=0.5) == pytest.approx(1.0)
    # Empty instance does no work.
    assert offline_optimal_value(np.zeros((4, 3))) == 0.0


def test_optimal_value_validates_inputs():
    with pytest.raises(ValueError):
        offline_optimal_value(np.array([[1.0, -1.0]]))
    with pytest.raises(ValueError):
        offline_optimal_value(np.array([[1.0, 1.0]]), eps=1.0)
    with pytest.raises(ValueError):
        offline_optimal_value(np.ones(3))


def test_simple_greedy_serves_in_index_order():
    trace = simple_greedy(np.array([[0.7, 0.7]]))
    assert np.allclose(trace.work[0], [0.7, 0.3], atol=1e-15)
    assert np.allclose(trace.final_queue, [0.0, 0.4], atol=1e-15)


def test_simple_greedy_rolls_backlog_forward():
    trace = simple_greedy(np.array([[0.7, 0.7], [0.0, 0.0]]))
    assert np.allclose(trace.work[1], [0.0, 0.4], atol=1e-15)
    assert trace.total_work.sum() == pytest.approx(1.4)


def test_proportional_greedy_hand_execution():
    # Equal shares, loads (0.1, 2.0): the tightest user finishes their 0.1
    # outright and the rest of the capacity goes to the other user.
    sla = SlaVector(np.array([0.5, 0.5]))
    trace = proportional_greedy(np.array([[0.1, 2.0]]), sla)
    assert np.allclose(trace.work[0], [0.1, 0.9], atol=1e-15)

    # Shares (0.2, 0.3, 0.5), loads (0.4, 0.4, 0.4): user 3 finishes fully,
    # then the leftover 0.6 splits 2:3 between the still-busy users.
    sla = SlaVector(np.array([0.2, 0.3, 0.5]))
    trace = proportional_greedy(np.array([[0.4, 0.4, 0.4]]), sla)
    assert np.allclose(trace.work[0], [0.24, 0.36, 0.4], atol=1e-12)
    assert np.allclose(trace.final_queue, [0.16, 0.04, 0.0], atol=1e-12)


def test_proportional_greedy_respects_capacity():
    sla = SlaVector(np.array([0.5, 0.5]))
    trace = proportional_greedy(np.array([[2.0, 2.0]]), sla, capacity=0.9)
    assert trace.work[0].sum() == pytest.approx(0.9, abs=1e-12)
    assert np.allclose(trace.work[0], [0.45, 0.45], atol=1e-12)


def test_proportional_greedy_degenerate_shares():
    sla = SlaVector(np.array([0.0, 1.0]))
    # Only the zero-share user is backlogged and capacity remains.
    with pytest.raises(DegenerateSlaError):
        proportional_greedy(np.array([[0.5, 0.0], [0.5, 0.0]]), sla)


def test_greedies_match_closed_form_optimum(rng):
    # Both greedy schedules complete min(capacity, pending) every step, so
    # their totals must equal the closed-form optimum at eps = 1 - capacity.
    for _ in range(40):
        n = int(rng.integers(2, 5))
        horizon = int(rng.integers(1, 30))
        loads = rng.uniform(0.0, 2.0 / n, size=(horizon, n))
        beta = rng.uniform(0.1, 1.0, size=n)
        sla = SlaVector(beta / beta.sum())
        for capacity in (1.0, 0.9):
            opt = offline_optimal_value(loads, eps=1.0 - capacity)
            sg = simple_greedy(loads, capacity=capacity).total_work.sum()
            pg = proportional_greedy(loads, sla, capacity=capacity).total_work.sum()
            assert sg == pytest.approx(opt, abs=1e-9)
            assert pg == pytest.approx(opt, abs=1e-9)


def test_total_work_is_monotone_in_capacity(rng):
    loads = rng.uniform(0.0, 1.0, size=(25, 3))
    sla = SlaVector(np.array([0.2, 0.3, 0.5]))
    totals = [
        proportional_greedy(loads, sla, capacity=c).total_work.sum()
        for c in (0.5, 0.7, 0.9, 1.0)
    ]
    assert np.all(np.diff(totals) >= -1e-12)


def test_switch_dual_shape_and_feasibility():
    loads = np.array([[0.5, 0.5], [0.5, 0.5], [2.0, 0.0]])
    for s in range(4):
        dual = switch_dual(s, horizon=3, n_users=2)
        value = dual_value(dual, loads)  # must not raise
        assert value >= offline_optimal_value(loads) - 1e-12
    with pytest.raises(ValueError):
        switch_dual(4, horizon=3, n_users=2)
    with pytest.raises(ValueError):
        switch_dual(-1, horizon=3, n_users=2)


def test_min_switch_dual_equals_optimum(rng):
    for _ in range(20):
        n = int(rng.integers(2, 5))
        horizon = int(rng.integers(1, 40))
        loads = rng.uniform(0.0, 2.0 / n, size=(horizon, n))
        eps = float(rng.uniform(0.0, 0.3))
        values = [
            dual_value(switch_dual(s, horizon, n), loads, eps=eps)
            for s in range(horizon + 1)
        ]
        assert min(values) == pytest.approx(
            offline_optimal_value(loads, eps=eps), abs=1e-9
        )


def test_weak_duality_bounds_any_schedule(rng):
    # Every feasible dual upper-bounds every feasible schedule's work.
    loads = rng.uniform(0.0, 0.8, size=(30, 2))
    sla = SlaVector(np.array([0.5, 0.5]))
    work = proportional_greedy(loads, sla).total_work.sum()
    for s in (0, 7, 30):
        assert work <= dual_value(switch_dual(s, 30, 2), loads) + 1e-9


def test_infeasible_duals_name_the_violated_constraint():
    loads = np.ones((2, 2)) * 0.25
    gamma = np.ones((2, 2))
    prices = np.zeros(2)

    bad = DualSolution(gamma.copy(), prices.copy())
    bad.gamma[1, 0] = -0.5
    with pytest.raises(InfeasibleDualError, match="negative"):
        dual_value(bad, loads)

    bad = DualSolution(gamma.copy(), np.array([0.0, -1.0]))
    with pytest.raises(InfeasibleDualError, match=r"price\[t=2\]"):
        dual_value(bad, loads)

    bad = DualSolution(np.array([[1.0, 1.0], [0.5, 1.0]]), prices.copy())
    with pytest.raises(InfeasibleDualError, match="falls below 1"):
        dual_value(bad, loads)

    bad = DualSolution(np.array([[0.0, 1.0], [1.0, 1.0]]), np.ones(2))
    with pytest.raises(InfeasibleDualError, match="increases over time"):
        dual_value(bad, loads)


def test_dual_value_validates_shapes():
    loads = np.ones((3, 2))
    with pytest.raises(ValueError):
        dual_value(switch_dual(1, 2, 2), loads)
    with pytest.raises(ValueError):
        DualSolution(np.ones((3, 2)), np.ones(2))
