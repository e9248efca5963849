"""Simulation engine: queue dynamics, feedback, trace plumbing."""

from __future__ import annotations

import numpy as np
import pytest

from slasim import (
    LoadExhausted,
    PolicyParams,
    SlaVector,
    feedback,
    run,
    step,
)
from slasim.policies import MultiplicativeWeights, OnlineWorkMaximizing, StaticSla
from slasim.workloads import PrecomputedLoads, bernoulli_gamma_fuzz


def test_step_serves_from_load_plus_queue():
    work, after = step(
        queue=np.array([0.0, 1.0]),
        alloc=np.array([0.5, 0.5]),
        load=np.array([1.0, 0.0]),
    )
    assert np.array_equal(work, [0.5, 0.5])
    assert np.array_equal(after, [0.5, 0.5])


def test_step_never_serves_more_than_available():
    work, after = step(
        queue=np.array([0.0, 0.0]),
        alloc=np.array([0.9, 0.1]),
        load=np.array([0.2, 0.0]),
    )
    assert np.array_equal(work, [0.2, 0.0])
    assert np.array_equal(after, [0.0, 0.0])


def test_step_rejects_negative_and_mismatched_inputs():
    ok = np.array([0.1, 0.2])
    with pytest.raises(ValueError):
        step(ok, ok, np.array([0.1, -0.2]))
    with pytest.raises(ValueError):
        step(ok, np.array([0.1]), ok)


def test_feedback_is_strict_above_tolerance():
    q = np.array([0.0, 1e-12, 2e-12, 0.5])
    assert np.array_equal(feedback(q, tol=1e-12), [False, False, True, True])
    with pytest.raises(ValueError):
        feedback(np.array([-0.1]))


def _mw(n: int, monitor: bool = False) -> MultiplicativeWeights:
    sla = SlaVector(np.full(n, 1.0 / n))
    params = PolicyParams(n_users=n, epsilon=0.05, eta=1.0 / 3.0)
    return MultiplicativeWeights(sla, params, monitor_lemmas=monitor)


def test_run_conserves_load_and_respects_capacity(rng):
    source = bernoulli_gamma_fuzz(n_users=4, horizon=500, seed=11)
    trace = run(_mw(4), source, horizon=500)
    assert trace.conservation_residual() < 1e-9
    assert np.all(trace.work.sum(axis=1) <= 1.0 + 1e-9)
    assert np.all(trace.work >= 0.0)
    per_user = np.diff(trace.cum_work, axis=0)
    assert np.all(per_user >= -1e-12)
    total = trace.total_load.sum() - trace.total_work.sum()
    assert total == pytest.approx(trace.final_queue.sum(), abs=1e-9)


def test_decisions_depend_only_on_busy_idle_pattern():
    # Same activity pattern, very different magnitudes: queues stay
    # backlogged from step 2 on in both runs, so the recorded allocations
    # must be bit-for-bit identical.
    horizon = 60
    small = PrecomputedLoads(np.tile([2.0, 3.0], (horizon, 1)))
    large = PrecomputedLoads(np.tile([50.0, 70.0], (horizon, 1)))
    for make in (lambda: _mw(2), OnlineWorkMaximizing):
        a = run(make(), small, horizon=horizon)
        b = run(make(), large, horizon=horizon)
        assert np.array_equal(a.alloc, b.alloc)


def test_short_source_is_rejected_up_front():
    source = PrecomputedLoads(np.zeros((10, 2)))
    with pytest.raises(LoadExhausted, match="10 steps, 11 requested"):
        run(StaticSla(SlaVector(np.array([0.5, 0.5]))), source, horizon=11)


def test_mid_run_exhaustion_names_the_step():
    class Dribble:
        n_users = 2
        horizon = None

        def reset(self):
            pass

        def next(self, t, alloc, active):
            if t > 3:
                raise LoadExhausted("dry")
            return np.zeros(2)

    with pytest.raises(LoadExhausted, match="exhausted at step 4"):
        run(StaticSla(SlaVector(np.array([0.5, 0.5]))), Dribble(), horizon=5)


def test_stride_thinning_keeps_final_step_and_aggregates():
    source = bernoulli_gamma_fuzz(n_users=3, horizon=100, seed=5)
    full = run(_mw(3), source, horizon=100)
    thin = run(_mw(3), source, horizon=100, stride=7)
    assert thin.steps[-1] == 100
    assert np.array_equal(thin.steps[:-1], np.arange(7, 100, 7))
    assert np.array_equal(thin.total_work, full.total_work)
    assert np.array_equal(thin.final_queue, full.final_queue)
    assert not thin.is_full and full.is_full

    rec = thin.record_at(98)
    ref = full.record_at(98)
    assert rec.t == 98
    assert np.array_equal(rec.work, ref.work)
    assert np.array_equal(rec.queue_after, ref.queue_after)
    with pytest.raises(KeyError):
        thin.record_at(5)


def test_run_validates_arguments():
    source = PrecomputedLoads(np.zeros((4, 2)))
    policy = StaticSla(SlaVector(np.array([0.5, 0.5])))
    with pytest.raises(ValueError):
        run(policy, source, horizon=0)
    with pytest.raises(ValueError):
        run(policy, source, horizon=4, stride=0)


def test_sla_vector_validation():
    with pytest.raises(ValueError):
        SlaVector(np.array([0.5, -0.1]))
    with pytest.raises(ValueError):
        SlaVector(np.array([0.7, 0.7]))
    with pytest.raises(ValueError):
        SlaVector(np.array([0.5, np.nan]))
    sla = SlaVector(np.array([0.2, 0.3, 0.5]))
    assert sla.n == 3
    assert sla.theory_applicable(0.1)  # floor 2*0.1/3 < 0.2
    assert not SlaVector(np.array([0.01, 0.5])).theory_applicable(0.1)


def test_policy_params_validation_and_canonical_boost():
    p = PolicyParams(n_users=4, epsilon=0.1, eta=0.25)
    assert p.boost == pytest.approx(0.1**2 / 32.0)
    assert p.canonical_boost
    q = PolicyParams(n_users=4, epsilon=0.1, eta=0.25, boost=0.001)
    assert not q.canonical_boost
    with pytest.raises(ValueError):
        PolicyParams(n_users=1, epsilon=0.05, eta=0.1)
    with pytest.raises(ValueError):
        PolicyParams(n_users=2, epsilon=0.2, eta=0.1)
    with pytest.raises(ValueError):
        PolicyParams(n_users=2, epsilon=0.05, eta=0.4)
    with pytest.raises(ValueError):
        PolicyParams(n_users=2, epsilon=0.05, eta=0.1, boost=-1.0)
