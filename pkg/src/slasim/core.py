"""Core model: queues, feedback, the per-step update, and the run loop.

Each of T discrete steps proceeds in a fixed order:

1. feedback: the policy observes which users have a nonempty queue
   (binary busy/idle signal, taken before this step's load arrives);
2. decision: the policy picks allocations h(i) with sum(h) <= 1 from that
   feedback and its own state only;
3. update: load L(i) arrives, user i completes w(i) = min(h(i), L(i) + Q(i))
   units of work, and queues become Q(i) <- max(0, L(i) + Q(i) - h(i)).

Policies never see loads or queue magnitudes, only the busy/idle pattern.
Adaptive load sources (used by the lower-bound adversary) may read the
current step's allocation and the busy/idle pattern, nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

DEFAULT_EMPTY_TOLERANCE = 1e-12


class InvariantViolation(RuntimeError):
    """A runtime model invariant failed during simulation."""


class LemmaViolation(InvariantViolation):
    """A monitored multiplicative-boost guarantee failed at some step."""


class LoadExhausted(RuntimeError):
    """A load source ran out of steps before the requested horizon."""


class DegenerateSlaError(ValueError):
    """All users competing for the resource have a zero SLA share."""


@dataclass(frozen=True)
class SlaVector:
    """Contracted per-user shares beta(i), nonnegative with sum <= 1."""

    beta: np.ndarray

    def __post_init__(self) -> None:
        beta = np.asarray(self.beta, dtype=np.float64)
        object.__setattr__(self, "beta", beta)
        if beta.ndim != 1 or beta.size == 0:
            raise ValueError(f"SLA vector must be 1-d and nonempty, got shape {beta.shape}")
        if not np.all(np.isfinite(beta)) or np.any(beta < 0.0):
            raise ValueError("SLA shares must be finite and nonnegative")
        if beta.sum() > 1.0 + 1e-12:
            raise ValueError(f"SLA shares must sum to at most 1, got {beta.sum()}")

    @property
    def n(self) -> int:
        return int(self.beta.size)

    def theory_applicable(self, epsilon: float) -> bool:
        """True iff every share clears the 2*epsilon/N floor the
        multiplicative-boost guarantees require."""
        return bool(np.all(self.beta >= 2.0 * epsilon / self.n - 1e-15))


@dataclass(frozen=True)
class PolicyParams:
    """Parameters of the multiplicative-weights policies.

    boost is the extra gain handed to active users below their target
    share; when not given it is derived canonically as epsilon**2 / (8 N).
    Explicit overrides are accepted but flagged non-canonical.
    """

    n_users: int
    epsilon: float
    eta: float
    boost: Optional[float] = None
    empty_tolerance: float = DEFAULT_EMPTY_TOLERANCE
    canonical_boost: bool = field(init=False, default=True)

    def __post_init__(self) -> None:
        if self.n_users < 2:
            raise ValueError("multiplicative-weights policies need at least 2 users")
        if not (0.0 < self.epsilon <= 0.1):
            raise ValueError(f"epsilon must lie in (0, 1/10], got {self.epsilon}")
        if not (0.0 < self.eta <= 1.0 / 3.0):
            raise ValueError(f"eta must lie in (0, 1/3], got {self.eta}")
        if self.empty_tolerance < 0.0:
            raise ValueError("empty_tolerance must be nonnegative")
        derived = self.epsilon**2 / (8.0 * self.n_users)
        if self.boost is None:
            object.__setattr__(self, "boost", derived)
        else:
            if self.boost <= 0.0:
                raise ValueError("boost must be positive")
            object.__setattr__(self, "canonical_boost", bool(self.boost == derived))

    def as_dict(self) -> dict:
        return {
            "n_users": self.n_users,
            "epsilon": self.epsilon,
            "eta": self.eta,
            "boost": self.boost,
            "empty_tolerance": self.empty_tolerance,
            "canonical_boost": self.canonical_boost,
        }


def feedback(queue: np.ndarray, tol: float = DEFAULT_EMPTY_TOLERANCE) -> np.ndarray:
    """Busy/idle pattern: True where the queue exceeds the emptiness tolerance."""
    queue = np.asarray(queue, dtype=np.float64)
    if np.any(queue < 0.0):
        raise ValueError("queues must be nonnegative")
    return queue > tol


def step(queue: np.ndarray, alloc: np.ndarray, load: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One queue update: returns (work done, queue after).

    work(i) = min(alloc(i), load(i) + queue(i));
    the new queue is load(i) + queue(i) - work(i), which is exactly
    max(0, load(i) + queue(i) - alloc(i)).
    """
    queue = np.asarray(queue, dtype=np.float64)
    alloc = np.asarray(alloc, dtype=np.float64)
    load = np.asarray(load, dtype=np.float64)
    if not (queue.shape == alloc.shape == load.shape):
        raise ValueError(
            f"shape mismatch: queue {queue.shape}, alloc {alloc.shape}, load {load.shape}"
        )
    if np.any(load < 0.0) or np.any(queue < 0.0) or np.any(alloc < 0.0):
        raise ValueError("loads, queues and allocations must be nonnegative")
    avail = load + queue
    work = np.minimum(alloc, avail)
    return work, avail - work


class Policy(Protocol):
    name: str

    def reset(self, n_users: int) -> None: ...

    def decide(self, active: np.ndarray) -> np.ndarray: ...

    @property
    def spec(self) -> dict: ...


class LoadSource(Protocol):
    n_users: int
    horizon: Optional[int]

    def reset(self) -> None: ...

    def next(self, t: int, alloc: np.ndarray, active: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class StepRecord:
    """Everything observable about one step (1-based index t)."""

    t: int
    active: np.ndarray
    alloc: np.ndarray
    work: np.ndarray
    queue_after: np.ndarray
    load: np.ndarray


@dataclass
class SimulationTrace:
    """Trace of one run.

    Per-step rows are kept for steps[j] (all steps when stride == 1; with a
    thinning stride only every stride-th step is retained).  Aggregates
    total_work, total_load and final_queue are always exact regardless of
    thinning, as is cum_work, the running per-user work total at each
    retained step.
    """

    policy: str
    steps: np.ndarray
    active: np.ndarray
    alloc: np.ndarray
    work: np.ndarray
    queue: np.ndarray
    load: np.ndarray
    cum_work: np.ndarray
    total_work: np.ndarray
    total_load: np.ndarray
    final_queue: np.ndarray
    horizon: int
    stride: int = 1
    sla: Optional[SlaVector] = None
    params: dict = field(default_factory=dict)

    @property
    def n_users(self) -> int:
        return int(self.work.shape[1])

    @property
    def is_full(self) -> bool:
        return self.stride == 1 and len(self.steps) == self.horizon

    def __len__(self) -> int:
        return int(len(self.steps))

    def record_at(self, t: int) -> StepRecord:
        idx = np.searchsorted(self.steps, t)
        if idx >= len(self.steps) or self.steps[idx] != t:
            raise KeyError(f"step {t} not retained in trace (stride {self.stride})")
        return StepRecord(
            t=t,
            active=self.active[idx],
            alloc=self.alloc[idx],
            work=self.work[idx],
            queue_after=self.queue[idx],
            load=self.load[idx],
        )

    def conservation_residual(self) -> float:
        """|total load - total work - final backlog|, relative to total load."""
        lhs = float(self.total_work.sum() + self.final_queue.sum())
        rhs = float(self.total_load.sum())
        return abs(lhs - rhs) / max(1.0, rhs)


def run(
    policy,
    source,
    horizon: int,
    *,
    empty_tolerance: float = DEFAULT_EMPTY_TOLERANCE,
    stride: int = 1,
) -> SimulationTrace:
    """Drive a policy against a load source for `horizon` steps.

    The policy sees only the busy/idle pattern each step; the source may
    adapt to the allocation it is shown.  Raises LoadExhausted if the
    source cannot supply `horizon` steps.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    if stride < 1:
        raise ValueError(f"stride must be at least 1, got {stride}")
    n = int(source.n_users)
    if source.horizon is not None and source.horizon < horizon:
        raise LoadExhausted(
            f"load source provides {source.horizon} steps, {horizon} requested"
        )
    source.reset()
    policy.reset(n)

    kept = np.arange(stride, horizon + 1, stride, dtype=np.int64)
    if len(kept) == 0 or kept[-1] != horizon:
        kept = np.append(kept, horizon)  # always retain the final step
    m = len(kept)
    rec_active = np.empty((m, n), dtype=bool)
    rec_alloc = np.empty((m, n))
    rec_work = np.empty((m, n))
    rec_queue = np.empty((m, n))
    rec_load = np.empty((m, n))
    rec_cum = np.empty((m, n))

    queue = np.zeros(n)
    cum = np.zeros(n)
    total_load = np.zeros(n)
    j = 0
    for t in range(1, horizon + 1):
        active = queue > empty_tolerance
        alloc = policy.decide(active)
        try:
            load = source.next(t, alloc, active)
        except LoadExhausted as exc:
            raise LoadExhausted(f"load source exhausted at step {t}: {exc}") from exc
        avail = load + queue
        work = np.minimum(alloc, avail)
        queue = avail - work
        cum = cum + work
        total_load += load
        if t == kept[j]:
            rec_active[j] = active
            rec_alloc[j] = alloc
            rec_work[j] = work
            rec_queue[j] = queue
            rec_load[j] = load
            rec_cum[j] = cum
            j += 1

    return SimulationTrace(
        policy=getattr(policy, "name", type(policy).__name__),
        steps=kept,
        active=rec_active,
        alloc=rec_alloc,
        work=rec_work,
        queue=rec_queue,
        load=rec_load,
        cum_work=rec_cum,
        total_work=cum,
        total_load=total_load,
        final_queue=queue,
        horizon=horizon,
        stride=stride,
        sla=getattr(policy, "sla", None),
        params=dict(getattr(policy, "spec", {})),
    )
