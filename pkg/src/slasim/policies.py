"""Allocation policies driven by busy/idle feedback.

Two multiplicative-weights policies carry the guarantees: both boost every
active user's weight, give an extra boost to active users that look
underserved, and re-project onto the truncated simplex so every user keeps
a floor allocation of eps/N.  They differ only in who counts as
underserved:

* basic: active users allocated strictly below their SLA share beta(i);
* proportional: active users allocated strictly below
  (1 - eps) * beta(i) / sum of active users' shares, i.e. below their
  SLA-proportional share of the whole resource.

Three baselines: a static policy that always allocates beta; a
proportional online policy that splits the resource among active users in
proportion to beta; and a work-maximizing greedy that splits uniformly
within a rotating "served" set.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from slasim.core import DegenerateSlaError, LemmaViolation, PolicyParams, SlaVector
from slasim.projection import project_truncated_simplex

LEMMA_SLACK = 1e-10


def _gain(
    h: np.ndarray,
    active: np.ndarray,
    beta: np.ndarray,
    epsilon: float,
    boost: float,
    proportional: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-user exponent gains and the underserved mask.

    Active users get gain 1, underserved active users 1 + boost, inactive
    users 0.  Exact equality with the threshold counts as served.
    """
    if proportional:
        active_share = beta[active].sum()
        if active_share > 0.0:
            threshold = (1.0 - epsilon) * beta / active_share
        else:
            threshold = np.zeros_like(beta)  # zero-SLA users are never underserved
    else:
        threshold = beta
    under = active & (h < threshold)
    gain = np.where(active, np.where(under, 1.0 + boost, 1.0), 0.0)
    return gain, under


def mw_update(
    h: np.ndarray,
    active: np.ndarray,
    sla: SlaVector,
    params: PolicyParams,
    proportional: bool = False,
) -> np.ndarray:
    """One multiplicative-weights update from allocation h under the given
    busy/idle pattern: exponentiated gains, then KL projection back onto
    the truncated simplex."""
    h = np.asarray(h, dtype=np.float64)
    active = np.asarray(active, dtype=bool)
    if h.shape != active.shape or h.size != sla.n:
        raise ValueError("allocation, feedback and SLA sizes must agree")
    gain, _ = _gain(h, active, sla.beta, params.epsilon, params.boost, proportional)
    return project_truncated_simplex(h * np.exp(params.eta * gain), params.epsilon)


def proportional_mw_update(
    h: np.ndarray, active: np.ndarray, sla: SlaVector, params: PolicyParams
) -> np.ndarray:
    return mw_update(h, active, sla, params, proportional=True)


class MultiplicativeWeights:
    """Multiplicative-weights policy (basic or proportional variant).

    With monitor_lemmas=True the multiplicative-boost guarantees are
    checked at every step with absolute slack 1e-10 and a LemmaViolation
    is raised on the first failure.  Monitored bounds, with
    c = eps*eta/(4N) and c' = eps*eta*boost/(2N):

    * either variant, when active usage is at most 1 - eps: every active
      user's allocation grows by a factor (1 + c);
    * basic: underserved users never shrink, served active users shrink by
      at most a factor (1 - eps*c);
    * basic, provided every SLA share is at least 2*eps/N: underserved
      users grow by a factor (1 + c');
    * proportional, when active usage exceeds 1 - eps: underserved users
      grow by a factor (1 + c').
    """

    def __init__(
        self,
        sla: SlaVector,
        params: PolicyParams,
        proportional: bool = False,
        monitor_lemmas: bool = False,
    ):
        if params.n_users != sla.n:
            raise ValueError(
                f"params sized for {params.n_users} users but SLA has {sla.n}"
            )
        self.sla = sla
        self.params = params
        self.proportional = bool(proportional)
        self.monitor_lemmas = bool(monitor_lemmas)
        self.name = "mw_prop" if proportional else "mw"
        n = sla.n
        self._growth = params.epsilon * params.eta / (4.0 * n)
        self._boost_growth = params.epsilon * params.eta * params.boost / (2.0 * n)
        # The underserved-growth bound for the basic variant needs every
        # share to clear 2*eps/N; skip that monitor when it does not apply.
        self._floor_ok = sla.theory_applicable(params.epsilon)
        self._h: Optional[np.ndarray] = None
        self._t = 0

    def reset(self, n_users: int) -> None:
        if n_users != self.sla.n:
            raise ValueError(f"policy built for {self.sla.n} users, asked for {n_users}")
        self._h = np.full(n_users, 1.0 / n_users)
        self._t = 0

    def decide(self, active: np.ndarray) -> np.ndarray:
        h = self._h
        p = self.params
        self._t += 1
        gain, under = _gain(h, active, self.sla.beta, p.epsilon, p.boost, self.proportional)
        h_new = project_truncated_simplex(h * np.exp(p.eta * gain), p.epsilon)
        if self.monitor_lemmas:
            self._check_lemmas(h, h_new, active, under)
        self._h = h_new
        return h_new

    def _check_lemmas(
        self, h: np.ndarray, h_new: np.ndarray, active: np.ndarray, under: np.ndarray
    ) -> None:
        t = self._t
        usage = float(h[active].sum())
        if usage <= 1.0 - self.params.epsilon:
            bound = (1.0 + self._growth) * h[active]
            if np.any(h_new[active] < bound - LEMMA_SLACK):
                raise LemmaViolation(
                    f"step {t}: active user allocation grew less than the "
                    f"(1 + eps*eta/4N) factor at low usage"
                )
        served = active & ~under
        if not self.proportional:
            if np.any(h_new[under] < h[under] - LEMMA_SLACK):
                raise LemmaViolation(
                    f"step {t}: underserved allocation decreased"
                )
            shrink = (1.0 - self.params.epsilon * self._growth) * h[served]
            if np.any(h_new[served] < shrink - LEMMA_SLACK):
                raise LemmaViolation(
                    f"step {t}: served active allocation shrank below the "
                    f"(1 - eps*c) factor"
                )
            if self._floor_ok:
                bound = (1.0 + self._boost_growth) * h[under]
                if np.any(h_new[under] < bound - LEMMA_SLACK):
                    raise LemmaViolation(
                        f"step {t}: underserved allocation grew less than the "
                        f"(1 + c') boost factor"
                    )
        else:
            if usage > 1.0 - self.params.epsilon:
                bound = (1.0 + self._boost_growth) * h[under]
                if np.any(h_new[under] < bound - LEMMA_SLACK):
                    raise LemmaViolation(
                        f"step {t}: underserved allocation grew less than the "
                        f"(1 + c') boost factor at high usage"
                    )

    @property
    def spec(self) -> dict:
        return {"name": self.name, **self.params.as_dict()}


class StaticSla:
    """Always allocate exactly the SLA shares; leftover capacity idles."""

    name = "static"

    def __init__(self, sla: SlaVector):
        self.sla = sla

    def reset(self, n_users: int) -> None:
        if n_users != self.sla.n:
            raise ValueError(f"policy built for {self.sla.n} users, asked for {n_users}")

    def decide(self, active: np.ndarray) -> np.ndarray:
        return self.sla.beta

    @property
    def spec(self) -> dict:
        return {"name": self.name}


class OnlineProportional:
    """Split the whole resource among active users in proportion to their
    SLA shares; allocate beta itself when nobody is active."""

    name = "po"

    def __init__(self, sla: SlaVector):
        self.sla = sla

    def reset(self, n_users: int) -> None:
        if n_users != self.sla.n:
            raise ValueError(f"policy built for {self.sla.n} users, asked for {n_users}")

    def decide(self, active: np.ndarray) -> np.ndarray:
        beta = self.sla.beta
        if not active.any():
            return beta
        share = beta[active].sum()
        if share <= 0.0:
            raise DegenerateSlaError(
                "every active user has a zero SLA share; proportional split undefined"
            )
        return np.where(active, beta / share, 0.0)

    @property
    def spec(self) -> dict:
        return {"name": self.name}


class OnlineWorkMaximizing:
    """Uniform split within a served set, rotating service between busy
    users: the served set keeps its members while they stay busy, users
    turning busy wait in a backlog set, and when the served set drains the
    whole backlog set is promoted.  SLA-oblivious."""

    name = "owm"

    def __init__(self) -> None:
        self._served: Optional[np.ndarray] = None
        self._waiting: Optional[np.ndarray] = None

    def reset(self, n_users: int) -> None:
        # Everyone starts in the served set.
        self._served = np.ones(n_users, dtype=bool)
        self._waiting = np.zeros(n_users, dtype=bool)

    def decide(self, active: np.ndarray) -> np.ndarray:
        served = self._served & active  # users done with their work leave
        waiting = (self._waiting | ~self._served) & active  # idle users rejoin here
        if not served.any():
            served, waiting = waiting, np.zeros_like(waiting)
        self._served = served
        self._waiting = waiting
        count = int(served.sum())
        if count == 0:
            return np.zeros(active.size)
        return served / count

    @property
    def spec(self) -> dict:
        return {"name": self.name}


POLICY_NAMES = ("mw", "mw_prop", "static", "po", "owm")


def make_policy(
    name: str,
    sla: Optional[SlaVector] = None,
    params: Optional[PolicyParams] = None,
    monitor_lemmas: bool = False,
):
    """Instantiate a policy from its config name."""
    if name in ("mw", "mw_prop"):
        if sla is None or params is None:
            raise ValueError(f"policy '{name}' needs both an SLA vector and parameters")
        return MultiplicativeWeights(
            sla, params, proportional=(name == "mw_prop"), monitor_lemmas=monitor_lemmas
        )
    if name == "static":
        if sla is None:
            raise ValueError("policy 'static' needs an SLA vector")
        return StaticSla(sla)
    if name == "po":
        if sla is None:
            raise ValueError("policy 'po' needs an SLA vector")
        return OnlineProportional(sla)
    if name == "owm":
        return OnlineWorkMaximizing()
    raise ValueError(f"unknown policy '{name}' (expected one of {', '.join(POLICY_NAMES)})")
