"""Regenerate data/demo_trace.csv, the bundled six-user demand trace.

Synthetic stand-in for a production demand trace: smooth per-user base
demand with slow daily-style cycles, sporadic bulk submissions, and idle
stretches.  Deterministic for the fixed seed; values are rounded to six
decimals to keep the CSV compact.
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from slasim.workloads import write_trace_csv

HORIZON = 14_628
N_USERS = 6
SEED = 20240611
TARGET_SHARE = np.array([0.23, 0.18, 0.25, 0.12, 0.14, 0.08])


def main() -> None:
    rng = np.random.default_rng(SEED)
    t = np.arange(HORIZON)
    loads = np.zeros((HORIZON, N_USERS))
    for i in range(N_USERS):
        period = 1800.0 + 450.0 * i
        cycle = 1.0 + 0.35 * np.sin(2.0 * np.pi * t / period + rng.uniform(0, 2 * np.pi))
        base = rng.gamma(50.0, TARGET_SHARE[i] / 50.0, size=HORIZON) * cycle
        # Idle stretches: a few windows of zero demand per user.
        for _ in range(rng.integers(2, 5)):
            start = int(rng.integers(0, HORIZON - 400))
            base[start : start + int(rng.integers(120, 400))] = 0.0
        loads[:, i] = base
    # Bulk submissions: rare heavy one-step spikes.
    n_bulk = 40
    steps = rng.integers(0, HORIZON, size=n_bulk)
    users = rng.integers(0, N_USERS, size=n_bulk)
    sizes = rng.gamma(4.0, 5.0, size=n_bulk)
    for s, u, v in zip(steps, users, sizes):
        loads[s, u] += v
    loads = np.round(loads, 6)
    out = os.path.join(os.path.dirname(__file__), "..", "data", "demo_trace.csv")
    write_trace_csv(out, loads)
    share = loads.mean(axis=0) / loads.mean(axis=0).sum()
    print(f"wrote {out}: {HORIZON} steps, {N_USERS} users")
    print("mean step demand:", float(loads.sum(axis=1).mean()))
    print("normalized user shares:", np.round(share, 4))


if __name__ == "__main__":
    main()
