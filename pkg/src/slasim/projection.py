"""KL projection onto the truncated simplex.

The truncated simplex with floor ``eps`` over ``n`` coordinates is the set
of nonnegative vectors that sum to one and keep every coordinate at or
above ``eps / n``.  Projecting a positive weight vector ``y`` means finding
the point ``x`` of that set minimizing the relative entropy
``sum_i x(i) * log(x(i) / y(i))``.

The minimizer has a simple structure: sort the coordinates of ``y``
ascending, clip some prefix of them to the floor ``eps / n``, and rescale
the rest by a common factor so the total is one.  The smallest prefix that
leaves all unclipped coordinates at or above the floor is the optimal one,
so a single pass over candidate prefix sizes finds it in O(n log n).
"""

from __future__ import annotations

import numpy as np


def project_truncated_simplex(y: np.ndarray, eps: float) -> np.ndarray:
    """Project a positive vector onto the truncated simplex under KL loss.

    Args:
        y: strictly positive weights, shape (n,) with n >= 2.  Any positive
           scale is accepted; the result depends only on the direction.
        eps: truncation parameter in (0, 1); every output coordinate is at
           least eps / n.

    Returns:
        Vector x with x.sum() == 1 (to roundoff) and x >= eps / n, the
        KL-closest such point to y.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size < 2:
        raise ValueError(f"expected a 1-d vector with at least 2 entries, got shape {y.shape}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0.0):
        raise ValueError("weights must be finite and strictly positive")
    if not (0.0 < eps < 1.0):
        raise ValueError(f"eps must lie in (0, 1), got {eps}")

    n = y.size
    floor = eps / n
    # Scale invariance: work with y / max(y) so huge or tiny inputs behave.
    y = y / y.max()

    order = np.argsort(y, kind="stable")  # ties break by original index
    ys = y[order]
    # suffix[k] = sum of ys[k:]
    suffix = np.cumsum(ys[::-1])[::-1]

    # Clipped coordinates form a prefix of the ascending order.  Take the
    # first prefix size whose rescale keeps the smallest unclipped entry at
    # the floor or above; size n-1 always qualifies.
    k = n - 1
    scale = (1.0 - floor * (n - 1)) / suffix[n - 1]
    for cand in range(n - 1):
        c = (1.0 - floor * cand) / suffix[cand]
        if ys[cand] * c >= floor:
            k = cand
            scale = c
            break

    x = np.empty(n)
    x[order[:k]] = floor
    x[order[k:]] = ys[k:] * scale
    return x


def kl_divergence(x: np.ndarray, y: np.ndarray) -> float:
    """Relative entropy sum_i x(i) log(x(i)/y(i)) with 0 log 0 = 0.

    Requires y > 0 wherever x > 0; x must be nonnegative.  No
    normalization is applied.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if np.any(x < 0.0):
        raise ValueError("x must be nonnegative")
    pos = x > 0.0
    if np.any(y[pos] <= 0.0):
        raise ValueError("y must be positive wherever x is")
    out = np.zeros_like(x)
    out[pos] = x[pos] * np.log(x[pos] / y[pos])
    return float(out.sum())
