"""Independent reference computations used by the tests.

Nothing here imports the package's solvers.
"""
import numpy as np


def power_law_time(t0, cap, x, alpha=0.15, beta=4):
    return t0 * (1 + alpha * (x / cap) ** beta)


def parallel_ue_bisection(t0, cap, demand, alpha=0.15, beta=4, iters=200):
    """UE of parallel links by bisection on the common cost mu.

    Each link carries cap * ((mu / t0 - 1) / alpha) ** (1 / beta) when mu > t0.
    """
    t0 = np.asarray(t0, dtype=float)
    cap = np.asarray(cap, dtype=float)

    def flows(mu):
        return cap * np.clip((mu / t0 - 1) / alpha, 0, None) ** (1.0 / beta)

    lo, hi = float(t0.min()), float(t0.min())
    while flows(hi).sum() < demand:
        hi *= 2
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if flows(mid).sum() < demand:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    return flows(mu), mu


def scalar_bisection(fn, lo, hi, iters=200):
    """Root of an increasing scalar function on [lo, hi]."""
    assert fn(lo) < 0 < fn(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def central_difference(fn, x, h):
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return grad


def point_queue_exit(f_in, capacity, h):
    """Literal recursion E[i+1] = E[i] + h * min(cap, (F[i] - E[i]) / h + g[i])."""
    f_in = np.asarray(f_in, dtype=float)
    g = np.diff(f_in) / h
    out = np.zeros_like(f_in)
    for i in range(len(f_in) - 1):
        out[i + 1] = out[i] + h * min(capacity, (f_in[i] - out[i]) / h + g[i])
    return out
