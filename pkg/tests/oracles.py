"""Independent reference implementations used to freeze expected test values.

These deliberately avoid the library's computation paths: waiting is summed
passenger-by-passenger from discretized quanta, and the softmax oracle works
in log space with plain math.
"""

from __future__ import annotations

import math

import numpy as np


def brute_force_waiting(arrival, service, n_quanta: int = 10_000) -> np.ndarray:
    """Per-interval waiting by enumerating equal passenger quanta.

    Each quantum is treated as one passenger at its midpoint index: its
    arrival time inverts the cumulative arrival curve, its departure is the
    first service jump covering its index (horizon end if never served).
    Exact when quantum edges align with arrival breakpoints and jump sizes.
    """
    total = arrival.total
    M = len(arrival.boundaries_s) - 1
    waits = np.zeros(M)
    if total <= 0:
        return waits
    h = total / n_quanta
    jump_times = np.asarray(service.jump_times_s, dtype=float)
    jump_cum = np.cumsum(np.asarray(service.jump_sizes, dtype=float))
    horizon = float(arrival.boundaries_s[-1])
    a_bounds = np.asarray(arrival.cumulative, dtype=float)

    for j in range(n_quanta):
        idx = (j + 0.5) * h
        # invert the piecewise-linear arrival curve at this passenger index
        seg = int(np.searchsorted(a_bounds, idx, side="left"))
        seg = max(seg, 1)
        rise = a_bounds[seg] - a_bounds[seg - 1]
        frac = (idx - a_bounds[seg - 1]) / rise if rise > 0 else 1.0
        t_arr = arrival.boundaries_s[seg - 1] + frac * (
            arrival.boundaries_s[seg] - arrival.boundaries_s[seg - 1]
        )
        served_at = np.searchsorted(jump_cum, idx, side="left")
        t_dep = jump_times[served_at] if served_at < len(jump_times) else horizon
        waits[seg - 1] += (t_dep - t_arr) * h
    return waits


def softmax_oracle(costs, theta: float):
    """Probability of each alternative from plain-math exponentials."""
    finite = [c for c in costs if math.isfinite(c)]
    shift = min(finite)
    weights = [math.exp(-theta * (c - shift)) if math.isfinite(c) else 0.0 for c in costs]
    denom = sum(weights)
    return [w / denom for w in weights]
