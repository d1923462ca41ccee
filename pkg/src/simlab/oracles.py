"""Brute-force reference implementations used to cross-check the fast routines."""

from __future__ import annotations

import numpy as np


def h_extrema_bruteforce(v, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Witness check straight from the definition, O(n^2); ties go to the smaller index."""
    v = np.asarray(v, dtype=float)

    def minima(w):
        out = []
        n = w.size
        for i in range(n):
            left = False
            k = i - 1
            while k >= 0 and w[k] > w[i]:
                if w[k] >= w[i] + h:
                    left = True
                    break
                k -= 1
            if not left:
                continue
            k = i + 1
            while k < n and w[k] >= w[i]:
                if w[k] >= w[i] + h:
                    out.append(i)
                    break
                k += 1
        return np.array(out, dtype=np.int64)

    return minima(v), minima(-v)


def overshoot_index_bruteforce(products, a: float, t: float = 1.0) -> int | None:
    total = 0.0
    for j, p in enumerate(products, start=1):
        total += p
        if total > a * t:
            return j
    return None


def sup_before_crossing_bruteforce(first, products, b: float, t: float = 1.0, closed: bool = False) -> float:
    n = overshoot_index_bruteforce(products, b, t)
    if n is None:
        n = len(products) + 1
    stop = n if closed else n - 1
    vals = [first[j] / t for j in range(min(stop, len(first)))]
    return max(vals) if vals else 0.0
