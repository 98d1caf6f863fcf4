"""Dynamic time warping with L1 point cost.

``dtw_distance`` runs the full O(m*n) dynamic program and backtracks the
alignment path; ``dtw_cost`` is the two-row cost-only variant;
``dtw_brute_force`` enumerates every warping path recursively and exists as
a test oracle for small inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySequence, TooLarge

BRUTE_FORCE_CELL_LIMIT = 64


@dataclass(frozen=True)
class WarpPath:
    """Monotone, continuous alignment path as 1-based (i, j) pairs."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("empty warp path")
        if self.pairs[0] != (1, 1):
            raise ValueError("warp path must start at (1, 1)")
        for (i0, j0), (i1, j1) in zip(self.pairs, self.pairs[1:]):
            if (i1 - i0, j1 - j0) not in ((1, 0), (0, 1), (1, 1)):
                raise ValueError(f"invalid step {(i0, j0)} -> {(i1, j1)}")

    @property
    def end(self) -> tuple[int, int]:
        return self.pairs[-1]


def _validate(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySequence("DTW inputs must be non-empty")
    return a, b


def dtw_distance(a, b) -> tuple[float, WarpPath]:
    """Minimal sum of |a_i - b_j| over all valid warping paths, plus one
    path achieving it (ties broken diagonal > up > left during backtrack)."""
    a, b = _validate(a, b)
    m, n = len(a), len(b)
    cost = np.empty((m, n))
    cost[0, 0] = abs(a[0] - b[0])
    for j in range(1, n):
        cost[0, j] = cost[0, j - 1] + abs(a[0] - b[j])
    for i in range(1, m):
        cost[i, 0] = cost[i - 1, 0] + abs(a[i] - b[0])
        for j in range(1, n):
            prev = cost[i - 1, j - 1]
            if cost[i - 1, j] < prev:
                prev = cost[i - 1, j]
            if cost[i, j - 1] < prev:
                prev = cost[i, j - 1]
            cost[i, j] = abs(a[i] - b[j]) + prev

    pairs = [(m, n)]
    i, j = m - 1, n - 1
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = cost[i - 1, j - 1], cost[i - 1, j], cost[i, j - 1]
            if diag <= up and diag <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        pairs.append((i + 1, j + 1))
    pairs.reverse()
    return float(cost[m - 1, n - 1]), WarpPath(tuple(pairs))


def dtw_cost(a, b) -> float:
    """Cost-only DTW using two rolling rows (O(min(m, n)) memory)."""
    a, b = _validate(a, b)
    if len(b) < len(a):
        a, b = b, a
    m, n = len(a), len(b)  # m <= n, roll over length-m rows
    prev = np.empty(m)
    curr = np.empty(m)
    prev[0] = abs(a[0] - b[0])
    for i in range(1, m):
        prev[i] = prev[i - 1] + abs(a[i] - b[0])
    for j in range(1, n):
        curr[0] = prev[0] + abs(a[0] - b[j])
        for i in range(1, m):
            best = prev[i]
            if prev[i - 1] < best:
                best = prev[i - 1]
            if curr[i - 1] < best:
                best = curr[i - 1]
            curr[i] = abs(a[i] - b[j]) + best
        prev, curr = curr, prev
    return float(prev[m - 1])


def dtw_brute_force(a, b) -> float:
    """Exhaustive-path oracle; raises TooLarge above 64 cost cells.

    The recursion accumulates local costs in the same order as the dynamic
    program, so the two agree exactly in floating point.
    """
    a, b = _validate(a, b)
    if len(a) * len(b) > BRUTE_FORCE_CELL_LIMIT:
        raise TooLarge(f"{len(a)}x{len(b)} exceeds {BRUTE_FORCE_CELL_LIMIT} cells")

    def best(i: int, j: int) -> float:
        local = abs(a[i] - b[j])
        if i == 0 and j == 0:
            return local
        candidates = []
        if i > 0 and j > 0:
            candidates.append(best(i - 1, j - 1))
        if i > 0:
            candidates.append(best(i - 1, j))
        if j > 0:
            candidates.append(best(i, j - 1))
        return local + min(candidates)

    return float(best(len(a) - 1, len(b) - 1))
