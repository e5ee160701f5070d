"""Validation statistics: success rate, box-plot summaries, Mann-Whitney U."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

EXACT_MAX_TOTAL = 12


class MannWhitneyResult(NamedTuple):
    u: float
    p: float


@dataclass(frozen=True)
class SampleSummary:
    count: int
    mean: float
    median: float
    q1: float
    q3: float
    min: float
    max: float


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="mergesort")
    ranks = np.empty(len(pooled))
    sorted_vals = pooled[order]
    i = 0
    while i < len(pooled):
        j = i
        while j + 1 < len(pooled) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_null_counts(doubled_ranks: np.ndarray, n: int) -> dict[int, int]:
    """Number of size-n subsets of the pooled ranks per doubled rank sum."""
    # layers[k] maps doubled rank sum -> count of k-subsets
    layers: list[dict[int, int]] = [{0: 1}] + [{} for _ in range(n)]
    for r in doubled_ranks:
        r = int(r)
        for k in range(min(n, len(layers) - 1), 0, -1):
            for s, c in layers[k - 1].items():
                layers[k][s + r] = layers[k].get(s + r, 0) + c
    return layers[n]


def mann_whitney_u(x: Sequence[float], y: Sequence[float]) -> MannWhitneyResult:
    """U statistic of ``x`` and its two-sided p-value.

    Exact permutation p-value (midranks, ties included) when n + m <= 12,
    otherwise the tie-corrected normal approximation with continuity correction.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([x, y])
    ranks = _midranks(pooled)
    u = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    centre = n * m / 2.0
    if n + m <= EXACT_MAX_TOTAL:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        counts = _exact_null_counts(doubled, n)
        total = sum(counts.values())
        dev = abs(2.0 * u - 2.0 * centre)
        offset = n * (n + 1)  # doubled n(n+1)/2
        extreme = sum(c for s, c in counts.items() if abs((s - offset) - 2.0 * centre) >= dev - 1e-9)
        p = extreme / total
    else:
        _, tie_counts = np.unique(pooled, return_counts=True)
        big_n = n + m
        tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (big_n * (big_n - 1))
        var = n * m / 12.0 * ((big_n + 1) - tie_term)
        if var <= 0:
            p = 1.0
        else:
            z = max(abs(u - centre) - 0.5, 0.0) / math.sqrt(var)
            p = math.erfc(z / math.sqrt(2.0))
    p = min(max(p, np.nextafter(0.0, 1.0)), 1.0)
    return MannWhitneyResult(u, float(p))


def summarize(sample: Sequence[float]) -> SampleSummary:
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise ValueError("cannot summarise an empty sample")
    q1, med, q3 = np.percentile(x, [25, 50, 75], method="linear")
    return SampleSummary(int(x.size), float(x.mean()), float(med), float(q1), float(q3), float(x.min()),
                         float(x.max()))


def success_rate(records) -> float:
    records = list(records)
    if not records:
        raise ValueError("no episode records")
    return sum(1 for r in records if r.success) / len(records)
