"""Natural-breaks splitting of a 1-D density spectrum and per-class budget allocation.

The breaks solver is the exact dynamic program over contiguous segments of the
sorted values, minimizing total within-class sum of squared deviations. Runs of
equal values are collapsed into weighted points first: an optimal contiguous
partition never has to split a run, so the DP over distinct values is exact and
much smaller. Very large inputs are compressed to equal-frequency quantile bins
before the DP; exactness holds below that threshold.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import DegeneratePartitionError

# Above this many distinct values the DP runs on quantile-bin representatives.
BIN_THRESHOLD = 20_000
N_BINS = 1_024


@dataclass
class DensityPartition:
    """Contiguous density classes, sparsest first.

    clusters holds member positions into the value array handed to the solver;
    breaks holds the h-1 upper boundaries (value scale) of all but the densest
    class. ratios/budgets stay None until allocate_budget fills them in.
    """

    clusters: list
    breaks: np.ndarray
    ratios: np.ndarray | None = None
    budgets: np.ndarray | None = None


def _weighted_jenks_dp(u: np.ndarray, w: np.ndarray, h: int) -> np.ndarray:
    """Optimal segment edges over ascending distinct values u with weights w.

    Returns h+1 edge positions (0 and len(u) included). Ties between equal-cost
    splits resolve to the smallest predecessor edge. Within each layer the
    optimal predecessor is non-decreasing in the segment end (the within-class
    SSD satisfies the concave Monge condition), so a divide-and-conquer sweep
    needs only O(p log p) cost evaluations instead of the naive O(p^2).
    """
    p = u.size
    centered = u - np.average(u, weights=w)  # SSD is shift-invariant; this conditions the sums
    cw = np.concatenate([[0.0], np.cumsum(w)])
    c1 = np.concatenate([[0.0], np.cumsum(w * centered)])
    c2 = np.concatenate([[0.0], np.cumsum(w * centered * centered)])

    back = np.zeros((h + 1, p + 1), dtype=np.int64)
    prev = np.full(p + 1, np.inf)
    prev[0] = 0.0
    for c in range(1, h + 1):
        cur = np.full(p + 1, np.inf)
        # Classes c..h each need one value, bounding this layer's edge range.
        j_hi = p - (h - c)
        stack = [(c, j_hi, c - 1, j_hi - 1)]
        while stack:
            jlo, jhi, ilo, ihi = stack.pop()
            if jlo > jhi:
                continue
            jm = (jlo + jhi) // 2
            lo, hi = max(ilo, c - 1), min(ihi, jm - 1)
            if hi - lo < 32:
                best_i, best_v = lo, np.inf
                for i in range(lo, hi + 1):
                    ww = cw[jm] - cw[i]
                    s1 = c1[jm] - c1[i]
                    v = prev[i] + (c2[jm] - c2[i]) - s1 * s1 / ww
                    if v < best_v:
                        best_i, best_v = i, v
            else:
                i = np.arange(lo, hi + 1)
                ww = cw[jm] - cw[i]
                s1 = c1[jm] - c1[i]
                totals = prev[i] + (c2[jm] - c2[i]) - s1 * s1 / ww
                k = int(np.argmin(totals))
                best_i, best_v = int(i[k]), float(totals[k])
            cur[jm] = best_v
            back[c, jm] = best_i
            stack.append((jlo, jm - 1, ilo, best_i))
            stack.append((jm + 1, jhi, best_i, ihi))
        prev = cur
    edges = np.empty(h + 1, dtype=np.int64)
    edges[h] = p
    for c in range(h, 0, -1):
        edges[c - 1] = back[c, edges[c]]
    return edges


def _quantile_bins(v_sorted: np.ndarray, n_bins: int):
    """Equal-frequency compression: (representative mean, count) per bin."""
    n = v_sorted.size
    edges = np.unique(np.round(np.linspace(0, n, n_bins + 1)).astype(np.int64))
    reps = np.empty(edges.size - 1)
    counts = np.empty(edges.size - 1, dtype=np.int64)
    for b in range(edges.size - 1):
        seg = v_sorted[edges[b] : edges[b + 1]]
        reps[b] = seg.mean()
        counts[b] = seg.size
    # Bin means can collide when a value dominates several bins; merge them.
    uniq, inverse = np.unique(reps, return_inverse=True)
    merged = np.zeros(uniq.size, dtype=np.int64)
    np.add.at(merged, inverse, counts)
    return uniq, merged


def jenks_breaks(values, h: int) -> DensityPartition:
    """Split values into h contiguous classes minimizing within-class squared deviation.

    Classes come back sparsest first (ascending value). A value exactly on a
    break boundary belongs to the lower class. Raises DegeneratePartitionError
    when h exceeds the number of distinct values.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot partition an empty value list")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    if h < 1:
        raise ValueError("h must be at least 1")
    uniq, counts = np.unique(v, return_counts=True)
    if h > uniq.size:
        raise DegeneratePartitionError(
            f"{h} classes requested but only {uniq.size} distinct values; use h <= {uniq.size}"
        )
    if uniq.size > BIN_THRESHOLD:
        uniq, counts = _quantile_bins(np.sort(v), N_BINS)
    edges = _weighted_jenks_dp(uniq, counts, h)
    breaks = uniq[edges[1:h] - 1]
    # Membership by value: count of breaks strictly below puts boundary ties low.
    cluster_of = np.searchsorted(breaks, v, side="left")
    clusters = [np.flatnonzero(cluster_of == c) for c in range(h)]
    return DensityPartition(clusters=clusters, breaks=breaks)


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


def allocate_budget(
    partition: DensityPartition,
    budget: int,
    temperature: float,
    total_unlabeled: int,
) -> DensityPartition:
    """Split a budget across classes, favoring small (sparse) ones.

    Ratios are softmax((1 - |C_i|/total)/temperature). Integer budgets are the
    floors of ratio*budget; the remainder is handed out one unit at a time over
    classes in ascending size order (sparsest first on ties), skipping full
    classes, so sum(budgets) == min(budget, total_unlabeled) and every budget
    is capped by its class size.
    """
    if budget < 1:
        raise ValueError("budget must be positive")
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    sizes = np.array([len(c) for c in partition.clusters], dtype=np.int64)
    if sizes.sum() != total_unlabeled:
        raise ValueError(
            f"cluster sizes sum to {sizes.sum()} but total_unlabeled={total_unlabeled}"
        )
    if np.any(sizes == 0):
        raise ValueError("clusters must be non-empty")
    if budget > total_unlabeled:
        warnings.warn(
            f"budget {budget} exceeds pool size {total_unlabeled}; clamping"
        )
        budget = total_unlabeled
    ratios = _softmax((1.0 - sizes / total_unlabeled) / temperature)
    budgets = np.minimum(np.floor(ratios * budget).astype(np.int64), sizes)
    order = np.argsort(sizes, kind="stable")
    deficit = budget - int(budgets.sum())
    while deficit > 0:
        progressed = False
        for c in order:
            if deficit == 0:
                break
            if budgets[c] < sizes[c]:
                budgets[c] += 1
                deficit -= 1
                progressed = True
        if not progressed:  # cannot happen while budget <= total, kept as a guard
            raise RuntimeError("budget allocation failed to converge")
    return replace(partition, ratios=ratios, budgets=budgets)
