"""Exact and analytic references for checking the simulators.

* :func:`exact_final_size` solves the epidemic on a tiny graph as an
  absorbing Markov chain over ``{S, I, R}^N``.
* :func:`tree_bounds` evaluates the expected outbreak size and the
  duration bound on a complete m-ary tree.
* :func:`chi_square_gof` compares a final-size histogram with a reference
  distribution or with a second histogram.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, TextIO

from scipy.stats import chi2

from .distributions import EpidemicParams, transmissibility
from .graph import Network

__all__ = [
    "FinalSizePmf",
    "TreeBound",
    "ChiSquareReport",
    "exact_final_size",
    "tree_bounds",
    "tree_expected_size",
    "tree_duration_bound",
    "chi_square_gof",
]

MAX_EXACT_NODES = 10


@dataclass(frozen=True)
class FinalSizePmf:
    masses: Mapping[int, float]

    def mean(self) -> float:
        return math.fsum(s * m for s, m in self.masses.items())

    def total(self) -> float:
        return math.fsum(self.masses.values())

    def to_csv(self, sink: TextIO) -> None:
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["size", "probability"])
        for s in sorted(self.masses):
            w.writerow([s, repr(self.masses[s])])


def _subset_law(items: list[tuple[int, float]]) -> list[tuple[int, float]]:
    """Distribution of the set of ``items`` that fire, each ``(bit, prob)``
    firing independently; returned as ``(mask, probability)`` pairs."""
    law = [(0, 1.0)]
    for bit, pr in items:
        nxt = []
        for mask, w in law:
            if pr < 1.0:
                nxt.append((mask, w * (1.0 - pr)))
            if pr > 0.0:
                nxt.append((mask | bit, w * pr))
        law = nxt
    return law


def exact_final_size(net: Network, params: EpidemicParams, seeds: Iterable[int]) -> FinalSizePmf:
    """Exact final-size distribution for a network of at most 10 nodes.

    Rounds are synchronous: every infected node tries each susceptible
    neighbour with probability ``p``, then recovers with probability ``q``.
    The result also holds for the queue-ordered Naive SIR, because the final
    infected set depends only on each node's independent coin flips, not on
    the order in which nodes act.
    """
    n = net.node_count
    if n > MAX_EXACT_NODES:
        raise ValueError(f"exact enumeration supports at most {MAX_EXACT_NODES} nodes, got {n}")
    seeds = sorted(set(int(s) for s in seeds))
    if not seeds or seeds[0] < 0 or seeds[-1] >= n:
        raise ValueError("seeds must be a nonempty set of valid node ids")
    p, q = params.p, params.q
    nbr = [sum(1 << v for v in net.adjacency[u]) for u in range(n)]
    everyone = (1 << n) - 1

    @lru_cache(maxsize=None)
    def absorb(s_mask: int, i_mask: int) -> tuple[tuple[int, float], ...]:
        if i_mask == 0:
            return ((n - bin(s_mask).count("1"), 1.0),)
        at_risk = []
        for v in range(n):
            bit = 1 << v
            if s_mask & bit:
                hits = bin(nbr[v] & i_mask).count("1")
                if hits:
                    at_risk.append((bit, 1.0 - (1.0 - p) ** hits))
        infections = _subset_law(at_risk)
        recoveries = _subset_law([(1 << v, q) for v in range(n) if i_mask >> v & 1])
        stay = 0.0
        acc: dict[int, float] = {}
        for new, w_new in infections:
            for rec, w_rec in recoveries:
                w = w_new * w_rec
                if new == 0 and rec == 0:
                    stay += w
                    continue
                for size, pr in absorb(s_mask & ~new, (i_mask & ~rec) | new):
                    acc[size] = acc.get(size, 0.0) + w * pr
        norm = 1.0 - stay
        return tuple((s, v / norm) for s, v in sorted(acc.items()))

    i0 = sum(1 << s for s in seeds)
    result = dict(absorb(everyone & ~i0, i0))
    return FinalSizePmf({s: m for s, m in sorted(result.items()) if m > 0.0})


@dataclass(frozen=True)
class TreeBound:
    """Expected outbreak size and mean-duration bounds on a complete m-ary tree.

    The ``_closed`` fields use the closed form ``(x**depth - 1) / (x - 1)``
    with ``x = m * P(X_1 = 1)``. The ``_safe`` fields sum ``x**d`` over
    ``d = 0..depth``, which is what unrolling ``E[T_n] <= 1/q + x E[T_{n-1}]``
    from ``E[T_0] = 1/q`` gives, and which is the exact expected size.
    """

    m: int
    depth: int
    expected_size_closed: float
    expected_size_safe: float
    duration_bound_closed: float
    duration_bound_safe: float


def _geometric(x: float, terms: int) -> float:
    # 1 + x + ... + x**(terms-1)
    if x == 1.0:
        return float(terms)
    return (x ** terms - 1.0) / (x - 1.0)


def tree_bounds(m: int, depth: int, params: EpidemicParams) -> TreeBound:
    if m < 1 or depth < 0:
        raise ValueError("need m >= 1 and depth >= 0")
    x = m * transmissibility(params)
    closed = _geometric(x, depth)
    safe = _geometric(x, depth + 1)
    return TreeBound(m, depth, closed, safe, closed / params.q, safe / params.q)


def tree_expected_size(m: int, depth: int, params: EpidemicParams, *, closed_form: bool = False) -> float:
    b = tree_bounds(m, depth, params)
    return b.expected_size_closed if closed_form else b.expected_size_safe


def tree_duration_bound(m: int, depth: int, params: EpidemicParams, *, closed_form: bool = False) -> float:
    b = tree_bounds(m, depth, params)
    return b.duration_bound_closed if closed_form else b.duration_bound_safe


@dataclass(frozen=True)
class ChiSquareReport:
    statistic: float
    dof: int
    p_value: float
    alpha: float
    passed: bool
    bins: int

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return (f"chi2={self.statistic:.3f} dof={self.dof} p={self.p_value:.4g} "
                f"alpha={self.alpha:g} {verdict}")


def _pool(keys, weight_of, min_weight=5.0):
    """Group consecutive keys until each group's ``weight_of`` reaches ``min_weight``."""
    groups, cur, w = [], [], 0.0
    for k in keys:
        cur.append(k)
        w += weight_of(k)
        if w >= min_weight:
            groups.append(cur)
            cur, w = [], 0.0
    if cur:
        if groups:
            groups[-1].extend(cur)
        else:
            groups.append(cur)
    return groups


def _report(stat: float, dof: int, alpha: float, bins: int) -> ChiSquareReport:
    if dof < 1:
        warnings.warn("chi-square test degenerates to a single bin; passing trivially",
                      RuntimeWarning, stacklevel=3)
        return ChiSquareReport(0.0, 0, 1.0, alpha, True, bins)
    pval = float(chi2.sf(stat, dof)) if math.isfinite(stat) else 0.0
    return ChiSquareReport(float(stat), dof, pval, alpha, pval >= alpha, bins)


def chi_square_gof(observed: Mapping[int, int], expected: FinalSizePmf | Mapping[int, int],
                   alpha: float = 0.001, min_total: int = 10_000) -> ChiSquareReport:
    """Pearson chi-square test of a size histogram.

    Against a :class:`FinalSizePmf` this is a goodness-of-fit test; against a
    second histogram it is a two-sample homogeneity test. Adjacent bins are
    pooled until every expected count is at least 5.
    """
    n_obs = sum(observed.values())
    if n_obs < min_total:
        raise ValueError(f"need at least {min_total} observations, got {n_obs}")
    if isinstance(expected, FinalSizePmf):
        keys = sorted(set(observed) | set(expected.masses))
        exp = {k: n_obs * expected.masses.get(k, 0.0) for k in keys}
        if any(exp[k] == 0.0 and observed.get(k, 0) for k in keys):
            # an impossible outcome was observed; pooling must not hide it
            dof = max(sum(1 for k in keys if exp[k] > 0.0) - 1, 1)
            return ChiSquareReport(math.inf, dof, 0.0, alpha, False, len(keys))
        groups = _pool(keys, exp.__getitem__)
        stat = 0.0
        for g in groups:
            o = sum(observed.get(k, 0) for k in g)
            e = sum(exp[k] for k in g)
            if e == 0.0:
                continue
            stat += (o - e) ** 2 / e
        return _report(stat, len(groups) - 1, alpha, len(groups))

    n_other = sum(expected.values())
    if n_other < min_total:
        raise ValueError(f"need at least {min_total} observations, got {n_other}")
    keys = sorted(set(observed) | set(expected))
    total = n_obs + n_other
    small = min(n_obs, n_other) / total
    combined = {k: observed.get(k, 0) + expected.get(k, 0) for k in keys}
    groups = _pool(keys, lambda k: combined[k] * small)
    stat = 0.0
    for g in groups:
        c = sum(combined[k] for k in g)
        for sample, size in ((observed, n_obs), (expected, n_other)):
            o = sum(sample.get(k, 0) for k in g)
            e = size * c / total
            stat += (o - e) ** 2 / e
    return _report(stat, len(groups) - 1, alpha, len(groups))
