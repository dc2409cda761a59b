"""Self-check suites behind ``fastsir verify``.

Each suite is a list of named checks. A check never raises for a failed
property; it reports ``passed=False`` with a short detail string.
"""

from __future__ import annotations

import itertools
import math
import sys
from dataclasses import dataclass
from typing import Callable, TextIO

import numpy as np

from ..analysis import chi_square_gof, exact_final_size, tree_bounds
from ..distributions import (EpidemicParams, InfectionCdfTable, pmf_direct_row,
                             pmf_restricted, pmf_series_row, pmf_table_recursive,
                             table_for_degrees, transmissibility)
from ..graph import generate_m_ary_tree, generate_test_graph
from ..simulate import RngStream, SimCounters, sample_infection_count, sample_subset, simulate_batch

__all__ = ["CheckResult", "SUITES", "run_suite", "verify_command", "corrupt_table"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}" + (f": {self.detail}" if self.detail else "")


def _check(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    try:
        ok, detail = fn()
    except Exception as exc:  # report, don't throw
        return CheckResult(name, False, f"{type(exc).__name__}: {exc}")
    return CheckResult(name, bool(ok), detail)


def _dist_checks(**_) -> list[CheckResult]:
    grid = [0.1, 0.3, 0.5, 0.7, 0.9]
    n_max = 60
    out = []
    for p, q in itertools.product(grid, grid):
        params = EpidemicParams(p, q)

        def agree(params=params):
            rec = pmf_table_recursive(n_max, params)
            worst = worst_sum = worst_mean = 0.0
            t = transmissibility(params)
            for n in range(n_max + 1):
                d = pmf_direct_row(n, params)
                s = pmf_series_row(n, params)
                r = rec[n].masses
                worst = max(worst, np.abs(d - s).max(), np.abs(d - r).max(), np.abs(s - r).max())
                worst_sum = max(worst_sum, abs(math.fsum(r) - 1.0))
                worst_mean = max(worst_mean, abs(math.fsum(k * r[k] for k in range(n + 1)) - n * t))
            ok = worst <= 1e-12 and worst_sum <= 1e-12 and worst_mean <= 1e-10
            return ok, f"max diff {worst:.2e}, sum err {worst_sum:.2e}, mean err {worst_mean:.2e}"

        out.append(_check(f"three routes agree, p={p} q={q}, n<={n_max}", agree))

    def restricted():
        worst = 0.0
        for p, q in itertools.product(grid, grid):
            params = EpidemicParams(p, q)
            direct = [pmf_direct_row(m, params) for m in range(13)]
            for n in range(13):
                for m in range(n + 1):
                    for k in range(m + 1):
                        worst = max(worst, abs(pmf_restricted(n, m, k, params) - direct[m][k]))
        return worst <= 1e-10, f"max diff {worst:.2e}"

    out.append(_check("restricted-neighbourhood identity, n<=12", restricted))

    def binomial():
        from scipy.stats import binom
        worst = 0.0
        for p in grid:
            rows = pmf_table_recursive(n_max, EpidemicParams(p, 1.0))
            for n in range(n_max + 1):
                worst = max(worst, np.abs(rows[n].masses - binom.pmf(np.arange(n + 1), n, p)).max())
        return worst <= 1e-14, f"max diff {worst:.2e}"

    out.append(_check("q=1 rows are Binomial(n, p)", binomial))
    return out


EQUIVALENCE_FIXTURES = {
    "path5": lambda: generate_test_graph("path", 5),
    "star5": lambda: generate_test_graph("star", 5),
    "cycle5": lambda: generate_test_graph("cycle", 5),
    "complete5": lambda: generate_test_graph("complete", 5),
    "tree(2,2)": lambda: generate_m_ary_tree(2, 2),
}
EQUIVALENCE_PARAMS = [EpidemicParams(0.5, 0.5), EpidemicParams(0.3, 0.2)]


def corrupt_table(table: InfectionCdfTable, degree: int = 2) -> InfectionCdfTable:
    """Copy of ``table`` whose row for ``degree`` always transmits to every
    neighbour. A negative control for the equivalence suite."""
    rows = dict(table.rows)
    row = np.zeros(degree + 1)
    row[-1] = 1.0
    rows[degree] = row
    return InfectionCdfTable(table.params, rows, table.precision_bits)


def _histogram(totals: np.ndarray) -> dict[int, int]:
    values, counts = np.unique(totals, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def _equivalence_checks(corrupt: bool = False, reps: int = 20_000, **_) -> list[CheckResult]:
    tests = len(EQUIVALENCE_FIXTURES) * len(EQUIVALENCE_PARAMS) * 2
    alpha = 0.001 / tests
    out = []
    for (label, make), params in itertools.product(EQUIVALENCE_FIXTURES.items(), EQUIVALENCE_PARAMS):
        net = make()
        seed = net.max_degree_node()
        exact = exact_final_size(net, params, [seed])
        table = table_for_degrees(params, np.unique(net.degrees))
        if corrupt:
            table = corrupt_table(table)
        for alg in ("naive", "fast"):
            def run(alg=alg, net=net, table=table, params=params, exact=exact):
                totals, _, _ = simulate_batch(net, params, [seed], alg, 12345, 0, reps,
                                              table if alg == "fast" else None)
                rep = chi_square_gof(_histogram(totals), exact, alpha=alpha)
                return rep.passed, str(rep)
            out.append(_check(f"{alg} vs exact on {label}, p={params.p} q={params.q}", run))
    return out


def _tree_checks(reps: int = 2000, **_) -> list[CheckResult]:
    out = []
    for m, depth in ((2, 2), (3, 2), (2, 4)):
        net = generate_m_ary_tree(m, depth)
        for params in (EpidemicParams(0.5, 0.5), EpidemicParams(0.3, 0.2), EpidemicParams(0.9, 0.9)):
            bound = tree_bounds(m, depth, params)

            def duration(net=net, params=params, bound=bound):
                _, d, _ = simulate_batch(net, params, [0], "naive", 7, 0, reps)
                se = d.std(ddof=1) / math.sqrt(reps)
                limit = bound.duration_bound_safe + 3 * se
                return d.mean() <= limit, f"mean {d.mean():.3f} <= {limit:.3f}"

            def size(net=net, params=params, bound=bound):
                table = table_for_degrees(params, np.unique(net.degrees))
                worst = 0.0
                for alg in ("naive", "fast"):
                    t, _, _ = simulate_batch(net, params, [0], alg, 11, 0, reps, table)
                    se = max(t.std(ddof=1), 1e-12) / math.sqrt(reps)
                    worst = max(worst, abs(t.mean() - bound.expected_size_safe) / se)
                return worst <= 4.0, f"expected {bound.expected_size_safe:.3f}, worst z {worst:.2f}"

            tag = f"m={m} depth={depth} p={params.p} q={params.q}"
            out.append(_check(f"duration bound, {tag}", duration))
            out.append(_check(f"mean size, {tag}", size))
    return out


def _sampling_checks(**_) -> list[CheckResult]:
    out = []

    def inverse_transform():
        row = [0.25, 0.75, 1.0]
        got = [sample_infection_count(row, r) for r in (0.0, 0.5, 0.75)]
        return got == [0, 1, 2], f"got {got}"

    def uniform_subsets():
        rng = RngStream(2024, 0)
        counts = {c: 0 for c in itertools.combinations(range(6), 3)}
        draws = 100_000
        for _ in range(draws):
            counts[tuple(sorted(sample_subset(6, 3, rng)))] += 1
        from scipy.stats import chisquare
        stat, pval = chisquare(list(counts.values()))
        return pval >= 0.001, f"chi2={stat:.2f} p={pval:.4f} over 20 subsets"

    def work_counter():
        rng = RngStream(5, 0)
        bad = []
        for k in range(0, 30):
            for k1 in range(k + 1):
                c = SimCounters()
                s = sample_subset(k, k1, rng, c)
                if c.rng_draws != min(k1, k - k1) or len(s) != k1:
                    bad.append((k, k1))
        return not bad, "draws == min(k1, k-k1)" if not bad else f"mismatch at {bad[:3]}"

    out.append(_check("inverse transform boundary convention", inverse_transform))
    out.append(_check("uniform 3-subsets of 6", uniform_subsets))
    out.append(_check("subset work counter", work_counter))
    return out


SUITES = {
    "dist": _dist_checks,
    "equivalence": _equivalence_checks,
    "tree": _tree_checks,
    "sampling": _sampling_checks,
}


def run_suite(suite: str, corrupt: bool = False) -> list[CheckResult]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    return SUITES[suite](corrupt=corrupt)


def verify_command(suite: str, corrupt: bool = False, out: TextIO | None = None) -> int:
    """Run a suite, print one line per check and return an exit status."""
    out = sys.stdout if out is None else out
    results = run_suite(suite, corrupt)
    for r in results:
        print(r.line(), file=out, flush=True)
    failed = sum(not r.passed for r in results)
    print(f"{suite}: {len(results) - failed}/{len(results)} checks passed", file=out)
    return 1 if failed else 0
