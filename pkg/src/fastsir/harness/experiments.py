"""Repetition ensembles, (p, q) sweeps and the hybrid selector."""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, TextIO

import numpy as np

from .. import __version__
from ..distributions import (EpidemicParams, InfectionCdfTable, build_cdf_table, load_table,
                             pmf_table_recursive, save_table, PrecisionPolicy)
from ..graph import Network
from ..simulate import simulate_batch

__all__ = [
    "GridSpec",
    "SweepConfig",
    "CellResult",
    "TableSource",
    "obtain_table",
    "resolve_seeds",
    "run_repetitions",
    "run_hybrid",
    "sweep",
    "write_sweep_csv",
    "precalc_command",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ["p", "q", "algorithm", "reps", "mean_infected", "std_infected",
               "mean_duration", "wall_seconds", "ratio_naive_over_fast"]
TIMING_COLUMNS = ("wall_seconds", "ratio_naive_over_fast")


@dataclass(frozen=True)
class GridSpec:
    """Inclusive ``start:stop:step`` grid over a probability axis."""

    start: float
    stop: float
    step: float

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be start:stop:step, got {text!r}")
        return cls(*(float(x) for x in parts))

    @classmethod
    def single(cls, value: float) -> "GridSpec":
        return cls(value, value, 1.0)

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("grid step must be positive")
        if not 0.0 <= self.start <= self.stop <= 1.0:
            raise ValueError("grid must satisfy 0 <= start <= stop <= 1")

    def values(self) -> list[float]:
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 12) for i in range(count)]


@dataclass(frozen=True)
class SweepConfig:
    p_grid: GridSpec
    q_grid: GridSpec
    repetitions: int = 2000
    algorithm: str = "both"
    seed_nodes: tuple[int, ...] | str = "max-degree"
    master_seed: int = 0
    dist_cache_path: str | None = None
    workers: int = 1
    pilot_reps: int | None = None
    keep_histogram: bool = False

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.algorithm not in ("naive", "fast", "hybrid", "both"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.q_grid.start <= 0.0:
            raise ValueError("q grid must stay above 0")
        if isinstance(self.seed_nodes, str) and self.seed_nodes not in ("max-degree", "each"):
            raise ValueError("seed_nodes must be node ids, 'max-degree' or 'each'")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def cells(self) -> list[EpidemicParams]:
        return [EpidemicParams(p, q) for p in self.p_grid.values() for q in self.q_grid.values()]


@dataclass
class CellResult:
    p: float
    q: float
    algorithm: str
    repetitions: int
    mean_infected: float
    std_infected: float
    mean_duration: float
    wall_seconds: float
    histogram: dict[int, int] | None = None
    table_seconds: float = 0.0
    table_source: str | None = None
    selected: str | None = None
    ratio_naive_over_fast: float | None = None
    totals: np.ndarray | None = field(default=None, repr=False)
    durations: np.ndarray | None = field(default=None, repr=False)

    @property
    def charged_seconds(self) -> float:
        """Wall time charged in speed comparisons: simulation plus reading the
        precomputed table from disk. Building a table is precalculation and
        is not charged."""
        return self.wall_seconds + (self.table_seconds if self.table_source == "loaded" else 0.0)

    def csv_row(self) -> list[str]:
        ratio = "" if self.ratio_naive_over_fast is None else repr(self.ratio_naive_over_fast)
        return [repr(self.p), repr(self.q), self.algorithm, str(self.repetitions),
                repr(self.mean_infected), repr(self.std_infected), repr(self.mean_duration),
                f"{self.wall_seconds:.6f}", ratio]


@dataclass(frozen=True)
class TableSource:
    table: InfectionCdfTable
    seconds: float
    source: str


def _cache_file(cache_dir: str | os.PathLike, params: EpidemicParams) -> Path:
    return Path(cache_dir) / f"cdf_p{params.p!r}_q{params.q!r}.fsir"


def obtain_table(net: Network, params: EpidemicParams,
                 dist_cache: str | os.PathLike | None = None) -> TableSource:
    """Load a covering CDF table from ``dist_cache`` (a directory) or build one.

    A freshly built dense table ``0..k_max`` is written back to the cache.
    """
    k_max = int(net.degrees.max()) if net.node_count else 0
    needed = np.unique(net.degrees).tolist()
    if dist_cache is not None:
        path = _cache_file(dist_cache, params)
        if path.exists():
            t0 = time.perf_counter()
            with open(path, "rb") as fh:
                table = load_table(fh)
            elapsed = time.perf_counter() - t0
            if table.params == params and not table.covers(needed):
                return TableSource(table, elapsed, "loaded")
    t0 = time.perf_counter()
    rows = pmf_table_recursive(k_max, params)
    bits = PrecisionPolicy().mantissa_bits(k_max, params.p)
    degrees = None if dist_cache is not None else needed
    table = build_cdf_table(rows, degrees, params, bits)
    elapsed = time.perf_counter() - t0
    if dist_cache is not None:
        Path(dist_cache).mkdir(parents=True, exist_ok=True)
        with open(_cache_file(dist_cache, params), "wb") as fh:
            save_table(table, fh)
    return TableSource(table, elapsed, "built")


def resolve_seeds(net: Network, seed_nodes) -> tuple[int, ...] | str:
    if seed_nodes == "max-degree":
        return (net.max_degree_node(),)
    if seed_nodes == "each":
        return "each"
    if isinstance(seed_nodes, (int, np.integer)):
        return (int(seed_nodes),)
    return tuple(int(s) for s in seed_nodes)


# process-pool plumbing: the network and table are shipped once per worker
_WORKER: dict = {}


def _init_worker(net, table):
    _WORKER["net"] = net
    _WORKER["table"] = table


def _worker_chunk(params, seeds, algorithm, master_seed, start, count):
    totals, durations, _ = simulate_batch(_WORKER["net"], params, seeds, algorithm,
                                          master_seed, start, count, _WORKER["table"])
    return totals, durations


def _chunks(start: int, count: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, count))
    base, extra = divmod(count, parts)
    out, pos = [], start
    for i in range(parts):
        size = base + (i < extra)
        out.append((pos, size))
        pos += size
    return out


def _simulate(net, params, seeds, algorithm, master_seed, start, count, table, pool):
    """Repetitions ``start..start+count-1``; returns totals, durations, seconds."""
    if seeds == "each":
        parts_t, parts_d = [], []
        t0 = time.perf_counter()
        for u in range(net.node_count):
            t, d, _ = _simulate(net, params, (u,), algorithm, master_seed,
                                start + u * count, count, table, pool)[:3]
            parts_t.append(t)
            parts_d.append(d)
        return np.concatenate(parts_t), np.concatenate(parts_d), time.perf_counter() - t0
    if pool is None:
        t0 = time.perf_counter()
        totals, durations, _ = simulate_batch(net, params, seeds, algorithm, master_seed,
                                              start, count, table)
        return totals, durations, time.perf_counter() - t0
    t0 = time.perf_counter()
    futures = [pool.submit(_worker_chunk, params, seeds, algorithm, master_seed, s, c)
               for s, c in _chunks(start, count, pool._max_workers)]
    results = [f.result() for f in futures]
    elapsed = time.perf_counter() - t0
    return (np.concatenate([r[0] for r in results]), np.concatenate([r[1] for r in results]),
            elapsed)


def _summarize(params, algorithm, totals, durations, seconds, keep_histogram) -> CellResult:
    values, counts = np.unique(totals, return_counts=True)
    hist = {int(v): int(c) for v, c in zip(values, counts)}
    return CellResult(
        p=params.p, q=params.q, algorithm=algorithm, repetitions=int(totals.size),
        mean_infected=float(totals.mean()), std_infected=float(totals.std()),
        mean_duration=float(durations.mean()), wall_seconds=max(seconds, 1e-9),
        histogram=hist if keep_histogram else None, totals=totals, durations=durations,
    )


def run_repetitions(net: Network, params: EpidemicParams, seeds, reps: int, algorithm: str,
                    master_seed: int = 0, *, table: InfectionCdfTable | None = None,
                    dist_cache: str | os.PathLike | None = None, workers: int = 1,
                    warmup: bool = True, keep_histogram: bool = True,
                    _pool: ProcessPoolExecutor | None = None) -> CellResult:
    """``reps`` independent realizations on stream indices ``0..reps-1``.

    Only the simulations are timed. For FastSIR the time to obtain the table
    is reported separately in ``table_seconds``. One discarded warm-up run
    precedes the timed batch.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if algorithm not in ("naive", "fast"):
        raise ValueError(f"algorithm must be 'naive' or 'fast', got {algorithm!r}")
    seeds = resolve_seeds(net, seeds)
    src = None
    if algorithm == "fast" and table is None:
        src = obtain_table(net, params, dist_cache)
        table = src.table
    if warmup:
        warm = (net.max_degree_node(),) if seeds == "each" else seeds
        simulate_batch(net, params, warm, algorithm, master_seed, 0, 1, table)
    pool = _pool
    own_pool = pool is None and workers > 1
    if own_pool:
        pool = ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(net, table))
    try:
        totals, durations, seconds = _simulate(net, params, seeds, algorithm, master_seed,
                                               0, reps, table, pool)
    finally:
        if own_pool:
            pool.shutdown()
    cell = _summarize(params, algorithm, totals, durations, seconds, keep_histogram)
    if src is not None:
        cell.table_seconds, cell.table_source = src.seconds, src.source
    return cell


Runner = Callable[[int, int], tuple[np.ndarray, np.ndarray]]


def run_hybrid(net: Network, params: EpidemicParams, seeds, reps: int, pilot_reps: int,
               master_seed: int = 0, *, table: InfectionCdfTable | None = None,
               dist_cache=None, runners: dict[str, Runner] | None = None,
               keep_histogram: bool = True) -> CellResult:
    """Pilot both algorithms, then finish the ensemble with the faster one.

    Naive SIR runs streams ``0..pilot-1`` and FastSIR ``pilot..2*pilot-1``,
    each timed; the winner runs streams ``2*pilot..reps-1``. All ``reps``
    outcomes are pooled, which is valid because both algorithms sample the
    same final-size law. ``runners`` replaces the simulators (used for
    testing the bookkeeping); each maps ``(start, count)`` to
    ``(totals, durations)``.
    """
    if pilot_reps < 2 or 2 * pilot_reps > reps:
        raise ValueError("need 2 <= pilot_reps and 2 * pilot_reps <= reps")
    src = None
    if runners is None:
        seeds = resolve_seeds(net, seeds)
        if table is None:
            src = obtain_table(net, params, dist_cache)
            table = src.table

        def make(alg):
            def run(start, count):
                t, d, _ = _simulate(net, params, seeds, alg, master_seed, start, count, table, None)
                return t, d
            return run

        runners = {"naive": make("naive"), "fast": make("fast")}
        warm = (net.max_degree_node(),) if seeds == "each" else seeds
        for alg in ("naive", "fast"):
            simulate_batch(net, params, warm, alg, master_seed, 0, 1, table)
    timings, parts_t, parts_d = {}, [], []
    for i, alg in enumerate(("naive", "fast")):
        t0 = time.perf_counter()
        t, d = runners[alg](i * pilot_reps, pilot_reps)
        timings[alg] = time.perf_counter() - t0
        parts_t.append(np.asarray(t))
        parts_d.append(np.asarray(d))
    if src is not None and src.source == "loaded":
        timings["fast"] += src.seconds
    winner = min(("naive", "fast"), key=lambda a: timings[a])
    rest = reps - 2 * pilot_reps
    t0 = time.perf_counter()
    if rest:
        t, d = runners[winner](2 * pilot_reps, rest)
        parts_t.append(np.asarray(t))
        parts_d.append(np.asarray(d))
    elapsed = time.perf_counter() - t0 + timings["naive"] + timings["fast"]
    cell = _summarize(params, "hybrid", np.concatenate(parts_t), np.concatenate(parts_d),
                      elapsed, keep_histogram)
    cell.selected = winner
    if src is not None:
        cell.table_seconds, cell.table_source = src.seconds, src.source
    return cell


def sweep(net: Network, config: SweepConfig, out: TextIO | None = None,
          network_label: str = "<generated>") -> list[CellResult]:
    """One :class:`CellResult` per grid cell and algorithm, optionally as CSV.

    With ``algorithm="both"`` each cell gets a naive and a fast row, both
    carrying the naive/fast wall-time ratio.
    """
    algs = {"both": ("naive", "fast")}.get(config.algorithm, (config.algorithm,))
    seeds = resolve_seeds(net, config.seed_nodes)
    results: list[CellResult] = []
    pool = None
    try:
        for params in config.cells():
            src = None
            if "fast" in algs or "hybrid" in algs:
                src = obtain_table(net, params, config.dist_cache_path)
            if config.workers > 1 and "hybrid" not in algs:
                table = src.table if src is not None else None
                pool = ProcessPoolExecutor(config.workers, initializer=_init_worker,
                                           initargs=(net, table))
            cell_results = []
            for alg in algs:
                if alg == "hybrid":
                    pilot = config.pilot_reps or min(max(2, config.repetitions // 20),
                                                     config.repetitions // 2)
                    cell = run_hybrid(net, params, seeds, config.repetitions, pilot,
                                      config.master_seed, table=src.table,
                                      keep_histogram=config.keep_histogram)
                else:
                    cell = run_repetitions(net, params, seeds, config.repetitions, alg,
                                           config.master_seed,
                                           table=src.table if alg == "fast" else None,
                                           keep_histogram=config.keep_histogram, _pool=pool)
                if alg in ("fast", "hybrid"):
                    cell.table_seconds, cell.table_source = src.seconds, src.source
                cell_results.append(cell)
            if pool is not None:
                pool.shutdown()
                pool = None
            if config.algorithm == "both":
                naive, fast = cell_results
                ratio = naive.charged_seconds / fast.charged_seconds
                naive.ratio_naive_over_fast = fast.ratio_naive_over_fast = ratio
            results.extend(cell_results)
    finally:
        if pool is not None:
            pool.shutdown()
    if out is not None:
        write_sweep_csv(results, out, network_label, seeds, config.master_seed)
    return results


def write_sweep_csv(results: Sequence[CellResult], out: TextIO, network_label: str,
                    seeds, master_seed: int) -> None:
    seed_text = seeds if isinstance(seeds, str) else " ".join(str(s) for s in seeds)
    out.write(f"# network: {network_label}\n")
    out.write(f"# seed_nodes: {seed_text}\n")
    out.write(f"# master_seed: {master_seed}\n")
    out.write(f"# version: fastsir {__version__}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for cell in results:
        w.writerow(cell.csv_row())


def precalc_command(p: float, q: float, k_max: int, out_path: str | os.PathLike,
                    precision_bits: int | None = None, echo=print) -> tuple[InfectionCdfTable, float]:
    """Build the dense table ``0..k_max`` for ``(p, q)`` and save it."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    params = EpidemicParams(p, q)
    bits = PrecisionPolicy().mantissa_bits(k_max, params.p) if precision_bits is None else precision_bits
    t0 = time.perf_counter()
    rows = pmf_table_recursive(k_max, params, precision_bits=bits)
    table = build_cdf_table(rows, None, params, bits)
    elapsed = time.perf_counter() - t0
    with open(out_path, "wb") as fh:
        save_table(table, fh)
    if echo is not None:
        echo(f"built CDF table p={p} q={q} k_max={k_max} at {bits} bits "
             f"in {elapsed:.3f} s -> {out_path}")
    return table, elapsed
