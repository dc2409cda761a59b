"""Single epidemic realizations: Naive SIR and FastSIR.

Both simulators share one randomness contract: a :class:`RngStream` is fully
determined by ``(master_seed, stream_index)``, and a simulation is a pure
function of the network, parameters, seeds and stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _kernels as K
from .distributions import EpidemicParams, InfectionCdfTable
from .graph import Network

__all__ = [
    "RngStream",
    "SimCounters",
    "SimulationOutcome",
    "TableMismatchError",
    "run_naive",
    "run_fast",
    "sample_infection_count",
    "sample_subset",
    "simulate_batch",
]

_U64 = (1 << 64) - 1


class TableMismatchError(ValueError):
    """The CDF table does not fit the network or parameters."""


class RngStream:
    """Independent pseudo-random stream ``stream_index`` of ``master_seed``.

    xoshiro256** seeded through SplitMix64 (see :mod:`fastsir._kernels`).
    The stream is stateful: simulations and draws advance it.
    """

    __slots__ = ("master_seed", "stream_index", "state")

    def __init__(self, master_seed: int, stream_index: int = 0):
        if not 0 <= master_seed <= _U64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if stream_index < 0:
            raise ValueError("stream_index must be nonnegative")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        self.state = np.empty(4, dtype=np.uint64)
        K.seed_state(np.uint64(self.master_seed), np.int64(self.stream_index), self.state)

    def random(self) -> float:
        """Uniform double in ``[0, 1)``."""
        return float(K.next_double(self.state))

    def randoms(self, size: int) -> np.ndarray:
        out = np.empty(size)
        K.fill_doubles(self.state, out)
        return out

    def below(self, n: int) -> int:
        return int(K.below(self.state, n))

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index})"


@dataclass
class SimCounters:
    dequeues: int = 0
    infection_attempts: int = 0
    rng_draws: int = 0

    @classmethod
    def from_array(cls, a: np.ndarray) -> "SimCounters":
        return cls(int(a[0]), int(a[1]), int(a[2]))


@dataclass(frozen=True, eq=False)
class SimulationOutcome:
    """Result of one realization.

    ``recovered`` is the bit-packed (``np.packbits``) final recovered
    indicator. ``duration`` is the number of synchronous rounds for Naive SIR
    and the deepest generation index plus one for FastSIR.
    """

    recovered: np.ndarray
    total_infected: int
    duration: int
    node_count: int
    counters: SimCounters = field(default_factory=SimCounters)

    def recovered_mask(self) -> np.ndarray:
        return np.unpackbits(self.recovered, count=self.node_count).astype(bool)

    def recovered_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.recovered_mask())

    def __eq__(self, other):
        if not isinstance(other, SimulationOutcome):
            return NotImplemented
        return (self.total_infected == other.total_infected and self.duration == other.duration
                and self.node_count == other.node_count
                and np.array_equal(self.recovered, other.recovered))


def _seed_array(net: Network, seeds) -> np.ndarray:
    if isinstance(seeds, (int, np.integer)):
        seeds = [seeds]
    arr = np.asarray(list(dict.fromkeys(int(s) for s in seeds)), dtype=np.int64)
    if arr.size == 0:
        raise ValueError("at least one seed node is required")
    bad = arr[(arr < 0) | (arr >= net.node_count)]
    if bad.size:
        raise IndexError(f"seed node {int(bad[0])} outside [0, {net.node_count})")
    return arr


def check_table(net: Network, params: EpidemicParams, table: InfectionCdfTable) -> None:
    if table.params != params:
        raise TableMismatchError(
            f"table built for p={table.params.p}, q={table.params.q}; "
            f"simulation uses p={params.p}, q={params.q}")
    missing = table.covers(np.unique(net.degrees).tolist())
    if missing:
        raise TableMismatchError(f"CDF table has no row for degree {missing[0]}")


def run_naive(net: Network, params: EpidemicParams, seeds: int | Iterable[int],
              rng: RngStream) -> SimulationOutcome:
    """Naive SIR: each infected node tries every susceptible neighbour with
    probability ``p`` per round, then recovers with probability ``q``."""
    seed_arr = _seed_array(net, seeds)
    n = net.node_count
    infected = np.zeros(n, dtype=np.uint8)
    qnode = np.empty(n, dtype=np.int64)
    qround = np.empty(n, dtype=np.int64)
    counters = np.zeros(3, dtype=np.int64)
    total, duration = K.naive_run(net.indptr, net.indices, seed_arr, params.p, params.q,
                                  rng.state, infected, qnode, qround, counters)
    return SimulationOutcome(np.packbits(infected), int(total), int(duration), n,
                             SimCounters.from_array(counters))


def run_fast(net: Network, params: EpidemicParams, table: InfectionCdfTable,
             seeds: int | Iterable[int], rng: RngStream) -> SimulationOutcome:
    """FastSIR: each infected node is processed once, drawing how many of its
    neighbours it ever transmits to from ``table`` and infecting the
    susceptible ones among a uniform choice of that many neighbours."""
    check_table(net, params, table)
    seed_arr = _seed_array(net, seeds)
    offsets, values = table.packed
    n = net.node_count
    kmax = offsets.size
    infected = np.zeros(n, dtype=np.uint8)
    qnode = np.empty(n, dtype=np.int64)
    qgen = np.empty(n, dtype=np.int64)
    mark = np.zeros(kmax + 1, dtype=np.int64)
    picks = np.empty(kmax + 1, dtype=np.int64)
    counters = np.zeros(3, dtype=np.int64)
    total, duration, _ = K.fast_run(net.indptr, net.indices, seed_arr, offsets, values,
                                    rng.state, infected, qnode, qgen, mark, 1, picks, counters)
    return SimulationOutcome(np.packbits(infected), int(total), int(duration), n,
                             SimCounters.from_array(counters))


def sample_infection_count(cdf_row, r: float) -> int:
    """Inverse-transform draw: the smallest ``k`` with ``cdf_row[k] > r``."""
    row = np.asarray(cdf_row, dtype=np.float64)
    if row.ndim != 1 or row.size == 0 or row[-1] != 1.0:
        raise ValueError("CDF row must be a nonempty sequence ending at 1")
    if not 0.0 <= r < 1.0:
        raise ValueError("r must lie in [0, 1)")
    return int(np.searchsorted(row, r, side="right"))


def sample_subset(k: int, k1: int, rng: RngStream,
                  counters: SimCounters | None = None) -> frozenset[int]:
    """Uniformly random ``k1``-element subset of ``range(k)``.

    Draws ``min(k1, k - k1)`` random numbers; ``counters.rng_draws`` is
    incremented by that amount when given.
    """
    if not 0 <= k1 <= k:
        raise ValueError(f"need 0 <= k1 <= k, got k={k}, k1={k1}")
    mark = np.zeros(k + 1, dtype=np.int64)
    out = np.empty(k + 1, dtype=np.int64)
    draws = K.subset(k, k1, rng.state, mark, 1, out)
    if counters is not None:
        counters.rng_draws += int(draws)
    return frozenset(out[:k1].tolist())


def simulate_batch(net: Network, params: EpidemicParams, seeds, algorithm: str,
                   master_seed: int, start: int, count: int,
                   table: InfectionCdfTable | None = None):
    """Run repetitions ``start .. start + count - 1``, repetition ``i`` on
    stream ``i``. Returns ``(totals, durations, SimCounters)``.

    Identical to calling :func:`run_naive` / :func:`run_fast` once per stream,
    without per-run Python overhead.
    """
    seed_arr = _seed_array(net, seeds)
    totals = np.empty(count, dtype=np.int64)
    durations = np.empty(count, dtype=np.int64)
    counters = np.zeros(3, dtype=np.int64)
    ms = np.uint64(master_seed)
    if algorithm == "naive":
        K.naive_batch(net.indptr, net.indices, seed_arr, params.p, params.q, ms,
                      np.int64(start), totals, durations, counters)
    elif algorithm == "fast":
        if table is None:
            raise ValueError("FastSIR needs a CDF table")
        check_table(net, params, table)
        offsets, values = table.packed
        K.fast_batch(net.indptr, net.indices, seed_arr, offsets, values, ms,
                     np.int64(start), totals, durations, counters)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return totals, durations, SimCounters.from_array(counters)
