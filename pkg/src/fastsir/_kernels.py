"""Compiled inner loops for the simulators.

Random numbers come from xoshiro256** (Blackman & Vigna), seeded by running
SplitMix64 from a 64-bit key. The key for repetition ``i`` under master seed
``s`` is ``mix64(mix64(s) + (i + 1) * GOLDEN)``; ``mix64`` is the SplitMix64
finalizer, a bijection, so distinct stream indices get distinct keys.
Keeping the generator inside the kernels means a fresh stream costs a few
nanoseconds, which matters at 10^5 repetitions on small graphs.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S17 = np.uint64(17)
_S45 = np.uint64(45)
_S7 = np.uint64(7)
_S11 = np.uint64(11)
_FIVE = np.uint64(5)
_NINE = np.uint64(9)
_ONE = np.uint64(1)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << k) | (x >> (np.uint64(64) - k))


@njit(cache=True)
def seed_state(master_seed, stream_index, state):
    """Fill ``state`` (4 x uint64) for stream ``stream_index`` of ``master_seed``."""
    key = _mix64(np.uint64(master_seed)) + (np.uint64(stream_index) + _ONE) * _GOLDEN
    x = _mix64(key)
    for i in range(4):
        x += _GOLDEN
        state[i] = _mix64(x)


@njit(cache=True, inline="always")
def next_u64(s):
    result = _rotl(s[1] * _FIVE, _S7) * _NINE
    t = s[1] << _S17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], _S45)
    return result


@njit(cache=True, inline="always")
def next_double(s):
    return np.float64(next_u64(s) >> _S11) * _TO_UNIT


@njit(cache=True, inline="always")
def below(s, n):
    # floor(u * n); bias is at most n / 2**53
    return np.int64(next_double(s) * n)


@njit(cache=True)
def fill_doubles(s, out):
    for i in range(out.size):
        out[i] = next_double(s)


@njit(cache=True)
def subset(k, k1, s, mark, stamp, out):
    """Uniform ``k1``-subset of ``range(k)`` into ``out[:k1]``.

    Robert Floyd's method draws the smaller of the subset and its complement,
    so exactly ``min(k1, k - k1)`` random numbers are consumed. ``mark`` is a
    scratch array of length >= ``k`` whose entries are compared against
    ``stamp``; the caller passes a fresh stamp per call to avoid clearing it.
    Returns the number of draws.
    """
    if k1 <= k - k1:
        m = k1
        complement = False
    else:
        m = k - k1
        complement = True
    c = 0
    for j in range(k - m, k):
        t = below(s, j + 1)
        if mark[t] == stamp:
            t = j
        mark[t] = stamp
        if not complement:
            out[c] = t
            c += 1
    if complement:
        for i in range(k):
            if mark[i] != stamp:
                out[c] = i
                c += 1
    return m


@njit(cache=True)
def naive_run(indptr, indices, seeds, p, q, s, infected, qnode, qround, counters):
    """One Naive SIR realization. ``infected`` (uint8, zeroed) doubles as
    the ``not S(v)`` indicator and the final recovered set.

    Each queue entry carries the round in which it acts; new infections and
    surviving infecteds are re-queued for the next round, so the FIFO order
    processes rounds in sequence. Returns ``(total_infected, duration)``.
    ``counters`` accumulates dequeues, infection attempts and RNG draws.
    """
    n = infected.size
    head = 0
    size = 0
    total = 0
    for i in range(seeds.size):
        v = seeds[i]
        if infected[v] == 0:
            infected[v] = 1
            qnode[(head + size) % n] = v
            qround[(head + size) % n] = 0
            size += 1
            total += 1
    last = 0
    deq = 0
    attempts = 0
    draws = 0
    while size > 0:
        u = qnode[head]
        t = qround[head]
        head = (head + 1) % n
        size -= 1
        deq += 1
        if t > last:
            last = t
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if infected[v] == 0:
                attempts += 1
                draws += 1
                if next_double(s) < p:
                    infected[v] = 1
                    total += 1
                    tail = (head + size) % n
                    qnode[tail] = v
                    qround[tail] = t + 1
                    size += 1
        draws += 1
        if next_double(s) >= q:
            tail = (head + size) % n
            qnode[tail] = u
            qround[tail] = t + 1
            size += 1
    counters[0] += deq
    counters[1] += attempts
    counters[2] += draws
    return total, last + 1


@njit(cache=True)
def fast_run(indptr, indices, seeds, offsets, values, s, infected, qnode, qgen,
             mark, stamp, picks, counters):
    """One FastSIR realization; ``stamp`` is the next free marker value.

    Each dequeued node draws its total number of transmissions ``k1`` from
    the CDF row of its degree, picks ``k1`` of its neighbours uniformly and
    infects those still susceptible. Returns
    ``(total_infected, duration, next_stamp)``; duration is the deepest
    generation plus one.
    """
    tail = 0
    for i in range(seeds.size):
        v = seeds[i]
        if infected[v] == 0:
            infected[v] = 1
            qnode[tail] = v
            qgen[tail] = 0
            tail += 1
    head = 0
    last = 0
    attempts = 0
    draws = 0
    while head < tail:
        u = qnode[head]
        g = qgen[head]
        head += 1
        if g > last:
            last = g
        start = indptr[u]
        d = indptr[u + 1] - start
        off = offsets[d]
        r = next_double(s)
        draws += 1
        k1 = np.searchsorted(values[off:off + d + 1], r, side="right")
        if k1 > d:
            k1 = d
        if k1 == 0:
            continue
        draws += subset(d, k1, s, mark, stamp, picks)
        stamp += 1
        for j in range(k1):
            v = indices[start + picks[j]]
            attempts += 1
            if infected[v] == 0:
                infected[v] = 1
                qnode[tail] = v
                qgen[tail] = g + 1
                tail += 1
    counters[0] += head
    counters[1] += attempts
    counters[2] += draws
    return tail, last + 1, stamp


@njit(cache=True)
def naive_batch(indptr, indices, seeds, p, q, master_seed, start, totals, durations, counters):
    """Repetitions ``start .. start + len(totals) - 1`` of Naive SIR."""
    n = indptr.size - 1
    infected = np.zeros(n, dtype=np.uint8)
    qnode = np.empty(max(n, 1), dtype=np.int64)
    qround = np.empty(max(n, 1), dtype=np.int64)
    s = np.empty(4, dtype=np.uint64)
    for i in range(totals.size):
        infected[:] = 0
        seed_state(master_seed, start + i, s)
        tot, dur = naive_run(indptr, indices, seeds, p, q, s, infected, qnode, qround, counters)
        totals[i] = tot
        durations[i] = dur


@njit(cache=True)
def fast_batch(indptr, indices, seeds, offsets, values, master_seed, start, totals, durations,
               counters):
    """Repetitions ``start .. start + len(totals) - 1`` of FastSIR."""
    n = indptr.size - 1
    infected = np.zeros(n, dtype=np.uint8)
    qnode = np.empty(max(n, 1), dtype=np.int64)
    qgen = np.empty(max(n, 1), dtype=np.int64)
    kmax = offsets.size
    mark = np.zeros(kmax + 1, dtype=np.int64)
    picks = np.empty(kmax + 1, dtype=np.int64)
    s = np.empty(4, dtype=np.uint64)
    stamp = 1
    for i in range(totals.size):
        infected[:] = 0
        seed_state(master_seed, start + i, s)
        tot, dur, stamp = fast_run(indptr, indices, seeds, offsets, values, s, infected,
                                   qnode, qgen, mark, stamp, picks, counters)
        totals[i] = tot
        durations[i] = dur
