"""Distribution of the number of neighbours one infected node infects.

For a node with ``n`` susceptible neighbours, per-step transmission
probability ``p`` and per-step recovery probability ``q``, ``X_n`` counts the
neighbours it infects before recovering. Three routes to ``P(X_n = k)`` live
here:

* :func:`pmf_direct` -- the closed-form alternating sum, evaluated in MPFR at
  a caller-chosen precision (it cancels catastrophically in doubles).
* :func:`pmf_series` -- the same quantity as a geometric mixture of binomials
  over the infectious period; every term is nonnegative so doubles suffice.
* :func:`pmf_table_recursive` -- all rows ``0..n_max`` at once through the
  two-term recurrence in ``n`` and ``k``, costing ``O(n_max**2)``.

FastSIR consumes the cumulative rows as an :class:`InfectionCdfTable`, which
can be cached on disk with :func:`save_table` / :func:`load_table`.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from operator import mul
from typing import BinaryIO, Iterable, Mapping, Sequence, TextIO

import gmpy2
import numpy as np
from scipy.stats import binom

__all__ = [
    "EpidemicParams",
    "PmfRow",
    "InfectionCdfTable",
    "PrecisionPolicy",
    "LEGACY_POLICY",
    "table_for_degrees",
    "PrecisionError",
    "TableFormatError",
    "direct_precision",
    "pmf_direct",
    "pmf_direct_row",
    "pmf_series",
    "pmf_series_row",
    "pmf_table_recursive",
    "pmf_restricted",
    "transmissibility",
    "build_cdf_table",
    "save_table",
    "load_table",
    "export_table_csv",
]


class PrecisionError(ArithmeticError):
    """The working precision was too low to keep a row nonnegative."""


class TableFormatError(ValueError):
    """A CDF cache file failed validation."""


@dataclass(frozen=True)
class EpidemicParams:
    """Per-step transmission (``p``) and recovery (``q``) probabilities.

    ``q = 0`` is rejected: nobody ever recovers and the closed form is 0/0.
    """

    p: float
    q: float

    def __post_init__(self):
        p, q = float(self.p), float(self.q)
        if not 0.0 <= p <= 1.0 or math.isnan(p):
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not 0.0 < q <= 1.0:
            raise ValueError(f"q must lie in (0, 1], got {self.q}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class PrecisionPolicy:
    """Working mantissa width for the recursion.

    With ``factor`` set, the width is ``max(minimum, ceil(factor * n))``.
    The default (``factor=None``) sizes it from the recurrence's error growth
    instead: a perturbation of the ``k = 0`` seeds reaches row ``n`` amplified
    by at most ``(3 - 2p)**n``, so ``n*log2(3 - 2p) + guard`` bits keep row
    errors near ``2**-guard``. The fixed ``0.8`` rule (``LEGACY_POLICY``) is
    only adequate for ``p`` above about 0.63.
    """

    factor: float | None = None
    minimum: int = 64
    guard: int = 64

    def mantissa_bits(self, n: int, p: float = 0.0) -> int:
        if self.factor is not None:
            return max(self.minimum, math.ceil(self.factor * n))
        growth = math.log2(3.0 - 2.0 * min(max(p, 0.0), 1.0))
        return max(self.minimum, math.ceil(n * growth) + self.guard)


LEGACY_POLICY = PrecisionPolicy(factor=0.8)


@dataclass(frozen=True)
class PmfRow:
    degree: int
    masses: np.ndarray

    def __post_init__(self):
        if len(self.masses) != self.degree + 1:
            raise ValueError("a row for degree n carries n + 1 masses")


def direct_precision(n: int) -> int:
    """Bits that keep the alternating sum for degree ``n`` accurate to ~1e-15.

    The largest term is ``C(n,k) C(k,l) <= 3**n`` in magnitude, about
    ``1.6 n`` bits, so ``2 n + 64`` leaves a comfortable margin.
    """
    return 2 * n + 64


def transmissibility(params: EpidemicParams) -> float:
    """``P(X_1 = 1)``: chance one edge ever transmits before recovery."""
    p, q = params.p, params.q
    if p == 0.0:
        return 0.0
    return p / (1.0 - (1.0 - p) * (1.0 - q))


def _degenerate_row(n: int, p: float) -> np.ndarray | None:
    if p == 0.0:
        row = np.zeros(n + 1)
        row[0] = 1.0
        return row
    if p == 1.0:
        row = np.zeros(n + 1)
        row[n] = 1.0
        return row
    return None


def _check_nk(n: int, k: int) -> None:
    if n < 0 or not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")


def _precision(bits: int):
    return gmpy2.context(gmpy2.get_context(), precision=bits)


def _escape_terms(n: int, p, q):
    # f(j) = (1-p)^j / (1 - (1-q)(1-p)^j) for j = 0..n, in the active context
    s = 1 - gmpy2.mpfr(p)
    r = 1 - gmpy2.mpfr(q)
    out = []
    sj = gmpy2.mpfr(1)
    for _ in range(n + 1):
        out.append(sj / (1 - r * sj))
        sj *= s
    return out


def pmf_direct(n: int, k: int, params: EpidemicParams, precision_bits: int | None = None) -> float:
    """``P(X_n = k)`` from the alternating-sum closed form.

    The sum is evaluated with ``precision_bits`` of mantissa (default
    :func:`direct_precision`) and rounded to a double on return.
    """
    _check_nk(n, k)
    deg = _degenerate_row(n, params.p)
    if deg is not None:
        return float(deg[k])
    bits = direct_precision(n) if precision_bits is None else precision_bits
    if bits < 64:
        raise ValueError("precision_bits must be at least 64")
    with _precision(bits):
        f = _escape_terms(n, params.p, params.q)
        m = n - k
        acc = gmpy2.mpfr(0)
        for l in range(k + 1):
            term = gmpy2.comb(k, l) * f[m + l]
            acc = acc - term if l & 1 else acc + term
        return float(params.q * gmpy2.comb(n, k) * acc)


def pmf_direct_row(n: int, params: EpidemicParams, precision_bits: int | None = None) -> np.ndarray:
    """All of ``P(X_n = 0..n)`` by the alternating sum.

    The ``f(j)`` terms are rounded once to ``precision_bits``-bit fixed point
    and each alternating sum is then accumulated exactly in integers.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    deg = _degenerate_row(n, params.p)
    if deg is not None:
        return deg
    bits = direct_precision(n) if precision_bits is None else precision_bits
    if bits < 64:
        raise ValueError("precision_bits must be at least 64")
    scale = gmpy2.mpz(1) << bits
    with _precision(bits + 64):
        fixed = [gmpy2.mpz(gmpy2.rint(v * scale)) for v in _escape_terms(n, params.p, params.q)]
        q = gmpy2.mpfr(params.q)
        out = np.empty(n + 1)
        for k in range(n + 1):
            acc = sum(map(mul, _signed_binomials(k), fixed[n - k:]))
            out[k] = float(q * gmpy2.comb(n, k) * gmpy2.mpfr(acc) / scale)
    return out


@lru_cache(maxsize=1024)
def _signed_binomials(k: int) -> tuple:
    return tuple(-gmpy2.comb(k, l) if l & 1 else gmpy2.comb(k, l) for l in range(k + 1))


def _series_terms(params: EpidemicParams, tail_tol: float) -> int:
    if tail_tol <= 0:
        raise ValueError("tail_tol must be positive")
    if params.q == 1.0:
        return 1
    # sum_{mu >= M} q (1-q)^mu * binom_pmf <= (1-q)^M
    terms = math.ceil(math.log(tail_tol) / math.log1p(-params.q))
    if terms > 10**7:
        raise ValueError(f"series needs {terms} terms to reach tail_tol={tail_tol}")
    return max(terms, 1)


def pmf_series_row(n: int, params: EpidemicParams, tail_tol: float = 1e-16) -> np.ndarray:
    """``P(X_n = 0..n)`` as a geometric mixture over the infectious period.

    A node infectious for exactly ``mu + 1`` steps (probability
    ``q (1-q)**mu``) infects each neighbour independently with probability
    ``1 - (1-p)**(mu+1)``, so the row is a mixture of binomials. The sum is
    truncated once the remaining geometric weight drops below ``tail_tol``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    deg = _degenerate_row(n, params.p)
    if deg is not None:
        return deg
    terms = _series_terms(params, tail_tol)
    mu = np.arange(terms, dtype=np.float64)
    weights = params.q * np.exp(mu * math.log1p(-params.q)) if params.q < 1.0 else np.ones(1)
    hit = -np.expm1((mu + 1.0) * math.log1p(-params.p))
    k = np.arange(n + 1)
    masses = binom.pmf(k[:, None], n, hit[None, :])
    return masses @ weights


def pmf_series(n: int, k: int, params: EpidemicParams, tail_tol: float = 1e-16) -> float:
    """Single entry of :func:`pmf_series_row`."""
    _check_nk(n, k)
    if params.p == 0.0:
        return 1.0 if k == 0 else 0.0
    return float(pmf_series_row(n, params, tail_tol)[k])


def pmf_table_recursive(n_max: int, params: EpidemicParams,
                        policy: PrecisionPolicy = PrecisionPolicy(),
                        precision_bits: int | None = None) -> list[PmfRow]:
    """Rows ``P(X_n = .)`` for ``n = 0..n_max`` via the two-term recurrence.

    ``P(X_n=0)`` comes from its closed form and each further entry from
    ``P(X_n=k) = (n/k) P(X_{n-1}=k-1) - ((n-k+1)/k) P(X_n=k-1)``. The whole
    table runs at one precision, ``policy.mantissa_bits(n_max, p)`` unless
    ``precision_bits`` overrides it, because every row feeds the next.
    Negative masses smaller than ``2**-(bits/2)`` are rounding noise and
    clamped to zero; anything larger raises :class:`PrecisionError`.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    p, q = params.p, params.q
    if p in (0.0, 1.0):
        return [PmfRow(n, _degenerate_row(n, p)) for n in range(n_max + 1)]
    bits = policy.mantissa_bits(n_max, p) if precision_bits is None else precision_bits
    rows = [PmfRow(0, np.ones(1))]
    with _precision(bits):
        noise = gmpy2.mpfr(2) ** (-min(bits // 2, 53))
        s = 1 - gmpy2.mpfr(p)
        r = 1 - gmpy2.mpfr(q)
        qm = gmpy2.mpfr(q)
        prev = [gmpy2.mpfr(1)]
        sn = gmpy2.mpfr(1)
        for n in range(1, n_max + 1):
            sn *= s
            cur = [qm * sn / (1 - r * sn)]
            for k in range(1, n + 1):
                cur.append((n * prev[k - 1] - (n - k + 1) * cur[k - 1]) / k)
            out = np.empty(n + 1)
            for k, v in enumerate(cur):
                if v < 0:
                    if -v > noise:
                        raise PrecisionError(
                            f"P(X_{n}={k}) = {float(v):.3e} at {bits} bits; "
                            "increase the working precision")
                    cur[k] = v = gmpy2.mpfr(0)
                out[k] = float(v)
            rows.append(PmfRow(n, out))
            prev = cur
    return rows


@lru_cache(maxsize=64)
def _recursive_rows(n_max: int, params: EpidemicParams) -> tuple[np.ndarray, ...]:
    return tuple(r.masses for r in pmf_table_recursive(n_max, params))


def pmf_restricted(n: int, m: int, k: int, params: EpidemicParams) -> float:
    """Chance that exactly ``k`` of ``m`` susceptible neighbours end up infected
    when the node draws over all ``n`` neighbours and the other ``n - m``
    cannot be infected.

    Sums ``C(n-m, i-k) C(m, k) P(X_n = i) / C(n, i)`` over the ``i`` hits that
    put exactly ``k`` of them on susceptible nodes. Should equal ``P(X_m=k)``.
    """
    if not 0 <= k <= m <= n:
        raise ValueError(f"need 0 <= k <= m <= n, got n={n}, m={m}, k={k}")
    row = _recursive_rows(n, params)[n]
    total = 0.0
    cm = math.comb(m, k)
    for i in range(k, n - m + k + 1):
        total += math.comb(n - m, i - k) * cm * row[i] / math.comb(n, i)
    return total


@dataclass(frozen=True, eq=False)
class InfectionCdfTable:
    """Cumulative rows ``C_n(k) = P(X_n <= k)`` keyed by degree."""

    params: EpidemicParams
    rows: Mapping[int, np.ndarray]
    precision_bits: int

    def __post_init__(self):
        for n, row in self.rows.items():
            _validate_cdf_row(n, row)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(sorted(self.rows))

    @property
    def k_max(self) -> int:
        return max(self.rows) if self.rows else -1

    def covers(self, degrees: Iterable[int]) -> list[int]:
        """Degrees in ``degrees`` that have no row."""
        return sorted(set(int(d) for d in degrees) - set(self.rows))

    @cached_property
    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """``(offsets, values)``: row ``n`` is ``values[offsets[n]:offsets[n]+n+1]``,
        ``offsets[n] = -1`` when absent. This is the layout the kernels read."""
        offsets = np.full(self.k_max + 1, -1, dtype=np.int64)
        chunks = []
        pos = 0
        for n in self.degrees:
            offsets[n] = pos
            chunks.append(self.rows[n])
            pos += n + 1
        values = np.concatenate(chunks) if chunks else np.empty(0)
        offsets.flags.writeable = False
        values.flags.writeable = False
        return offsets, values

    def pmf(self, n: int) -> np.ndarray:
        return np.diff(self.rows[n], prepend=0.0)

    def __eq__(self, other):
        if not isinstance(other, InfectionCdfTable):
            return NotImplemented
        return (self.params == other.params and self.precision_bits == other.precision_bits
                and self.degrees == other.degrees
                and all(np.array_equal(self.rows[n], other.rows[n]) for n in self.rows))


def _validate_cdf_row(n: int, row: np.ndarray) -> None:
    if len(row) != n + 1:
        raise ValueError(f"CDF row for degree {n} has {len(row)} entries, expected {n + 1}")
    if not np.all(np.isfinite(row)) or row[0] < 0.0:
        raise ValueError(f"CDF row for degree {n} has invalid values")
    if np.any(np.diff(row) < 0.0):
        raise ValueError(f"CDF row for degree {n} is not nondecreasing")
    if row[-1] != 1.0:
        raise ValueError(f"CDF row for degree {n} does not end at 1")


def build_cdf_table(rows: Sequence[PmfRow], degrees: Iterable[int] | None,
                    params: EpidemicParams, precision_bits: int) -> InfectionCdfTable:
    """Prefix-sum the requested rows into a CDF table.

    ``rows`` is indexed by degree (as from :func:`pmf_table_recursive`);
    ``degrees=None`` keeps every row. The last entry of each row is pinned to
    exactly 1 and earlier entries are capped at 1.
    """
    if degrees is None:
        degrees = range(len(rows))
    out = {}
    for n in sorted(set(int(d) for d in degrees)):
        if not 0 <= n < len(rows):
            raise KeyError(f"no PMF row for degree {n}")
        masses = np.asarray(rows[n].masses, dtype=np.float64)
        cdf = np.minimum(np.cumsum(masses), 1.0)
        cdf[-1] = 1.0
        cdf.flags.writeable = False
        out[n] = cdf
    return InfectionCdfTable(params, out, precision_bits)


def table_for_degrees(params: EpidemicParams, degrees: Iterable[int],
                      policy: PrecisionPolicy = PrecisionPolicy(),
                      precision_bits: int | None = None) -> InfectionCdfTable:
    """Sparse table covering exactly ``degrees``."""
    degrees = sorted(set(int(d) for d in degrees))
    n_max = degrees[-1] if degrees else 0
    bits = policy.mantissa_bits(n_max, params.p) if precision_bits is None else precision_bits
    rows = pmf_table_recursive(n_max, params, precision_bits=bits)
    return build_cdf_table(rows, degrees, params, bits)


_MAGIC = b"FSIR"
_VERSION = 1
_HEADER = struct.Struct("<4sIddII")
_ROW = struct.Struct("<I")


def save_table(table: InfectionCdfTable, sink: BinaryIO) -> None:
    """Little-endian binary: magic, version, ``p``, ``q``, precision, row count,
    then ``degree`` (u32) and ``degree + 1`` doubles per row."""
    sink.write(_HEADER.pack(_MAGIC, _VERSION, table.params.p, table.params.q,
                            table.precision_bits, len(table.rows)))
    for n in table.degrees:
        sink.write(_ROW.pack(n))
        sink.write(np.asarray(table.rows[n], dtype="<f8").tobytes())


def load_table(source: BinaryIO) -> InfectionCdfTable:
    head = source.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise TableFormatError("truncated header")
    magic, version, p, q, bits, count = _HEADER.unpack(head)
    if magic != _MAGIC:
        raise TableFormatError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise TableFormatError(f"unsupported format version {version}")
    try:
        params = EpidemicParams(p, q)
    except ValueError as exc:
        raise TableFormatError(str(exc)) from None
    rows = {}
    for _ in range(count):
        raw = source.read(_ROW.size)
        if len(raw) != _ROW.size:
            raise TableFormatError("truncated row header")
        (n,) = _ROW.unpack(raw)
        body = source.read(8 * (n + 1))
        if len(body) != 8 * (n + 1):
            raise TableFormatError(f"truncated row for degree {n}")
        if n in rows:
            raise TableFormatError(f"duplicate row for degree {n}")
        row = np.frombuffer(body, dtype="<f8").astype(np.float64)
        row.flags.writeable = False
        rows[n] = row
    if source.read(1):
        raise TableFormatError("trailing bytes after last row")
    try:
        return InfectionCdfTable(params, rows, bits)
    except ValueError as exc:
        raise TableFormatError(str(exc)) from None


def export_table_csv(table: InfectionCdfTable, sink: TextIO) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["degree", "k", "pmf", "cdf"])
    for n in table.degrees:
        cdf = table.rows[n]
        for k, (m, c) in enumerate(zip(table.pmf(n), cdf)):
            w.writerow([n, k, repr(float(m)), repr(float(c))])
