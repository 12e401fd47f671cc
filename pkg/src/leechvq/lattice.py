"""Integer-coordinate Leech lattice: membership, classes and shell counts.

Points are integer 24-vectors ``x``; the real lattice point is ``x / sqrt(8)``
and shell ``m`` holds the points with ``sum(x**2) == 16 * m``.

A class is the orbit of a leader (sorted multiset of absolute values) under
the coordinate placements and sign flips permitted by the Golay structure:

* even classes: the coordinates congruent to 2 mod 4 occupy the support of a
  codeword of matching weight ``k``; signs on the nonzero entries outside the
  support are free, signs on the support are free up to the parity fixed by
  ``sum(x) = 0 (mod 8)``;
* odd classes: every codeword gives a placement and, with the magnitudes
  placed, fixes all signs (entries congruent to 3 mod 4 sit on the codeword's
  support). The sum condition then holds for every placement exactly when an
  odd number of magnitudes are congruent to 3 or 5 mod 8, and for none
  otherwise.

So a class holds ``A * 2**B * P`` points, where ``A`` counts admissible
codewords, ``B`` the free sign bits and ``P`` the distinct magnitude
arrangements given a codeword.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np

from . import golay

DIM = 24
EVEN = "even"
ODD = "odd"
NOT_IN_LATTICE = "not_in_lattice"

# Shell sizes n(m) and cumulative counts N(m) as tabulated for the lattice.
TABLE1_SHELL_SIZES = {2: 196_560, 3: 16_773_120, 4: 398_034_000, 5: 4_629_381_120}
TABLE1_CUMULATIVE = {
    2: 196_560,
    3: 16_969_680,
    4: 415_003_680,
    5: 5_044_384_800,
    13: 280_974_212_784_720,
    19: 23_546_209_100_646_960,
}

# Class cardinalities for shells 2..4 keyed by (parity, leader as {value: count}).
TABLE2_CLASSES = {
    2: {
        (EVEN, ((4, 2), (0, 22))): 1104,
        (EVEN, ((2, 8), (0, 16))): 97152,
        (ODD, ((3, 1), (1, 23))): 98304,
    },
    3: {
        (EVEN, ((4, 1), (2, 8), (0, 15))): 3_108_864,
        (EVEN, ((2, 12), (0, 12))): 5_275_648,
        (ODD, ((5, 1), (1, 23))): 98_304,
        (ODD, ((3, 3), (1, 21))): 8_290_304,
    },
    4: {
        (EVEN, ((4, 4), (0, 20))): 170_016,
        (EVEN, ((8, 1), (0, 23))): 48,
        (EVEN, ((4, 2), (2, 8), (0, 14))): 46_632_960,
        (EVEN, ((6, 1), (2, 7), (0, 16))): 777_216,
        (EVEN, ((4, 1), (2, 12), (0, 11))): 126_615_552,
        (EVEN, ((2, 16), (0, 8))): 24_870_912,
        (ODD, ((5, 1), (3, 2), (1, 21))): 24_870_912,
        (ODD, ((3, 5), (1, 19))): 174_096_384,
    },
}


def multinomial(counts) -> int:
    n = sum(counts)
    out = math.factorial(n)
    for c in counts:
        out //= math.factorial(c)
    return out


@dataclass(frozen=True)
class Leader:
    """Descending absolute values of a class representative plus its parity."""

    values: tuple[int, ...]
    parity: str

    @property
    def levels(self) -> tuple[tuple[int, int], ...]:
        """Distinct values with multiplicities, largest value first."""
        c = Counter(self.values)
        return tuple((v, c[v]) for v in sorted(c, reverse=True))

    @property
    def norm2(self) -> int:
        return sum(v * v for v in self.values)

    def __str__(self) -> str:
        body = ", ".join(f"{v}^{p}" for v, p in self.levels)
        return f"{self.parity}{{{body}}}"


@dataclass(frozen=True)
class ClassDescriptor:
    leader: Leader
    shell: int
    A: int
    B: int
    placements: int
    class_rank: int = 0
    offset: int = 0
    # even classes only: number of coordinates congruent to 2 mod 4
    weight: int = field(default=0)

    @property
    def parity(self) -> str:
        return self.leader.parity

    @property
    def cardinality(self) -> int:
        return self.A * (1 << self.B) * self.placements

    @property
    def f1_values(self) -> tuple[int, ...]:
        """Magnitudes placed on the codeword support (even: 2 mod 4)."""
        if self.parity == ODD:
            return ()
        return tuple(v for v in self.leader.values if v % 4 == 2)

    @property
    def f0_values(self) -> tuple[int, ...]:
        if self.parity == ODD:
            return self.leader.values
        return tuple(v for v in self.leader.values if v % 4 == 0)

    @property
    def negative_parity(self) -> int:
        """Required parity of minus signs on the support (even classes)."""
        return (sum(self.leader.values) // 4) % 2

    @property
    def end(self) -> int:
        return self.offset + self.cardinality


def _multisets(target: int, n: int, allowed: list[int]) -> list[tuple[int, ...]]:
    """Descending n-tuples over ``allowed`` (descending) with sum of squares ``target``."""
    out: list[tuple[int, ...]] = []
    smallest = allowed[-1] ** 2

    def rec(t: int, n: int, start: int, acc: list[int]) -> None:
        if n == 0:
            if t == 0:
                out.append(tuple(acc))
            return
        if t < n * smallest:
            return
        for i in range(start, len(allowed)):
            v = allowed[i]
            vv = v * v
            if vv > t:
                continue
            if vv * n < t:
                break
            acc.append(v)
            rec(t - vv, n - 1, i, acc)
            acc.pop()

    rec(target, n, 0, [])
    return out


def _describe(values: tuple[int, ...], parity: str, shell: int) -> ClassDescriptor | None:
    """Build the class for a candidate leader, or None if it holds no points."""
    leader = Leader(values, parity)
    counts = Counter(values)
    if parity == ODD:
        t = sum(p for v, p in counts.items() if v % 8 in (3, 5))
        if t % 2 == 0:
            return None
        return ClassDescriptor(leader, shell, A=golay.N_CODEWORDS, B=0,
                               placements=multinomial(counts.values()))
    k = sum(p for v, p in counts.items() if v % 4 == 2)
    if k not in golay.WEIGHT_COUNTS:
        return None
    if k == 0 and sum(values) % 8 != 0:
        return None
    f1 = [p for v, p in counts.items() if v % 4 == 2]
    f0 = [p for v, p in counts.items() if v % 4 == 0]
    nonzero_f0 = sum(p for v, p in counts.items() if v % 4 == 0 and v != 0)
    b = nonzero_f0 + max(k - 1, 0)
    return ClassDescriptor(leader, shell, A=golay.WEIGHT_COUNTS[k], B=b,
                           placements=multinomial(f1) * multinomial(f0), weight=k)


def _class_sort_key(c: ClassDescriptor):
    # even before odd; within a parity, larger leading magnitudes first
    return (0 if c.parity == EVEN else 1, tuple(-v for v in c.leader.values))


@lru_cache(maxsize=None)
def shell_classes(m: int) -> tuple[ClassDescriptor, ...]:
    """Classes of shell ``m`` in the pinned order, offsets relative to the shell."""
    if m < 2:
        raise ValueError("shells start at m = 2")
    target = 16 * m
    top = math.isqrt(target)
    evens = [v for v in range(top, -1, -1) if v % 2 == 0]
    odds = [v for v in range(top, 0, -1) if v % 2 == 1]
    found = []
    for values in _multisets(target, DIM, evens):
        c = _describe(values, EVEN, m)
        if c is not None:
            found.append(c)
    for values in _multisets(target, DIM, odds):
        c = _describe(values, ODD, m)
        if c is not None:
            found.append(c)
    found.sort(key=_class_sort_key)
    out = []
    offset = 0
    for rank, c in enumerate(found):
        out.append(ClassDescriptor(c.leader, m, c.A, c.B, c.placements,
                                   class_rank=rank, offset=offset, weight=c.weight))
        offset += c.cardinality
    return tuple(out)


def enumerate_classes(M: int) -> list[ClassDescriptor]:
    """All classes of shells 2..M with offsets into the cumulative layout."""
    if M < 2:
        raise ValueError("M must be at least 2")
    out = []
    base = 0
    for m in range(2, M + 1):
        for c in shell_classes(m):
            out.append(ClassDescriptor(c.leader, m, c.A, c.B, c.placements,
                                       class_rank=c.class_rank, offset=base + c.offset,
                                       weight=c.weight))
        base += shell_size(m)
    return out


@lru_cache(maxsize=None)
def shell_size(m: int) -> int:
    return sum(c.cardinality for c in shell_classes(m))


def cumulative_count(M: int) -> int:
    """N(M): number of lattice points in shells 2..M."""
    if M < 2:
        raise ValueError("M must be at least 2")
    return sum(shell_size(m) for m in range(2, M + 1))


def index_bits(M: int) -> int:
    """Bits needed to index every point of shells 2..M."""
    return (cumulative_count(M) - 1).bit_length()


def bits_per_dim(M: int) -> float:
    return index_bits(M) / DIM


def classify_point(x) -> str:
    """Which coset of the integer lattice holds ``x`` (or ``not_in_lattice``)."""
    x = [int(v) for v in x]
    if len(x) != DIM:
        raise ValueError(f"expected {DIM} coordinates, got {len(x)}")
    if all(v % 2 == 0 for v in x):
        word = sum(((v // 2) % 2) << i for i, v in enumerate(x))
        if golay.is_codeword(word) and sum(x) % 8 == 0:
            return EVEN
        return NOT_IN_LATTICE
    if all(v % 2 == 1 for v in x):
        word = sum((((v - 1) // 2) % 2) << i for i, v in enumerate(x))
        if golay.is_codeword(word) and sum(x) % 8 == 4:
            return ODD
        return NOT_IN_LATTICE
    return NOT_IN_LATTICE


def _syndromes(words: np.ndarray) -> np.ndarray:
    syn = np.zeros(words.shape, dtype=np.int64)
    for j, h in enumerate(golay.PARITY_CHECK):
        x = words & h
        for s in (16, 8, 4, 2, 1):
            x = x ^ (x >> s)
        syn |= (x & 1) << j
    return syn


def classify_points(x: np.ndarray) -> np.ndarray:
    """Vectorised membership: 0 even, 1 odd, -1 not in the lattice."""
    x = np.asarray(x, dtype=np.int64)
    low = x & 1
    even = ~low.any(axis=1)
    odd = low.all(axis=1)
    # (x >> 1) & 1 equals x/2 mod 2 for even x and (x-1)/2 mod 2 for odd x
    words = ((x >> 1) & 1) @ (np.int64(1) << np.arange(DIM, dtype=np.int64))
    golay_ok = _syndromes(words) == 0
    s = x.sum(axis=1) & 7
    out = np.full(x.shape[0], -1, dtype=np.int8)
    out[even & golay_ok & (s == 0)] = 0
    out[odd & golay_ok & (s == 4)] = 1
    return out


def _arrangements(levels: list[tuple[int, int]], slots: list[int]) -> np.ndarray:
    """All distinct ways to place a multiset on the given coordinates.

    Returns an array of shape (count, len(slots)) of magnitudes per slot.
    """
    rows: list[list[int]] = []
    n = len(slots)

    def rec(free: list[int], lv: int, acc: list[int]) -> None:
        if lv == len(levels):
            rows.append(acc.copy())
            return
        v, p = levels[lv]
        for chosen in itertools.combinations(free, p):
            for i in chosen:
                acc[i] = v
            rest = [i for i in free if i not in chosen]
            rec(rest, lv + 1, acc)

    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    rec(list(range(n)), 0, [0] * n)
    return np.array(rows, dtype=np.int64)


def enumerate_class_points(cls: ClassDescriptor) -> Iterator[np.ndarray]:
    """Expand a class into all of its points, one codeword chunk at a time.

    Signs are drawn from every pattern on the nonzero entries (even classes)
    or forced by the Golay congruence (odd classes), and each candidate is
    filtered through the membership test, so the count is independent of the
    closed-form cardinality.
    """
    if cls.parity == EVEN:
        k = cls.weight
        lv1 = [(v, p) for v, p in cls.leader.levels if v % 4 == 2]
        lv0 = [(v, p) for v, p in cls.leader.levels if v % 4 == 0 and v != 0]
        for c in golay.codewords_of_weight(k):
            f1 = golay.support(c)
            f0 = [i for i in range(DIM) if not (c >> i) & 1]
            arr1 = _arrangements(lv1, f1)
            n0 = len(f0) - sum(p for _, p in lv0)
            arr0 = _arrangements(lv0 + ([(0, n0)] if n0 else []), f0)
            mags = np.zeros((len(arr1) * len(arr0), DIM), dtype=np.int64)
            mags[:, f1] = np.repeat(arr1, len(arr0), axis=0)
            mags[:, f0] = np.tile(arr0, (len(arr1), 1))
            nz = np.count_nonzero(mags[0])
            signs = 1 - 2 * ((np.arange(1 << nz)[:, None] >> np.arange(nz)) & 1)
            where = np.argsort(mags == 0, axis=1, kind="stable")[:, :nz]
            flip = np.ones((len(mags), len(signs), DIM), dtype=np.int64)
            flip[np.arange(len(mags))[:, None, None], np.arange(len(signs))[None, :, None],
                 where[:, None, :]] = signs[None, :, :]
            pts = (mags[:, None, :] * flip).reshape(-1, DIM)
            yield pts[classify_points(pts) == 0]
    else:
        mags = _arrangements(list(cls.leader.levels), list(range(DIM)))
        words = golay.codeword_array()
        # entry congruent to 1 + 2c (mod 4)
        want = 1 + 2 * ((words[:, None] >> np.arange(DIM)) & 1)
        step = 64
        for lo in range(0, len(mags), step):
            rows = mags[lo:lo + step, None, :]
            pts = np.where(rows % 4 == want[None], rows, -rows).reshape(-1, DIM)
            yield pts[classify_points(pts) == 1]


def enumerate_shell_points(m: int, cap: int = 10**7) -> Iterator[np.ndarray]:
    """Stream every point of shell ``m`` in chunks (test oracle).

    Raises ValueError if the shell holds more than ``cap`` points.
    """
    size = shell_size(m)
    if size > cap:
        raise ValueError(f"shell {m} has {size} points, above the enumeration cap {cap}")
    for cls in shell_classes(m):
        yield from enumerate_class_points(cls)


def shell_points(m: int, cap: int = 10**7) -> np.ndarray:
    return np.concatenate(list(enumerate_shell_points(m, cap)), axis=0)

