"""Bijective index <-> lattice point mapping over shells 2..M.

A global index is split hierarchically: shell (prefix table), class (prefix
table within the shell), then the class-local index

    I_class = (I_perm * 2**B + s) * A + r

where ``r`` ranks the Golay codeword among the class's admissible ones, ``s``
holds the free sign bits and ``I_perm`` ranks the arrangement of magnitudes.
For even classes ``I_perm = rank_on_support * P0 + rank_off_support`` with
each rank taken lexicographically over distinct arrangements (largest value
is the smallest label) in coordinate order. Odd classes arrange all 24
magnitudes in one multiset permutation; their signs follow from the codeword.

Sign bits: walking coordinates in order, every nonzero entry off the support
and every support entry except the last one owns the next bit of ``s`` (bit
set = negative). The last support entry takes whichever sign makes the count
of negatives on the support match the class parity.

Encode and decode are numba kernels over small immutable tables; they are
pure, so batch calls are order-independent and reentrant.
"""

from __future__ import annotations

import hashlib
from collections import namedtuple
from functools import lru_cache
from typing import NamedTuple

import numba
import numpy as np

from . import golay
from .lattice import DIM, EVEN, ClassDescriptor, enumerate_classes, multinomial, shell_size

MAX_LEVELS = 16

# status codes returned by the encode kernel
_OK = 0
_NOT_IN_LATTICE = -1
_OUT_OF_BOUND = -2


class NotInLatticeError(ValueError):
    pass


class OutOfBoundError(ValueError):
    pass


class LayoutMismatchError(ValueError):
    pass


class GlobalIndex(NamedTuple):
    value: int
    fingerprint: str


Tables = namedtuple(
    "Tables",
    [
        "M",
        "shell_offsets",    # int64[M + 1]; N(m) at position m, N(1) = 0 at position 1
        "shell_first",      # int64[M + 2]; first class id of shell m
        "offset",           # int64[n]
        "A", "B", "P0",     # int64[n]
        "shell",            # int64[n]
        "odd",              # int64[n] 1 for odd classes
        "weight",           # int64[n] support size (even)
        "negpar",           # int64[n] required negatives on support (even)
        "values",           # int64[n, 24] descending magnitudes
        "lv1_val", "lv1_cnt", "lv1_n",   # support levels (even)
        "lv0_val", "lv0_cnt", "lv0_n",   # off-support levels (odd: all)
        "codewords",        # int64[4096] ascending
        "by_weight",        # int64[4096] codewords grouped by weight
        "weight_start",     # int64[25]; start of weight w inside by_weight
        "weight_len",       # int64[25]
        "gen_rows",         # int64[12] systematic generator rows
    ],
)


def _levels(values) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    for v in sorted(set(values), reverse=True):
        out.append((v, values.count(v)))
    return out


class CodebookLayout:
    """The implicit codebook of shells 2..M: ordered classes and prefix tables."""

    def __init__(self, M: int, classes: list[ClassDescriptor] | None = None):
        if M < 2:
            raise ValueError("M must be at least 2")
        self.M = M
        # an explicit class list is only for audits (e.g. a deliberately broken order)
        self.classes: list[ClassDescriptor] = list(classes) if classes is not None else enumerate_classes(M)
        offs = [0, 0]
        for m in range(2, M + 1):
            offs.append(offs[-1] + shell_size(m))
        self.shell_offsets: list[int] = offs
        self.size: int = offs[-1]
        if self.size >= 1 << 62:
            raise ValueError(f"M={M} needs indices beyond 62 bits")
        self.bits_per_index: int = (self.size - 1).bit_length()
        self.fingerprint: str = self._fingerprint()
        self.tables = self._tables()

    def __repr__(self) -> str:
        return f"CodebookLayout(M={self.M}, classes={len(self.classes)}, N={self.size})"

    @property
    def bits_per_dim(self) -> float:
        return self.bits_per_index / DIM

    def _fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"M={self.M};".encode())
        h.update(",".join(f"{r:06x}" for r in golay.GENERATOR).encode())
        for c in self.classes:
            h.update(f";{c.shell}:{c.parity}:{c.leader.values}:{c.A}:{c.B}:{c.placements}:{c.offset}"
                     .encode())
        return h.hexdigest()

    def class_of_index(self, i: int) -> ClassDescriptor:
        return self.classes[int(np.searchsorted(self.tables.offset, i, side="right")) - 1]

    def shell_of_index(self, i: int) -> int:
        return self.class_of_index(i).shell

    def _tables(self) -> Tables:
        n = len(self.classes)
        M = self.M
        shell_first = np.zeros(M + 2, dtype=np.int64)
        for m in range(2, M + 2):
            shell_first[m] = sum(1 for c in self.classes if c.shell < m)
        lv = {k: np.zeros((n, MAX_LEVELS), dtype=np.int64) for k in ("v1", "c1", "v0", "c0")}
        lv1_n = np.zeros(n, dtype=np.int64)
        lv0_n = np.zeros(n, dtype=np.int64)
        P0 = np.zeros(n, dtype=np.int64)
        for j, c in enumerate(self.classes):
            l1 = _levels(list(c.f1_values))
            l0 = _levels(list(c.f0_values))
            lv1_n[j], lv0_n[j] = len(l1), len(l0)
            for t, (v, p) in enumerate(l1):
                lv["v1"][j, t], lv["c1"][j, t] = v, p
            for t, (v, p) in enumerate(l0):
                lv["v0"][j, t], lv["c0"][j, t] = v, p
            P0[j] = multinomial([p for _, p in l0])
        by_weight = []
        weight_start = np.zeros(25, dtype=np.int64)
        weight_len = np.zeros(25, dtype=np.int64)
        for w in golay.WEIGHTS:
            weight_start[w] = len(by_weight)
            words = golay.codewords_of_weight(w)
            weight_len[w] = len(words)
            by_weight.extend(words)
        t = Tables(
            M=np.int64(M),
            shell_offsets=np.array(self.shell_offsets, dtype=np.int64),
            shell_first=shell_first,
            offset=np.array([c.offset for c in self.classes], dtype=np.int64),
            A=np.array([c.A for c in self.classes], dtype=np.int64),
            B=np.array([c.B for c in self.classes], dtype=np.int64),
            P0=P0,
            shell=np.array([c.shell for c in self.classes], dtype=np.int64),
            odd=np.array([c.parity != EVEN for c in self.classes], dtype=np.int64),
            weight=np.array([c.weight for c in self.classes], dtype=np.int64),
            negpar=np.array([c.negative_parity for c in self.classes], dtype=np.int64),
            values=np.array([c.leader.values for c in self.classes], dtype=np.int64),
            lv1_val=lv["v1"], lv1_cnt=lv["c1"], lv1_n=lv1_n,
            lv0_val=lv["v0"], lv0_cnt=lv["c0"], lv0_n=lv0_n,
            codewords=np.array(golay.codeword_array(), dtype=np.int64),
            by_weight=np.array(by_weight, dtype=np.int64),
            weight_start=weight_start,
            weight_len=weight_len,
            gen_rows=np.array(golay.GENERATOR, dtype=np.int64),
        )
        for a in t:
            if isinstance(a, np.ndarray):
                a.setflags(write=False)
        return t


@lru_cache(maxsize=None)
def get_layout(M: int) -> CodebookLayout:
    return CodebookLayout(M)


# --------------------------------------------------------------------------
# kernels

@numba.njit(cache=True)
def _is_codeword(word, codewords):
    k = np.searchsorted(codewords, word)
    return k < codewords.shape[0] and codewords[k] == word


@numba.njit(cache=True)
def _classify(x, codewords):
    """0 even, 1 odd, -1 not in the lattice."""
    low = x[0] & 1
    word = 0
    total = 0
    for i in range(DIM):
        if (x[i] & 1) != low:
            return -1
        word |= ((x[i] >> 1) & 1) << i
        total += x[i]
    if not _is_codeword(word, codewords):
        return -1
    if low == 0:
        return 0 if (total & 7) == 0 else -1
    return 1 if (total & 7) == 4 else -1


@numba.njit(cache=True)
def _rank_arrangement(labels, n, counts, nlev, total):
    """Lexicographic rank of a multiset arrangement among distinct ones."""
    cnt = counts[:nlev].copy()
    rank = 0
    r = n
    for i in range(n):
        lab = labels[i]
        for v in range(lab):
            if cnt[v] > 0:
                rank += total * cnt[v] // r
        total = total * cnt[lab] // r
        cnt[lab] -= 1
        r -= 1
    return rank


@numba.njit(cache=True)
def _unrank_arrangement(rank, n, counts, nlev, total, out):
    cnt = counts[:nlev].copy()
    r = n
    for i in range(n):
        for v in range(nlev):
            if cnt[v] == 0:
                continue
            block = total * cnt[v] // r
            if rank < block:
                out[i] = v
                total = block
                cnt[v] -= 1
                break
            rank -= block
        r -= 1


@numba.njit(cache=True)
def _multinomial(counts, nlev):
    # product of binomials keeps every intermediate exact in int64
    total = 1
    n = 0
    for v in range(nlev):
        for k in range(1, counts[v] + 1):
            n += 1
            total = total * n // k
    return total


@numba.njit(cache=True)
def _locate_class(i, t):
    M = t.M
    lo = 2
    hi = M
    # shell k with N(k-1) <= i < N(k)
    while lo < hi:
        mid = (lo + hi) // 2
        if t.shell_offsets[mid] > i:
            hi = mid
        else:
            lo = mid + 1
    k = lo
    a = t.shell_first[k]
    b = t.shell_first[k + 1] - 1
    while a < b:
        mid = (a + b + 1) // 2
        if t.offset[mid] <= i:
            a = mid
        else:
            b = mid - 1
    return a


@numba.njit(cache=True)
def _decode_one(i, t, out):
    j = _locate_class(i, t)
    local = i - t.offset[j]
    A = t.A[j]
    B = t.B[j]
    r = local % A
    rest = local // A
    s = rest & ((np.int64(1) << B) - 1)
    perm = rest >> B
    P0 = t.P0[j]
    rank1 = perm // P0
    rank0 = perm % P0
    if t.odd[j] == 1:
        c = t.codewords[r]
    else:
        w = t.weight[j]
        c = t.by_weight[t.weight_start[w] + r]
    pos1 = np.empty(DIM, dtype=np.int64)
    pos0 = np.empty(DIM, dtype=np.int64)
    n1 = 0
    n0 = 0
    if t.odd[j] == 1:
        for q in range(DIM):
            pos0[n0] = q
            n0 += 1
    else:
        for q in range(DIM):
            if (c >> q) & 1:
                pos1[n1] = q
                n1 += 1
            else:
                pos0[n0] = q
                n0 += 1
    labels = np.empty(DIM, dtype=np.int64)
    if n1 > 0:
        P1 = _multinomial(t.lv1_cnt[j], t.lv1_n[j])
        _unrank_arrangement(rank1, n1, t.lv1_cnt[j], t.lv1_n[j], P1, labels)
        for q in range(n1):
            out[pos1[q]] = t.lv1_val[j, labels[q]]
    _unrank_arrangement(rank0, n0, t.lv0_cnt[j], t.lv0_n[j], P0, labels)
    for q in range(n0):
        out[pos0[q]] = t.lv0_val[j, labels[q]]
    if t.odd[j] == 1:
        for q in range(DIM):
            a = out[q]
            bit = (c >> q) & 1
            # a = 1 (mod 4) stays positive off the support, a = 3 (mod 4) on it
            if ((a & 3) == 1) != (bit == 0):
                out[q] = -a
    else:
        last = pos1[n1 - 1] if n1 > 0 else -1
        b = 0
        neg1 = 0
        for q in range(DIM):
            if out[q] == 0 or q == last:
                continue
            if (s >> b) & 1:
                out[q] = -out[q]
                if (c >> q) & 1:
                    neg1 += 1
            b += 1
        if last >= 0 and (neg1 & 1) != t.negpar[j]:
            out[last] = -out[last]


@numba.njit(cache=True)
def _encode_one(x, t):
    """Return (status, index)."""
    par = _classify(x, t.codewords)
    if par < 0:
        return _NOT_IN_LATTICE, 0
    norm2 = 0
    for q in range(DIM):
        norm2 += x[q] * x[q]
    m = norm2 // 16
    if m < 2 or m > t.M:
        return _OUT_OF_BOUND, 0
    mags = np.empty(DIM, dtype=np.int64)
    for q in range(DIM):
        mags[q] = abs(x[q])
    srt = -np.sort(-mags)
    j = -1
    for cand in range(t.shell_first[m], t.shell_first[m + 1]):
        if t.odd[cand] != par:
            continue
        same = True
        for q in range(DIM):
            if t.values[cand, q] != srt[q]:
                same = False
                break
        if same:
            j = cand
            break
    if j < 0:
        return _NOT_IN_LATTICE, 0
    c = 0
    if par == 1:
        for q in range(DIM):
            c |= ((x[q] >> 1) & 1) << q
        r = np.searchsorted(t.codewords, c)
    else:
        for q in range(DIM):
            if (mags[q] & 3) == 2:
                c |= np.int64(1) << q
        w = t.weight[j]
        start = t.weight_start[w]
        r = np.searchsorted(t.by_weight[start:start + t.weight_len[w]], c)
    labels1 = np.empty(DIM, dtype=np.int64)
    labels0 = np.empty(DIM, dtype=np.int64)
    n1 = 0
    n0 = 0
    last = -1
    for q in range(DIM):
        on = par == 0 and ((c >> q) & 1) == 1
        if on:
            lab = 0
            while t.lv1_val[j, lab] != mags[q]:
                lab += 1
            labels1[n1] = lab
            n1 += 1
            last = q
        else:
            lab = 0
            while t.lv0_val[j, lab] != mags[q]:
                lab += 1
            labels0[n0] = lab
            n0 += 1
    s = 0
    if par == 0:
        b = 0
        for q in range(DIM):
            if x[q] == 0 or q == last:
                continue
            if x[q] < 0:
                s |= np.int64(1) << b
            b += 1
    rank0 = _rank_arrangement(labels0, n0, t.lv0_cnt[j], t.lv0_n[j], t.P0[j])
    rank1 = 0
    if n1 > 0:
        P1 = _multinomial(t.lv1_cnt[j], t.lv1_n[j])
        rank1 = _rank_arrangement(labels1, n1, t.lv1_cnt[j], t.lv1_n[j], P1)
    perm = rank1 * t.P0[j] + rank0
    local = ((perm << t.B[j]) + s) * t.A[j] + r
    return _OK, t.offset[j] + local


@numba.njit(cache=True)
def _decode_batch(idx, t, out):
    for k in range(idx.shape[0]):
        _decode_one(idx[k], t, out[k])


@numba.njit(cache=True)
def _encode_batch(pts, t, out, status):
    for k in range(pts.shape[0]):
        st, v = _encode_one(pts[k], t)
        status[k] = st
        out[k] = v


# --------------------------------------------------------------------------
# public API

def _check_layout(i, layout: CodebookLayout) -> int:
    if isinstance(i, GlobalIndex):
        if i.fingerprint != layout.fingerprint:
            raise LayoutMismatchError("index was produced under a different layout")
        i = i.value
    return int(i)


def decode(i, layout: CodebookLayout) -> np.ndarray:
    """Dequantize one global index to its integer lattice point."""
    v = _check_layout(i, layout)
    if not 0 <= v < layout.size:
        raise IndexError(f"index {v} outside [0, {layout.size})")
    out = np.zeros(DIM, dtype=np.int64)
    _decode_one(np.int64(v), layout.tables, out)
    return out


def decode_many(indices, layout: CodebookLayout) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= layout.size):
        raise IndexError(f"indices must lie in [0, {layout.size})")
    out = np.zeros((idx.size, DIM), dtype=np.int64)
    _decode_batch(idx, layout.tables, out)
    return out


def _raise_status(status: int, where: str = "") -> None:
    if status == _NOT_IN_LATTICE:
        raise NotInLatticeError(f"point{where} is not in the lattice")
    if status == _OUT_OF_BOUND:
        raise OutOfBoundError(f"point{where} lies outside shells 2..M")


def encode(p, layout: CodebookLayout) -> GlobalIndex:
    """Global index of an integer lattice point of shells 2..M, tagged with the layout."""
    x = np.asarray(p, dtype=np.int64).reshape(-1)
    if x.size != DIM:
        raise ValueError(f"expected {DIM} coordinates")
    status, v = _encode_one(x, layout.tables)
    _raise_status(status)
    return GlobalIndex(int(v), layout.fingerprint)


def encode_many(points, layout: CodebookLayout) -> np.ndarray:
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.int64).reshape(-1, DIM))
    out = np.zeros(len(pts), dtype=np.int64)
    status = np.zeros(len(pts), dtype=np.int64)
    _encode_batch(pts, layout.tables, out, status)
    bad = np.flatnonzero(status != _OK)
    if bad.size:
        _raise_status(int(status[bad[0]]), f" {int(bad[0])}")
    return out


# --------------------------------------------------------------------------
# fixed-width bit packing

def pack_fields(columns, widths) -> bytes:
    """Interleave several fixed-width unsigned fields per entry, LSB first.

    ``columns`` is a sequence of equally long integer arrays; entry ``k``
    contributes ``columns[0][k]`` in ``widths[0]`` bits, then ``columns[1][k]``
    and so on. The stream is zero-padded to a byte boundary.
    """
    cols = [np.asarray(c, dtype=np.uint64).reshape(-1) for c in columns]
    n = len(cols[0]) if cols else 0
    parts = []
    for c, w in zip(cols, widths):
        if w < 0 or w > 64:
            raise ValueError("field width must be in [0, 64]")
        if len(c) != n:
            raise ValueError("all fields need the same length")
        if w == 0:
            if np.any(c):
                raise OverflowError("nonzero value in a zero-width field")
            continue
        if w < 64 and np.any(c >> np.uint64(w)):
            raise OverflowError(f"value does not fit in {w} bits")
        shifts = np.arange(w, dtype=np.uint64)
        parts.append(((c[:, None] >> shifts) & np.uint64(1)).astype(np.uint8))
    if not parts or n == 0:
        return b""
    bits = np.concatenate(parts, axis=1).reshape(-1)
    return np.packbits(bits, bitorder="little").tobytes()


def unpack_fields(data: bytes, widths, count: int) -> list[np.ndarray]:
    total = sum(widths)
    need = (count * total + 7) // 8
    if len(data) < need:
        raise ValueError(f"bitstream holds {len(data)} bytes, need {need}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8)[:need], bitorder="little")
    bits = bits[: count * total].reshape(count, total).astype(np.uint64)
    out = []
    start = 0
    for w in widths:
        chunk = bits[:, start:start + w]
        out.append((chunk << np.arange(w, dtype=np.uint64)).sum(axis=1, dtype=np.uint64)
                   if w else np.zeros(count, dtype=np.uint64))
        start += w
    return out


def pack_indices(indices, bits_per_entry: int) -> bytes:
    """Fixed-width little-endian bit packing of unsigned indices."""
    return pack_fields([indices], [bits_per_entry])


def unpack_indices(data: bytes, bits_per_entry: int, count: int) -> np.ndarray:
    return unpack_fields(data, [bits_per_entry], count)[0]
