"""Nearest-point search over shells of the lattice without a stored codebook.

With ``y = sqrt(8) * x`` and an integer lattice point ``p`` on shell ``m``
(so ``|p|^2 = 16 m``), the Euclidean cost is ``|y|^2 + 16 m - 2 <y, p>`` and
the angular score is ``<y, p> / (4 sqrt(m))``. Both reduce to maximizing
``<y, p>`` within every class, which has a closed form:

* even class, fixed codeword ``c``: the support carries the magnitudes that are
  2 mod 4, the rest carry multiples of 4, signs are free except for the parity
  of negatives on the support. By the rearrangement inequality the best point
  pairs the sorted magnitudes with sorted ``|y|`` on each part and takes
  ``sign(y)``; if the parity is wrong, the cheapest fix flips the smallest
  support magnitude sitting on the smallest support ``|y|``.
* odd class, fixed codeword ``c``: signs are forced, ``p_i = (-1)**c_i * w_i``
  with ``w = a`` for ``a = 1 (mod 4)`` and ``w = -a`` otherwise, so the best
  arrangement pairs sorted ``w`` with sorted ``(-1)**c_i * y_i``.

Each class is therefore solved exactly by a pass over its admissible
codewords. Classes are visited in order of the free-sign bound
``sum(sorted a * sorted |y|)`` and skipped once the bound cannot beat the
incumbent, so the result is exact, not heuristic. ``exhaustive=True`` turns the
pruning off for audits.

Ties between candidates with bit-identical objective go to the lower global
index. Ties inside one codeword (equal ``|y_i|``) resolve by the stable sort of
``|y|`` and are not enumerated.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .codec import CodebookLayout, GlobalIndex, _encode_one, get_layout
from .lattice import DIM

EUCLIDEAN = "euclidean"
ANGULAR = "angular"
_METRICS = {EUCLIDEAN: 0, ANGULAR: 1}

SQRT8 = np.sqrt(8.0)

FULL = (1 << DIM) - 1
MAX_BREAKS = 32

SearchTables = namedtuple(
    "SearchTables",
    [
        "e1", "c1", "n1",   # support breakpoints (even): ends and Abel coefficients
        "e0", "c0", "n0",   # off-support breakpoints (even)
        "eo", "co", "no",   # signed breakpoints (odd)
        "w_val", "w_cnt",   # signed levels (odd), descending
        "min1",             # smallest support magnitude (even)
        "norm2",            # 16 m
    ],
)


@dataclass(frozen=True)
class SearchConfig:
    """Search parameters.

    Args:
        M: outermost shell of the code.
        metric: ``"euclidean"`` or ``"angular"``.
        shells: optional subset of shells in ``2..M`` to search; ``None`` means
            the whole ball. Indices still refer to the layout of ``M``.
        exhaustive: evaluate every class without bound pruning.
    """

    M: int
    metric: str = EUCLIDEAN
    shells: tuple[int, ...] | None = None
    exhaustive: bool = False

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if self.metric not in _METRICS:
            raise ValueError(f"metric must be one of {sorted(_METRICS)}")
        if self.shells is not None:
            bad = [m for m in self.shells if not 2 <= m <= self.M]
            if bad or not self.shells:
                raise ValueError(f"shells must be a non-empty subset of 2..{self.M}")


class SearchResult(NamedTuple):
    point: np.ndarray
    index: GlobalIndex
    score: float


def _abel(levels):
    """(end, coefficient) pairs so that sum_l v_l (P[e_l] - P[e_{l-1}]) = sum c_l P[e_l]."""
    out = []
    end = 0
    for k, (v, cnt) in enumerate(levels):
        end += cnt
        nxt = levels[k + 1][0] if k + 1 < len(levels) else 0
        if v - nxt != 0:
            out.append((end, v - nxt))
    return out


def _search_tables(layout: CodebookLayout) -> SearchTables:
    t = layout.tables
    n = len(layout.classes)
    arr = {k: np.zeros((n, MAX_BREAKS), dtype=np.int64) for k in ("e1", "c1", "e0", "c0", "eo", "co")}
    cnt = {k: np.zeros(n, dtype=np.int64) for k in ("n1", "n0", "no")}
    w_val = np.zeros((n, MAX_BREAKS), dtype=np.int64)
    w_cnt = np.zeros((n, MAX_BREAKS), dtype=np.int64)
    min1 = np.zeros(n, dtype=np.int64)

    def put(j, pairs, e, c, nk):
        cnt[nk][j] = len(pairs)
        for k, (end, coef) in enumerate(pairs):
            arr[e][j, k], arr[c][j, k] = end, coef

    for j, c in enumerate(layout.classes):
        if t.odd[j]:
            signed: dict[int, int] = {}
            for v in c.leader.values:
                w = v if v % 4 == 1 else -v
                signed[w] = signed.get(w, 0) + 1
            levels = sorted(signed.items(), reverse=True)
            for k, (w, m) in enumerate(levels):
                w_val[j, k], w_cnt[j, k] = w, m
            put(j, _abel(levels), "eo", "co", "no")
        else:
            l1 = [(int(t.lv1_val[j, k]), int(t.lv1_cnt[j, k])) for k in range(t.lv1_n[j])]
            l0 = [(int(t.lv0_val[j, k]), int(t.lv0_cnt[j, k])) for k in range(t.lv0_n[j])]
            put(j, _abel(l1), "e1", "c1", "n1")
            put(j, _abel(l0), "e0", "c0", "n0")
            if l1:
                min1[j] = l1[-1][0]
    norm2 = np.array([16 * c.shell for c in layout.classes], dtype=np.float64)
    return SearchTables(**arr, **cnt, w_val=w_val, w_cnt=w_cnt, min1=min1, norm2=norm2)


@numba.njit(cache=True)
def _order_space_words(t, order, cw_ord, bw_ord):
    """Codewords with bit q moved to the q-th largest |y| coordinate."""
    # systematic generator: the message of a codeword is its low 12 bits
    gens = np.zeros(12, dtype=np.int64)
    tab = np.zeros(4096, dtype=np.int64)
    for i in range(12):
        g = t.gen_rows[i]
        img = 0
        for q in range(DIM):
            img |= ((g >> order[q]) & 1) << q
        gens[i] = img
    for msg in range(1, 4096):
        low = msg & -msg
        i = 0
        while (low >> i) != 1:
            i += 1
        tab[msg] = tab[msg ^ low] ^ gens[i]
    for r in range(t.codewords.shape[0]):
        cw_ord[r] = tab[t.codewords[r] & 4095]
        bw_ord[r] = tab[t.by_weight[r] & 4095]


@numba.njit(cache=True)
def _prepare_even(w, t, ys, negm, bw_ord, pf1, pf0, par1, min1y):
    start = t.weight_start[w]
    for g in range(start, start + t.weight_len[w]):
        cm = bw_ord[g]
        a1 = 0.0
        a0 = 0.0
        k1 = 0
        k0 = 0
        last = 0.0
        pf1[g, 0] = 0.0
        pf0[g, 0] = 0.0
        for q in range(DIM):
            b = (cm >> q) & 1
            v = ys[q]
            a1 += b * v
            a0 += (1 - b) * v
            k1 += b
            k0 += 1 - b
            pf1[g, k1] = a1
            pf0[g, k0] = a0
            last += b * (v - last)
        x = cm & negm
        p = 0
        while x:
            x &= x - 1
            p ^= 1
        par1[g] = p
        min1y[g] = last


@numba.njit(cache=True)
def _prepare_odd(t, ys, negm, zerom, cw_ord, pu):
    for r in range(t.codewords.shape[0]):
        pm = ((~(negm ^ cw_ord[r])) & FULL) | zerom
        acc = 0.0
        k = 0
        pu[r, 0] = 0.0
        for q in range(DIM):
            b = (pm >> q) & 1
            acc += b * ys[q]
            k += b
            pu[r, k] = acc
        for q in range(DIM - 1, -1, -1):
            b = 1 - ((pm >> q) & 1)
            acc -= b * ys[q]
            k += b
            pu[r, k] = acc


@numba.njit(cache=True)
def _build_even(j, g, t, order, neg, out):
    c = t.by_weight[g]
    k1 = 0
    l1 = 0
    k0 = 0
    l0 = 0
    last = -1
    negs = 0
    for q in range(DIM):
        i = order[q]
        if (c >> i) & 1:
            while k1 >= t.lv1_cnt[j, l1]:
                l1 += 1
                k1 = 0
            v = t.lv1_val[j, l1]
            k1 += 1
            if neg[i]:
                out[i] = -v
                negs += 1
            else:
                out[i] = v
            last = i
        else:
            while k0 >= t.lv0_cnt[j, l0]:
                l0 += 1
                k0 = 0
            v = t.lv0_val[j, l0]
            k0 += 1
            out[i] = -v if neg[i] else v
    if last >= 0 and (negs & 1) != t.negpar[j]:
        out[last] = -out[last]


@numba.njit(cache=True)
def _build_odd(j, r, t, st, y, order, out):
    c = t.codewords[r]
    slots = np.empty(DIM, dtype=np.int64)
    k = 0
    for q in range(DIM):
        i = order[q]
        flip = (c >> i) & 1
        if (y[i] >= 0.0) != (flip == 1) or y[i] == 0.0:
            slots[k] = i
            k += 1
    for q in range(DIM - 1, -1, -1):
        i = order[q]
        flip = (c >> i) & 1
        if not ((y[i] >= 0.0) != (flip == 1) or y[i] == 0.0):
            slots[k] = i
            k += 1
    lev = 0
    used = 0
    for q in range(DIM):
        while used >= st.w_cnt[j, lev]:
            lev += 1
            used = 0
        used += 1
        i = slots[q]
        w = st.w_val[j, lev]
        out[i] = -w if (c >> i) & 1 else w


@numba.njit(cache=True)
def _search_one(y, t, st, shell_ok, metric, prune, best_pt, ws):
    """Returns (index, objective); the objective is maximized."""
    (ay, ys, order, neg, cw_ord, bw_ord, pf1, pf0, par1, min1y, pu, ready,
     cand, scores, bound) = ws
    negm = 0
    zerom = 0
    for i in range(DIM):
        ay[i] = abs(y[i])
        neg[i] = 1 if y[i] < 0.0 else 0
    order[:] = np.argsort(-ay, kind="mergesort")
    for q in range(DIM):
        i = order[q]
        ys[q] = ay[i]
        negm |= neg[i] << q
        if y[i] == 0.0:
            zerom |= np.int64(1) << q
    ready[:] = 0
    words_ready = False
    n = t.offset.shape[0]
    for j in range(n):
        if not shell_ok[t.shell[j]]:
            bound[j] = -np.inf
            continue
        u = 0.0
        for q in range(DIM):
            if t.values[j, q] == 0:
                break
            u += t.values[j, q] * ys[q]
        if metric == 0:
            bound[j] = 2.0 * u - st.norm2[j]
        else:
            bound[j] = u / np.sqrt(st.norm2[j])
    visit = np.argsort(-bound[:n], kind="mergesort")
    best = -np.inf
    best_idx = np.int64(-1)
    for vj in range(n):
        j = visit[vj]
        if bound[j] == -np.inf:
            break
        if prune and bound[j] < best:
            break
        if not words_ready:
            _order_space_words(t, order, cw_ord, bw_ord)
            words_ready = True
        n2 = st.norm2[j]
        scale = 1.0 / np.sqrt(n2)
        if t.odd[j] == 1:
            if ready[DIM + 1] == 0:
                _prepare_odd(t, ys, negm, zerom, cw_ord, pu)
                ready[DIM + 1] = 1
            lo = 0
            hi = t.codewords.shape[0]
            nb = st.no[j]
            for r in range(lo, hi):
                s = 0.0
                for k in range(nb):
                    s += st.co[j, k] * pu[r, st.eo[j, k]]
                scores[r] = s
        else:
            w = t.weight[j]
            if ready[w] == 0:
                _prepare_even(w, t, ys, negm, bw_ord, pf1, pf0, par1, min1y)
                ready[w] = 1
            lo = t.weight_start[w]
            hi = lo + t.weight_len[w]
            nb1 = st.n1[j]
            nb0 = st.n0[j]
            fix = 2.0 * st.min1[j]
            want = t.negpar[j]
            for g in range(lo, hi):
                s = 0.0
                for k in range(nb1):
                    s += st.c1[j, k] * pf1[g, st.e1[j, k]]
                for k in range(nb0):
                    s += st.c0[j, k] * pf0[g, st.e0[j, k]]
                if w > 0 and par1[g] != want:
                    s -= fix * min1y[g]
                scores[g] = s
        for g in range(lo, hi):
            obj = 2.0 * scores[g] - n2 if metric == 0 else scores[g] * scale
            if obj >= best:
                if t.odd[j] == 1:
                    _build_odd(j, g, t, st, y, order, cand)
                else:
                    _build_even(j, g, t, order, neg, cand)
                _, idx = _encode_one(cand, t)
                if obj > best or idx < best_idx:
                    best = obj
                    best_idx = idx
                    best_pt[:] = cand
    return best_idx, best


@numba.njit(cache=True)
def _search_batch(Y, t, st, shell_ok, metric, prune, out_pts, out_idx, out_obj):
    ncw = t.codewords.shape[0]
    ws = (
        np.empty(DIM),                       # ay
        np.empty(DIM),                       # ys
        np.empty(DIM, dtype=np.int64),       # order
        np.empty(DIM, dtype=np.int64),       # neg
        np.empty(ncw, dtype=np.int64),       # cw_ord
        np.empty(ncw, dtype=np.int64),       # bw_ord
        np.empty((ncw, DIM + 1)),            # pf1
        np.empty((ncw, DIM + 1)),            # pf0
        np.empty(ncw, dtype=np.int64),       # par1
        np.empty(ncw),                       # min1y
        np.empty((ncw, DIM + 1)),            # pu
        np.zeros(DIM + 2, dtype=np.int64),   # ready flags per weight, odd last
        np.empty(DIM, dtype=np.int64),       # cand
        np.empty(ncw),                       # scores
        np.empty(t.offset.shape[0]),         # bound
    )
    for k in range(Y.shape[0]):
        idx, obj = _search_one(Y[k], t, st, shell_ok, metric, prune, out_pts[k], ws)
        out_idx[k] = idx
        out_obj[k] = obj


class Searcher:
    """Nearest-point search bound to one layout and configuration."""

    def __init__(self, config: SearchConfig, layout: CodebookLayout | None = None):
        self.config = config
        self.layout = layout if layout is not None else get_layout(config.M)
        if self.layout.M != config.M:
            raise ValueError("layout and config disagree on M")
        self.tables = _search_tables(self.layout)
        ok = np.zeros(config.M + 2, dtype=np.bool_)
        for m in config.shells or range(2, config.M + 1):
            ok[m] = True
        self.shell_ok = ok
        self.metric = _METRICS[config.metric]

    def search_arrays(self, xs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorised search returning ``(points, indices, scores)`` arrays.

        Scores are squared distances ``|sqrt(8) x - p|^2`` in Euclidean mode and
        cosines in angular mode.
        """
        X = np.ascontiguousarray(np.asarray(xs, dtype=np.float64).reshape(-1, DIM))
        finite = np.isfinite(X).all(axis=1)
        if not finite.all():
            raise ValueError(f"non-finite input at position {int(np.flatnonzero(~finite)[0])}")
        Y = X * SQRT8
        norms = np.sqrt((Y * Y).sum(axis=1))
        if self.metric == 1 and np.any(norms == 0):
            raise ValueError(
                f"zero vector at position {int(np.flatnonzero(norms == 0)[0])} has no direction")
        pts = np.zeros((len(Y), DIM), dtype=np.int64)
        idx = np.zeros(len(Y), dtype=np.int64)
        obj = np.zeros(len(Y))
        if len(Y):
            _search_batch(Y, self.layout.tables, self.tables, self.shell_ok, self.metric,
                          not self.config.exhaustive, pts, idx, obj)
        if self.metric == 0:
            score = (Y * Y).sum(axis=1) - obj
        else:
            score = np.divide(obj, norms, out=np.zeros_like(obj), where=norms > 0)
        return pts, idx, score

    def nearest(self, x) -> SearchResult:
        pts, idx, score = self.search_arrays(np.asarray(x, dtype=np.float64).reshape(1, DIM))
        return SearchResult(pts[0], GlobalIndex(int(idx[0]), self.layout.fingerprint),
                            float(score[0]))

    def nearest_batch(self, xs: Sequence) -> list[SearchResult]:
        if len(xs) == 0:
            return []
        pts, idx, score = self.search_arrays(xs)
        fp = self.layout.fingerprint
        return [SearchResult(p, GlobalIndex(int(i), fp), float(s))
                for p, i, s in zip(pts, idx, score)]


def nearest(x, config: SearchConfig, layout: CodebookLayout | None = None) -> SearchResult:
    return Searcher(config, layout).nearest(x)


def nearest_batch(xs, config: SearchConfig, layout: CodebookLayout | None = None):
    return Searcher(config, layout).nearest_batch(xs)
