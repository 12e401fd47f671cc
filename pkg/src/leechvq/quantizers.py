"""Block quantizers on top of the lattice search and codec.

Three modes share one interface:

``spherical_shaping``
    Euclidean nearest point of ``w / beta`` in the ball of shells ``2..M``;
    reconstruction ``beta * p / sqrt(8)``.
``shapegain_independent``
    Angular nearest point gives the shape ``s``; the block norm ``|w|`` goes
    through the gain codebook.
``shapegain_optimal_scale``
    Same shape, but the gain fed to the codebook is ``<w, s>``, the
    least-squares scale for that shape.

For the shape-gain modes ``beta`` is the mean block norm and the codebook is
expressed in chi units, so a gain level ``g`` reconstructs as
``beta * g / E[chi_dof]``. For standard Gaussian data this makes ``|w|`` land
on the chi scale the codebook was designed for.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .codec import CodebookLayout, decode_many, get_layout
from .lattice import DIM, shell_size
from .search import ANGULAR, EUCLIDEAN, SearchConfig, Searcher

SPHERICAL = "spherical_shaping"
SHAPEGAIN = "shapegain_independent"
SHAPEGAIN_OPT = "shapegain_optimal_scale"
MODES = (SPHERICAL, SHAPEGAIN, SHAPEGAIN_OPT)

MODE_ALIASES = {
    "spherical": SPHERICAL,
    "shapegain": SHAPEGAIN,
    "shapegain-opt": SHAPEGAIN_OPT,
    **{m: m for m in MODES},
}

CHI = "chi"
EMPIRICAL = "empirical"


def canonical_mode(mode: str) -> str:
    try:
        return MODE_ALIASES[mode]
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}; choose from {sorted(MODE_ALIASES)}") from None


def chi_mean(dof: int) -> float:
    return float(np.sqrt(2.0) * np.exp(special.gammaln((dof + 1) / 2) - special.gammaln(dof / 2)))


@dataclass(frozen=True)
class GainCodebook:
    """Scalar codebook for block gains.

    Attributes:
        levels: ascending positive reconstruction levels (chi units).
        bits: ``log2(len(levels))``.
        dof: degrees of freedom of the chi density it was matched to.
        scale_convention: how data is normalized before lookup.
    """

    levels: np.ndarray
    bits: int
    dof: int = DIM
    scale_convention: str = "mean_block_norm"

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=np.float64)
        if lv.size != 1 << self.bits:
            raise ValueError("need 2**bits levels")
        if np.any(lv <= 0) or np.any(np.diff(lv) <= 0):
            raise ValueError("levels must be positive and strictly increasing")
        object.__setattr__(self, "levels", lv)

    @property
    def thresholds(self) -> np.ndarray:
        return 0.5 * (self.levels[1:] + self.levels[:-1])

    @property
    def unit_levels(self) -> np.ndarray:
        """Levels divided by ``E[chi_dof]``, i.e. relative to the mean gain."""
        return self.levels / chi_mean(self.dof)

    def quantize(self, g) -> np.ndarray:
        return np.searchsorted(self.thresholds, np.asarray(g, dtype=np.float64)).astype(np.int64)

    def mse(self, samples) -> float:
        s = np.asarray(samples, dtype=np.float64)
        return float(np.mean((s - self.levels[self.quantize(s)]) ** 2))


def build_gain_codebook(bits: int, dof: int = DIM, tol: float = 1e-10,
                        max_iter: int = 10_000) -> GainCodebook:
    """Lloyd-Max quantizer for the chi distribution with ``dof`` degrees of freedom.

    Conditional means use ``int_l^u r f_k(r) dr = E[chi_k] (F_{k+1}(u) - F_{k+1}(l))``,
    so every iteration is closed form.

    Args:
        bits: codebook size is ``2**bits``; 0 gives the single level ``E[chi_dof]``.
        dof: chi degrees of freedom (block dimension).
        tol: stop once no level moves by more than ``tol`` relative.
        max_iter: safety cap on iterations.

    Returns:
        The fixed-point codebook.
    """
    if bits < 0:
        raise ValueError("bits must be non-negative")
    n = 1 << bits
    dist = stats.chi(dof)
    upper = stats.chi(dof + 1)
    mu = chi_mean(dof)
    levels = dist.ppf((np.arange(n) + 0.5) / n)
    for _ in range(max_iter):
        edges = np.concatenate([[0.0], 0.5 * (levels[1:] + levels[:-1]), [np.inf]])
        mass = np.diff(dist.cdf(edges))
        new = mu * np.diff(upper.cdf(edges)) / mass
        done = np.max(np.abs(new - levels) / new) < tol
        levels = new
        if done:
            break
    return GainCodebook(levels=levels, bits=bits, dof=dof, scale_convention="mean_block_norm")


def empirical_gain_codebook(samples, bits: int, dof: int = DIM, tol: float = 1e-10,
                            max_iter: int = 1000) -> GainCodebook:
    """Sample-based Lloyd iteration, for gains whose density is not chi.

    ``samples`` must already be in chi units (data gain / beta * E[chi]).
    """
    s = np.sort(np.asarray(samples, dtype=np.float64).reshape(-1))
    if s.size < (1 << bits):
        raise ValueError("need at least 2**bits samples")
    n = 1 << bits
    levels = np.quantile(s, (np.arange(n) + 0.5) / n)
    csum = np.concatenate([[0.0], np.cumsum(s)])
    for _ in range(max_iter):
        cut = np.searchsorted(s, 0.5 * (levels[1:] + levels[:-1]))
        lo = np.concatenate([[0], cut])
        hi = np.concatenate([cut, [s.size]])
        cnt = hi - lo
        new = np.where(cnt > 0, (csum[hi] - csum[lo]) / np.maximum(cnt, 1), levels)
        done = np.max(np.abs(new - levels) / new) < tol
        levels = new
        if done:
            break
    if np.any(np.diff(levels) <= 0) or levels[0] <= 0:
        raise ValueError("samples too degenerate for distinct positive levels")
    return GainCodebook(levels=levels, bits=bits, dof=dof, scale_convention="empirical")


@dataclass(frozen=True)
class QuantizerConfig:
    """Block quantizer settings.

    Args:
        mode: one of ``MODES`` (short aliases accepted).
        M: outermost shell of the shape code.
        gain_bits: gain codebook bits (shape-gain modes only).
        gain_codebook: ``"chi"`` (default) or ``"empirical"``.
    """

    mode: str = SHAPEGAIN
    M: int = 12
    gain_bits: int = 1
    gain_codebook: str = CHI

    def __post_init__(self):
        object.__setattr__(self, "mode", canonical_mode(self.mode))
        if self.mode == SPHERICAL and self.gain_bits:
            raise ValueError("spherical shaping has no gain; set gain_bits=0")
        if self.gain_bits < 0:
            raise ValueError("gain_bits must be non-negative")
        if self.gain_codebook not in (CHI, EMPIRICAL):
            raise ValueError("gain_codebook must be 'chi' or 'empirical'")
        if self.M < 2:
            raise ValueError("M must be at least 2")

    @property
    def shape_gain(self) -> bool:
        return self.mode != SPHERICAL

    @property
    def metric(self) -> str:
        return ANGULAR if self.shape_gain else EUCLIDEAN

    @property
    def shape_bits(self) -> int:
        return get_layout(self.M).bits_per_index

    @property
    def bits_per_block(self) -> int:
        return self.shape_bits + self.gain_bits

    @property
    def bits_per_dim(self) -> float:
        return self.bits_per_block / DIM


@dataclass
class QuantizedBlock:
    """One quantized block; ``gain_index`` is ``None`` unless the mode carries gain bits."""

    shape_index: int
    gain_index: int | None
    mode: str

    def __post_init__(self):
        if self.mode == SPHERICAL and self.gain_index is not None:
            raise ValueError("spherical shaping carries no gain index")


@lru_cache(maxsize=None)
def _searcher(M: int, metric: str) -> Searcher:
    return Searcher(SearchConfig(M, metric))


@lru_cache(maxsize=None)
def mean_codeword_norm(M: int) -> float:
    """Mean of ``|p| / sqrt(8)`` over all codewords, i.e. uniform index sampling."""
    total = sum(shell_size(m) * np.sqrt(2.0 * m) for m in range(2, M + 1))
    return float(total / get_layout(M).size)


def optimal_scale_weight(w, q) -> np.ndarray:
    """Per-block least-squares scale ``<q, w> / <q, q>``.

    Args:
        w: blocks, shape ``(..., 24)``.
        q: quantized shapes of the same shape.

    Returns:
        One scale per block.
    """
    w = np.asarray(w, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if w.shape != q.shape:
        raise ValueError("w and q must have the same shape")
    qq = np.sum(q * q, axis=-1)
    if np.any(qq <= 0):
        raise ValueError("zero-norm quantized shape")
    return np.sum(q * w, axis=-1) / qq


def optimal_scales_output(A, b, ridge: bool = True) -> np.ndarray:
    """Least-squares ``argmin |b - A beta|^2`` for per-group output scales.

    Falls back to ridge regularization ``1e-8 * tr(A^T A) / G`` when ``A^T A``
    is singular and ``ridge`` is set.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if A.ndim != 2 or A.shape[0] != b.size:
        raise ValueError("A must be B x G and b of length B")
    G = A.shape[1]
    AtA = A.T @ A
    Atb = A.T @ b
    if np.linalg.matrix_rank(AtA) == G:
        return np.linalg.solve(AtA, Atb)
    if not ridge:
        raise np.linalg.LinAlgError("A^T A is singular; enable ridge")
    lam = 1e-8 * np.trace(AtA) / G
    if lam == 0:
        lam = 1e-8
    return np.linalg.solve(AtA + lam * np.eye(G), Atb)


class BlockQuantizer:
    """Quantize and reconstruct arrays of 24-blocks for one configuration."""

    def __init__(self, config: QuantizerConfig, gain_codebook: GainCodebook | None = None):
        self.config = config
        self.layout: CodebookLayout = get_layout(config.M)
        self.searcher = _searcher(config.M, config.metric)
        if config.shape_gain and gain_codebook is None:
            gain_codebook = build_gain_codebook(config.gain_bits)
        self.gain = gain_codebook
        self._mu = chi_mean(DIM)

    # -- scale --------------------------------------------------------------
    def calibrate(self, blocks) -> float:
        """Per-tensor scale for ``blocks``.

        Spherical shaping starts from mean block norm over mean codeword norm
        and takes one projection step on the resulting quantization. Shape-gain
        uses the mean block norm as is.
        """
        W = np.asarray(blocks, dtype=np.float64).reshape(-1, DIM)
        mean_norm = float(np.linalg.norm(W, axis=1).mean()) if len(W) else 0.0
        if mean_norm == 0.0:
            return 1.0
        if self.config.shape_gain:
            return mean_norm
        beta0 = mean_norm / mean_codeword_norm(self.config.M)
        pts, _, _ = self.searcher.search_arrays(W / beta0)
        q = pts / np.sqrt(8.0)
        qq = float(np.sum(q * q))
        return float(np.sum(q * W) / qq) if qq > 0 else beta0

    def fit_gain_codebook(self, blocks, beta: float) -> GainCodebook:
        """Empirical codebook over the gains this mode would feed it."""
        W = np.asarray(blocks, dtype=np.float64).reshape(-1, DIM)
        g = self._gains(W, self._shapes(W)[1])
        return empirical_gain_codebook(g / beta * self._mu, self.config.gain_bits)

    # -- core ---------------------------------------------------------------
    def _shapes(self, W):
        """Shape indices and unit shapes; zero blocks get index 0."""
        nz = np.linalg.norm(W, axis=1) > 0
        idx = np.zeros(len(W), dtype=np.int64)
        if nz.any():
            _, idx[nz], _ = self.searcher.search_arrays(W[nz])
        pts = decode_many(idx, self.layout).astype(np.float64)
        unit = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        return idx, unit

    def _gains(self, W, unit):
        if self.config.mode == SHAPEGAIN_OPT:
            return np.sum(W * unit, axis=1)
        return np.linalg.norm(W, axis=1)

    def quantize(self, blocks, beta: float) -> tuple[np.ndarray, np.ndarray | None]:
        """Return ``(shape_indices, gain_indices)``; gains are ``None`` for spherical shaping."""
        W = np.asarray(blocks, dtype=np.float64).reshape(-1, DIM)
        if not np.all(np.isfinite(W)):
            raise ValueError("non-finite input block")
        if beta <= 0:
            raise ValueError("beta must be positive")
        if not self.config.shape_gain:
            idx = np.zeros(len(W), dtype=np.int64)
            if len(W):
                _, idx, _ = self.searcher.search_arrays(W / beta)
            return idx, None
        idx, unit = self._shapes(W)
        g = self._gains(W, unit) / beta * self._mu
        return idx, self.gain.quantize(g)

    def dequantize(self, shape_idx, gain_idx, beta) -> np.ndarray:
        """Blocks from indices; ``beta`` may be a scalar or one value per block."""
        idx = np.asarray(shape_idx, dtype=np.int64).reshape(-1)
        pts = decode_many(idx, self.layout).astype(np.float64)
        beta = np.asarray(beta, dtype=np.float64).reshape(-1, 1) if np.ndim(beta) else beta
        if not self.config.shape_gain:
            return beta * pts / np.sqrt(8.0)
        if gain_idx is None:
            raise ValueError("shape-gain reconstruction needs gain indices")
        unit = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        g = self.gain.unit_levels[np.asarray(gain_idx, dtype=np.int64).reshape(-1)]
        return beta * g[:, None] * unit


def quantize_block(w, config: QuantizerConfig, beta: float = 1.0,
                   quantizer: BlockQuantizer | None = None) -> QuantizedBlock:
    bq = quantizer or BlockQuantizer(config)
    idx, gidx = bq.quantize(np.asarray(w, dtype=np.float64).reshape(1, DIM), beta)
    gain = None if gidx is None or config.gain_bits == 0 else int(gidx[0])
    return QuantizedBlock(int(idx[0]), gain, config.mode)


def dequantize_block(qb: QuantizedBlock, config: QuantizerConfig, beta: float = 1.0,
                     quantizer: BlockQuantizer | None = None) -> np.ndarray:
    if qb.mode != config.mode:
        raise ValueError("block was quantized under a different mode")
    bq = quantizer or BlockQuantizer(config)
    g = None if not config.shape_gain else [qb.gain_index or 0]
    return bq.dequantize([qb.shape_index], g, beta)[0]
