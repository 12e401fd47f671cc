"""Rate-distortion experiments on Gaussian sources.

Every experiment is deterministic in ``(config, n, seed)``: samples are drawn
batch by batch from child seeds of one ``SeedSequence``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, stats

from .lattice import DIM, cumulative_count, index_bits, shell_size
from .quantizers import SHAPEGAIN, SPHERICAL, BlockQuantizer, QuantizerConfig
from .search import ANGULAR, SearchConfig, Searcher

BATCH = 10_000

CSV_COLUMNS = (
    "experiment", "label", "mode", "M", "gain_bits", "bits_per_dim",
    "mse", "sqnr_bits", "retention_pct", "n_samples", "seed",
)


@dataclass
class RDReport:
    """Per-weight distortion summary against the Gaussian Shannon line."""

    bits_per_dim: float
    mse: float
    sqnr_bits: float
    retention_pct: float
    n_samples: int
    config: dict = field(default_factory=dict)

    @classmethod
    def from_mse(cls, mse: float, bits_per_dim: float, n_samples: int, **config) -> "RDReport":
        sqnr = -0.5 * math.log2(mse)
        return cls(bits_per_dim=bits_per_dim, mse=mse, sqnr_bits=sqnr,
                   retention_pct=100.0 * sqnr / bits_per_dim, n_samples=n_samples,
                   config=dict(config))

    def row(self, experiment: str = "", label: str = "") -> dict:
        c = self.config
        return {
            "experiment": experiment, "label": label or c.get("label", ""),
            "mode": c.get("mode", ""), "M": c.get("M", ""), "gain_bits": c.get("gain_bits", ""),
            "bits_per_dim": f"{self.bits_per_dim:.6f}", "mse": f"{self.mse:.6f}",
            "sqnr_bits": f"{self.sqnr_bits:.6f}", "retention_pct": f"{self.retention_pct:.4f}",
            "n_samples": self.n_samples, "seed": c.get("seed", ""),
        }


def gaussian_blocks(n_blocks: int, seed: int, dim: int = DIM) -> np.ndarray:
    """``n_blocks`` standard normal blocks from per-batch child seeds."""
    n_batches = max(1, -(-n_blocks // BATCH))
    children = np.random.SeedSequence(seed).spawn(n_batches)
    parts = []
    left = n_blocks
    for child in children:
        k = min(BATCH, left)
        parts.append(np.random.default_rng(child).standard_normal((k, dim)))
        left -= k
    return np.concatenate(parts) if parts else np.zeros((0, dim))


def gaussian_rd(config: QuantizerConfig, n_blocks: int = 100_000, seed: int = 0,
                blocks: np.ndarray | None = None) -> RDReport:
    """Quantize i.i.d. N(0, 1) blocks with one per-tensor scale and report MSE."""
    if n_blocks < 1:
        raise ValueError("n_blocks must be at least 1")
    W = gaussian_blocks(n_blocks, seed) if blocks is None else np.asarray(blocks, dtype=np.float64)
    bq = BlockQuantizer(config)
    beta = bq.calibrate(W)
    if config.shape_gain and config.gain_codebook == "empirical":
        bq = BlockQuantizer(config, bq.fit_gain_codebook(W, beta))
    err = 0.0
    for s in range(0, len(W), BATCH):
        chunk = W[s:s + BATCH]
        si, gi = bq.quantize(chunk, beta)
        err += float(np.sum((chunk - bq.dequantize(si, gi, beta)) ** 2))
    mse = err / W.size
    return RDReport.from_mse(mse, config.bits_per_dim, len(W), mode=config.mode, M=config.M,
                             gain_bits=config.gain_bits, seed=seed, beta=beta)


# --------------------------------------------------------------------------
# scalar baselines

def _normal_mse(levels, thresholds) -> float:
    """Exact MSE of a scalar quantizer on N(0, 1)."""
    edges = np.concatenate([[-np.inf], thresholds, [np.inf]])
    total = 0.0
    for a, b, c in zip(edges[:-1], edges[1:], levels):
        # E[(X - c)^2; a < X < b] from the truncated moments
        pa, pb = stats.norm.pdf(a), stats.norm.pdf(b)
        Pa, Pb = stats.norm.cdf(a), stats.norm.cdf(b)
        m0 = Pb - Pa
        m1 = pa - pb
        m2 = m0 + (a * pa if np.isfinite(a) else 0.0) - (b * pb if np.isfinite(b) else 0.0)
        total += m2 - 2 * c * m1 + c * c * m0
    return float(total)


def gaussian_lloyd_max(bits: int, tol: float = 1e-12, max_iter: int = 100_000):
    """Lloyd-Max fixed point for N(0, 1); returns ``(levels, thresholds, mse)``."""
    if bits < 1:
        raise ValueError("bits must be at least 1")
    n = 1 << bits
    levels = stats.norm.ppf((np.arange(n) + 0.5) / n)
    for _ in range(max_iter):
        t = 0.5 * (levels[1:] + levels[:-1])
        edges = np.concatenate([[-np.inf], t, [np.inf]])
        new = (stats.norm.pdf(edges[:-1]) - stats.norm.pdf(edges[1:])) / np.diff(stats.norm.cdf(edges))
        done = np.max(np.abs(new - levels)) < tol
        levels = new
        if done:
            break
    t = 0.5 * (levels[1:] + levels[:-1])
    return levels, t, _normal_mse(levels, t)


def uniform_optimal(bits: int):
    """Symmetric midrise uniform grid with the MSE-optimal step for N(0, 1).

    Returns ``(levels, thresholds, mse)``.
    """
    if bits < 1:
        raise ValueError("bits must be at least 1")
    n = 1 << bits
    k = np.arange(n) - (n - 1) / 2

    def grid(step):
        lv = k * step
        return lv, 0.5 * (lv[1:] + lv[:-1])

    res = optimize.minimize_scalar(lambda d: _normal_mse(*grid(d)), bounds=(1e-4, 4.0),
                                   method="bounded", options={"xatol": 1e-12})
    lv, t = grid(res.x)
    return lv, t, _normal_mse(lv, t)


def scalar_baselines(bits: int = 2, n: int = 2_400_000, seed: int = 0) -> list[RDReport]:
    """Uniform (optimal range) and Lloyd-Max scalar quantizers on ``n`` N(0, 1) draws."""
    if bits < 1:
        raise ValueError("bits must be at least 1")
    x = np.random.default_rng(seed).standard_normal(n)
    out = []
    for label, (lv, t, exact) in (("uniform", uniform_optimal(bits)),
                                  ("lloyd_max", gaussian_lloyd_max(bits))):
        mse = float(np.mean((x - lv[np.searchsorted(t, x)]) ** 2))
        out.append(RDReport.from_mse(mse, float(bits), n, label=label, mode=label,
                                     exact_mse=exact, seed=seed))
    return out


# --------------------------------------------------------------------------
# angular study

def unit_vectors(n: int, seed: int) -> np.ndarray:
    g = gaussian_blocks(n, seed)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def angular_distortion(X, m: int, mode: str) -> np.ndarray:
    """``arccos(<x, q(x)>) / pi`` for unit inputs ``X``.

    ``mode="single"`` uses shell ``m`` only; ``"union"`` uses shells ``2..m``.
    """
    if mode == "single":
        cfg = SearchConfig(m, ANGULAR, shells=(m,))
    elif mode == "union":
        cfg = SearchConfig(m, ANGULAR)
    else:
        raise ValueError("mode must be 'single' or 'union'")
    _, _, cos = Searcher(cfg).search_arrays(X)
    return np.arccos(np.clip(cos, -1.0, 1.0)) / np.pi


def code_bits_per_dim(m: int, mode: str) -> float:
    size = shell_size(m) if mode == "single" else cumulative_count(m)
    return math.log2(size) / DIM


def angular_study(m_list: Iterable[int], mode: str, n: int = 20_000, seed: int = 0) -> list[dict]:
    """Nearest-neighbour angle statistics per code, all codes on the same inputs."""
    X = unit_vectors(n, seed)
    rows = []
    for m in m_list:
        d = angular_distortion(X, m, mode)
        q = np.quantile(d, [0.05, 0.5, 0.95])
        rows.append({
            "mode": mode, "m": m, "bits_per_dim": code_bits_per_dim(m, mode),
            "mean": float(d.mean()), "q05": float(q[0]), "median": float(q[1]),
            "q95": float(q[2]), "max": float(d.max()), "n": n,
        })
    return rows


def union_vs_single(m_max: int = 6, n: int = 20_000, seed: int = 0) -> list[dict]:
    """Union code of shells ``2..m`` against the single-shell curve at equal rate.

    The single-shell mean angle is interpolated log-linearly in bits/dim
    between the two neighbouring shells, which brackets the union's rate.
    """
    singles = angular_study(range(2, m_max + 2), "single", n, seed)
    unions = angular_study(range(2, m_max + 1), "union", n, seed)
    sb = np.array([r["bits_per_dim"] for r in singles])
    sd = np.log(np.array([r["mean"] for r in singles]))
    out = []
    for u in unions:
        ref = float(np.exp(np.interp(u["bits_per_dim"], sb, sd)))
        out.append({
            "m": u["m"], "bits_per_dim": u["bits_per_dim"], "union_mean": u["mean"],
            "single_mean_interp": ref, "ratio": u["mean"] / ref,
        })
    return out


# --------------------------------------------------------------------------
# shaping versus shape-gain

def largest_m_for_bits(shape_bits: int, m_max: int = 40) -> int:
    best = None
    for m in range(2, m_max + 1):
        if index_bits(m) <= shape_bits:
            best = m
        else:
            break
    if best is None:
        raise ValueError(f"no shell ball fits in {shape_bits} bits")
    return best


def sweep_configs(total_bits_per_dim: float = 2.0,
                  gain_bit_options: Sequence[int] = (0, 1, 2, 4)) -> list[QuantizerConfig]:
    """Spherical shaping first, then one shape-gain split per gain-bit option."""
    budget = round(total_bits_per_dim * DIM)
    cfgs = [QuantizerConfig(SPHERICAL, largest_m_for_bits(budget), 0)]
    for b in gain_bit_options:
        if b < 0 or b >= budget:
            raise ValueError(f"infeasible gain allocation {b} for {budget} bits")
        cfgs.append(QuantizerConfig(SHAPEGAIN, largest_m_for_bits(budget - b), b))
    for c in cfgs:
        if c.bits_per_block > budget:
            raise ValueError(f"{c} exceeds the budget")
    return cfgs


def shaping_vs_shapegain_sweep(total_bits_per_dim: float = 2.0,
                               gain_bit_options: Sequence[int] = (0, 1, 2, 4),
                               n: int = 100_000, seed: int = 0) -> list[RDReport]:
    """Distortion of each allocation on the same Gaussian sample."""
    W = gaussian_blocks(n, seed)
    return [gaussian_rd(c, n, seed, blocks=W) for c in sweep_configs(total_bits_per_dim,
                                                                     gain_bit_options)]


def best_gain_allocation(reports: Sequence[RDReport]) -> int:
    sg = [r for r in reports if r.config.get("mode") != SPHERICAL]
    return min(sg, key=lambda r: r.mse).config["gain_bits"]


def write_csv(rows: Sequence[dict], path, columns: Sequence[str] | None = None) -> None:
    cols = list(columns) if columns else list(rows[0].keys()) if rows else list(CSV_COLUMNS)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
