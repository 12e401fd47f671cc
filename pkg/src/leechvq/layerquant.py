"""Hessian-aware quantization of a weight matrix in 24-column groups.

The proxy objective for a layer ``y = W x`` is ``Tr(dW H dW^T)`` with
``H = E[x x^T]``. Rows decouple, and for one row the best adjustment of the
remaining columns ``R`` once columns ``C`` are committed with error ``e_C`` is
``-H_RR^{-1} H_RC e_C``. Writing ``H = F^T F`` with ``F`` lower triangular
turns this into ``-F_RR^{-1} F_RC e_C``. ``F`` is the Cholesky factor taken in
reversed column order; the ordinary factor ``L`` (``L L^T = H``) would not make
that identity hold, so both are kept: ``L`` for validation, ``F`` for updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .codec import LayoutMismatchError, get_layout
from .lattice import DIM
from .quantizers import BlockQuantizer, GainCodebook, QuantizerConfig

DAMPING = 0.01

HADAMARD_NONE = "none"
HADAMARD_INPUT = "input"
HADAMARD_BOTH = "input+output"
HADAMARD_MODES = (HADAMARD_NONE, HADAMARD_INPUT, HADAMARD_BOTH)


@dataclass
class HessianState:
    """Damped second-moment statistics of a layer's inputs.

    Attributes:
        H: ``X^T X / N`` (undamped).
        L: lower factor with ``L L^T = H + lam I``.
        F: lower factor with ``F^T F = H + lam I``; used for corrections.
        lam: damping added to the diagonal.
        N: number of calibration rows.
    """

    H: np.ndarray
    L: np.ndarray
    F: np.ndarray
    lam: float
    N: int

    @classmethod
    def from_matrix(cls, H, N: int = 0, damping: float = DAMPING) -> "HessianState":
        H = np.asarray(H, dtype=np.float64)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("H must be square")
        if not np.all(np.isfinite(H)):
            raise ValueError("non-finite Hessian")
        H = 0.5 * (H + H.T)
        md = float(np.mean(np.diag(H))) if len(H) else 0.0
        lam = damping * md if md > 0 else 1.0
        Hd = H + lam * np.eye(len(H))
        L = np.linalg.cholesky(Hd)
        return cls(H=H, L=L, F=reverse_cholesky(Hd), lam=lam, N=N)

    @property
    def damped(self) -> np.ndarray:
        return self.H + self.lam * np.eye(len(self.H))

    def padded(self, D: int) -> "HessianState":
        """Extend to ``D`` columns with uncoupled pad columns (zero statistics)."""
        d = len(self.H)
        if D == d:
            return self
        H = np.zeros((D, D))
        H[:d, :d] = self.H
        Hd = H + self.lam * np.eye(D)
        return HessianState(H=H, L=np.linalg.cholesky(Hd), F=reverse_cholesky(Hd),
                            lam=self.lam, N=self.N)


def reverse_cholesky(A) -> np.ndarray:
    """Lower-triangular ``F`` with ``F^T F = A``."""
    A = np.asarray(A, dtype=np.float64)
    K = np.linalg.cholesky(A[::-1, ::-1])
    return K[::-1, ::-1].T


def estimate_hessian(X, damping: float = DAMPING) -> HessianState:
    """``H = X^T X / N`` from calibration activations ``X`` (N x D_in)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a non-empty N x D matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite activations")
    return HessianState.from_matrix(X.T @ X / X.shape[0], N=X.shape[0], damping=damping)


def hessian_correction(dW_C, F, C: slice, R: slice) -> np.ndarray:
    """Correction for columns ``R`` given committed errors ``dW_C`` on columns ``C``.

    Args:
        dW_C: rows x |C| quantization error (quantized minus current weights).
        F: lower factor with ``F^T F = H`` (or a HessianState).
        C: columns just committed.
        R: remaining columns, all after ``C``.

    Returns:
        rows x |R| array ``-(F_RR^{-1} F_RC dW_C^T)^T``.
    """
    if isinstance(F, HessianState):
        F = F.F
    dW_C = np.atleast_2d(np.asarray(dW_C, dtype=np.float64))
    F_RR = F[R, R]
    F_RC = F[R, C]
    if np.any(np.diag(F_RR) == 0):
        raise np.linalg.LinAlgError("singular triangular block; increase damping")
    rhs = F_RC @ dW_C.T
    return -linalg.solve_triangular(F_RR, rhs, lower=True).T


def proxy_loss(dW, H) -> float:
    """``Tr(dW H dW^T)``."""
    dW = np.asarray(dW, dtype=np.float64)
    return float(np.einsum("ij,jk,ik->", dW, np.asarray(H, dtype=np.float64), dW))


# --------------------------------------------------------------------------
# randomized Hadamard

def _sign_diagonal(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).choice(np.array([-1.0, 1.0]), size=n)


def hadamard_matrix(n: int) -> np.ndarray:
    if n < 1 or n & (n - 1):
        raise ValueError(f"Hadamard length must be a power of two, got {n}")
    return linalg.hadamard(n).astype(np.float64)


def randomized_hadamard(v, seed: int, direction: str = "forward", signs=None) -> np.ndarray:
    """``(1/sqrt(n)) H_n diag(sigma) v`` along the last axis, or its inverse.

    ``signs`` overrides the seeded diagonal.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[-1]
    Hn = hadamard_matrix(n) / np.sqrt(n)
    s = _sign_diagonal(n, seed) if signs is None else np.asarray(signs, dtype=np.float64)
    if direction == "forward":
        return (v * s) @ Hn.T
    if direction == "inverse":
        return (v @ Hn) * s
    raise ValueError("direction must be 'forward' or 'inverse'")


def hadamard_operator(n: int, seed: int) -> np.ndarray:
    """The orthogonal matrix ``T`` applied by ``randomized_hadamard``."""
    return randomized_hadamard(np.eye(n), seed).T


# --------------------------------------------------------------------------
# layer driver

@dataclass(frozen=True)
class LayerQuantConfig:
    """Layer quantization settings.

    Args:
        quantizer: block quantizer configuration.
        corrections: apply Hessian corrections between column groups.
        hadamard: ``"none"``, ``"input"`` or ``"input+output"``.
        seed: seed for the Hadamard sign diagonals (output uses ``seed + 1``).
        group_scales: calibrate and store one scale per column group.
        damping: relative diagonal damping.
    """

    quantizer: QuantizerConfig = field(default_factory=QuantizerConfig)
    corrections: bool = True
    hadamard: str = HADAMARD_NONE
    seed: int = 0
    group_scales: bool = False
    damping: float = DAMPING

    def __post_init__(self):
        if self.hadamard not in HADAMARD_MODES:
            raise ValueError(f"hadamard must be one of {HADAMARD_MODES}")

    @property
    def group_size(self) -> int:
        return DIM


@dataclass
class QuantizedLayer:
    """Everything needed to rebuild a quantized weight matrix."""

    config: LayerQuantConfig
    shape: tuple[int, int]
    padded_cols: int
    beta: float
    shape_idx: np.ndarray            # rows x groups
    gain_idx: np.ndarray | None      # rows x groups
    gain_levels: np.ndarray | None
    fingerprint: str
    group_scales: np.ndarray | None = None

    @property
    def n_groups(self) -> int:
        return self.padded_cols // DIM

    def gain_codebook(self) -> GainCodebook | None:
        if self.gain_levels is None:
            return None
        q = self.config.quantizer
        return GainCodebook(levels=self.gain_levels, bits=q.gain_bits)

    def dequantize(self) -> np.ndarray:
        """Reconstruct in the original (unrotated, unpadded) coordinates."""
        q = self.config.quantizer
        if get_layout(q.M).fingerprint != self.fingerprint:
            raise LayoutMismatchError("quantized layer was built under a different layout")
        bq = BlockQuantizer(q, self.gain_codebook())
        rows = self.shape[0]
        if self.group_scales is not None:
            beta = np.broadcast_to(self.group_scales[None, :], self.shape_idx.shape).reshape(-1)
        else:
            beta = self.beta
        gain = None if self.gain_idx is None else self.gain_idx.reshape(-1)
        blocks = bq.dequantize(self.shape_idx.reshape(-1), gain, beta)
        Wq = blocks.reshape(rows, self.padded_cols)
        return _unrotate(Wq[:, : self.shape[1]], self.config)


def _rotate(W, H, config: LayerQuantConfig):
    if config.hadamard == HADAMARD_NONE:
        return W, H
    T = hadamard_operator(W.shape[1], config.seed)
    W = W @ T.T
    if H is not None:
        H = T @ H @ T.T
    if config.hadamard == HADAMARD_BOTH:
        W = hadamard_operator(W.shape[0], config.seed + 1) @ W
    return W, H


def _unrotate(W, config: LayerQuantConfig):
    if config.hadamard == HADAMARD_NONE:
        return W
    d = W.shape[1]
    if config.hadamard == HADAMARD_BOTH:
        W = hadamard_operator(W.shape[0], config.seed + 1).T @ W
    return W @ hadamard_operator(d, config.seed)


def quantize_layer(W, H=None, config: LayerQuantConfig | None = None,
                   beta: float | None = None) -> QuantizedLayer:
    """Quantize ``W`` group by group, correcting later columns after each group.

    Args:
        W: N_rows x D_in weights.
        H: D_in x D_in input second moment (array or HessianState), or None to
            skip corrections.
        config: layer settings.
        beta: per-tensor scale override; calibrated from ``W`` when omitted.

    Returns:
        The quantized layer.
    """
    config = config or LayerQuantConfig()
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError("W must be a matrix")
    if not np.all(np.isfinite(W)):
        raise ValueError("non-finite weights")
    rows, cols = W.shape
    state = None
    if H is not None:
        Hm = H.H if isinstance(H, HessianState) else np.asarray(H, dtype=np.float64)
        if Hm.shape != (cols, cols):
            raise ValueError(f"Hessian is {Hm.shape}, weights have {cols} columns")
    else:
        Hm = None
    if config.hadamard != HADAMARD_NONE:
        for n in (cols,) + ((rows,) if config.hadamard == HADAMARD_BOTH else ()):
            if n & (n - 1):
                raise ValueError(f"Hadamard rotation needs power-of-two dims, got {n}")
    W, Hm = _rotate(W, Hm, config)
    if Hm is not None:
        # damping follows the unpadded statistics; pad columns stay uncoupled
        state = HessianState.from_matrix(Hm, damping=config.damping)
    padded = -(-cols // DIM) * DIM
    Wp = np.zeros((rows, padded))
    Wp[:, :cols] = W
    if state is not None:
        state = state.padded(padded)

    q = config.quantizer
    bq = BlockQuantizer(q)
    if beta is None:
        beta = bq.calibrate(Wp.reshape(-1, DIM))
    # the file stores binary32; quantize with exactly what the decoder will see
    beta = float(np.float32(beta))
    if q.shape_gain:
        gain = bq.gain
        if q.gain_codebook == "empirical":
            gain = bq.fit_gain_codebook(Wp.reshape(-1, DIM), beta)
        bq = BlockQuantizer(q, GainCodebook(levels=gain.levels.astype(np.float32).astype(np.float64),
                                            bits=gain.bits, dof=gain.dof,
                                            scale_convention=gain.scale_convention))

    groups = padded // DIM
    betas = np.full(groups, beta)
    if config.group_scales:
        # one calibrated scale per column group, fixed before any correction
        for g in range(groups):
            blk = Wp[:, g * DIM:(g + 1) * DIM].reshape(-1, DIM)
            betas[g] = bq.calibrate(blk) if np.any(blk) else beta
        betas = betas.astype(np.float32).astype(np.float64)
    shape_idx = np.zeros((rows, groups), dtype=np.int64)
    gain_idx = np.zeros((rows, groups), dtype=np.int64) if q.shape_gain else None
    work = Wp.copy()
    use_corr = config.corrections and state is not None
    for g in range(groups):
        C = slice(g * DIM, (g + 1) * DIM)
        si, gi = bq.quantize(work[:, C], betas[g])
        shape_idx[:, g] = si
        if gain_idx is not None:
            gain_idx[:, g] = gi
        if use_corr and g + 1 < groups:
            err = bq.dequantize(si, gi, betas[g]) - work[:, C]
            R = slice((g + 1) * DIM, padded)
            work[:, R] += hessian_correction(err, state.F, C, R)

    gs = betas if config.group_scales else None

    return QuantizedLayer(
        config=config,
        shape=(rows, cols),
        padded_cols=padded,
        beta=beta,
        shape_idx=shape_idx,
        gain_idx=gain_idx,
        gain_levels=None if bq.gain is None else bq.gain.levels,
        fingerprint=bq.layout.fingerprint,
        group_scales=gs,
    )
