"""Binary tensor and quantized-layer files (little-endian throughout).

Tensor file::

    b"LLVQTNSR" | u32 version | u32 ndim | u64 dims[ndim] | f32 payload (row-major)

Quantized file::

    b"LLVQQ001"
    u32 header_version
    u8 mode | u8 gain_codebook | u8 hadamard | u8 flags (bit0 corrections)
    u32 M | u32 gain_bits | i64 hadamard_seed
    32 bytes layout fingerprint (sha256)
    u32 ndim | u64 dims[ndim]          original tensor shape
    u64 rows | u64 padded_cols         matrix actually quantized
    f32 beta | f32 damping
    u32 n_levels | f32 gain_levels[n_levels]
    u32 n_scales | f32 group_scales[n_scales]
    u64 n_blocks
    body: per block (row-major over rows x column groups) the shape index in
          index_bits(M) bits then the gain index in gain_bits bits, LSB first,
          zero-padded to a byte boundary
"""

from __future__ import annotations

import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .codec import LayoutMismatchError, get_layout, pack_fields, unpack_fields
from .layerquant import HADAMARD_MODES, LayerQuantConfig, QuantizedLayer
from .quantizers import CHI, EMPIRICAL, MODES, QuantizerConfig

TENSOR_MAGIC = b"LLVQTNSR"
TENSOR_VERSION = 1
QUANT_MAGIC = b"LLVQQ001"
QUANT_VERSION = 1
_CODEBOOKS = (CHI, EMPIRICAL)


class FormatError(ValueError):
    pass


def atomic_write(path, data: bytes) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# tensors

def tensor_bytes(a) -> bytes:
    a = np.ascontiguousarray(np.asarray(a, dtype="<f4"))
    head = TENSOR_MAGIC + struct.pack("<II", TENSOR_VERSION, a.ndim)
    head += struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + a.tobytes()


def write_tensor(path, a) -> None:
    atomic_write(path, tensor_bytes(a))


def parse_tensor(data: bytes) -> np.ndarray:
    if data[:8] != TENSOR_MAGIC:
        raise FormatError("not a tensor file (bad magic)")
    version, ndim = struct.unpack_from("<II", data, 8)
    if version != TENSOR_VERSION:
        raise FormatError(f"unsupported tensor file version {version}")
    dims = struct.unpack_from(f"<{ndim}Q", data, 16)
    off = 16 + 8 * ndim
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    if len(data) != off + 4 * count:
        raise FormatError(f"payload holds {len(data) - off} bytes, expected {4 * count}")
    return np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(dims).astype(np.float32)


def read_tensor(path) -> np.ndarray:
    return parse_tensor(Path(path).read_bytes())


# --------------------------------------------------------------------------
# quantized layers

def quantized_bytes(layer: QuantizedLayer, dims=None) -> bytes:
    """Serialize ``layer``; ``dims`` is the original tensor shape (defaults to the matrix)."""
    cfg = layer.config
    q = cfg.quantizer
    dims = tuple(layer.shape) if dims is None else tuple(int(d) for d in dims)
    buf = io.BytesIO()
    w = buf.write
    w(QUANT_MAGIC)
    w(struct.pack("<I", QUANT_VERSION))
    flags = 1 if cfg.corrections else 0
    w(struct.pack("<BBBB", MODES.index(q.mode), _CODEBOOKS.index(q.gain_codebook),
                  HADAMARD_MODES.index(cfg.hadamard), flags))
    w(struct.pack("<IIq", q.M, q.gain_bits, cfg.seed))
    w(bytes.fromhex(layer.fingerprint))
    w(struct.pack("<I", len(dims)) + struct.pack(f"<{len(dims)}Q", *dims))
    w(struct.pack("<QQ", layer.shape[0], layer.padded_cols))
    w(struct.pack("<ff", layer.beta, cfg.damping))
    levels = np.zeros(0) if layer.gain_levels is None else layer.gain_levels
    w(struct.pack("<I", len(levels)) + np.asarray(levels, dtype="<f4").tobytes())
    scales = np.zeros(0) if layer.group_scales is None else layer.group_scales
    w(struct.pack("<I", len(scales)) + np.asarray(scales, dtype="<f4").tobytes())
    n_blocks = layer.shape_idx.size
    w(struct.pack("<Q", n_blocks))
    cols = [layer.shape_idx.reshape(-1)]
    widths = [get_layout(q.M).bits_per_index]
    if q.gain_bits:
        cols.append(layer.gain_idx.reshape(-1))
        widths.append(q.gain_bits)
    w(pack_fields(cols, widths))
    return buf.getvalue()


def write_quantized(path, layer: QuantizedLayer, dims=None) -> None:
    atomic_write(path, quantized_bytes(layer, dims))


def parse_quantized(data: bytes, check_layout: bool = True) -> tuple[QuantizedLayer, tuple[int, ...]]:
    """Inverse of ``quantized_bytes``; returns the layer and original dims."""
    if data[:8] != QUANT_MAGIC:
        raise FormatError("not a quantized file (bad magic)")
    off = 8
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != QUANT_VERSION:
        raise FormatError(f"unsupported quantized file version {version}")
    mode, cb, had, flags = struct.unpack_from("<BBBB", data, off)
    off += 4
    M, gain_bits, seed = struct.unpack_from("<IIq", data, off)
    off += 16
    fingerprint = data[off:off + 32].hex()
    off += 32
    (ndim,) = struct.unpack_from("<I", data, off)
    off += 4
    dims = struct.unpack_from(f"<{ndim}Q", data, off)
    off += 8 * ndim
    rows, padded = struct.unpack_from("<QQ", data, off)
    off += 16
    beta, damping = struct.unpack_from("<ff", data, off)
    off += 8
    (nl,) = struct.unpack_from("<I", data, off)
    off += 4
    levels = np.frombuffer(data, dtype="<f4", count=nl, offset=off).astype(np.float64)
    off += 4 * nl
    (ns,) = struct.unpack_from("<I", data, off)
    off += 4
    scales = np.frombuffer(data, dtype="<f4", count=ns, offset=off).astype(np.float64)
    off += 4 * ns
    (n_blocks,) = struct.unpack_from("<Q", data, off)
    off += 8
    try:
        qcfg = QuantizerConfig(MODES[mode], M, gain_bits, _CODEBOOKS[cb])
        cfg = LayerQuantConfig(quantizer=qcfg, corrections=bool(flags & 1),
                               hadamard=HADAMARD_MODES[had], seed=seed,
                               group_scales=ns > 0, damping=float(damping))
    except (IndexError, ValueError) as exc:
        raise FormatError(f"corrupt header: {exc}") from None
    layout = get_layout(M)
    if check_layout and layout.fingerprint != fingerprint:
        raise LayoutMismatchError("file was written under a different codebook layout")
    groups = padded // 24
    if n_blocks != rows * groups:
        raise FormatError("block count does not match the dimensions")
    widths = [layout.bits_per_index] + ([gain_bits] if gain_bits else [])
    fields = unpack_fields(data[off:], widths, n_blocks)
    if len(data) - off != (n_blocks * sum(widths) + 7) // 8:
        raise FormatError("body length does not match the header")
    shape_idx = fields[0].astype(np.int64).reshape(rows, groups)
    gain_idx = None
    if qcfg.shape_gain:
        gain_idx = (fields[1].astype(np.int64) if gain_bits else np.zeros(n_blocks, dtype=np.int64))
        gain_idx = gain_idx.reshape(rows, groups)
    cols = int(dims[-1]) if dims else 1
    layer = QuantizedLayer(
        config=cfg,
        shape=(int(rows), cols),
        padded_cols=int(padded),
        beta=float(beta),
        shape_idx=shape_idx,
        gain_idx=gain_idx,
        gain_levels=levels if nl else None,
        fingerprint=fingerprint,
        group_scales=scales if ns else None,
    )
    return layer, tuple(int(d) for d in dims)


def read_quantized(path, check_layout: bool = True):
    return parse_quantized(Path(path).read_bytes(), check_layout)


def as_matrix(a: np.ndarray) -> np.ndarray:
    """View an N-d tensor as rows x last-dimension columns (1-d becomes one row)."""
    a = np.asarray(a)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(1, -1)
    return a.reshape(-1, a.shape[-1])
