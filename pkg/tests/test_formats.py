import struct

import numpy as np
import pytest

from leechvq.codec import LayoutMismatchError, get_layout
from leechvq.formats import (
    FormatError, as_matrix, parse_quantized, parse_tensor, quantized_bytes, read_tensor,
    tensor_bytes, write_tensor,
)
from leechvq.layerquant import LayerQuantConfig, estimate_hessian, quantize_layer
from leechvq.quantizers import QuantizerConfig


def test_tensor_layout():
    a = np.arange(6, dtype=np.float32).reshape(2, 3)
    data = tensor_bytes(a)
    assert data[:8] == b"LLVQTNSR"
    assert struct.unpack_from("<II", data, 8) == (1, 2)
    assert struct.unpack_from("<2Q", data, 16) == (2, 3)
    assert len(data) == 32 + 4 * 6
    assert np.frombuffer(data[32:], "<f4").tolist() == list(range(6))


def test_tensor_roundtrip(tmp_path):
    a = np.random.default_rng(0).standard_normal((3, 4, 5)).astype(np.float32)
    write_tensor(tmp_path / "t.bin", a)
    assert np.array_equal(read_tensor(tmp_path / "t.bin"), a)


def test_tensor_errors():
    data = bytearray(tensor_bytes(np.ones(3)))
    with pytest.raises(FormatError):
        parse_tensor(b"XXXXXXXX" + bytes(data[8:]))
    with pytest.raises(FormatError):
        parse_tensor(bytes(data[:-1]))
    data[8] = 9
    with pytest.raises(FormatError):
        parse_tensor(bytes(data))


def _layer(**kw):
    rng = np.random.default_rng(1)
    W = rng.standard_normal((8, 40))
    cfg = LayerQuantConfig(QuantizerConfig(kw.pop("mode", "shapegain"), kw.pop("M", 7),
                                           kw.pop("gain_bits", 2)), **kw)
    return W, quantize_layer(W, estimate_hessian(rng.standard_normal((64, 40))), cfg)


@pytest.mark.parametrize("kw", [{}, {"mode": "spherical", "gain_bits": 0},
                                {"group_scales": True}, {"mode": "shapegain-opt", "gain_bits": 0}])
def test_quantized_roundtrip(kw):
    W, layer = _layer(**kw)
    data = quantized_bytes(layer, (8, 40))
    back, dims = parse_quantized(data)
    assert dims == (8, 40)
    assert np.array_equal(back.dequantize(), layer.dequantize())


def test_quantized_body_length():
    _, layer = _layer()
    data = quantized_bytes(layer)
    bits = layer.shape_idx.size * (get_layout(7).bits_per_index + 2)
    back, _ = parse_quantized(data)
    assert len(data) >= (bits + 7) // 8
    with pytest.raises(FormatError):
        parse_quantized(data + b"\x00")


def test_quantized_rejects_foreign_layout():
    _, layer = _layer()
    layer.fingerprint = "00" * 32
    data = quantized_bytes(layer)
    with pytest.raises(LayoutMismatchError):
        parse_quantized(data)
    back, _ = parse_quantized(data, check_layout=False)
    with pytest.raises(LayoutMismatchError):
        back.dequantize()


def test_quantized_bad_magic():
    _, layer = _layer()
    data = quantized_bytes(layer)
    with pytest.raises(FormatError):
        parse_quantized(b"LLVQQ002" + data[8:])


def test_as_matrix():
    assert as_matrix(np.ones(5)).shape == (1, 5)
    assert as_matrix(np.ones((2, 3, 4))).shape == (6, 4)
