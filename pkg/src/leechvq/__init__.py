"""Codebook-free vector quantization on the Leech lattice."""

from .codec import CodebookLayout, GlobalIndex, decode, decode_many, encode, encode_many, get_layout
from .layerquant import LayerQuantConfig, QuantizedLayer, quantize_layer
from .quantizers import BlockQuantizer, QuantizerConfig
from .search import SearchConfig, Searcher, nearest, nearest_batch

__version__ = "0.1.0"

__all__ = [
    "BlockQuantizer",
    "CodebookLayout",
    "GlobalIndex",
    "LayerQuantConfig",
    "QuantizedLayer",
    "QuantizerConfig",
    "SearchConfig",
    "Searcher",
    "decode",
    "decode_many",
    "encode",
    "encode_many",
    "get_layout",
    "nearest",
    "nearest_batch",
    "quantize_layer",
]
