"""Extended binary Golay code G24.

Codewords are 24-bit integers; bit ``i`` holds coordinate ``i`` (coordinate 0
is the least-significant bit). The code is generated by the fixed systematic
matrix ``[I12 | B]`` below, and every ordering used elsewhere in the package
derives from the ascending integer order of the 4096 codewords.

Generator matrix (row ``i`` has coordinate ``i`` set plus coordinates
``12 + j`` for each ``B[i][j] == 1``)::

    I12                          B
    1 0 0 0 0 0 0 0 0 0 0 0  |  1 1 0 1 1 1 0 0 0 1 0 1
    0 1 0 0 0 0 0 0 0 0 0 0  |  1 0 1 1 1 0 0 0 1 0 1 1
    0 0 1 0 0 0 0 0 0 0 0 0  |  0 1 1 1 0 0 0 1 0 1 1 1
    0 0 0 1 0 0 0 0 0 0 0 0  |  1 1 1 0 0 0 1 0 1 1 0 1
    0 0 0 0 1 0 0 0 0 0 0 0  |  1 1 0 0 0 1 0 1 1 0 1 1
    0 0 0 0 0 1 0 0 0 0 0 0  |  1 0 0 0 1 0 1 1 0 1 1 1
    0 0 0 0 0 0 1 0 0 0 0 0  |  0 0 0 1 0 1 1 0 1 1 1 1
    0 0 0 0 0 0 0 1 0 0 0 0  |  0 0 1 0 1 1 0 1 1 1 0 1
    0 0 0 0 0 0 0 0 1 0 0 0  |  0 1 0 1 1 0 1 1 1 0 0 1
    0 0 0 0 0 0 0 0 0 1 0 0  |  1 0 1 1 0 1 1 1 0 0 0 1
    0 0 0 0 0 0 0 0 0 0 1 0  |  0 1 1 0 1 1 1 0 0 0 1 1
    0 0 0 0 0 0 0 0 0 0 0 1  |  1 1 1 1 1 1 1 1 1 1 1 0

The parity-check matrix is ``[B^T | I12]``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

N_BITS = 24
N_CODEWORDS = 4096
WEIGHTS = (0, 8, 12, 16, 24)
WEIGHT_COUNTS = {0: 1, 8: 759, 12: 2576, 16: 759, 24: 1}

B_MATRIX = (
    (1, 1, 0, 1, 1, 1, 0, 0, 0, 1, 0, 1),
    (1, 0, 1, 1, 1, 0, 0, 0, 1, 0, 1, 1),
    (0, 1, 1, 1, 0, 0, 0, 1, 0, 1, 1, 1),
    (1, 1, 1, 0, 0, 0, 1, 0, 1, 1, 0, 1),
    (1, 1, 0, 0, 0, 1, 0, 1, 1, 0, 1, 1),
    (1, 0, 0, 0, 1, 0, 1, 1, 0, 1, 1, 1),
    (0, 0, 0, 1, 0, 1, 1, 0, 1, 1, 1, 1),
    (0, 0, 1, 0, 1, 1, 0, 1, 1, 1, 0, 1),
    (0, 1, 0, 1, 1, 0, 1, 1, 1, 0, 0, 1),
    (1, 0, 1, 1, 0, 1, 1, 1, 0, 0, 0, 1),
    (0, 1, 1, 0, 1, 1, 1, 0, 0, 0, 1, 1),
    (1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0),
)


def _row_mask(bits) -> int:
    return sum(1 << i for i, b in enumerate(bits) if b)


def generator_rows() -> tuple[int, ...]:
    """The 12 generator rows as 24-bit integers."""
    rows = []
    for i in range(12):
        bits = [0] * N_BITS
        bits[i] = 1
        for j in range(12):
            bits[12 + j] = B_MATRIX[i][j]
        rows.append(_row_mask(bits))
    return tuple(rows)


def parity_check_rows() -> tuple[int, ...]:
    """The 12 rows of ``[B^T | I12]`` as 24-bit integers."""
    rows = []
    for j in range(12):
        bits = [0] * N_BITS
        for i in range(12):
            bits[i] = B_MATRIX[i][j]
        bits[12 + j] = 1
        rows.append(_row_mask(bits))
    return tuple(rows)


GENERATOR = generator_rows()
PARITY_CHECK = parity_check_rows()


def syndrome(word: int) -> int:
    s = 0
    for j, h in enumerate(PARITY_CHECK):
        s |= (bin(word & h).count("1") & 1) << j
    return s


def is_codeword(word: int) -> bool:
    """Membership by syndrome against the fixed parity-check matrix."""
    if word < 0 or word >> N_BITS:
        return False
    return syndrome(word) == 0


@lru_cache(maxsize=None)
def _codeword_array() -> np.ndarray:
    words = np.zeros(N_CODEWORDS, dtype=np.int64)
    for msg in range(N_CODEWORDS):
        w = 0
        for i in range(12):
            if (msg >> i) & 1:
                w ^= GENERATOR[i]
        words[msg] = w
    words.sort()
    words.setflags(write=False)
    return words


def codeword_array() -> np.ndarray:
    """All 4096 codewords as a read-only ascending ``int64`` array."""
    return _codeword_array()


def generate_codewords() -> list[int]:
    """All 4096 codewords, ascending by integer value."""
    return [int(w) for w in _codeword_array()]


def weight(word: int) -> int:
    return bin(word).count("1")


@lru_cache(maxsize=None)
def _weight_array() -> np.ndarray:
    words = _codeword_array()
    w = np.array([weight(int(c)) for c in words], dtype=np.int64)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def _by_weight(w: int) -> np.ndarray:
    words = _codeword_array()[_weight_array() == w]
    words.setflags(write=False)
    return words


def codewords_of_weight(w: int) -> list[int]:
    """Codewords of Hamming weight ``w`` in global (ascending) order."""
    if w not in WEIGHT_COUNTS:
        raise ValueError(f"no Golay codewords of weight {w}; weights are {WEIGHTS}")
    return [int(c) for c in _by_weight(w)]


def codeword_array_of_weight(w: int) -> np.ndarray:
    if w not in WEIGHT_COUNTS:
        raise ValueError(f"no Golay codewords of weight {w}; weights are {WEIGHTS}")
    return _by_weight(w)


def rank_codeword(word: int) -> int:
    words = _codeword_array()
    r = int(np.searchsorted(words, word))
    if r >= N_CODEWORDS or int(words[r]) != word:
        raise ValueError(f"{word:#08x} is not a Golay codeword")
    return r


def unrank_codeword(r: int) -> int:
    if not 0 <= r < N_CODEWORDS:
        raise ValueError(f"codeword rank {r} out of range [0, {N_CODEWORDS})")
    return int(_codeword_array()[r])


def support(word: int) -> list[int]:
    """Coordinates where the word has a one (the F1 set)."""
    return [i for i in range(N_BITS) if (word >> i) & 1]


def count_codewords_exhaustive() -> int:
    """Count members of G24 among all 2**24 words by vectorised syndrome.

    This is the one-time audit that the parity-check matrix and the generator
    agree; it touches every 24-bit word.
    """
    words = np.arange(1 << N_BITS, dtype=np.uint32)
    syn = np.zeros_like(words)
    for j, h in enumerate(PARITY_CHECK):
        x = words & np.uint32(h)
        # popcount parity by folding
        x ^= x >> 16
        x ^= x >> 8
        x ^= x >> 4
        x ^= x >> 2
        x ^= x >> 1
        syn |= (x & 1) << j
    return int(np.count_nonzero(syn == 0))
