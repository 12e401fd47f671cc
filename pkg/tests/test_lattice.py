import math

import numpy as np
import pytest

from leechvq import golay, lattice
from leechvq.lattice import EVEN, NOT_IN_LATTICE, ODD
from oracles import in_lattice, theta_shell_size


def _encode_table():
    """Codeword for each 12-bit message, built only from the generator rows."""
    enc = np.zeros(4096, dtype=np.int64)
    for k, row in enumerate(golay.GENERATOR):
        enc[1 << k: 1 << (k + 1)] = enc[: 1 << k] ^ row
    return enc


def _is_word(words, enc):
    return enc[words & 0xFFF] == words


@pytest.mark.parametrize("x,expected", [
    ((4, 4) + (0,) * 22, EVEN),
    ((1,) * 24, NOT_IN_LATTICE),
    ((-3,) + (1,) * 23, ODD),
    ((3,) + (1,) * 23, NOT_IN_LATTICE),
    ((2,) + (0,) * 23, NOT_IN_LATTICE),
    ((2,) * 8 + (0,) * 16, NOT_IN_LATTICE),
    ((8,) + (0,) * 23, EVEN),
])
def test_classify_point(x, expected):
    assert lattice.classify_point(x) == expected
    assert (expected != NOT_IN_LATTICE) == in_lattice(x, golay.GENERATOR)


def test_classify_point_golay_octad():
    octad = golay.codewords_of_weight(8)[0]
    x = [2 if octad >> i & 1 else 0 for i in range(24)]
    assert lattice.classify_point(x) == EVEN
    x[[i for i in range(24) if octad >> i & 1][0]] = -2
    assert lattice.classify_point(x) == NOT_IN_LATTICE


def test_classify_points_vectorised_matches_scalar():
    rng = np.random.default_rng(0)
    pts = lattice.shell_points(2)[rng.integers(0, 196_560, 300)]
    noise = pts.copy()
    noise[:, 0] += 2 * rng.integers(-1, 2, 300)
    allp = np.concatenate([pts, noise])
    vec = lattice.classify_points(allp)
    code = {EVEN: 0, ODD: 1, NOT_IN_LATTICE: -1}
    assert list(vec) == [code[lattice.classify_point(p)] for p in allp]


def test_shell2_classes():
    cls = lattice.enumerate_classes(2)
    assert len(cls) == 3
    assert sorted(c.cardinality for c in cls) == [1104, 97152, 98304]
    assert sum(c.cardinality for c in cls) == 196_560


@pytest.mark.parametrize("m", [2, 3, 4])
def test_class_cardinalities_match_reference(m):
    got = {(c.parity, c.leader.levels): c.cardinality for c in lattice.shell_classes(m)}
    assert got == lattice.TABLE2_CLASSES[m]


def test_class_4_4_expansion():
    c = next(c for c in lattice.shell_classes(2) if c.leader.levels == ((4, 2), (0, 22)))
    assert (c.A, c.B, c.placements) == (1, 2, 276)
    count = 0
    for i in range(24):
        for j in range(i + 1, 24):
            for si in (4, -4):
                for sj in (4, -4):
                    x = [0] * 24
                    x[i], x[j] = si, sj
                    count += in_lattice(x, golay.GENERATOR)
    assert count == 1104 == c.cardinality


def test_class_octads_brute_force():
    """(2^8, 0^16): scan every 8-subset, then every sign pattern on one codeword support."""
    c = next(c for c in lattice.shell_classes(2) if c.leader.levels == ((2, 8), (0, 16)))
    assert (c.A, c.B) == (759, 7)
    enc = _encode_table()
    supports = []
    for comb in __import__("itertools").combinations(range(24), 8):
        w = 0
        for i in comb:
            w |= 1 << i
        supports.append(w)
    supports = np.array(supports, dtype=np.int64)
    n_support = int(_is_word(supports, enc).sum())
    assert n_support == 759
    # with magnitudes all 2 the word does not depend on signs; only the sum rule bites
    signs = np.arange(256)
    negs = np.array([bin(s).count("1") for s in signs])
    ok = ((8 - 2 * negs) * 2) % 8 == 0
    assert n_support * int(ok.sum()) == c.cardinality


@pytest.mark.parametrize("pos", [0, 5])
def test_class_odd_3_1_brute_force(pos):
    """(3, 1^23): all 2^24 sign patterns with the 3 at one position; 24 positions are equivalent."""
    enc = _encode_table()
    s = np.arange(1 << 24, dtype=np.int64)
    # bit i of s set means coordinate i is negative; (v >> 1) & 1 is 1 for -1 and +3
    word = s ^ (1 << pos)
    neg = np.zeros_like(s)
    t = s.copy()
    for _ in range(24):
        neg += t & 1
        t >>= 1
    neg_rest = neg - (s >> pos & 1)
    three = np.where(s >> pos & 1, -3, 3)
    total = three + (23 - neg_rest) - neg_rest
    ok = _is_word(word, enc) & (total % 8 == 4)
    assert 24 * int(ok.sum()) == 98_304


def test_classes_are_consistent():
    for c in lattice.enumerate_classes(8):
        vals = c.leader.values
        assert len(vals) == 24
        assert sum(v * v for v in vals) == 16 * c.shell
        assert len({v & 1 for v in vals}) == 1
        assert (c.parity == ODD) == bool(vals[0] & 1)
        perm = math.factorial(24)
        for v, p in c.leader.levels:
            perm //= math.factorial(p)
        if c.parity == ODD:
            assert (c.A, c.B, c.placements) == (4096, 0, perm)
        else:
            # codeword-constrained placements are the fraction A / C(24, k) of all arrangements
            k = c.weight
            assert c.A == golay.WEIGHT_COUNTS[k]
            assert c.placements * math.comb(24, k) == perm
        assert c.cardinality == c.A * 2**c.B * c.placements


def test_class_offsets_cover_ball():
    cls = lattice.enumerate_classes(6)
    off = 0
    for c in cls:
        assert c.offset == off
        off = c.end
    assert off == lattice.cumulative_count(6)


def test_class_order_even_first_then_descending_leaders():
    for m in range(2, 9):
        cls = lattice.shell_classes(m)
        parities = [c.parity for c in cls]
        assert parities == sorted(parities, key=lambda p: p != EVEN)
        for a, b in zip(cls, cls[1:]):
            if a.parity == b.parity:
                assert a.leader.values > b.leader.values


@pytest.mark.parametrize("m", range(2, 14))
def test_shell_size_matches_theta_series(m):
    assert lattice.shell_size(m) == theta_shell_size(m)


def test_reference_shell_sizes():
    for m, n in lattice.TABLE1_SHELL_SIZES.items():
        assert lattice.shell_size(m) == n
    assert lattice.shell_size(2) == 196_560
    assert lattice.cumulative_count(3) == 16_969_680


def test_cumulative_counts():
    for M, n in lattice.TABLE1_CUMULATIVE.items():
        assert lattice.cumulative_count(M) == n
    assert lattice.cumulative_count(13) == 280_974_212_784_720


def test_shell_13_is_not_the_misprinted_value():
    # a reference table prints n(13) with one digit group missing
    assert lattice.shell_size(13) == 169_931_095_326_720
    assert lattice.shell_size(13) != 16_993_109_532_672


def test_index_bits_and_rate():
    expected = [18, 25, 29, 33, 36, 38, 40, 42, 44, 46, 47, 48]
    assert [lattice.index_bits(M) for M in range(2, 14)] == expected
    assert f"{lattice.bits_per_dim(13):.3f}" == "2.000"


def test_shell2_points():
    pts = lattice.shell_points(2)
    assert pts.shape == (196_560, 24)
    assert (np.sum(pts * pts, axis=1) == 32).all()
    assert (lattice.classify_points(pts) >= 0).all()
    assert len(np.unique(pts, axis=0)) == 196_560


def test_shell2_minimum_distance_sample():
    pts = lattice.shell_points(2)
    rng = np.random.default_rng(3)
    s = pts[rng.choice(len(pts), 1000, replace=False)].astype(np.int64)
    g = s @ s.T
    sq = np.diag(g)
    d2 = sq[:, None] + sq[None, :] - 2 * g
    np.fill_diagonal(d2, 10**9)
    assert d2.min() == 32


def test_enumeration_cap():
    with pytest.raises((ValueError, MemoryError)):
        lattice.shell_points(3, cap=1000)


def test_multinomial():
    assert lattice.multinomial([2, 22]) == 276
    assert lattice.multinomial([24]) == 1
