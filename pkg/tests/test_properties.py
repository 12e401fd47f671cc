"""Property-based checks of the core invariants."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from leechvq import golay, lattice
from leechvq.codec import decode, decode_many, encode, get_layout, pack_fields, unpack_fields
from leechvq.layerquant import hessian_correction, randomized_hadamard, reverse_cholesky
from leechvq.search import ANGULAR, EUCLIDEAN, SQRT8, SearchConfig, Searcher
from oracles import dense_correction, in_lattice

LAYOUT = get_layout(13)
SEARCH_E = Searcher(SearchConfig(13, EUCLIDEAN))
SEARCH_A = Searcher(SearchConfig(13, ANGULAR))
SLOW = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])

finite = st.floats(-8, 8, allow_nan=False, allow_infinity=False, width=64)
vec24 = arrays(np.float64, 24, elements=finite)


@given(st.integers(0, 4095), st.integers(0, 4095))
def test_golay_closure(a, b):
    assert golay.is_codeword(golay.unrank_codeword(a) ^ golay.unrank_codeword(b))


@SLOW
@given(st.integers(0, LAYOUT.size - 1))
def test_codec_roundtrip(i):
    p = decode(i, LAYOUT)
    assert in_lattice(p, golay.GENERATOR)
    assert int(np.sum(p.astype(np.int64) ** 2)) == 16 * LAYOUT.shell_of_index(i)
    assert encode(p, LAYOUT).value == i


@SLOW
@given(vec24, st.integers(0, LAYOUT.size - 1))
def test_euclidean_search_beats_any_codeword(x, i):
    p, _, d = SEARCH_E.search_arrays(x[None])
    q = decode(i, LAYOUT)
    assert d[0] <= np.sum((SQRT8 * x - q) ** 2) + 1e-9
    assert in_lattice(p[0], golay.GENERATOR)


@SLOW
@given(vec24.filter(lambda v: np.linalg.norm(v) > 1e-3), st.integers(0, LAYOUT.size - 1))
def test_angular_search_beats_any_codeword(x, i):
    _, _, c = SEARCH_A.search_arrays(x[None])
    q = decode(i, LAYOUT).astype(float)
    assert c[0] >= q @ x / (np.linalg.norm(q) * np.linalg.norm(x)) - 1e-12


@SLOW
@given(vec24.filter(lambda v: np.linalg.norm(v) > 1e-3), st.floats(0.01, 100))
def test_angular_scale_invariance(x, s):
    a = SEARCH_A.search_arrays(x[None])
    b = SEARCH_A.search_arrays(s * x[None])
    assert a[1][0] == b[1][0] or np.isclose(a[2][0], b[2][0], rtol=0, atol=1e-12)


@SLOW
@given(vec24)
def test_euclidean_negation_symmetry(x):
    p, _, d = SEARCH_E.search_arrays(x[None])
    q, _, d2 = SEARCH_E.search_arrays(-x[None])
    assert np.isclose(d[0], d2[0], atol=1e-9)
    assert np.isclose(np.sum((SQRT8 * x + q[0]) ** 2), d[0], atol=1e-9)


@given(st.lists(st.integers(1, 62), min_size=1, max_size=4).flatmap(
    lambda w: st.tuples(st.just(w), st.lists(
        st.tuples(*[st.integers(0, (1 << b) - 1) for b in w]), min_size=0, max_size=30))))
def test_pack_unpack(args):
    widths, rows = args
    cols = [np.array([r[k] for r in rows], dtype=np.int64) for k in range(len(widths))]
    data = pack_fields(cols, widths)
    assert len(data) == (len(rows) * sum(widths) + 7) // 8
    back = unpack_fields(data, widths, len(rows))
    for c, b in zip(cols, back):
        assert (c == b).all()


@given(st.integers(0, 6), st.integers(0, 2**32 - 1), st.data())
def test_hadamard_orthogonal(k, seed, data):
    n = 1 << k
    v = data.draw(arrays(np.float64, n, elements=finite))
    f = randomized_hadamard(v, seed)
    assert np.isclose(np.linalg.norm(f), np.linalg.norm(v), rtol=1e-12, atol=1e-12)
    assert np.allclose(randomized_hadamard(f, seed, "inverse"), v, atol=1e-12)


@settings(deadline=None)
@given(st.integers(2, 16), st.data())
def test_hessian_correction_oracle(D, data):
    c0 = data.draw(st.integers(0, D - 2))
    c1 = data.draw(st.integers(c0 + 1, D - 1))
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((D, D))
    H = A @ A.T / D + 0.05 * np.eye(D)
    e = rng.standard_normal((3, c1 - c0))
    got = hessian_correction(e, reverse_cholesky(H), slice(c0, c1), slice(c1, D))
    ref = dense_correction(H, e, np.arange(c0, c1), np.arange(c1, D))
    assert np.allclose(got, ref, atol=1e-8, rtol=1e-8)


@given(st.integers(2, 12))
def test_class_cardinalities_sum_to_shell(m):
    assert sum(c.cardinality for c in lattice.shell_classes(m)) == lattice.shell_size(m)
