"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed together at the
end of the pytest run (and directly when this file is run as a script).
"""

import os
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from leechvq import bench, golay, lattice
from leechvq.codec import decode_many, encode_many, get_layout
from leechvq.formats import write_tensor
from leechvq.layerquant import (
    LayerQuantConfig, estimate_hessian, hessian_correction, proxy_loss, quantize_layer,
    reverse_cholesky,
)
from leechvq.quantizers import SHAPEGAIN, SPHERICAL, QuantizerConfig
from leechvq.search import ANGULAR, EUCLIDEAN, SQRT8, SearchConfig, Searcher
from oracles import brute_nearest_many, dense_correction


def record(n: int, checks: list[tuple[str, bool]], elapsed: float) -> None:
    ok = all(c for _, c in checks)
    detail = "; ".join(f"{name} [{'ok' if c else 'FAIL'}]" for name, c in checks)
    line = (str(n), ok, f"{detail} ({elapsed:.1f}s)")
    ACCEPTANCE.append(line)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {line[2]}")
    assert ok, line[2]


def test_criterion_1_combinatorics():
    lattice.shell_classes.cache_clear()
    lattice.shell_size.cache_clear()
    t = time.perf_counter()
    sizes = [lattice.shell_size(m) for m in range(2, 6)]
    N13 = lattice.cumulative_count(13)
    rate = f"{lattice.bits_per_dim(13):.3f}"
    table2 = all(
        {(c.parity, c.leader.levels): c.cardinality for c in lattice.shell_classes(m)}
        == lattice.TABLE2_CLASSES[m] for m in (2, 3, 4))
    dt = time.perf_counter() - t
    record(1, [
        (f"n(2..5)={sizes}", sizes == [196_560, 16_773_120, 398_034_000, 4_629_381_120]),
        (f"N(13)={N13:,}", N13 == 280_974_212_784_720),
        (f"bits/dim={rate}", rate == "2.000"),
        ("shell 2-4 class cardinalities", table2),
        (f"runtime {dt:.2f}s < 10s", dt < 10),
    ], dt)


def test_criterion_2_golay():
    t = time.perf_counter()
    words = golay.generate_codewords()
    arr = np.array(words, dtype=np.int64)
    enum = tuple(len(golay.codewords_of_weight(w)) for w in golay.WEIGHTS)
    rng = np.random.default_rng(0)
    pairs = rng.integers(0, 4096, (10_000, 2))
    closed = bool(np.isin(arr[pairs[:, 0]] ^ arr[pairs[:, 1]], arr).all()) and all(
        np.isin(arr ^ g, arr).all() for g in golay.GENERATOR)
    count = golay.count_codewords_exhaustive()
    dt = time.perf_counter() - t
    record(2, [
        (f"{len(set(words))} codewords", len(set(words)) == 4096),
        (f"weights {enum}", enum == (1, 759, 2576, 759, 1)),
        ("xor closure", closed),
        (f"exhaustive 2^24 count {count}", count == 4096),
        (f"runtime {dt:.1f}s < 60s", dt < 60),
    ], dt)


def test_criterion_3_codec_bijectivity():
    t = time.perf_counter()
    lay2 = get_layout(2)
    pts = lattice.shell_points(2)
    idx = encode_many(pts, lay2)
    hit = np.zeros(196_560, dtype=bool)
    inside = (idx >= 0) & (idx < 196_560)
    hit[idx[inside]] = True
    bij = bool(inside.all() and hit.all() and len(np.unique(idx)) == 196_560)
    bij = bij and bool((decode_many(idx, lay2) == pts).all())
    lay = get_layout(13)
    r = np.random.default_rng(1).integers(0, lay.size, 100_000)
    back = encode_many(decode_many(r, lay), lay)
    bad = int(np.sum(back != r))
    record(3, [
        ("Shell(2) encode is a bijection onto [0, 196560)", bij),
        (f"1e5 random M=13 indices, {bad} mismatches", bad == 0),
    ], time.perf_counter() - t)


def test_criterion_4_search_optimality():
    t = time.perf_counter()
    shell2 = lattice.shell_points(2).astype(np.float64)
    X = np.random.default_rng(2).standard_normal((1000, 24))
    checks = []
    for metric in (EUCLIDEAN, ANGULAR):
        pts = Searcher(SearchConfig(2, metric)).search_arrays(X)[0]
        ref = shell2[brute_nearest_many(SQRT8 * X, shell2, metric)]
        bad = int(np.any(pts != ref, axis=1).sum())
        checks.append((f"M=2 {metric} vs exhaustive, {bad} mismatches", bad == 0))
    bad = 0
    for m in (2, 3, 6):
        a = Searcher(SearchConfig(m, EUCLIDEAN, shells=(m,))).search_arrays(X)[0]
        b = Searcher(SearchConfig(m, ANGULAR, shells=(m,))).search_arrays(X)[0]
        bad += int(np.any(a != b, axis=1).sum())
    checks.append((f"single-shell euclidean == angular, {bad} mismatches", bad == 0))
    record(4, checks, time.perf_counter() - t)


@pytest.fixture(scope="module")
def sweep():
    t = time.perf_counter()
    reps = bench.shaping_vs_shapegain_sweep(2.0, (0, 1, 2, 4), n=100_000, seed=0)
    return reps, time.perf_counter() - t


def test_criterion_5_gaussian_rate_distortion(sweep):
    reps, dt = sweep
    sph = next(r for r in reps if r.config["mode"] == SPHERICAL)
    sg1 = next(r for r in reps if r.config["mode"] == SHAPEGAIN and r.config["gain_bits"] == 1)
    table = ", ".join(f"{r.config['mode'][:9]}(M={r.config['M']},b={r.config['gain_bits']})"
                      f"={r.mse:.4f}" for r in reps)
    print(table)
    best = bench.best_gain_allocation(reps)
    record(5, [
        (f"spherical M=13 MSE {sph.mse:.4f} (0.084+-0.003), Ret {sph.retention_pct:.1f}%",
         abs(sph.mse - 0.084) <= 0.003 and abs(sph.retention_pct - 89.4) <= 1.5),
        (f"shape-gain M=12 + 1 bit MSE {sg1.mse:.4f} (0.078+-0.003), Ret {sg1.retention_pct:.1f}%",
         abs(sg1.mse - 0.078) <= 0.003 and abs(sg1.retention_pct - 92.1) <= 1.5),
        (f"best gain allocation {best} bit(s)", best == 1),
        (f"n={sph.n_samples}, runtime {dt:.0f}s <= 1800s", sph.n_samples >= 100_000 and dt <= 1800),
    ], dt)


def test_criterion_6_scalar_baselines():
    t = time.perf_counter()
    _, _, exact = bench.gaussian_lloyd_max(2)
    mc = bench.scalar_baselines(2, 2_400_000, 0)
    lm = next(r for r in mc if r.config["label"] == "lloyd_max")
    uni = next(r for r in mc if r.config["label"] == "uniform")
    print(f"uniform (optimal step) MSE {uni.mse:.4f}")
    record(6, [
        (f"Lloyd-Max 2-bit exact MSE {exact:.5f}", abs(exact - 0.1175) <= 0.002),
        (f"Lloyd-Max 2-bit Monte-Carlo MSE {lm.mse:.5f}", abs(lm.mse - 0.1175) <= 0.002),
    ], time.perf_counter() - t)


def test_criterion_7_union_vs_single():
    t = time.perf_counter()
    rows = bench.union_vs_single(m_max=6, n=20_000, seed=0)
    checks = [(f"m={r['m']} union/single {r['ratio']:.4f}", r["ratio"] <= 1.02) for r in rows]
    record(7, checks, time.perf_counter() - t)


def test_criterion_8_hessian_correction():
    t = time.perf_counter()
    q = QuantizerConfig(SHAPEGAIN, 12, 1)
    wins = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        W = rng.standard_normal((64, 48))
        st = estimate_hessian(rng.standard_normal((256, 48)))
        on = quantize_layer(W, st, LayerQuantConfig(q, corrections=True)).dequantize()
        off = quantize_layer(W, st, LayerQuantConfig(q, corrections=False)).dequantize()
        wins += proxy_loss(on - W, st.H) <= proxy_loss(off - W, st.H)
    worst = 0.0
    rng = np.random.default_rng(1000)
    for _ in range(200):
        D = int(rng.integers(2, 17))
        c0 = int(rng.integers(0, D - 1))
        c1 = int(rng.integers(c0 + 1, D))
        A = rng.standard_normal((D, D))
        H = A @ A.T / D + 0.05 * np.eye(D)
        e = rng.standard_normal((4, c1 - c0))
        got = hessian_correction(e, reverse_cholesky(H), slice(c0, c1), slice(c1, D))
        ref = dense_correction(H, e, np.arange(c0, c1), np.arange(c1, D))
        worst = max(worst, float(np.max(np.abs(got - ref))))
    record(8, [
        (f"corrected <= uncorrected on {wins}/100 seeds", wins >= 95),
        (f"dense oracle max error {worst:.1e} on D<=16", worst <= 1e-8),
    ], time.perf_counter() - t)


def _cli(args, threads):
    env = dict(os.environ, NUMBA_NUM_THREADS=threads, OMP_NUM_THREADS=threads,
               OPENBLAS_NUM_THREADS=threads, MKL_NUM_THREADS=threads)
    r = subprocess.run([sys.executable, "-m", "leechvq", *args], capture_output=True, text=True,
                       env=env)
    assert r.returncode == 0, r.stderr


def test_criterion_9_determinism(tmp_path):
    t = time.perf_counter()
    rng = np.random.default_rng(5)
    write_tensor(tmp_path / "W.bin", rng.standard_normal((64, 64)))
    write_tensor(tmp_path / "X.bin", rng.standard_normal((256, 64)))
    runs = {
        "shapegain+calib": ["--calib", str(tmp_path / "X.bin")],
        "spherical+hadamard": ["--mode", "spherical", "--M", "13", "--hadamard", "input+output",
                               "--calib", str(tmp_path / "X.bin"), "--group-scales"],
    }
    checks = []
    for name, extra in runs.items():
        blobs = []
        for i, threads in enumerate(("1", "1", "2", "4")):
            out = tmp_path / f"{name}{i}.llvq"
            _cli(["quantize", "--weights", str(tmp_path / "W.bin"), "--seed", "3",
                  "--out", str(out), *extra], threads)
            blobs.append(out.read_bytes())
        checks.append((f"{name}: 4 runs over 1/2/4 threads bit-identical",
                       all(b == blobs[0] for b in blobs)))
    record(9, checks, time.perf_counter() - t)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
