"""Command-line entry point: ``leechvq {verify,info,quantize,dequantize,bench}``."""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace

import numpy as np

from . import bench, golay, lattice
from .codec import CodebookLayout, decode_many, encode_many, get_layout
from .formats import as_matrix, read_quantized, read_tensor, write_quantized, write_tensor
from .layerquant import HADAMARD_MODES, LayerQuantConfig, estimate_hessian, proxy_loss, quantize_layer
from .quantizers import MODE_ALIASES, SPHERICAL, QuantizerConfig, canonical_mode


# --------------------------------------------------------------------------
# verify

class _Checks:
    def __init__(self):
        self.rows: list[tuple[str, bool, str]] = []

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        self.rows.append((name, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'}  {name:<34} {detail}", flush=True)

    def run(self, name: str, fn) -> None:
        t = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        self.add(name, ok, f"{detail} [{time.perf_counter() - t:.2f}s]")

    @property
    def first_failure(self) -> str | None:
        return next((n for n, ok, _ in self.rows if not ok), None)


def tampered_layout(M: int) -> CodebookLayout:
    """Layout whose shell-2 class order disagrees with its offsets (negative control)."""
    classes = lattice.enumerate_classes(M)
    a, b = classes[0], classes[1]
    classes[0] = replace(b, offset=a.offset, class_rank=a.class_rank)
    classes[1] = replace(a, offset=b.offset, class_rank=b.class_rank)
    return CodebookLayout(M, classes=classes)


def _check_golay():
    words = golay.codeword_array()
    w = np.array([golay.weight(int(c)) for c in words])
    enum = tuple(int((w == k).sum()) for k in golay.WEIGHTS)
    closed = all(np.isin(words ^ g, words).all() for g in golay.GENERATOR)
    ok = len(words) == 4096 and enum == (1, 759, 2576, 759, 1) and closed
    return ok, f"4096 words, weights {enum}, xor-closed={closed}"


def _check_golay_exhaustive():
    n = golay.count_codewords_exhaustive()
    return n == 4096, f"{n} of 2^24 words pass the syndrome test"


def _check_shells(max_m: int):
    ms = [m for m in lattice.TABLE1_SHELL_SIZES if m <= max_m]
    bad = [m for m in ms if lattice.shell_size(m) != lattice.TABLE1_SHELL_SIZES[m]]
    return not bad, (f"n(m) matches the reference table for m in {ms}"
                     if not bad else f"mismatch at m={bad}")


def _check_cumulative(max_m: int):
    bad = [M for M, v in lattice.TABLE1_CUMULATIVE.items()
           if M <= max_m and lattice.cumulative_count(M) != v]
    detail = ", ".join(f"N({M})={lattice.cumulative_count(M):,}"
                       for M in lattice.TABLE1_CUMULATIVE if M <= max_m)
    return not bad, detail


def _check_classes(max_m: int):
    bad = []
    for m, table in lattice.TABLE2_CLASSES.items():
        if m > max_m:
            continue
        got = {(c.parity, c.leader.levels): c.cardinality for c in lattice.shell_classes(m)}
        if got != table:
            bad.append(m)
    return not bad, "class cardinalities agree for shells <= %d" % min(4, max_m)


def _check_shell2_bijection(layout: CodebookLayout):
    pts = lattice.shell_points(2)
    idx = encode_many(pts, layout)
    hits = np.zeros(len(pts), dtype=bool)
    in_range = (idx >= 0) & (idx < len(pts))
    hits[idx[in_range]] = True
    ok = bool(in_range.all() and hits.all())
    if ok:
        ok = bool((decode_many(idx, layout) == pts).all())
    return ok, f"{len(pts):,} points -> [0, {len(pts):,}) covered={int(hits.sum()):,}"


def _check_roundtrip(layout: CodebookLayout, n: int = 10_000, seed: int = 0):
    idx = np.random.default_rng(seed).integers(0, layout.size, n)
    pts = decode_many(idx, layout)
    ok = (lattice.classify_points(pts) >= 0).all() and (encode_many(pts, layout) == idx).all()
    return bool(ok), f"{n:,} random indices below N({layout.M})"


def print_class_tables(max_m: int) -> None:
    for m in range(2, max_m + 1):
        print(f"shell {m}: n = {lattice.shell_size(m):,}")
        for c in lattice.shell_classes(m):
            print(f"  {str(c.leader):<40} A={c.A:<5} B={c.B:<3} P={c.placements:<12,} "
                  f"|class|={c.cardinality:,}")


def cmd_verify(args) -> int:
    checks = _Checks()
    max_m = args.max_m
    if max_m < 2:
        raise ValueError("--max-m must be at least 2")
    if args.target == "shells":
        print_class_tables(max_m)
        print()
    if args.target == "all":
        checks.run("golay code", _check_golay)
        checks.run("golay exhaustive membership", _check_golay_exhaustive)
    checks.run("shell sizes", lambda: _check_shells(max_m))
    checks.run("cumulative counts", lambda: _check_cumulative(max_m))
    checks.run("class cardinalities", lambda: _check_classes(max_m))
    if args.target == "all":
        layout = tampered_layout(max_m) if args.tamper_class_order else get_layout(max_m)
        checks.run("codec bijectivity shell 2", lambda: _check_shell2_bijection(layout))
        checks.run("codec round trip", lambda: _check_roundtrip(layout))
    print()
    print(f"{'m':>3} {'n(m)':>22} {'N(m)':>24} {'bits/dim':>9}")
    for m in range(2, max_m + 1):
        print(f"{m:>3} {lattice.shell_size(m):>22,} {lattice.cumulative_count(m):>24,} "
              f"{lattice.bits_per_dim(m):>9.3f}")
    bad = checks.first_failure
    if bad:
        print(f"\nverification failed: {bad}", file=sys.stderr)
        return 1
    print("\nall checks passed")
    return 0


# --------------------------------------------------------------------------
# info

def cmd_info(args) -> int:
    layout = get_layout(args.M)
    print("Golay generator [I12 | B], rows as 24-bit hex (bit i = coordinate i):")
    for r in golay.GENERATOR:
        print(f"  {r:06x}")
    print(f"M = {layout.M}")
    print(f"classes = {len(layout.classes)}")
    print(f"layout fingerprint = {layout.fingerprint}")
    print(f"{'m':>3} {'n(m)':>22} {'N(m)':>24} {'bits/dim':>9}")
    for m in range(2, args.M + 1):
        print(f"{m:>3} {lattice.shell_size(m):>22,} {lattice.cumulative_count(m):>24,} "
              f"{lattice.bits_per_dim(m):>9.3f}")
    print(f"bits/dim for M={args.M}: {layout.bits_per_dim:.3f}")
    return 0


# --------------------------------------------------------------------------
# quantize / dequantize

def _quantizer_config(args) -> QuantizerConfig:
    mode = canonical_mode(args.mode)
    gain_bits = args.gain_bits
    if gain_bits is None:
        gain_bits = 0 if mode == SPHERICAL else 1
    return QuantizerConfig(mode, args.M, gain_bits, args.gain_codebook)


def cmd_quantize(args) -> int:
    W = read_tensor(args.weights)
    dims = W.shape
    Wm = as_matrix(W).astype(np.float64)
    H = None
    if args.calib:
        H = estimate_hessian(as_matrix(read_tensor(args.calib)).astype(np.float64)).H
    elif args.hessian and args.hessian != "none":
        H = read_tensor(args.hessian).astype(np.float64)
        if H.shape != (Wm.shape[1], Wm.shape[1]):
            raise ValueError(f"Hessian is {H.shape}, weights have {Wm.shape[1]} columns")
    cfg = LayerQuantConfig(quantizer=_quantizer_config(args), corrections=not args.no_corrections,
                           hadamard=args.hadamard, seed=args.seed, group_scales=args.group_scales)
    layer = quantize_layer(Wm, H, cfg, beta=args.beta)
    write_quantized(args.out, layer, dims)
    Wq = layer.dequantize()
    mse = float(np.mean((Wq - Wm) ** 2))
    q = cfg.quantizer
    rate = layer.shape_idx.size * q.bits_per_block / Wm.size
    print(f"wrote {args.out}: {layer.shape_idx.size} blocks, {q.bits_per_block} bits/block, "
          f"{rate:.4f} bits/weight")
    print(f"mse per weight: {mse:.6g}")
    if H is not None:
        print(f"proxy loss tr(dW H dW^T): {proxy_loss(Wq - Wm, H):.6g}")
    return 0


def cmd_dequantize(args) -> int:
    layer, dims = read_quantized(args.inp)
    write_tensor(args.out, layer.dequantize().reshape(dims))
    print(f"wrote {args.out} with shape {tuple(dims)}")
    return 0


# --------------------------------------------------------------------------
# bench

def _emit(rows, path, columns=None) -> None:
    if not rows:
        return
    cols = list(columns or rows[0].keys())
    print(",".join(cols))
    for r in rows:
        print(",".join(str(r.get(c, "")) for c in cols))
    if path:
        bench.write_csv(rows, path, cols)


def cmd_bench_gaussian(args) -> int:
    rep = bench.gaussian_rd(_quantizer_config(args), args.n, args.seed)
    _emit([rep.row("gaussian")], args.csv, bench.CSV_COLUMNS)
    return 0


def cmd_bench_sweep(args) -> int:
    options = [int(b) for b in args.gain_bits_options.split(",") if b]
    reps = bench.shaping_vs_shapegain_sweep(args.total_bits, options, args.n, args.seed)
    _emit([r.row("sweep") for r in reps], args.csv, bench.CSV_COLUMNS)
    print(f"best gain allocation: {bench.best_gain_allocation(reps)} bit(s)")
    return 0


def cmd_bench_scalar(args) -> int:
    reps = bench.scalar_baselines(args.bits, args.n, args.seed)
    _emit([r.row("scalar") for r in reps], args.csv, bench.CSV_COLUMNS)
    return 0


def cmd_bench_angular(args) -> int:
    rows = bench.union_vs_single(args.m_max, args.n, args.seed)
    _emit(rows, args.csv)
    return 0


# --------------------------------------------------------------------------

def _add_quantizer_flags(p, default_mode="shapegain", default_m=12):
    p.add_argument("--mode", default=default_mode, choices=sorted(MODE_ALIASES))
    p.add_argument("--M", type=int, default=default_m, help="outermost shell")
    p.add_argument("--gain-bits", type=int, default=None,
                   help="gain bits (default 1 for shape-gain, 0 for spherical)")
    p.add_argument("--gain-codebook", default="chi", choices=["chi", "empirical"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="leechvq", description="Leech lattice vector quantizer")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run built-in combinatorial and codec checks")
    p.add_argument("target", nargs="?", default="all", choices=["all", "shells"])
    p.add_argument("--max-m", type=int, default=5)
    p.add_argument("--tamper-class-order", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("info", help="print the Golay constant, layout fingerprint and shell table")
    p.add_argument("--M", type=int, default=13)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("quantize", help="quantize a weight tensor file")
    p.add_argument("--weights", required=True)
    p.add_argument("--hessian", default="none", help="D x D Hessian tensor file or 'none'")
    p.add_argument("--calib", default=None, help="N x D activation tensor file")
    _add_quantizer_flags(p)
    p.add_argument("--hadamard", default="none", choices=HADAMARD_MODES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=float, default=None, help="per-tensor scale (default: calibrated)")
    p.add_argument("--no-corrections", action="store_true")
    p.add_argument("--group-scales", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("dequantize", help="reconstruct a tensor file from a quantized file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dequantize)

    p = sub.add_parser("bench", help="Gaussian rate-distortion experiments")
    bsub = p.add_subparsers(dest="bench", required=True)

    b = bsub.add_parser("gaussian")
    _add_quantizer_flags(b)
    b.add_argument("--n", type=int, default=100_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--csv", default=None)
    b.set_defaults(func=cmd_bench_gaussian)

    b = bsub.add_parser("sweep")
    b.add_argument("--total-bits", type=float, default=2.0)
    b.add_argument("--gain-bits-options", default="0,1,2,4")
    b.add_argument("--n", type=int, default=100_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--csv", default=None)
    b.set_defaults(func=cmd_bench_sweep)

    b = bsub.add_parser("scalar")
    b.add_argument("--bits", type=int, default=2)
    b.add_argument("--n", type=int, default=2_400_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--csv", default=None)
    b.set_defaults(func=cmd_bench_scalar)

    b = bsub.add_parser("angular")
    b.add_argument("--m-max", type=int, default=6)
    b.add_argument("--n", type=int, default=20_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--csv", default=None)
    b.set_defaults(func=cmd_bench_angular)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
