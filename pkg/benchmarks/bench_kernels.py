#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Run:  python benchmarks/bench_kernels.py [--walks 20000]

Both backends implement the same exact laws (long-jump SRW via the
multinomial decomposition, walk-on-spheres with uniform exit); only the
execution strategy differs (per-walk C loops vs synchronized array
batches), so the estimates must agree within Monte Carlo error while the
timings differ.
"""

import argparse
import time

import numpy as np

from gfflab.kernels import _npkern

try:
    from gfflab.kernels import _ckern
except ImportError:
    _ckern = None


def dist_grid_ball(radius, pad):
    D = radius + pad
    ax = np.arange(-D, D + 1)
    mesh = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    return np.maximum(np.abs(mesh).max(axis=-1) - radius, 0), -D


def bench_srw(mod, n_walks):
    dist, lo = dist_grid_ball(2, 8)
    t0 = time.time()
    sx, sxx = mod.srw_hit_mc(dist, [lo] * 3, [-2] * 3, [2] * 3, [[10, 0, 0]],
                             1000, n_walks, 42, 40, 0.5)
    dt = time.time() - t0
    p = sx[0] / n_walks
    se = np.sqrt(max(sxx[0] / n_walks - p * p, 0) / n_walks)
    return p, se, dt


def bench_wos(mod, n_walks):
    lo = np.array([[-0.5, -0.5, -0.5]])
    hi = np.array([[0.5, 0.5, 0.5]])
    t0 = time.time()
    h, q = mod.wos_hit_mc(lo, hi, np.zeros((0, 3)), np.zeros(0),
                          np.array([4.0, 0, 0]), np.inf, 200.0, 1e-4,
                          n_walks, 7)
    dt = time.time() - t0
    return h / n_walks, dt


def bench_label(mod, n_rep):
    rng = np.random.default_rng(0)
    mask = rng.random((40, 40, 40)) < 0.4
    t0 = time.time()
    for _ in range(n_rep):
        labels, n = mod.label_mask(mask)
    return n, (time.time() - t0) / n_rep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--walks", type=int, default=20000)
    args = ap.parse_args()

    mods = [("numpy", _npkern)] + ([("cython", _ckern)] if _ckern else [])
    print(f"{'kernel':<12} {'backend':<8} {'estimate':<22} {'time':<10}")
    base = {}
    for name, mod in mods:
        p, se, dt = bench_srw(mod, args.walks)
        print(f"{'srw_hit_mc':<12} {name:<8} {p:.5f} +- {se:.5f}      {dt:8.2f} s")
        base.setdefault("srw", {})[name] = dt
        p, dt = bench_wos(mod, args.walks)
        print(f"{'wos_hit_mc':<12} {name:<8} {p:.5f}                {dt:8.2f} s")
        base.setdefault("wos", {})[name] = dt
        n, dt = bench_label(mod, 20)
        print(f"{'label_mask':<12} {name:<8} {n} components        {dt:8.4f} s")
        base.setdefault("label", {})[name] = dt
    if _ckern:
        for k, v in base.items():
            print(f"speedup {k}: {v['numpy'] / v['cython']:.1f}x")


if __name__ == "__main__":
    main()
