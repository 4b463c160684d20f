"""Pure-NumPy fallback for the Monte Carlo and labeling kernels.

Same call signatures as the compiled module. Walks are advanced in
synchronized batches: every live walker takes one long jump per iteration,
so the hot loop is a handful of vectorized array ops. Slower than the
compiled path (see benchmarks/bench_kernels.py) but dependency-free.
"""

import numpy as np
from scipy import ndimage

BACKEND = "numpy"


def _multinomial_steps(rng, n, d):
    """Exact displacement of `n[i]` simple-random-walk steps, per row.

    Axis counts are multinomial(n; 1/d), signs within an axis are
    binomial(count, 1/2); this reproduces the n-step law exactly.
    """
    counts = rng.multinomial(n, np.full(d, 1.0 / d))
    ups = rng.binomial(counts, 0.5)
    return 2 * ups - counts


def srw_hit_mc(dist_grid, grid_lo, kbb_lo, kbb_hi, starts, trunc_radius,
               n_walks, seed, roulette_radius=0, roulette_q=1.0):
    """Estimate P_x[walk hits target before leaving B_inf(0, trunc_radius)].

    dist_grid : int array, chessboard distance to the target on a grid with
        origin offset grid_lo; the target is exactly {dist_grid == 0}.
    kbb_lo, kbb_hi : tight bounding box of the target (inclusive), used as
        a safe distance lower bound outside the grid.
    starts : (m, d) int array.
    roulette_radius/_q : Russian roulette on doubling shells: each time a
        walk endpoint first reaches sup-norm radius roulette_radius * 2^k
        it survives with probability roulette_q and its weight is divided
        by roulette_q. Unbiased pruning of far excursions; roulette_q = 1
        disables it.

    Returns (sx, sxx): per-start sums of w*hit and (w*hit)^2 over n_walks.
    Jump lengths never exceed the current distance to the target, so a hit
    can only occur at an endpoint and is always detected; crossings of the
    truncation sphere are detected at endpoints only (see module docs).
    """
    starts = np.asarray(starts, np.int64)
    m, d = starts.shape
    dims = np.array(dist_grid.shape)
    grid_lo = np.asarray(grid_lo, np.int64)
    grid_hi = grid_lo + dims
    kbb_lo = np.asarray(kbb_lo, np.int64)
    kbb_hi = np.asarray(kbb_hi, np.int64)
    rng = np.random.default_rng(seed)
    sx = np.zeros(m)
    sxx = np.zeros(m)
    for i in range(m):
        pos = np.tile(starts[i], (n_walks, 1))
        w = np.ones(n_walks)
        next_roul = np.full(n_walks,
                            roulette_radius if roulette_q < 1.0
                            else trunc_radius + 1, np.int64)
        alive = np.arange(n_walks)
        acc = np.zeros(n_walks)
        while alive.size:
            p = pos[alive]
            inside = np.all((p >= grid_lo) & (p < grid_hi), axis=1)
            dt = np.empty(alive.size, np.int64)
            if inside.any():
                q = p[inside] - grid_lo
                dt[inside] = dist_grid[tuple(q.T)]
            if (~inside).any():
                q = p[~inside]
                gap = np.maximum(kbb_lo - q, q - kbb_hi)
                dt[~inside] = np.maximum(gap, 0).max(axis=1)
            amax = np.abs(p).max(axis=1)

            hit_now = dt == 0
            esc_now = (amax >= trunc_radius) & ~hit_now
            if hit_now.any():
                acc[alive[hit_now]] = w[alive[hit_now]]
            done = hit_now | esc_now
            if done.any():
                alive = alive[~done]
                p = p[~done]
                dt = dt[~done]
                amax = amax[~done]
                if alive.size == 0:
                    break
            while True:
                due = amax >= next_roul[alive]
                if not due.any():
                    break
                idx = alive[due]
                keep = rng.random(idx.size) < roulette_q
                w[idx[keep]] /= roulette_q
                next_roul[idx[keep]] *= 2
                if (~keep).any():
                    dead = np.zeros(alive.size, bool)
                    dead[np.flatnonzero(due)[~keep]] = True
                    alive = alive[~dead]
                    p = p[~dead]
                    dt = dt[~dead]
                    amax = amax[~dead]
                    if alive.size == 0:
                        break
            if alive.size == 0:
                break
            pos[alive] += _multinomial_steps(rng, np.maximum(dt, 1), d)
        sx[i] = acc.sum()
        sxx[i] = (acc * acc).sum()
    return sx, sxx


def srw_green_mc(u_mask, grid_lo, start, target, n_walks, seed):
    """MC estimate of the expected visits to `target` before exiting the
    region {u_mask}; single steps (the region is small by construction)."""
    dims = np.array(u_mask.shape)
    grid_lo = np.asarray(grid_lo, np.int64)
    start = np.asarray(start, np.int64)
    target = np.asarray(target, np.int64)
    d = start.size
    rng = np.random.default_rng(seed)
    pos = np.tile(start, (n_walks, 1))
    visits = np.zeros(n_walks, np.int64)
    alive = np.arange(n_walks)
    eye = np.eye(d, dtype=np.int64)
    moves = np.concatenate([eye, -eye])
    while alive.size:
        p = pos[alive]
        rel = p - grid_lo
        ok = np.all((rel >= 0) & (rel < dims), axis=1)
        ok[ok] = u_mask[tuple(rel[ok].T)]
        alive = alive[ok]
        if alive.size == 0:
            break
        visits[alive] += np.all(pos[alive] == target, axis=1)
        pos[alive] += moves[rng.integers(0, 2 * d, alive.size)]
    return visits.sum() / n_walks, visits.std() / np.sqrt(n_walks)


def _target_distance(p, boxes_lo, boxes_hi, balls_c, balls_r):
    """Euclidean distance from points (n,d) to the nearest box or ball."""
    out = np.full(len(p), np.inf)
    if len(boxes_lo):
        g = np.maximum(boxes_lo[None, :, :] - p[:, None, :],
                       p[:, None, :] - boxes_hi[None, :, :])
        g = np.maximum(g, 0.0)
        out = np.sqrt((g * g).sum(axis=2)).min(axis=1)
    if len(balls_c):
        dc = np.linalg.norm(p[:, None, :] - balls_c[None, :, :], axis=2)
        out = np.minimum(out, np.maximum(dc - balls_r[None, :], 0.0).min(axis=1))
    return out


def wos_hit_mc(boxes_lo, boxes_hi, balls_c, balls_r, start, range_r,
               trunc_radius, delta, n_walks, seed, max_steps=100000):
    """Walk-on-spheres estimate of P[BM from start hits the target (a union
    of boxes and Euclidean balls) before (a) moving sup-distance range_r
    from start, and (b) reaching Euclidean radius trunc_radius from the
    origin].

    range_r = inf disables (a). Spheres use the exact uniform exit law;
    absorption happens within a delta-shell of the target (counted as a
    hit) or of the range cube (counted as not-hit). Returns
    (n_hit, n_trunc) out of n_walks; n_trunc of the misses ended at the
    truncation sphere rather than the range cube.
    """
    boxes_lo = np.asarray(boxes_lo, float).reshape(-1, len(start))
    boxes_hi = np.asarray(boxes_hi, float).reshape(-1, len(start))
    balls_c = np.asarray(balls_c, float).reshape(-1, len(start))
    balls_r = np.asarray(balls_r, float).ravel()
    start = np.asarray(start, float)
    d = start.size
    rng = np.random.default_rng(seed)
    pos = np.tile(start, (n_walks, 1))
    alive = np.arange(n_walks)
    hit = np.zeros(n_walks, bool)
    trunc = np.zeros(n_walks, bool)
    for _ in range(max_steps):
        if alive.size == 0:
            break
        p = pos[alive]
        ds = _target_distance(p, boxes_lo, boxes_hi, balls_c, balls_r)
        if np.isfinite(range_r):
            dc = range_r - np.abs(p - start).max(axis=1)
        else:
            dc = np.full(alive.size, np.inf)
        r2 = np.sqrt((p * p).sum(axis=1))
        hit_now = ds <= delta
        far_now = (r2 >= trunc_radius) & ~hit_now
        cube_now = (dc <= delta) & ~hit_now & ~far_now
        done = hit_now | far_now | cube_now
        if done.any():
            hit[alive[hit_now]] = True
            trunc[alive[far_now]] = True
            alive = alive[~done]
            if alive.size == 0:
                break
            p = pos[alive]
            ds = ds[~done]
            dc = dc[~done]
        rho = np.minimum(ds, dc)
        z = rng.standard_normal((alive.size, d))
        z /= np.sqrt((z * z).sum(axis=1))[:, None]
        pos[alive] = p + rho[:, None] * z
    return int(hit.sum()), int(trunc.sum())


def label_mask(mask):
    """Connected components of a boolean grid under 2d-adjacency.

    Returns (labels, n) with labels[x] in 1..n on the mask, 0 off it.
    """
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    labels, n = ndimage.label(mask, structure=structure)
    return labels.astype(np.int32), int(n)
