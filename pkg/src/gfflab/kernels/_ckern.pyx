# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Monte Carlo and labeling kernels.

Mirrors gfflab.kernels._npkern; walks run one per C loop instead of in
synchronized NumPy batches. Randomness comes from numpy's PCG64 bit
generator through the C distribution API, so draws are exact (the
long-jump law is the same multinomial/binomial decomposition as the
fallback, though the streams differ between backends).
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport INFINITY, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    binomial_t,
    random_binomial,
    random_standard_normal,
    random_standard_uniform,
)

cnp.import_array()

BACKEND = "cython"

cdef const char *CAPSULE_NAME = "BitGenerator"


cdef bitgen_t *_bitgen(object bit_generator):
    return <bitgen_t *> PyCapsule_GetPointer(bit_generator.capsule, CAPSULE_NAME)


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline cnp.int64_t _imax(cnp.int64_t a, cnp.int64_t b) noexcept nogil:
    return a if a > b else b


cdef inline cnp.int64_t _imin(cnp.int64_t a, cnp.int64_t b) noexcept nogil:
    return a if a < b else b


cdef inline cnp.int64_t _binom_half(bitgen_t *rng, cnp.int64_t n) noexcept nogil:
    # exact Binomial(n, 1/2): popcount of n fair random bits
    cdef cnp.int64_t acc = 0, rem = n
    cdef cnp.uint64_t word
    while rem >= 64:
        word = rng.next_uint64(rng.state)
        acc += __builtin_popcountll(word)
        rem -= 64
    if rem > 0:
        word = rng.next_uint64(rng.state) >> (64 - rem)
        acc += __builtin_popcountll(word)
    return acc


cdef void _jump(bitgen_t *rng, binomial_t *scratch, cnp.int64_t n,
                cnp.int64_t *pos, int d) noexcept nogil:
    # n SRW steps at once: axis counts are multinomial(n; 1/d) sampled as a
    # binomial chain, signs within an axis are binomial(count, 1/2).
    cdef cnp.int64_t remaining = n
    cdef cnp.int64_t cnt, ups
    cdef int j
    for j in range(d):
        if j < d - 1:
            cnt = random_binomial(rng, 1.0 / (d - j), remaining, scratch)
        else:
            cnt = remaining
        remaining -= cnt
        if cnt > 0:
            ups = _binom_half(rng, cnt)
            pos[j] += 2 * ups - cnt


def srw_hit_mc(dist_grid, grid_lo, kbb_lo, kbb_hi, starts, trunc_radius,
               n_walks, seed, roulette_radius=0, roulette_q=1.0):
    """See _npkern.srw_hit_mc; identical contract."""
    cdef cnp.ndarray flat = np.ascontiguousarray(dist_grid, dtype=np.int64).ravel()
    cdef cnp.int64_t[::1] dist = flat
    cdef cnp.int64_t[::1] dims = np.asarray(dist_grid.shape, dtype=np.int64)
    cdef cnp.int64_t[::1] glo = np.asarray(grid_lo, dtype=np.int64)
    cdef cnp.int64_t[::1] klo = np.asarray(kbb_lo, dtype=np.int64)
    cdef cnp.int64_t[::1] khi = np.asarray(kbb_hi, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] st = np.ascontiguousarray(starts, dtype=np.int64)
    cdef int m = st.shape[0]
    cdef int d = st.shape[1]
    if d > 8:
        raise ValueError("kernel supports d <= 8")
    cdef cnp.int64_t[::1] strides = np.empty(d, dtype=np.int64)
    cdef int j
    strides[d - 1] = 1
    for j in range(d - 2, -1, -1):
        strides[j] = strides[j + 1] * dims[j + 1]

    cdef cnp.int64_t R = trunc_radius
    cdef cnp.int64_t rrad = roulette_radius
    cdef double rq = roulette_q
    cdef cnp.int64_t nw = n_walks

    bg = np.random.PCG64(seed)
    cdef bitgen_t *rng = _bitgen(bg)
    cdef binomial_t scratch

    cdef cnp.ndarray[cnp.float64_t, ndim=1] sx = np.zeros(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sxx = np.zeros(m)
    cdef cnp.int64_t pos[8]
    cdef cnp.int64_t rel, off, dt, amax, gap, v, next_roulette
    cdef cnp.int64_t i, w
    cdef int k, inside
    cdef bint dead
    cdef double weight, acc0, acc1

    with nogil:
        for i in range(m):
            acc0 = 0.0
            acc1 = 0.0
            for w in range(nw):
                for k in range(d):
                    pos[k] = st[i, k]
                weight = 1.0
                next_roulette = rrad if rq < 1.0 else R + 1
                dead = False
                while True:
                    inside = 1
                    off = 0
                    amax = 0
                    for k in range(d):
                        v = pos[k]
                        amax = _imax(amax, _imax(v, -v))
                        rel = v - glo[k]
                        if rel < 0 or rel >= dims[k]:
                            inside = 0
                        else:
                            off += rel * strides[k]
                    if inside:
                        dt = dist[off]
                    else:
                        dt = 0
                        for k in range(d):
                            gap = _imax(klo[k] - pos[k], pos[k] - khi[k])
                            dt = _imax(dt, gap)
                    if dt == 0:
                        acc0 += weight
                        acc1 += weight * weight
                        break
                    if amax >= R:
                        break
                    # doubling-shell roulette: unbiased pruning of far walks
                    while amax >= next_roulette:
                        if random_standard_uniform(rng) < rq:
                            weight /= rq
                            next_roulette *= 2
                        else:
                            dead = True
                            break
                    if dead:
                        break
                    _jump(rng, &scratch, dt, pos, d)
            sx[i] = acc0
            sxx[i] = acc1
    return sx, sxx


def wos_hit_mc(boxes_lo, boxes_hi, balls_c, balls_r, start, range_r,
               trunc_radius, delta, n_walks, seed, max_steps=100000):
    """See _npkern.wos_hit_mc; identical contract."""
    z0_arr = np.asarray(start, dtype=np.float64)
    cdef cnp.float64_t[::1] z0 = z0_arr
    cdef int d = z0.shape[0]
    cdef cnp.float64_t[:, ::1] blo = np.ascontiguousarray(
        np.asarray(boxes_lo, dtype=np.float64).reshape(-1, d))
    cdef cnp.float64_t[:, ::1] bhi = np.ascontiguousarray(
        np.asarray(boxes_hi, dtype=np.float64).reshape(-1, d))
    cdef cnp.float64_t[:, ::1] bc = np.ascontiguousarray(
        np.asarray(balls_c, dtype=np.float64).reshape(-1, d))
    cdef cnp.float64_t[::1] br = np.ascontiguousarray(
        np.asarray(balls_r, dtype=np.float64).ravel())
    cdef int nb = blo.shape[0]
    cdef int nsph = bc.shape[0]
    if d > 8:
        raise ValueError("kernel supports d <= 8")
    cdef double rr = range_r
    cdef double R = trunc_radius
    cdef double dl = delta
    cdef cnp.int64_t nw = n_walks
    cdef cnp.int64_t msteps = max_steps

    bg = np.random.PCG64(seed)
    cdef bitgen_t *rng = _bitgen(bg)

    cdef double pos[8]
    cdef double zv[8]
    cdef double ds, dc, r2, g, s, rho, nrm
    cdef cnp.int64_t w, step, n_hit = 0, n_trunc = 0
    cdef int k, b

    with nogil:
        for w in range(nw):
            for k in range(d):
                pos[k] = z0[k]
            for step in range(msteps):
                ds = INFINITY
                for b in range(nb):
                    s = 0.0
                    for k in range(d):
                        g = blo[b, k] - pos[k]
                        if pos[k] - bhi[b, k] > g:
                            g = pos[k] - bhi[b, k]
                        if g > 0.0:
                            s += g * g
                    if s < ds:
                        ds = s
                ds = sqrt(ds)
                for b in range(nsph):
                    s = 0.0
                    for k in range(d):
                        g = pos[k] - bc[b, k]
                        s += g * g
                    s = sqrt(s) - br[b]
                    if s < 0.0:
                        s = 0.0
                    if s < ds:
                        ds = s
                r2 = 0.0
                dc = INFINITY
                for k in range(d):
                    r2 += pos[k] * pos[k]
                    if rr != INFINITY:
                        g = pos[k] - z0[k]
                        if g < 0.0:
                            g = -g
                        if rr - g < dc:
                            dc = rr - g
                r2 = sqrt(r2)
                if ds <= dl:
                    n_hit += 1
                    break
                if r2 >= R:
                    n_trunc += 1
                    break
                if dc <= dl:
                    break
                rho = ds if ds < dc else dc
                nrm = 0.0
                for k in range(d):
                    zv[k] = random_standard_normal(rng)
                    nrm += zv[k] * zv[k]
                nrm = sqrt(nrm)
                for k in range(d):
                    pos[k] += rho * zv[k] / nrm
    return int(n_hit), int(n_trunc)


def label_mask(mask):
    """Connected components under 2d-adjacency for a 3-d boolean grid.

    Other ranks are delegated to the NumPy backend.
    """
    if mask.ndim != 3:
        from . import _npkern
        return _npkern.label_mask(mask)
    cdef cnp.uint8_t[:, :, ::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t nx = m.shape[0], ny = m.shape[1], nz = m.shape[2]
    cdef cnp.ndarray[cnp.int32_t, ndim=3] lab = np.zeros((nx, ny, nz), dtype=np.int32)
    cdef cnp.int32_t[:, :, ::1] L = lab
    cdef cnp.ndarray[cnp.int64_t, ndim=2] stack = np.empty((nx * ny * nz, 3), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] S = stack
    cdef Py_ssize_t i, j, k, top
    cdef cnp.int64_t x, y, z
    cdef cnp.int32_t cur = 0
    with nogil:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    if m[i, j, k] and L[i, j, k] == 0:
                        cur += 1
                        top = 0
                        S[0, 0] = i; S[0, 1] = j; S[0, 2] = k
                        L[i, j, k] = cur
                        while top >= 0:
                            x = S[top, 0]; y = S[top, 1]; z = S[top, 2]
                            top -= 1
                            if x > 0 and m[x-1, y, z] and L[x-1, y, z] == 0:
                                L[x-1, y, z] = cur; top += 1
                                S[top, 0] = x-1; S[top, 1] = y; S[top, 2] = z
                            if x < nx-1 and m[x+1, y, z] and L[x+1, y, z] == 0:
                                L[x+1, y, z] = cur; top += 1
                                S[top, 0] = x+1; S[top, 1] = y; S[top, 2] = z
                            if y > 0 and m[x, y-1, z] and L[x, y-1, z] == 0:
                                L[x, y-1, z] = cur; top += 1
                                S[top, 0] = x; S[top, 1] = y-1; S[top, 2] = z
                            if y < ny-1 and m[x, y+1, z] and L[x, y+1, z] == 0:
                                L[x, y+1, z] = cur; top += 1
                                S[top, 0] = x; S[top, 1] = y+1; S[top, 2] = z
                            if z > 0 and m[x, y, z-1] and L[x, y, z-1] == 0:
                                L[x, y, z-1] = cur; top += 1
                                S[top, 0] = x; S[top, 1] = y; S[top, 2] = z-1
                            if z < nz-1 and m[x, y, z+1] and L[x, y, z+1] == 0:
                                L[x, y, z+1] = cur; top += 1
                                S[top, 0] = x; S[top, 1] = y; S[top, 2] = z+1
    return lab, int(cur)
