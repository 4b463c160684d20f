"""Observables of field samples: macroscopic pairings <X_N, eta>, the exact
variance identity, mollified fields, the target push-down profile, the
bounded-Lipschitz distance d_J, and the local profile pairings
<Y_N, eta (x) F>, <Phi(u), eta (x) F>, <Z_N, eta (x) F>.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.signal import fftconvolve

from .green import GreenTable
from .lattice import ShapeSpec, SiteSet, blow_up
from .potential import (TestFunction, brownian_potential_ball,
                        equilibrium_measure, hitting_probability)
from .sampler import FieldSample, decompose_batch

__all__ = [
    "PercolationLevels", "LocalFunctional", "Mollifier", "HarmonicPotential",
    "x_pair", "x_pair_weights", "var_exact", "target_profile",
    "mollified_field", "d_J", "y_pair", "phi_pair", "z_pair",
]


@dataclass
class PercolationLevels:
    """Level-set threshold alpha and a user-supplied stand-in for the
    percolation critical level (no numeric default is trusted)."""

    alpha: float
    h_bar_estimate: float

    def __post_init__(self):
        if self.alpha >= self.h_bar_estimate:
            raise ValueError("push-down experiments need alpha < h_bar_estimate")

    @property
    def drop(self):
        return self.h_bar_estimate - self.alpha


class LocalFunctional:
    """Bounded Lipschitz functional of the field seen through a finite
    window of offsets: F(f) = F_bar(f at offsets)."""

    def __init__(self, offsets, evaluator, lipschitz, bound, name="F"):
        self.offsets = np.atleast_2d(np.asarray(offsets, np.int64))
        self.evaluator = evaluator
        self.lipschitz = float(lipschitz)
        self.bound = float(bound)
        self.name = name

    def __call__(self, local_values):
        """local_values: (..., k) with k = number of offsets."""
        return self.evaluator(np.asarray(local_values, float))

    def spot_check(self, n_pairs=200, scale=3.0, seed=0):
        """Random verification of the Lipschitz bound and the sup bound."""
        rng = np.random.default_rng(seed)
        k = len(self.offsets)
        f = scale * rng.standard_normal((n_pairs, k))
        g = scale * rng.standard_normal((n_pairs, k))
        lhs = np.abs(self(f) - self(g))
        rhs = self.lipschitz * np.abs(f - g).max(axis=1)
        if not (lhs <= rhs + 1e-9).all():
            raise AssertionError("Lipschitz constant violated")
        if not (np.abs(self(f)) <= self.bound + 1e-9).all():
            raise AssertionError("sup bound violated")
        return True

    @classmethod
    def clipped_origin(cls, lo=-1.0, hi=1.0, d=3):
        """F(f) = clip(f_0, lo, hi)."""

        def ev(v):
            return np.clip(v[..., 0], lo, hi)

        return cls(np.zeros((1, d), np.int64), ev, 1.0,
                   max(abs(lo), abs(hi)), name=f"clip(f0,{lo},{hi})")

    @classmethod
    def window_mean_clipped(cls, radius=1, lo=-2.0, hi=2.0, d=3):
        """F(f) = clip(mean of f over the sup-norm ball of given radius)."""
        offs = SiteSet.ball_inf((0,) * d, radius).sites

        def ev(v):
            return np.clip(v.mean(axis=-1), lo, hi)

        return cls(offs, ev, 1.0, max(abs(lo), abs(hi)),
                   name=f"clip(mean_r{radius},{lo},{hi})")


class Mollifier:
    """Smooth bump chi supported in the unit Euclidean ball with unit mass,
    rescaled as chi_eps(x) = eps^-d chi(x / eps)."""

    def __init__(self, eps, d=3):
        if d != 3:
            raise NotImplementedError("mollifier normalization computed for d = 3")
        self.eps = float(eps)
        self.d = d
        self._norm = _bump_norm_3d()
        # profile extrema for the BL norm: |chi'| maximized numerically
        r = np.linspace(0, 1 - 1e-9, 4001)
        vals = self._bump(r)
        slope = np.abs(np.diff(vals) / np.diff(r)).max()
        self.sup_norm = vals[0] / self.eps ** d
        self.lipschitz = slope / self.eps ** (d + 1)
        self.bl_norm = self.sup_norm + self.lipschitz

    def _bump(self, s):
        s = np.asarray(s, float)
        out = np.zeros_like(s)
        inside = s < 1.0
        u = s[inside]
        out[inside] = np.exp(-1.0 / (1.0 - u * u)) * self._norm
        return out

    def __call__(self, pts):
        """chi_eps at continuum points (n, d)."""
        pts = np.atleast_2d(np.asarray(pts, float))
        r = np.linalg.norm(pts, axis=1) / self.eps
        return self._bump(r) / self.eps ** self.d

    def mass(self, n=120):
        """Quadrature check of the unit mass (radial)."""
        r = np.linspace(0, self.eps, n * 8 + 1)
        vals = self.__call__(np.stack([r, np.zeros_like(r), np.zeros_like(r)], axis=1))
        return float(4 * np.pi * np.trapezoid(vals * r ** 2, r))

    def as_test_function(self, center=None):
        center = np.zeros(self.d) if center is None else np.asarray(center, float)

        def profile(s):
            return self._bump(np.asarray(s, float) / self.eps) / self.eps ** self.d

        def fn(pts):
            return profile(np.linalg.norm(pts - center, axis=1))

        return TestFunction("mollified-ball-indicator", fn, center - self.eps,
                            center + self.eps, self.sup_norm, self.lipschitz,
                            radial_profile=(profile, self.eps),
                            radial_center=center, d=self.d)


def _bump_norm_3d():
    r = np.linspace(0, 1 - 1e-12, 20001)
    vals = np.exp(-1.0 / (1.0 - r * r))
    return 1.0 / (4 * np.pi * np.trapezoid(vals * r * r, r))


# ---------------------------------------------------------------------------
# macroscopic pairings
# ---------------------------------------------------------------------------

def x_pair_weights(window: SiteSet, eta, N: int):
    """Per-site weights eta(x/N)/N^d; rejects test functions whose scaled
    support leaves the window (truncation would bias the pairing)."""
    if isinstance(eta, TestFunction):
        lo = np.floor(N * eta.support_lo).astype(np.int64)
        hi = np.ceil(N * eta.support_hi).astype(np.int64)
        cand = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)],
                                    indexing="ij"), axis=-1).reshape(-1, window.d)
        missing = ~window.contains_many(cand)
        if missing.any():
            vals = eta(cand[missing] / N)
            if np.any(vals != 0):
                raise ValueError("support of eta (scaled by N) leaves the window")
    w = eta(window.sites / N) / float(N ** window.d)
    return w


def x_pair(phi: FieldSample, eta, N: int) -> float:
    """<X_N, eta> = N^-d sum eta(x/N) phi_x."""
    w = x_pair_weights(phi.window, eta, N)
    return float(w @ phi.values)


def var_exact(eta, N: int, gt: GreenTable) -> float:
    """Deterministic N^{d-2} E[<X_N, eta>^2] =
    N^{d-2-2d} sum_{x,y} eta(x/N) g(x-y) eta(y/N).

    The double sum is folded through the displacement autocorrelation of
    the eta grid, so the cost is one FFT rather than |supp|^2 pairs.
    """
    d = gt.d
    lo = np.floor(N * np.asarray(eta.support_lo)).astype(np.int64)
    hi = np.ceil(N * np.asarray(eta.support_hi)).astype(np.int64)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    f = eta(pts / N).reshape([len(a) for a in axes])
    corr = fftconvolve(f, f[tuple(slice(None, None, -1) for _ in range(d))],
                       mode="full")
    D = max(len(a) - 1 for a in axes)
    g_grid = gt.displacement_grid(D)
    # corr axis j has length 2*len(axes[j]) - 1 centered at len - 1
    slices = tuple(slice(D - (len(a) - 1), D + len(a)) for a in axes)
    total = float((g_grid[slices] * corr).sum())
    return total * N ** (d - 2) / float(N) ** (2 * d)


class HarmonicPotential:
    """Evaluator of the Brownian potential h_A of a shape: closed form for
    Euclidean balls, fine-lattice equilibrium route for box-like shapes."""

    def __init__(self, shape: ShapeSpec, gt: GreenTable = None, mesh: int = 24):
        self.shape = shape
        self.d = shape.d
        if shape.kind == "euclidean-ball":
            self._eval = self._ball
        else:
            if gt is None:
                gt = GreenTable(d=shape.d)
            self.gt = gt
            self.mesh = mesh
            self.K = blow_up(shape, mesh)
            self.eq = equilibrium_measure(gt, self.K)
            self._grid_cache = None
            self._eval = self._lattice

    def _ball(self, pts):
        return np.asarray(
            brownian_potential_ball(self.shape.radius,
                                    pts - self.shape.center, self.d)).reshape(-1)

    def _lattice(self, pts):
        sites = np.rint(self.mesh * np.asarray(pts, float)).astype(np.int64)
        grid, lo, hi = self._u_grid(sites.min(axis=0), sites.max(axis=0))
        inside = np.all((sites >= lo) & (sites <= hi), axis=1)
        out = np.empty(len(sites))
        out[inside] = grid[tuple((sites[inside] - lo).T)]
        if (~inside).any():
            out[~inside] = np.asarray(
                hitting_probability(self.gt, self.K, sites[~inside], self.eq)
            ).reshape(-1)
        return out

    def _u_grid(self, qlo, qhi):
        """Potential on the integer box [qlo, qhi]: one FFT correlation of
        the equilibrium weights against the Green displacement grid.
        u(x) = sum_y w(y) g(x - y) lands at conv index x - (klo - D)."""
        if self._grid_cache is not None:
            grid, lo, vlo, vhi = self._grid_cache
            if np.all(qlo >= vlo) and np.all(qhi <= vhi):
                return grid, lo, lo + np.array(grid.shape) - 1
        klo = self.K.bounding_box.lo
        khi = self.K.bounding_box.hi
        W = np.zeros(tuple(khi - klo + 1))
        W[tuple((self.K.sites - klo).T)] = self.eq.weights
        D = int(max(np.abs(qlo - khi).max(), np.abs(qhi - klo).max(), 1))
        G = self.gt.displacement_grid(D)
        grid = np.minimum(fftconvolve(W, G, mode="full"), 1.0)
        lo = klo - D
        grid[tuple((self.K.sites - lo).T)] = 1.0
        self._grid_cache = (grid, lo, np.array(qlo), np.array(qhi))
        return grid, lo, lo + np.array(grid.shape) - 1

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        return self._eval(pts)


def target_profile(A, levels: PercolationLevels, x, potential=None):
    """Push-down target -(h_bar_est - alpha) h_A(x); <= 0 everywhere."""
    h = potential if potential is not None else HarmonicPotential(A)
    vals = -levels.drop * h(x)
    return float(vals[0]) if np.asarray(x).ndim == 1 else vals


def mollified_field(phi: FieldSample, mollifier: Mollifier, x, N: int) -> float:
    """X_N^eps(x) = N^-d sum_z chi_eps(z/N - x) phi_z; definitionally the
    x-pairing against the shifted mollifier."""
    x = np.asarray(x, float)
    base = mollifier.as_test_function(center=x)
    return x_pair(phi, base, N)


# ---------------------------------------------------------------------------
# bounded-Lipschitz distance d_J
# ---------------------------------------------------------------------------

def d_J(mu_points, mu_masses, nu, J_lo, J_hi, mollifier: Mollifier,
        grid_h=None, lp=True):
    """Distance sup{ |<mu - nu, eta>| : supp eta in J, ||eta||_BL <= 1 }.

    nu is either a density callable on points or an atomic measure given as
    a (points, masses) pair. Returns (location_stat, lp_estimate, info).
    The location statistic scans the mollifier family chi_eps(. - y) over a
    y-grid covering J and divides by its BL norm (a certified lower bound).
    The LP estimate maximizes the discretized pairing over grid values of
    eta subject to sup-norm, gridded Lipschitz, and boundary-decay
    constraints; its discretization error is O(BL modulus x grid spacing)
    and reported.
    """
    J_lo = np.asarray(J_lo, float)
    J_hi = np.asarray(J_hi, float)
    d = len(J_lo)
    eps = mollifier.eps
    if grid_h is None:
        grid_h = eps / 4.0
    if grid_h > eps / 4.0 + 1e-12:
        raise ValueError("y-grid spacing exceeds eps/4; location family "
                         "under-resolved")
    mu_points = np.atleast_2d(np.asarray(mu_points, float))
    mu_masses = np.asarray(mu_masses, float)

    axes = [np.arange(a, b + 1e-9, grid_h) for a, b in zip(J_lo, J_hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    cell = grid_h ** d
    if callable(nu):
        nu_points, nu_masses = nodes, nu(nodes) * cell
    else:
        nu_points = np.atleast_2d(np.asarray(nu[0], float))
        nu_masses = np.asarray(nu[1], float)

    # location-family statistic
    best = 0.0
    arg = None
    for y in nodes:
        s = 0.0
        if len(mu_points):
            s += float(mollifier(mu_points - y) @ mu_masses)
        s -= float(mollifier(nu_points - y) @ nu_masses)
        if abs(s) > best:
            best, arg = abs(s), y
    loc_stat = best / mollifier.bl_norm

    info = {"grid_h": grid_h, "n_nodes": len(nodes), "argmax_y": arg,
            "bl_norm_family": mollifier.bl_norm}
    if not lp:
        return loc_stat, None, info

    # LP over eta values on the nodes (+ sup bound m and Lipschitz bound c)
    shape = [len(a) for a in axes]
    w = np.zeros(len(nodes))
    for pts, masses, sign in ((mu_points, mu_masses, +1.0),
                              (nu_points, nu_masses, -1.0)):
        if not len(pts):
            continue
        idx = np.rint((pts - J_lo) / grid_h).astype(int)
        ok = np.all((idx >= 0) & (idx < shape), axis=1)
        flat = np.ravel_multi_index(tuple(idx[ok].T), shape)
        np.add.at(w, flat, sign * masses[ok])
    n = len(nodes)
    rows, cols, vals, rhs = [], [], [], []
    r = 0

    def add(entries, b):
        nonlocal r
        for c, v in entries:
            rows.append(r)
            cols.append(c)
            vals.append(v)
        rhs.append(b)
        r += 1

    m_col, c_col = n, n + 1
    # |eta_j| <= m and boundary decay eta_j <= c * dist(y_j, J^c)
    bdist = np.minimum((nodes - J_lo).min(axis=1), (J_hi - nodes).min(axis=1))
    for j in range(n):
        add([(j, 1.0), (m_col, -1.0)], 0.0)
        add([(j, -1.0), (m_col, -1.0)], 0.0)
        add([(j, 1.0), (c_col, -bdist[j])], 0.0)
        add([(j, -1.0), (c_col, -bdist[j])], 0.0)
    # gridded Lipschitz constraints on axis neighbors
    flat_idx = np.arange(n).reshape(shape)
    for ax in range(d):
        sl_a = [slice(None)] * d
        sl_b = [slice(None)] * d
        sl_a[ax] = slice(None, -1)
        sl_b[ax] = slice(1, None)
        a = flat_idx[tuple(sl_a)].ravel()
        b = flat_idx[tuple(sl_b)].ravel()
        for i, j in zip(a, b):
            add([(int(i), 1.0), (int(j), -1.0), (c_col, -grid_h)], 0.0)
            add([(int(i), -1.0), (int(j), 1.0), (c_col, -grid_h)], 0.0)
    # m + c <= 1
    add([(m_col, 1.0), (c_col, 1.0)], 1.0)

    from scipy.sparse import coo_matrix
    A_ub = coo_matrix((vals, (rows, cols)), shape=(r, n + 2))
    bounds = [(None, None)] * n + [(0, 1), (0, None)]
    obj = np.concatenate([w, [0.0, 0.0]])
    res = linprog(-obj, A_ub=A_ub, b_ub=np.asarray(rhs), bounds=bounds,
                  method="highs")
    if not res.success:
        raise RuntimeError(f"d_J linear program failed: {res.message}")
    lp_est = float(-res.fun)
    # the same eta with flipped sign handles |.|; LP already symmetric in w
    res2 = linprog(obj, A_ub=A_ub, b_ub=np.asarray(rhs), bounds=bounds,
                   method="highs")
    lp_est = max(lp_est, float(-res2.fun))
    info["lp_discretization_bound"] = grid_h * 1.0
    return loc_stat, lp_est, info


# ---------------------------------------------------------------------------
# profile pairings
# ---------------------------------------------------------------------------

def _eta_site_weights(window: SiteSet, eta, N, offsets):
    """Weights and gather indices for pairings of local functionals:
    every x with eta(x/N) != 0 must have x + Gamma inside the window."""
    w = x_pair_weights(window, eta, N)
    active = np.flatnonzero(w != 0.0)
    sites = window.sites[active]
    k = len(offsets)
    idx = np.empty((len(active), k), np.int64)
    for j, off in enumerate(np.atleast_2d(offsets)):
        ii = window.index_of(sites + off)
        if (ii < 0).any():
            raise ValueError("local-functional window leaves the sample "
                             "window over supp eta (margin violated)")
        idx[:, j] = ii
    return w[active], idx


def y_pair(phi: FieldSample, eta, F: LocalFunctional, N: int) -> float:
    """<Y_N, eta (x) F> = N^-d sum_x eta(x/N) F(tau_x phi)."""
    w, idx = _eta_site_weights(phi.window, eta, N, F.offsets)
    return float(w @ F(phi.values[idx]))


def y_pair_batch(window, values, eta, F: LocalFunctional, N: int):
    values = np.atleast_2d(values)
    w, idx = _eta_site_weights(window, eta, N, F.offsets)
    out = np.empty(len(values))
    for i, v in enumerate(values):
        out[i] = w @ F(v[idx])
    return out


def _gamma_cov_chol(gt: GreenTable, offsets):
    G = gt.matrix(np.atleast_2d(offsets))
    return np.linalg.cholesky(G)


def phi_pair(u, eta, F: LocalFunctional, gt: GreenTable, n_mc=4000,
             grid_n=12, seed=0, se_tol=None):
    """<Phi(u), eta (x) F> = int eta(x) E[F(phi|Gamma + u(x) 1)] dx.

    Midpoint quadrature in x over the support of eta; the inner expectation
    reuses one set of exact Gaussian draws with covariance g|Gamma across
    all x (common random numbers). Returns (value, se)."""
    lo, hi = np.asarray(eta.support_lo), np.asarray(eta.support_hi)
    d = gt.d
    h = float((hi - lo).max()) / grid_n
    axes = [np.arange(lo[j] + h / 2, hi[j], h) for j in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    ew = eta(pts) * h ** d
    keep = ew != 0.0
    pts, ew = pts[keep], ew[keep]
    L = _gamma_cov_chol(gt, F.offsets)
    z = np.random.default_rng(np.random.SeedSequence(seed)).standard_normal(
        (n_mc, len(F.offsets)))
    draws = z @ L.T
    shifts = np.asarray(u(pts), float).reshape(-1)
    n_batch = 10
    batch_vals = np.empty(n_batch)
    bs = n_mc // n_batch
    inner = np.empty((n_batch, len(pts)))
    for b in range(n_batch):
        blk = draws[b * bs:(b + 1) * bs]
        for i in range(len(pts)):
            inner[b, i] = F(blk + shifts[i]).mean()
        batch_vals[b] = inner[b] @ ew
    val = float(batch_vals.mean())
    se = float(batch_vals.std(ddof=1) / math.sqrt(n_batch))
    if se_tol is not None and se > se_tol:
        raise RuntimeError(f"phi_pair MC error {se:.3g} above tolerance")
    return val, se


def z_pair(phi: FieldSample, eta, F: LocalFunctional, N: int,
           gt: GreenTable, L=None, n_mc=2000, seed=0):
    """<Z_N, eta (x) F> with the field conditioned on the diluted lattice
    L Z^d (L = floor(log N) by default): phi = psi + h, and the inner law
    at x is the full field shifted by the frozen tau_x h.

    Returns (value, se) with the inner-MC error by batch means."""
    window = phi.window
    if L is None:
        L = max(2, int(math.floor(math.log(N))))
    interior = []
    box = window.bounding_box
    for s in window.sites.tolist():
        arr = np.asarray(s)
        if np.all(arr > box.lo) and np.all(arr < box.hi) \
                and not all(v % L == 0 for v in s):
            interior.append(s)
    U = SiteSet(np.array(interior))
    _, h = decompose_batch(window, phi.values[None], U)
    h = h[0]
    w, idx = _eta_site_weights(window, eta, N, F.offsets)
    local_h = h[idx]                      # (nx, k)
    Lc = _gamma_cov_chol(gt, F.offsets)
    z = np.random.default_rng(np.random.SeedSequence(seed)).standard_normal(
        (n_mc, len(F.offsets)))
    draws = z @ Lc.T
    n_batch = 10
    bs = n_mc // n_batch
    batch_vals = np.empty(n_batch)
    for b in range(n_batch):
        blk = draws[b * bs:(b + 1) * bs]            # (bs, k)
        vals = F(blk[:, None, :] + local_h[None, :, :])   # (bs, nx)
        batch_vals[b] = vals.mean(axis=0) @ w
    return float(batch_vals.mean()), float(batch_vals.std(ddof=1) / math.sqrt(n_batch))
