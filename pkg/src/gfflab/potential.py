"""Discrete and continuum potential theory.

Discrete side: killed Green functions, equilibrium measures and capacities
(dense symmetric solves on the exposed boundary sites), hitting
probabilities through the equilibrium-potential identity
P_x[H_K < inf] = sum_{x'} g(x, x') e_K(x').

Continuum side: Brownian ball potentials, capacities of shapes via a
fine-lattice route (d * cap_Zd / L^{d-2}, Richardson over two meshes) or a
walk-on-spheres route, quadratic Green energies E(f) = int f g_BM f and
grid Dirichlet energies.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve
from scipy.signal import fftconvolve
from scipy.sparse.linalg import splu

from . import kernels
from .green import GreenTable, c_d
from .lattice import Box, ShapeSpec, SiteSet, blow_up, neighbors

__all__ = [
    "EquilibriumMeasure", "PotentialField", "TestFunction",
    "green_killed", "green_killed_matrix", "equilibrium_measure",
    "hitting_probability", "brownian_potential_ball", "brownian_capacity",
    "energy_E", "dirichlet_energy", "gbm_coeff",
]

MAX_SOLVE_SITES = 8000          # exposed-site count limit for dense solves
WEIGHT_NEG_TOL = 1e-10
POTENTIAL_RESIDUAL_TOL = 1e-8


def gbm_coeff(d: int) -> float:
    """Coefficient of |x-y|^{2-d} in the Brownian Green function (1/2-Laplacian
    normalization); equals C_d / d."""
    return c_d(d) / d


@dataclass
class EquilibriumMeasure:
    support: SiteSet
    weights: np.ndarray        # one weight per support site (canonical order)
    capacity: float


class PotentialField:
    """Values of a harmonic potential, either per lattice site or on a
    uniform continuum grid (origin + mesh + value array)."""

    def __init__(self, values, sites=None, origin=None, mesh=None):
        self.values = np.asarray(values, float)
        self.sites = sites
        self.origin = None if origin is None else np.asarray(origin, float)
        self.mesh = mesh

    def grid_points(self):
        if self.origin is None:
            raise ValueError("not a grid field")
        axes = [self.origin[j] + self.mesh * np.arange(s)
                for j, s in enumerate(self.values.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


# ---------------------------------------------------------------------------
# killed Green function
# ---------------------------------------------------------------------------

def _killed_system(U: SiteSet):
    """Sparse I - P_U over the sites of U."""
    n = len(U)
    d = U.d
    idx = {tuple(s): i for i, s in enumerate(U.sites.tolist())}
    rows, cols = [], []
    for i, s in enumerate(U.sites.tolist()):
        for nb in neighbors(s).tolist():
            j = idx.get(tuple(nb))
            if j is not None:
                rows.append(i)
                cols.append(j)
    data = np.full(len(rows), -1.0 / (2 * d))
    A = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsc()
    return sparse.eye(n, format="csc") + A


def green_killed(U: SiteSet, x, y) -> float:
    """Green function of the walk killed on exiting U."""
    ix = U.index_of(np.asarray(x)[None])[0]
    iy = U.index_of(np.asarray(y)[None])[0]
    if ix < 0 or iy < 0:
        raise ValueError("x and y must lie in U")
    A = _killed_system(U)
    rhs = np.zeros(len(U))
    rhs[iy] = 1.0
    sol = splu(A).solve(rhs)
    return float(sol[ix])


def green_killed_matrix(U: SiteSet) -> np.ndarray:
    """Full killed Green matrix g_U(x, y), x, y in U."""
    n = len(U)
    if n > MAX_SOLVE_SITES:
        raise ValueError(f"|U| = {n} exceeds the dense-solve limit")
    A = _killed_system(U)
    return splu(A).solve(np.eye(n))


# ---------------------------------------------------------------------------
# equilibrium measure / capacity / hitting probability
# ---------------------------------------------------------------------------

def exposed_sites(K: SiteSet) -> np.ndarray:
    """Indices of K-sites with a neighbor outside K. Interior sites carry no
    equilibrium weight (the walk re-enters K at its first step), so the
    linear system can be restricted to these exactly."""
    out = []
    keys = {tuple(s) for s in K.sites.tolist()}
    d = K.d
    eye = np.eye(d, dtype=np.int64)
    moves = np.vstack([eye, -eye])
    for i, s in enumerate(K.sites.tolist()):
        s = np.asarray(s)
        if any(tuple(s + m) not in keys for m in moves):
            out.append(i)
    return np.asarray(out, np.int64)


def equilibrium_measure(gt: GreenTable, K: SiteSet) -> EquilibriumMeasure:
    """Solve G w = 1 on the exposed sites of K; weights and capacity."""
    if len(K) == 0:
        raise ValueError("K must be non-empty")
    ex = exposed_sites(K)
    if len(ex) > MAX_SOLVE_SITES:
        raise ValueError(
            f"{len(ex)} exposed sites exceed the dense-solve limit {MAX_SOLVE_SITES}")
    pts = K.sites[ex]
    G = gt.matrix(pts)
    try:
        cf = cho_factor(G, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise RuntimeError(
            "Green matrix not positive definite; set too large or cache "
            "misconfigured") from e
    w = cho_solve(cf, np.ones(len(pts)), check_finite=False)
    resid = float(np.abs(G @ w - 1.0).max())
    if resid > POTENTIAL_RESIDUAL_TOL:
        raise RuntimeError(f"equilibrium solve residual {resid:.2e} too large")
    if w.min() < -WEIGHT_NEG_TOL:
        raise RuntimeError(f"negative equilibrium weight {w.min():.2e}")
    w = np.clip(w, 0.0, None)
    weights = np.zeros(len(K))
    weights[ex] = w
    return EquilibriumMeasure(support=K, weights=weights, capacity=float(w.sum()))


def hitting_probability(gt: GreenTable, K, x, eq: EquilibriumMeasure = None):
    """P_x[H_K < inf] via the equilibrium-potential identity.

    x may be a single site or an (n, d) array; K a SiteSet (or pass a
    precomputed EquilibriumMeasure).
    """
    if eq is None:
        eq = equilibrium_measure(gt, K)
    K = eq.support
    pts = np.atleast_2d(np.asarray(x, np.int64))
    nz = eq.weights > 0
    supp = K.sites[nz]
    wts = eq.weights[nz]
    vals = np.empty(len(pts))
    block = max(1, 4_000_000 // max(len(supp), 1))
    for a in range(0, len(pts), block):
        b = min(a + block, len(pts))
        diff = pts[a:b, None, :] - supp[None, :, :]
        vals[a:b] = gt.many(diff.reshape(-1, K.d)).reshape(b - a, -1) @ wts
    vals = np.minimum(vals, 1.0)
    vals[K.contains_many(pts)] = 1.0
    single = np.asarray(x).ndim == 1
    return float(vals[0]) if single else vals


# ---------------------------------------------------------------------------
# Brownian potentials and capacities
# ---------------------------------------------------------------------------

def brownian_potential_ball(r: float, x, d: int = 3):
    """W_x[hit the Euclidean ball of radius r]: (r/|x|)^{d-2} outside, 1 inside."""
    if r <= 0:
        raise ValueError("radius must be positive")
    x = np.atleast_2d(np.asarray(x, float))
    s = np.sqrt((x * x).sum(axis=1))
    with np.errstate(divide="ignore"):
        out = np.where(s <= r, 1.0, (r / np.maximum(s, r)) ** (d - 2))
    return out if len(out) > 1 else float(out[0])


def _fine_lattice_cap(shape: ShapeSpec, L: int, gt: GreenTable) -> float:
    K = blow_up(shape, L)
    eq = equilibrium_measure(gt, K)
    return gt.d * eq.capacity / L ** (gt.d - 2)


def brownian_capacity(shape: ShapeSpec, method="fine-lattice", gt=None,
                      mesh=None, n_walks=4000, n_dirs=48, seed=0, strict=True):
    """Capacity of a shape with an error bar.

    fine-lattice: d cap_Zd(shape at mesh L) / L^{d-2} at meshes (L/2, L),
    Richardson-extrapolated; the spread of the two estimates is the error
    bar and a >10% mismatch raises (or is just reported when strict=False,
    for sweeps over rough porous geometries).

    mc-sphere: potential sampled by walk-on-spheres on a far sphere and
    matched against cap * g_BM, with a renewal correction for the
    truncation sphere.
    """
    d = shape.d
    if method == "fine-lattice":
        if gt is None:
            gt = GreenTable(d=d)
        L = mesh if mesh is not None else _auto_mesh(shape)
        c1 = _fine_lattice_cap(shape, L // 2, gt)
        c2 = _fine_lattice_cap(shape, L, gt)
        val = 2.0 * c2 - c1          # first-order 1/L extrapolation
        err = abs(c2 - c1)
        if err > 0.10 * abs(c2) and strict:
            raise RuntimeError(
                f"fine-lattice capacity not converged: {c1:.4g} vs {c2:.4g}")
        return val, err
    if method == "mc-sphere":
        bb = np.abs(np.concatenate(shape.bbox)).max()
        r_far = 6.0 * bb
        r_trunc = 12.0 * r_far
        lo, hi, bc, br = shape_cover(shape)
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((n_dirs, d))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        hits = np.empty(n_dirs)
        qs = np.empty(n_dirs)
        for i, u in enumerate(dirs):
            h, q = kernels.wos_hit_mc(lo, hi, bc, br, r_far * u, np.inf,
                                      r_trunc, 1e-4 * bb, n_walks,
                                      seed + 7919 * (i + 1))
            hits[i] = h / n_walks
            qs[i] = q / n_walks
        p_bar = hits.mean()
        q_bar = qs.mean()
        ret = (r_far / r_trunc) ** (d - 2)
        m = p_bar / (1.0 - q_bar * ret)
        cap = m * r_far ** (d - 2) / gbm_coeff(d)
        se_p = hits.std(ddof=1) / math.sqrt(n_dirs)
        se = se_p / (1.0 - q_bar * ret) * r_far ** (d - 2) / gbm_coeff(d)
        return cap, se
    raise ValueError(f"unknown method {method!r}")


def _auto_mesh(shape: ShapeSpec) -> int:
    """Largest even mesh whose blow-up stays within the dense-solve budget."""
    for L in (32, 24, 16, 12, 8, 6, 4):
        if len(exposed_sites(blow_up(shape, L))) <= MAX_SOLVE_SITES:
            return L
    raise ValueError("shape too large for the fine-lattice route")


def shape_cover(shape: ShapeSpec):
    """Exact (boxes_lo, boxes_hi, balls_c, balls_r) decomposition of a shape
    for Euclidean distance queries; sup-norm balls are boxes."""
    d = shape.d
    empty_b = np.zeros((0, d))
    if shape.kind == "box-union":
        return shape.boxes_lo, shape.boxes_hi, empty_b, np.zeros(0)
    if shape.kind == "l-inf-ball":
        return (shape.center[None] - shape.radius,
                shape.center[None] + shape.radius, empty_b, np.zeros(0))
    return empty_b, empty_b, shape.center[None], np.array([shape.radius])


# ---------------------------------------------------------------------------
# test functions and energies
# ---------------------------------------------------------------------------

class TestFunction:
    """Compactly supported test function with a recorded BL norm.

    kinds: mollified-ball-indicator (smoothed indicator, radial), tent
    (radial), explicit-grid.
    """

    def __init__(self, kind, fn, support_lo, support_hi, sup_norm,
                 lipschitz_const, radial_profile=None, radial_center=None,
                 d=3):
        self.kind = kind
        self.fn = fn
        self.support_lo = np.asarray(support_lo, float)
        self.support_hi = np.asarray(support_hi, float)
        self.sup_norm = float(sup_norm)
        self.lipschitz_const = float(lipschitz_const)
        self.bl_norm = self.sup_norm + self.lipschitz_const
        self.radial_profile = radial_profile
        self.radial_center = (np.zeros(d) if radial_center is None
                              else np.asarray(radial_center, float))
        self.d = d

    def __call__(self, pts):
        return self.fn(np.atleast_2d(np.asarray(pts, float)))

    @classmethod
    def mollified_ball_indicator(cls, radius, eps, center=None, d=3):
        """1 inside the ball, smooth cosine ramp to 0 over [radius, radius+eps]."""
        center = np.zeros(d) if center is None else np.asarray(center, float)

        def profile(s):
            s = np.asarray(s, float)
            u = np.clip((s - radius) / eps, 0.0, 1.0)
            return np.cos(0.5 * np.pi * u) ** 2

        def fn(pts):
            return profile(np.sqrt(((pts - center) ** 2).sum(axis=1)))

        lip = 0.5 * np.pi / eps
        r_out = radius + eps
        return cls("mollified-ball-indicator", fn, center - r_out,
                   center + r_out, 1.0, lip, radial_profile=(profile, r_out),
                   radial_center=center, d=d)

    @classmethod
    def tent(cls, center=None, halfwidth=1.0, d=3):
        center = np.zeros(d) if center is None else np.asarray(center, float)

        def profile(s):
            return np.maximum(0.0, 1.0 - np.asarray(s, float) / halfwidth)

        def fn(pts):
            return profile(np.sqrt(((pts - center) ** 2).sum(axis=1)))

        return cls("tent", fn, center - halfwidth, center + halfwidth,
                   1.0, 1.0 / halfwidth, radial_profile=(profile, halfwidth),
                   radial_center=center, d=d)

    @classmethod
    def from_grid(cls, values, origin, mesh, d=3):
        values = np.asarray(values, float)
        origin = np.asarray(origin, float)

        def fn(pts):
            ix = np.rint((pts - origin) / mesh).astype(int)
            ok = np.all((ix >= 0) & (ix < values.shape), axis=1)
            out = np.zeros(len(pts))
            out[ok] = values[tuple(ix[ok].T)]
            return out

        grads = np.gradient(values, mesh)
        lip = float(np.sqrt(sum(g ** 2 for g in grads)).max())
        hi = origin + mesh * (np.array(values.shape) - 1)
        tf = cls("explicit-grid", fn, origin, hi, float(np.abs(values).max()),
                 lip, d=d)
        tf._grid_values = values
        tf._grid_shape = values.shape
        return tf


def _energy_radial(profile, r_max, d, n=2000):
    """E(f) for radial f in d = 3: 8 pi * int f(r) r^2 [ (1/r) int_0^r f s^2 ds
    + int_r^rmax f s ds ] dr, by cumulative Simpson on a uniform grid."""
    r = np.linspace(0.0, r_max, n + 1)
    f = profile(r)
    h = r[1] - r[0]
    inner2 = np.concatenate([[0.0], np.cumsum(0.5 * h * (f[1:] * r[1:] ** 2
                                                         + f[:-1] * r[:-1] ** 2))])
    tail1_rev = np.concatenate([[0.0], np.cumsum(0.5 * h * (f[::-1][1:] * r[::-1][1:]
                                                            + f[::-1][:-1] * r[::-1][:-1]))])
    tail1 = tail1_rev[::-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        bracket = np.where(r > 0, inner2 / np.maximum(r, 1e-300), 0.0) + tail1
    integrand = f * r ** 2 * bracket
    return 8.0 * np.pi * np.trapezoid(integrand, r)


def energy_E(tf: TestFunction, tol=0.01, grid_n=48):
    """Quadratic Green energy E(f) = int f(x) g_BM(x, y) f(y) dx dy.

    Radial functions in d = 3 use an exact 1-d reduction (the spherical
    average of the kernel is 1/max(r, s)); general functions are summed on
    a grid with an equal-volume-ball correction for the singular diagonal
    cell. Raises if the two-resolution error estimate exceeds `tol`.
    """
    d = tf.d
    if tf.radial_profile is not None and d == 3:
        profile, r_max = tf.radial_profile
        e1 = _energy_radial(profile, r_max, d, n=1500)
        e2 = _energy_radial(profile, r_max, d, n=3000)
        if e2 != 0 and abs(e2 - e1) > tol * abs(e2):
            raise RuntimeError("radial energy quadrature not converged")
        return e2

    if tf.kind == "explicit-grid":
        h = float(tf.support_hi[0] - tf.support_lo[0]) / (tf._grid_shape[0] - 1)
        f = tf._grid_values
        e2 = _energy_grid(f, h, d)
        e1 = _energy_grid(f[(slice(None, None, 2),) * d], 2 * h, d)
        if e2 != 0 and abs(e2 - e1) > 4 * tol * abs(e2):
            raise RuntimeError("grid energy quadrature not converged")
        return e2

    def sampled(n):
        lo, hi = tf.support_lo, tf.support_hi
        h = float((hi - lo).max()) / n
        axes = [np.arange(lo[j] + h / 2, hi[j], h) for j in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        f = tf(pts).reshape([len(a) for a in axes])
        return _energy_grid(f, h, d)

    e1 = sampled(grid_n // 2)
    e2 = sampled(grid_n)
    if e2 != 0 and abs(e2 - e1) > 4 * tol * abs(e2):
        raise RuntimeError("grid energy quadrature not converged")
    return e2


def _energy_grid(f, h, d):
    """Double sum of f(x) g_BM(x - y) f(y) h^{2d} on a uniform grid; the
    singular diagonal cell uses the equal-volume-ball self energy."""
    f = np.asarray(f, float)
    shp = f.shape
    offs = [np.arange(-(s - 1), s) * h for s in shp]
    om = np.meshgrid(*offs, indexing="ij")
    r = np.sqrt(sum(o ** 2 for o in om))
    coef = gbm_coeff(d)
    with np.errstate(divide="ignore"):
        ker = coef * r ** (2.0 - d)
    if d == 3:
        rho = h * (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0)
        self_term = (16.0 * np.pi / 15.0) * rho ** 5 / h ** 6
    else:
        self_term = coef * (h / 2.0) ** (2.0 - d) * 2.0
    ker[tuple(s - 1 for s in shp)] = self_term
    conv = fftconvolve(f, ker, mode="valid")
    return float((f * conv).sum() * h ** (2 * d))


def dirichlet_energy(values, mesh, warn_boundary=True):
    """(1/2) int |grad f|^2 by central differences on a uniform grid."""
    values = np.asarray(values, float)
    d = values.ndim
    grads = np.gradient(values, mesh)
    dens = 0.5 * sum(g ** 2 for g in grads)
    if warn_boundary:
        edge = 0.0
        for j in range(d):
            sl0 = [slice(None)] * d
            sl1 = [slice(None)] * d
            sl0[j] = 0
            sl1[j] = -1
            edge = max(edge, np.abs(grads[j][tuple(sl0)]).max(),
                       np.abs(grads[j][tuple(sl1)]).max())
        interior = max(np.abs(g).max() for g in grads)
        if interior > 0 and edge > 0.05 * interior:
            warnings.warn("field varies at the grid boundary; Dirichlet "
                          "energy is truncation-biased", stacklevel=2)
    return float(dens.sum() * mesh ** d)


def equilibrium_to_csv(eq: EquilibriumMeasure, path):
    """site coords + weight per row; capacity recoverable as the column sum."""
    arr = np.column_stack([eq.support.sites, eq.weights])
    np.savetxt(path, arr, fmt="%d " * eq.support.d + "%.17g",
               header=" ".join(f"x{j}" for j in range(eq.support.d)) + " weight",
               comments="")


def field_to_csv(field: PotentialField, path):
    if field.sites is not None:
        arr = np.column_stack([field.sites.sites, field.values])
        hdr = " ".join(f"x{j}" for j in range(field.sites.d)) + " value"
        np.savetxt(path, arr, fmt="%d " * field.sites.d + "%.17g",
                   header=hdr, comments="")
    else:
        arr = np.column_stack([field.grid_points(), field.values.ravel()])
        hdr = " ".join(f"x{j}" for j in range(arr.shape[1] - 1)) + " value"
        np.savetxt(path, arr, fmt="%.17g", header=hdr, comments="")
