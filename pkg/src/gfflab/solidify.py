"""Porous-interface probes: exact local densities of a segmentation, the
admissibility test, Brownian hitting/escape estimators (walk-on-spheres),
the escape-probability and Dirichlet-energy gap functionals, capacity
ratios, and the random-walk vs Brownian-motion hitting comparison for
unions of large discrete boxes.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .green import GreenTable
from .lattice import ShapeSpec, SiteSet
from .observables import HarmonicPotential
from .potential import (MAX_SOLVE_SITES, brownian_capacity, dirichlet_energy,
                        equilibrium_measure, exposed_sites,
                        hitting_probability, shape_cover)

__all__ = [
    "BMConfig", "DensityProfile", "density_profile", "local_density",
    "is_admissible_segmentation", "bm_hit_before_range", "escape_probability",
    "escape_gap", "dirichlet_gap", "capacity_ratio", "srw_vs_bm_compare",
]


@dataclass
class BMConfig:
    """Walker settings: absorption shell delta (the 'minimum step'),
    truncation radius, and walker budget."""

    delta: float = None          # default: smallest feature / 20
    trunc_radius: float = None   # default: 10x the geometry radius
    n_walks: int = 4000
    seed: int = 0

    def resolved(self, feature, geom_radius):
        delta = self.delta if self.delta is not None else feature / 20.0
        R = self.trunc_radius if self.trunc_radius is not None \
            else max(10.0 * geom_radius, geom_radius + 1.0)
        if R < 10.0 * geom_radius:
            warnings.warn("truncation radius below 10x the geometry",
                          stacklevel=3)
        return delta, R


@dataclass
class DensityProfile:
    ell: int
    points: np.ndarray
    values: np.ndarray


def density_profile(u0_lo, u0_hi, ell: int, points) -> DensityProfile:
    """Exact local densities of U_1 over a query grid at one dyadic scale."""
    points = np.atleast_2d(np.asarray(points, float))
    vals = np.array([local_density(u0_lo, u0_hi, ell, x) for x in points])
    return DensityProfile(ell=ell, points=points, values=vals)


def _union_volume_in_cube(boxes_lo, boxes_hi, cube_lo, cube_hi):
    """Exact volume of (union of boxes) intersected with a cube, by the
    coordinate-sweep cell decomposition (all cell boundaries are box or
    cube faces, so cells are entirely in or out)."""
    d = len(cube_lo)
    clipped = []
    for lo, hi in zip(boxes_lo, boxes_hi):
        a = np.maximum(lo, cube_lo)
        b = np.minimum(hi, cube_hi)
        if np.all(b > a):
            clipped.append((a, b))
    if not clipped:
        return 0.0
    axes = []
    for j in range(d):
        cuts = {cube_lo[j], cube_hi[j]}
        for a, b in clipped:
            cuts.add(float(a[j]))
            cuts.add(float(b[j]))
        axes.append(np.array(sorted(cuts)))
    mids = [0.5 * (ax[1:] + ax[:-1]) for ax in axes]
    widths = [np.diff(ax) for ax in axes]
    mesh = np.meshgrid(*mids, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    covered = np.zeros(len(pts), bool)
    for a, b in clipped:
        covered |= np.all((pts >= a) & (pts <= b), axis=1)
    wmesh = np.meshgrid(*widths, indexing="ij")
    cell_vol = np.ones(len(pts))
    for w in wmesh:
        cell_vol *= w.ravel()
    return float(cell_vol[covered].sum())


def local_density(u0_lo, u0_hi, ell: int, x) -> float:
    """Local density of U_1 = complement of the box union U_0 at dyadic
    scale ell: vol(B_inf(x, 2^-ell) minus U_0) / vol(B_inf(x, 2^-ell)).
    Exact box geometry, no sampling."""
    x = np.asarray(x, float)
    r = 2.0 ** (-ell)
    cube_lo = x - r
    cube_hi = x + r
    vol_cube = (2.0 * r) ** len(x)
    u0_lo = np.asarray(u0_lo, float).reshape(-1, len(x))
    u0_hi = np.asarray(u0_hi, float).reshape(-1, len(x))
    vol_u0 = _union_volume_in_cube(u0_lo, u0_hi, cube_lo, cube_hi)
    return (vol_cube - vol_u0) / vol_cube


def is_admissible_segmentation(u0_lo, u0_hi, probe_points, ell_star: int,
                               ell_max: int = 4):
    """Grid relaxation of: local density of U_1 <= 1/2 at every point of A
    and every scale ell >= ell_star. Checks the probe grid over
    ell_star..ell_star+ell_max and returns (ok, witness)."""
    probe_points = np.atleast_2d(np.asarray(probe_points, float))
    for ell in range(ell_star, ell_star + ell_max + 1):
        for x in probe_points:
            s = local_density(u0_lo, u0_hi, ell, x)
            if s > 0.5 + 1e-12:
                return False, {"x": x, "ell": ell, "density": s}
    return True, None


def _feature_and_radius(boxes_lo, boxes_hi):
    boxes_lo = np.asarray(boxes_lo, float)
    boxes_hi = np.asarray(boxes_hi, float)
    if boxes_lo.size == 0:
        return 1.0, 1.0
    feature = float((boxes_hi - boxes_lo).min())
    radius = float(np.abs(np.concatenate([boxes_lo, boxes_hi])).max())
    return feature, radius


def bm_hit_before_range(z, sigma_lo, sigma_hi, eps: float, cfg: BMConfig):
    """Estimate of W_z[hit Sigma before leaving B_inf(z, eps)] with a
    binomial error bar."""
    z = np.asarray(z, float)
    d = len(z)
    feature, _ = _feature_and_radius(sigma_lo, sigma_hi)
    delta, _ = cfg.resolved(feature, 1.0)
    if feature < 10.0 * delta:
        warnings.warn("interface features under 10x the absorption shell; "
                      "step-size bias possible", stacklevel=2)
    empty = np.zeros((0, d))
    hits, _ = kernels.wos_hit_mc(np.asarray(sigma_lo, float),
                                 np.asarray(sigma_hi, float), empty,
                                 np.zeros(0), z, eps, np.inf, delta,
                                 cfg.n_walks, cfg.seed)
    p = hits / cfg.n_walks
    se = math.sqrt(max(p * (1 - p), 1.0 / cfg.n_walks) / cfg.n_walks)
    return p, se


def escape_probability(x, target_cover, cfg: BMConfig):
    """W_x[never hit the target]: truncated WoS estimate with the
    harmonic-potential tail correction (r_encl / R)^{d-2} applied at the
    midpoint and folded into the error bar."""
    lo, hi, bc, br = target_cover
    x = np.asarray(x, float)
    d = len(x)
    f1, r1 = _feature_and_radius(lo, hi)
    if len(bc):
        f1 = min(f1, float(np.min(br)) * 2.0)
        r1 = max(r1, float((np.linalg.norm(bc, axis=1) + br).max()))
    delta, R = cfg.resolved(f1, max(r1, float(np.linalg.norm(x))))
    hits, trunc = kernels.wos_hit_mc(lo, hi, bc, br, x, np.inf, R, delta,
                                     cfg.n_walks, cfg.seed)
    q = trunc / cfg.n_walks          # reached the truncation sphere
    corr = (r1 / R) ** (d - 2)        # bound on re-hitting from radius R
    if corr > 0.10:
        warnings.warn(f"truncation correction bound {corr:.3f} exceeds 10%",
                      stacklevel=2)
    est = q * (1.0 - 0.5 * corr)
    se = math.sqrt(max(q * (1 - q), 1.0 / cfg.n_walks) / cfg.n_walks)
    return est, se + 0.5 * corr * q


def escape_gap(A: ShapeSpec, sigma_lo, sigma_hi, query_points, cfg: BMConfig):
    """max over queries of (escape from Sigma - escape from A), each with
    the truncation correction; returns (max_gap, combined_err, rows)."""
    a_cover = shape_cover(A)
    d = A.d
    s_cover = (np.asarray(sigma_lo, float).reshape(-1, d),
               np.asarray(sigma_hi, float).reshape(-1, d),
               np.zeros((0, d)), np.zeros(0))
    rows = []
    best = None
    for i, x in enumerate(np.atleast_2d(np.asarray(query_points, float))):
        cfg_i = BMConfig(cfg.delta, cfg.trunc_radius, cfg.n_walks,
                         cfg.seed + 101 * i)
        es, ee = escape_probability(x, s_cover, cfg_i)
        cfg_i2 = BMConfig(cfg.delta, cfg.trunc_radius, cfg.n_walks,
                          cfg.seed + 101 * i + 50)
        ea, ea_err = escape_probability(x, a_cover, cfg_i2)
        gap = es - ea
        err = ee + ea_err
        rows.append({"x": x, "escape_sigma": es, "escape_A": ea,
                     "gap": gap, "err": err})
        if best is None or gap > best[0]:
            best = (gap, err)
    return best[0], best[1], rows


def _as_shape(sigma, d):
    if isinstance(sigma, ShapeSpec):
        return sigma
    lo = np.asarray(sigma[0], float).reshape(-1, d)
    hi = np.asarray(sigma[1], float).reshape(-1, d)
    return ShapeSpec("box-union", boxes=list(zip(lo, hi)), d=d)


def dirichlet_gap(A: ShapeSpec, sigma, gt: GreenTable = None,
                  mesh: int = 16, grid_radius: float = None, grid_n: int = 81):
    """E(h_A - h_Sigma) - (cap(Sigma) - cap(A)) on a shared grid, with the
    far-field tail of the energy restored from the boundary coefficient.

    sigma is a ShapeSpec or a (boxes_lo, boxes_hi) pair. Returns
    (gap, details); details carries the internal cross-check
    |gap - 2 (cap(A) - E(h_A, h_Sigma))| computed by polarization.
    """
    if gt is None:
        gt = GreenTable(d=A.d)
    d = A.d
    sigma_shape = _as_shape(sigma, d)
    if grid_radius is None:
        grid_radius = 6.0 * max(np.abs(np.concatenate(A.bbox)).max(),
                                np.abs(np.concatenate(sigma_shape.bbox)).max())
    hA = HarmonicPotential(A, gt, mesh=mesh)
    hS = HarmonicPotential(sigma_shape, gt, mesh=mesh)
    ax = np.linspace(-grid_radius, grid_radius, grid_n)
    h = ax[1] - ax[0]
    grid = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, d)
    fA = hA(grid).reshape(grid_n, grid_n, grid_n)
    fS = hS(grid).reshape(grid_n, grid_n, grid_n)

    def tail_coeff(f):
        # f ~ c/|x| at the grid boundary in d = 3
        edge = np.abs(grid).max(axis=1) >= grid_radius - h / 2
        r = np.linalg.norm(grid[edge], axis=1)
        return float((f.reshape(-1)[edge] * r).mean())

    def energy(f):
        c = tail_coeff(f)
        return dirichlet_energy(f, h, warn_boundary=False) \
            + 2.0 * np.pi * c * c / grid_radius

    e_diff = energy(fA - fS)
    e_A = energy(fA)
    e_S = energy(fS)
    e_mix = 0.25 * (energy(fA + fS) - e_diff)
    capA, errA = brownian_capacity(A, "fine-lattice", gt=gt, mesh=mesh,
                                   strict=False)
    capS, errS = brownian_capacity(sigma_shape, "fine-lattice", gt=gt,
                                   mesh=mesh, strict=False)
    gap = e_diff - (capS - capA)
    # bilinearity cross-check at quadrature level:
    # E(hA - hS) = E(hA) + E(hS) - 2 E(hA, hS) exactly on the shared grid
    identity_resid = abs(e_diff - (e_A + e_S - 2.0 * e_mix))
    details = {"E_diff": e_diff, "E_A": e_A, "E_sigma": e_S, "E_mix": e_mix,
               "cap_A": capA, "cap_sigma": capS, "cap_err": errA + errS,
               "self_energy_discretization": (e_A - capA, e_S - capS),
               "identity_residual": identity_resid, "mesh": mesh,
               "grid_n": grid_n, "grid_radius": grid_radius}
    return gap, details


def capacity_ratio(A: ShapeSpec, sigma, gt: GreenTable = None, mesh: int = 16,
                   strict=True):
    """cap(Sigma) / cap(A) with a combined error bar."""
    if gt is None:
        gt = GreenTable(d=A.d)
    sigma_shape = _as_shape(sigma, A.d)
    capA, errA = brownian_capacity(A, "fine-lattice", gt=gt, mesh=mesh,
                                   strict=strict)
    capS, errS = brownian_capacity(sigma_shape, "fine-lattice", gt=gt,
                                   mesh=mesh, strict=strict)
    ratio = capS / capA
    err = ratio * (errA / capA + errS / capS)
    return ratio, err


def srw_vs_bm_compare(centers, L: int, x_panel, gt: GreenTable,
                      cfg: BMConfig, mc_walks=20000):
    """Hitting-probability sandwich for a union of discrete L-boxes C vs the
    Brownian potentials of the shrunken/fattened fillings.

    Returns (rows, max_violation). The SRW column is exact through the
    equilibrium measure when the boundary fits the dense solver, otherwise
    a long-jump MC estimate (flagged in the row)."""
    d = gt.d
    centers = np.atleast_2d(np.asarray(centers, np.int64))
    sites = np.vstack([_box_sites(z, L, d) for z in centers])
    C = SiteSet(sites)
    x_panel = np.atleast_2d(np.asarray(x_panel, np.int64))

    exact = len(exposed_sites(C)) <= MAX_SOLVE_SITES
    if exact:
        eq = equilibrium_measure(gt, C)
        p_srw = np.asarray(hitting_probability(gt, C, x_panel, eq)).reshape(-1)
        p_err = np.zeros(len(x_panel))
    else:
        p_srw, p_err = _srw_mc_panel(C, x_panel, cfg, mc_walks)

    # fillings: Gamma = union of [z, z+L]; tilde = shrink by L/4, hat = fatten
    g_lo = centers.astype(float)
    g_hi = centers + float(L)
    t_lo, t_hi = g_lo + L / 4.0, g_hi - L / 4.0
    f_lo, f_hi = g_lo - L / 4.0, g_hi + L / 4.0
    rows = []
    max_violation = 0.0
    empty = np.zeros((0, d))
    feature = L / 2.0
    geom_r = float(np.abs(np.concatenate([f_lo, f_hi])).max())
    for i, x in enumerate(x_panel):
        delta, R = cfg.resolved(feature, max(geom_r, float(np.linalg.norm(x))))
        corr = (geom_r / R) ** (d - 2)
        h_t, _ = kernels.wos_hit_mc(t_lo, t_hi, empty, np.zeros(0),
                                    x.astype(float), np.inf, R, delta,
                                    cfg.n_walks, cfg.seed + 31 * i)
        h_f, _ = kernels.wos_hit_mc(f_lo, f_hi, empty, np.zeros(0),
                                    x.astype(float), np.inf, R, delta,
                                    cfg.n_walks, cfg.seed + 31 * i + 17)
        wt = h_t / cfg.n_walks
        wf = h_f / cfg.n_walks + corr      # upper column keeps the tail bound
        se = math.sqrt(0.25 / cfg.n_walks)
        tol = 3 * se + p_err[i] + corr
        v = max(0.0, wt - p_srw[i] - tol, p_srw[i] - wf - tol)
        max_violation = max(max_violation, v)
        rows.append({"x": x, "p_srw": float(p_srw[i]), "w_shrunk": wt,
                     "w_fattened": wf, "violation": v, "exact_srw": exact})
    return rows, max_violation


def _box_sites(z, L, d):
    z = np.asarray(z, np.int64)
    axes = [np.arange(z[j], z[j] + L) for j in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def porous_strength_sweep(sigma_lo, sigma_hi, probe_points, ell_grid,
                          u_factor, cfg: BMConfig, path=None):
    """Empirical porosity strength of an interface: for each dyadic scale
    ell* the minimum over boundary probes of P[hit Sigma before moving
    eps = u_factor * 2^{-ell*}], i.e. the largest eta for which the
    interface qualifies at that scale. Rows: (geometry_hash, ell_star,
    eps, eta_estimate, err); optionally written as CSV."""
    import hashlib
    sigma_lo = np.asarray(sigma_lo, float)
    sigma_hi = np.asarray(sigma_hi, float)
    ghash = hashlib.sha1(np.ascontiguousarray(
        np.vstack([sigma_lo, sigma_hi])).tobytes()).hexdigest()[:12]
    rows = []
    for k, ell in enumerate(ell_grid):
        eps = u_factor * 2.0 ** (-ell)
        best = None
        for i, z in enumerate(np.atleast_2d(np.asarray(probe_points, float))):
            cfg_i = BMConfig(cfg.delta, cfg.trunc_radius, cfg.n_walks,
                             cfg.seed + 997 * (k * 131 + i))
            p, se = bm_hit_before_range(z, sigma_lo, sigma_hi, eps, cfg_i)
            if best is None or p < best[0]:
                best = (p, se)
        rows.append((ghash, int(ell), eps, best[0], best[1]))
    if path is not None:
        with open(path, "w") as fh:
            fh.write("geometry_hash,ell_star,eps,eta_estimate,err\n")
            for r in rows:
                fh.write(f"{r[0]},{r[1]},{r[2]!r},{r[3]!r},{r[4]!r}\n")
    return rows


def _srw_mc_panel(C: SiteSet, x_panel, cfg: BMConfig, n_walks):
    """Long-jump MC estimate of P_x[H_C < inf] with truncation at a large
    sup-norm radius and doubling-shell roulette."""
    box = C.bounding_box
    pad = 2
    glo = box.lo - pad
    dims = box.hi - box.lo + 1 + 2 * pad
    from scipy.ndimage import distance_transform_cdt
    occ = np.zeros(tuple(dims), bool)
    occ[tuple((C.sites - glo).T)] = True
    dist = distance_transform_cdt(~occ, metric="chessboard").astype(np.int64)
    R = int(20 * max(np.abs(box.lo).max(), np.abs(box.hi).max(), 10))
    sx, sxx = kernels.srw_hit_mc(dist, glo, box.lo, box.hi, x_panel, R,
                                 n_walks, cfg.seed, roulette_radius=max(
                                     40, 2 * int(np.abs(x_panel).max())),
                                 roulette_q=0.5)
    p = sx / n_walks
    se = np.sqrt(np.maximum(sxx / n_walks - p * p, 1.0 / n_walks) / n_walks)
    return p, se
