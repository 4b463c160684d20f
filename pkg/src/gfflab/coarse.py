"""Multi-scale coarse graining: scale sequences, good/bad box classification
of field samples, column counts of bad boxes, and extraction of the porous
interface of blocking boxes with its scaled compact filling.

The asymptotic scale formulas are

    L0 = floor((N log N / gamma_N)^{1/(d-1)}),  Lhat0 = 100 d floor(sqrt(gamma_N) N),

with gamma_N in (0, 1] chosen so gamma_N -> 0 and
gamma_N^{(d+1)/2} / (N^{2-d} log N) -> infinity. At desk scale these are far
larger than any affordable window, so experiments run in a reduced-scale
mode with pinned (L0, Lhat0, K); outputs are then flagged non-asymptotic.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .green import GreenTable
from .lattice import Box, SiteSet
from .percolation import ConnectivityIndex, LevelSetMask
from .potential import equilibrium_measure, exposed_sites
from .sampler import FieldSample, decompose_batch

__all__ = [
    "CoarseGrainConfig", "ReducedScales", "BoxClassification", "InterfaceSpec",
    "gamma_rule_value", "scales", "check_gamma_rule", "BoxClassifier",
    "classify_box", "bad_event_count", "extract_interface",
    "interface_volume_capacity",
]


def gamma_rule_value(rule: str, N: int, d: int) -> float:
    if rule == "d3-default":
        return min(1.0, math.log(N) / math.sqrt(N))
    if rule == "general-default":
        return min(1.0, N ** (-(d - 2.0) / (d + 2.0)) * math.log(N) ** 2)
    raise ValueError(f"unknown gamma rule {rule!r}")


def scales(N: int, gamma_rule: str = "d3-default", d: int = 3):
    """(L0, Lhat0) from the defining formulas."""
    if N < 2:
        raise ValueError("N must be at least 2")
    gN = gamma_rule_value(gamma_rule, N, d)
    if not (0.0 < gN <= 1.0):
        raise ValueError(f"gamma_N = {gN} outside (0, 1]")
    L0 = int(math.floor((N * math.log(N) / gN) ** (1.0 / (d - 1))))
    Lhat0 = 100 * d * int(math.floor(math.sqrt(gN) * N))
    return L0, Lhat0


def scale_ordering_threshold(gamma_rule: str = "d3-default", d: int = 3,
                             n_max: int = 10 ** 7) -> int:
    """Smallest N (by doubling scan) from which L0 <= Lhat0 holds onward."""
    candidates = []
    N = 2
    while N <= n_max:
        L0, Lh = scales(N, gamma_rule, d)
        candidates.append((N, L0 <= Lh))
        N *= 2
    last_bad = max((n for n, ok in candidates if not ok), default=1)
    return last_bad * 2


def check_gamma_rule(gamma_rule: str, d: int = 3,
                     N_grid=(100, 1000, 10000, 100000, 1000000)) -> bool:
    """gamma_N -> 0 and gamma_N^{(d+1)/2} N^{d-2} / log N increasing and large."""
    gs = [gamma_rule_value(gamma_rule, N, d) for N in N_grid]
    conds = [g ** ((d + 1) / 2.0) * N ** (d - 2) / math.log(N)
             for g, N in zip(gs, N_grid)]
    decreasing = all(a >= b for a, b in zip(gs, gs[1:]))
    growing = all(a < b for a, b in zip(conds, conds[1:]))
    return decreasing and growing and conds[-1] > 10.0


@dataclass(frozen=True)
class ReducedScales:
    """Desk-scale override: pinned scales, non-asymptotic by construction."""

    L0: int
    Lhat0: int
    K: int


@dataclass
class CoarseGrainConfig:
    N: int
    M: float
    alpha: float
    delta: float
    gamma: float
    K: int = 100
    gamma_rule: str = "d3-default"
    c_prime: float = 1.0
    rho: object = None                     # callable L -> threshold factor
    reduced: ReducedScales = None
    d: int = 3

    def __post_init__(self):
        if not (self.alpha < self.delta < self.gamma):
            raise ValueError("need alpha < delta < gamma")
        if self.reduced is None and self.K < 100:
            raise ValueError("K must be >= 100 in asymptotic mode")
        if self.K_eff * self.L0 - 1 < 4 * self.L0:
            raise ValueError("U_z must contain D_z: need K*L0 - 1 >= 4*L0")
        if self.rho is None:
            self.rho = lambda L: L ** -0.5

    @property
    def a(self):
        return self.delta - self.alpha

    @property
    def L0(self):
        return self.reduced.L0 if self.reduced else scales(self.N, self.gamma_rule, self.d)[0]

    @property
    def Lhat0(self):
        return self.reduced.Lhat0 if self.reduced else scales(self.N, self.gamma_rule, self.d)[1]

    @property
    def K_eff(self):
        return self.reduced.K if self.reduced else self.K

    @property
    def non_asymptotic(self):
        return self.reduced is not None

    def manifest(self):
        return {"N": self.N, "M": self.M, "alpha": self.alpha,
                "delta": self.delta, "gamma": self.gamma, "K": self.K_eff,
                "gamma_rule": self.gamma_rule, "c_prime": self.c_prime,
                "L0": self.L0, "Lhat0": self.Lhat0,
                "non_asymptotic": self.non_asymptotic}


@dataclass
class BoxClassification:
    z: tuple
    psi_good: bool
    h_good: bool


def _lattice_box(z, lo_off, hi_off, d):
    """Sites of z + [lo_off, hi_off)^d."""
    z = np.asarray(z, np.int64)
    axes = [np.arange(z[j] + lo_off, z[j] + hi_off) for j in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _big_components(sites, mask, min_diam):
    """Connected components of mask restricted to `sites` with sup-norm
    diameter >= min_diam; returns a list of site arrays."""
    ss = SiteSet(sites[mask]) if mask.any() else None
    if ss is None or not len(ss):
        return []
    idx = ConnectivityIndex(LevelSetMask(ss, np.ones(len(ss), bool), 0.0))
    out = []
    labels = idx._site_labels
    for lab in range(1, idx.n_components + 1):
        pts = ss.sites[labels == lab]
        diam = (pts.max(axis=0) - pts.min(axis=0)).max() if len(pts) else 0
        if diam >= min_diam:
            out.append(pts)
    return out


class BoxClassifier:
    """Classifies L0-boxes of one or many samples sharing a window.

    Each box label z gets its own decomposition with U = U_z (the big
    concentric box); the sparse factorization per z is reused across all
    samples. Boxes whose U_z leaves the window are rejected.
    """

    def __init__(self, window: SiteSet, values, cfg: CoarseGrainConfig):
        self.window = window
        self.values = np.atleast_2d(values)
        self.cfg = cfg
        self.d = cfg.d
        self._cache = {}
        self._comp_cache = {}

    def centers(self):
        """All box labels z in L0 Z^d whose U_z (with its outer solve
        boundary) fits inside the window."""
        L0, K = self.cfg.L0, self.cfg.K_eff
        box = self.window.bounding_box
        lo = np.ceil((box.lo + K * L0) / L0).astype(int) * L0
        hi = np.floor((box.hi - K * L0 + 1) / L0).astype(int) * L0
        if np.any(hi < lo):
            return []
        axes = [np.arange(a, b + 1, L0) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return [tuple(p) for p in np.stack([m.ravel() for m in mesh], axis=1)]

    def u_z_fits(self, z):
        L0, K = self.cfg.L0, self.cfg.K_eff
        sites = _lattice_box(z, -K * L0, K * L0, self.d)  # U_z plus boundary
        return self.window.contains_many(sites).all()

    def psi_h(self, z):
        z = tuple(int(v) for v in z)
        if z not in self._cache:
            L0, K = self.cfg.L0, self.cfg.K_eff
            if not self.u_z_fits(z):
                raise ValueError(f"U_z for z={z} leaves the window")
            U = SiteSet(_lattice_box(z, -K * L0 + 1, K * L0 - 1, self.d))
            psi, h = decompose_batch(self.window, self.values, U, check=False)
            self._cache[z] = (psi, h)
        return self._cache[z]

    def _gamma_components(self, z, i_sample):
        """Big components of B_z cap {psi^z >= gamma} for one sample."""
        key = (z, i_sample)
        if key not in self._comp_cache:
            L0 = self.cfg.L0
            psi, _ = self.psi_h(z)
            bsites = _lattice_box(z, 0, L0, self.d)
            bidx = self.window.index_of(bsites)
            mask = psi[i_sample, bidx] >= self.cfg.gamma
            self._comp_cache[key] = _big_components(bsites, mask, L0 / 10.0)
        return self._comp_cache[key]

    def classify(self, z, i_sample=0) -> BoxClassification:
        cfg = self.cfg
        L0 = cfg.L0
        z = tuple(int(v) for v in z)
        psi, h = self.psi_h(z)
        dsites = _lattice_box(z, -3 * L0, 4 * L0, self.d)
        didx = self.window.index_of(dsites)
        if (didx < 0).any():
            raise ValueError(f"D_z for z={z} leaves the window")
        h_good = bool(h[i_sample, didx].min() > -cfg.a)

        comps = self._gamma_components(z, i_sample)
        psi_good = bool(comps)
        if psi_good:
            # linking clause: every big gamma-component of each adjacent box
            # must connect to each of ours inside D_z at the lower level delta
            delta_mask = psi[i_sample, didx] >= cfg.delta
            delta_idx = None
            for ax in range(self.d):
                for sgn in (1, -1):
                    if not psi_good:
                        break
                    zp = tuple(np.asarray(z) + sgn * L0 * np.eye(self.d, dtype=int)[ax])
                    if not self.u_z_fits(zp):
                        continue
                    n_comps = self._gamma_components(zp, i_sample)
                    if not n_comps:
                        continue
                    if not delta_mask.any():
                        psi_good = False
                        break
                    if delta_idx is None:
                        dset = SiteSet(dsites[delta_mask])
                        delta_idx = ConnectivityIndex(
                            LevelSetMask(dset, np.ones(len(dset), bool), 0.0))
                    for ca in comps:
                        ra = set(delta_idx.roots_of(SiteSet(ca))) - {0}
                        for cb in n_comps:
                            rb = set(delta_idx.roots_of(SiteSet(cb))) - {0}
                            if not (ra & rb):
                                psi_good = False
                                break
                        if not psi_good:
                            break
                if not psi_good:
                    break
        return BoxClassification(z=z, psi_good=psi_good, h_good=h_good)

    def classify_all(self, i_sample=0):
        return {z: self.classify(z, i_sample) for z in self.centers()}


def classify_box(z, phi: FieldSample, cfg: CoarseGrainConfig) -> BoxClassification:
    """One-box convenience wrapper (decompositions are not reused)."""
    return BoxClassifier(phi.window, phi.values[None], cfg).classify(z)


def bad_event_count(classifications, N, cfg: CoarseGrainConfig):
    """Per-direction counts of L0-box columns containing a psi-bad box,
    plus the reported threshold rho(L0) (N_{L0}/L0)^{d-1} with
    N_{L0} = L0^{d-1}/log L0."""
    d = cfg.d
    L0 = cfg.L0
    cols = [set() for _ in range(d)]
    for z, cl in classifications.items():
        if not cl.psi_good:
            for ax in range(d):
                key = tuple(v for j, v in enumerate(z) if j != ax)
                cols[ax].add(key)
    counts = [len(c) for c in cols]
    NL0 = L0 ** (d - 1) / math.log(L0) if L0 > 1 else 1.0
    threshold = cfg.rho(L0) * (NL0 / L0) ** (d - 1)
    return {"counts": counts, "threshold": threshold,
            "region_truncated_to_window": True}


@dataclass
class InterfaceSpec:
    """A coarse-graining outcome: selected box labels, their discrete
    filling, the scaled compact filling, and the segmentation record."""

    centers: list                 # box labels in C
    C: SiteSet                    # discrete filling
    sigma_lo: np.ndarray          # continuum boxes of Sigma (1/N scaled)
    sigma_hi: np.ndarray
    u0_lo: np.ndarray             # continuum boxes whose union is U_0
    u0_hi: np.ndarray
    kappa: dict                   # (S_hat, S_tilde, per-x projections/choices)
    L0: int
    N: int

    def kappa_json(self):
        return json.dumps(self.kappa, sort_keys=True)


class _BoxSums:
    """O(1) box sums over a boolean grid via a summed-area table."""

    def __init__(self, occupied, box: Box):
        self.box = box
        table = occupied.astype(np.int64)
        for ax in range(occupied.ndim):
            table = table.cumsum(axis=ax)
        self.table = np.pad(table, [(1, 0)] * occupied.ndim)
        self.shape = np.array(occupied.shape)

    def ball_count(self, center, r):
        """Occupied count in B_inf(center, r); cells beyond the grid count
        as occupied (the unclassifiable exterior belongs to the filled side)."""
        c = np.asarray(center, np.int64)
        full = (2 * r + 1) ** len(c)
        lo = np.clip(c - r - self.box.lo, 0, self.shape)
        hi = np.clip(c + r - self.box.lo + 1, 0, self.shape)
        if np.any(hi <= lo):
            return full, full
        d = len(c)
        total = 0
        for mask in range(1 << d):
            idx = tuple(hi[j] if not (mask >> j) & 1 else lo[j] for j in range(d))
            sign = -1 if bin(mask).count("1") % 2 else 1
            total += sign * int(self.table[idx])
        clipped = int(np.prod(hi - lo))
        return total + (full - clipped), full


def extract_interface(classifications, A_N: SiteSet, cfg: CoarseGrainConfig,
                      window: SiteSet):
    """Blocking-interface extraction from one sample's box classifications.

    Flood-fills the set of boxes reachable from outside the classified core
    through good boxes (the outermost unclassifiable layer seeds the fill),
    measures its local density on the Lhat0 lattice, greedily selects the
    sparse segmentation set, and within each selected region picks h-bad,
    psi-good boxes with projected mutual distances >= 4 K L0. Returns an
    InterfaceSpec, or None with a diagnostic when the target cardinality is
    unreachable.
    """
    d = cfg.d
    L0 = cfg.L0
    Lhat0 = cfg.Lhat0
    N = cfg.N
    zs = sorted(classifications.keys())
    if not zs:
        return None, "no classifiable boxes"
    good = {z for z, cl in classifications.items() if cl.psi_good and cl.h_good}
    zarr = np.array(zs)
    zlo, zhi = zarr.min(axis=0), zarr.max(axis=0)

    # flood fill from outside the classified core through good boxes
    in_u1 = set()
    frontier = []
    for z in zs:
        if z in good and any(not (tuple(np.asarray(z) + sgn * L0 * np.eye(d, dtype=int)[ax])
                                  in classifications)
                             for ax in range(d) for sgn in (1, -1)):
            frontier.append(z)
            in_u1.add(z)
    seen = set(frontier)
    while frontier:
        z = frontier.pop()
        for ax in range(d):
            for sgn in (1, -1):
                nb = tuple(np.asarray(z) + sgn * L0 * np.eye(d, dtype=int)[ax])
                if nb in classifications and nb not in seen:
                    seen.add(nb)
                    in_u1.add(nb)
                    if nb in good:
                        frontier.append(nb)
    # the bad boxes adjacent to the filled region (or core boundary) are
    # included; the good-connected interior plus seeds is in_u1 already

    # site occupancy of the filled region over the classified core
    core_lo = zlo
    core_hi = zhi + L0 - 1
    box = Box(core_lo, core_hi)
    occ = np.zeros(box.shape, bool)
    for z in in_u1:
        rel = np.asarray(z) - core_lo
        sl = tuple(slice(r, r + L0) for r in rel)
        occ[sl] = True

    if A_N is not None and len(A_N):
        aidx = A_N.sites - core_lo
        ok = np.all((aidx >= 0) & (aidx < np.array(box.shape)), axis=1)
        if ok.any() and occ[tuple(aidx[ok].T)].any():
            return None, "connected: filled region reaches the blow-up"

    # local density on the Lhat0-lattice (spacing Lhat0 / (100 d))
    spacing = max(1, Lhat0 // (100 * d))
    xs = [np.arange(int(np.ceil(core_lo[j] / spacing)) * spacing,
                    core_hi[j] + 1, spacing) for j in range(d)]
    mesh = np.meshgrid(*xs, indexing="ij")
    lattice_pts = np.stack([m.ravel() for m in mesh], axis=1)
    sums = _BoxSums(occ, box)
    s_hat = []
    for x in lattice_pts:
        cnt, full = sums.ball_count(x, Lhat0)
        frac = cnt / full
        if 0.25 <= frac <= 0.75:
            s_hat.append(tuple(int(v) for v in x))
    if not s_hat:
        return None, "segmentation empty: no intermediate-density region"

    # greedy maximal subset with disjoint B(x, 2 Lhat0), lexicographic order
    s_tilde = []
    for x in sorted(s_hat):
        if all(max(abs(a - b) for a, b in zip(x, y)) > 4 * Lhat0 for y in s_tilde):
            s_tilde.append(x)

    # candidate blocking boxes per selected point
    target = int((cfg.c_prime / cfg.K_eff * Lhat0 / L0) ** (d - 1))
    if target < 1:
        return None, f"target cardinality {target} < 1; scales too tight"
    kbar = 4 * cfg.K_eff
    per_x = {}
    chosen = []
    for x in s_tilde:
        cands = [z for z in zs
                 if classifications[z].psi_good and not classifications[z].h_good
                 and all(zj + L0 > xj - Lhat0 and zj <= xj + Lhat0
                         for zj, xj in zip(z, x))]
        best = None
        for ax in range(d):
            sel = []
            for z in sorted(cands):
                proj = tuple(v for j, v in enumerate(z) if j != ax)
                if all(max(abs(a - b) for a, b in zip(proj, q)) >= kbar * L0
                       for q in [tuple(v for j, v in enumerate(w) if j != ax)
                                 for w in sel]):
                    sel.append(z)
                if len(sel) >= target:
                    break
            if best is None or len(sel) > len(best[1]):
                best = (ax, sel)
            if len(sel) >= target:
                break
        if len(best[1]) < target:
            return None, (f"target cardinality {target} unreachable at x={x}: "
                          f"best {len(best[1])}")
        per_x[x] = best
        chosen.extend(best[1])

    centers = sorted(set(chosen))
    csites = np.vstack([_lattice_box(z, 0, L0, d) for z in centers])
    sigma_lo = np.array([np.asarray(z) / N for z in centers])
    sigma_hi = np.array([(np.asarray(z) + L0) / N for z in centers])
    u0_lo, u0_hi = _segmentation_boxes(s_hat, 2 * spacing, d, N)
    kappa = {
        "S_hat": [list(map(int, x)) for x in sorted(s_hat)],
        "S_tilde": [list(map(int, x)) for x in s_tilde],
        "choices": {",".join(map(str, x)): {"axis": int(per_x[x][0]),
                                            "boxes": [list(map(int, z))
                                                      for z in per_x[x][1]]}
                    for x in s_tilde},
    }
    spec = InterfaceSpec(centers=centers, C=SiteSet(csites),
                         sigma_lo=sigma_lo, sigma_hi=sigma_hi,
                         u0_lo=u0_lo, u0_hi=u0_hi, kappa=kappa,
                         L0=L0, N=N)
    return spec, "ok"


def _segmentation_boxes(s_hat, r, d, N):
    """U_0 = complement of the unbounded component of the complement of the
    union of B_inf(x, r), x in S_hat, scaled by 1/N: the union boxes plus
    any bounded holes, found by a rasterized flood fill at unit pitch."""
    pts = np.array(sorted(s_hat))
    lo = pts - r
    hi = pts + r
    glo = lo.min(axis=0) - 2
    ghi = hi.max(axis=0) + 2
    shape = tuple(ghi - glo + 1)
    inside = np.zeros(shape, bool)
    for a, b in zip(lo, hi):
        sl = tuple(slice(x - g, y - g + 1) for x, y, g in zip(a, b, glo))
        inside[sl] = True
    from . import kernels
    labels, n = kernels.label_mask(~inside)
    border_labels = set()
    for ax in range(d):
        sl0 = [slice(None)] * d
        sl1 = [slice(None)] * d
        sl0[ax] = 0
        sl1[ax] = -1
        border_labels |= set(np.unique(labels[tuple(sl0)]))
        border_labels |= set(np.unique(labels[tuple(sl1)]))
    border_labels.discard(0)
    hole = (labels != 0) & ~np.isin(labels, sorted(border_labels))
    boxes_lo = [a / N for a in lo]
    boxes_hi = [(b + 1e-9) / N for b in hi]
    if hole.any():
        # merge hole cells into runs along the last axis
        flat = hole.reshape(-1, hole.shape[-1])
        lead = np.argwhere(flat.any(axis=1)).ravel()
        for row in lead:
            mask = flat[row]
            ks = np.flatnonzero(mask)
            splits = np.split(ks, np.flatnonzero(np.diff(ks) > 1) + 1)
            lead_idx = np.unravel_index(row * hole.shape[-1], hole.shape)[:-1]
            base = np.asarray(lead_idx) + glo[:-1]
            for run in splits:
                c_lo = np.append(base - 0.5, run[0] + glo[-1] - 0.5)
                c_hi = np.append(base + 0.5, run[-1] + glo[-1] + 0.5)
                boxes_lo.append(c_lo / N)
                boxes_hi.append(c_hi / N)
    return np.array(boxes_lo), np.array(boxes_hi)


def interface_volume_capacity(spec: InterfaceSpec, N: int, gt: GreenTable,
                              max_sites=8000):
    """(|C|/N^d, d cap_Zd(C)/N^{d-2}); large interfaces are thinned to every
    other box (reported) to stay within the dense-solver budget."""
    if spec is None or not len(spec.C):
        return 0.0, 0.0, {"subsampled": False}
    d = gt.d
    vol = len(spec.C) / float(N) ** d
    centers = spec.centers
    subsampled = False
    while True:
        csites = np.vstack([_lattice_box(z, 0, spec.L0, d) for z in centers])
        if len(exposed_sites(SiteSet(csites))) <= max_sites:
            break
        centers = centers[::2]
        subsampled = True
    eq = equilibrium_measure(gt, SiteSet(csites))
    cap = d * eq.capacity / float(N) ** (d - 2)
    return vol, cap, {"subsampled": subsampled, "n_boxes_used": len(centers)}
