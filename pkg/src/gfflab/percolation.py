"""Level sets of a field sample, connectivity under 2d-adjacency, and the
disconnection event (no open path joining a blow-up to the boundary shell).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .lattice import SiteSet
from .sampler import FieldSample

__all__ = ["LevelSetMask", "ConnectivityIndex", "level_set",
           "is_disconnected", "component_stats"]


@dataclass
class LevelSetMask:
    window: SiteSet
    mask: np.ndarray          # bool per site, canonical order
    alpha: float


class ConnectivityIndex:
    """Connected-component index of a level-set mask.

    Two sites share a root iff a nearest-neighbor path inside the mask
    joins them. Built by one labeling sweep over the window grid.
    """

    def __init__(self, mask: LevelSetMask):
        self.window = mask.window
        box = mask.window.bounding_box
        grid = np.zeros(box.shape, bool)
        rel = mask.window.sites - box.lo
        grid[tuple(rel.T)] = mask.mask
        labels, n = kernels.label_mask(grid)
        self.box = box
        self.labels = labels
        self.n_components = n
        self._site_labels = labels[tuple(rel.T)]

    def root(self, x):
        """Component id at site x (0 if closed)."""
        rel = np.asarray(x, np.int64) - self.box.lo
        return int(self.labels[tuple(rel)])

    def roots_of(self, sites: SiteSet):
        rel = sites.sites - self.box.lo
        ok = np.all((rel >= 0) & (rel < np.array(self.box.shape)), axis=1)
        out = np.zeros(len(sites), np.int64)
        out[ok] = self.labels[tuple(rel[ok].T)]
        return out

    def connected(self, x, y):
        rx, ry = self.root(x), self.root(y)
        return rx != 0 and rx == ry


def level_set(phi: FieldSample, alpha: float) -> LevelSetMask:
    """Mask of sites with phi >= alpha."""
    return LevelSetMask(phi.window, phi.values >= alpha, alpha)


def is_disconnected(phi: FieldSample, alpha: float, A_N: SiteSet,
                    S_N: SiteSet) -> bool:
    """True iff no open nearest-neighbor path joins A_N to S_N at level alpha."""
    if A_N.contains_many(S_N.sites).any():
        raise ValueError("A_N and S_N overlap")
    mask = level_set(phi, alpha)
    return mask_disconnects(mask, A_N, S_N)


def mask_disconnects(mask: LevelSetMask, A_N: SiteSet, S_N: SiteSet) -> bool:
    idx = ConnectivityIndex(mask)
    ra = set(idx.roots_of(A_N)) - {0}
    if not ra:
        return True
    rs = set(idx.roots_of(S_N)) - {0}
    return not (ra & rs)


def disconnects_batch(window: SiteSet, values, alpha, A_N: SiteSet,
                      S_N: SiteSet) -> np.ndarray:
    """Vectorized-over-samples disconnection indicator for (n, n_sites) values."""
    if A_N.contains_many(S_N.sites).any():
        raise ValueError("A_N and S_N overlap")
    values = np.atleast_2d(values)
    out = np.empty(len(values), bool)
    for i, v in enumerate(values):
        out[i] = mask_disconnects(LevelSetMask(window, v >= alpha, alpha), A_N, S_N)
    return out


def component_stats(mask: LevelSetMask):
    """Per component: (site count, sup-norm diameter)."""
    idx = ConnectivityIndex(mask)
    if idx.n_components == 0:
        return []
    sites = mask.window.sites[mask.mask]
    labels = idx._site_labels[mask.mask]
    out = []
    for lab in range(1, idx.n_components + 1):
        pts = sites[labels == lab]
        diam = int((pts.max(axis=0) - pts.min(axis=0)).max()) if len(pts) else 0
        out.append((int(len(pts)), diam))
    return out


def mask_to_csv(mask: LevelSetMask, path):
    """Diagnostic dump: site coords + 0/1 openness."""
    arr = np.column_stack([mask.window.sites, mask.mask.astype(int)])
    hdr = " ".join(f"x{j}" for j in range(mask.window.d)) + " open"
    np.savetxt(path, arr, fmt="%d", header=hdr, comments="")
