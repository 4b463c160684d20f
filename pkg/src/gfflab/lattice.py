"""Lattice geometry: sites, sup-norm boxes, blow-ups of continuum shapes,
boundary shells and nearest-neighbor adjacency.

Sites are integer vectors in Z^d, d >= 3, held as (n, d) int64 arrays.
All containers are immutable after construction and safe to share across
workers.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Box",
    "ShapeSpec",
    "SiteSet",
    "blow_up",
    "boundary_shell",
    "neighbors",
]


@dataclass(frozen=True)
class Box:
    """Integer lattice box [lo, hi], inclusive on both ends."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, np.int64))
        object.__setattr__(self, "hi", np.asarray(self.hi, np.int64))
        if np.any(self.hi < self.lo):
            raise ValueError("empty box")

    @property
    def shape(self):
        return tuple(int(s) for s in (self.hi - self.lo + 1))

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)


class ShapeSpec:
    """A compact continuum shape: a union of axis-aligned boxes, a Euclidean
    ball, or a sup-norm ball, contained in the open box (-M, M)^d.

    Parameters use continuum units; the blow-up by N lands on Z^d.
    """

    KINDS = ("box-union", "euclidean-ball", "l-inf-ball")

    def __init__(self, kind, *, boxes=None, center=None, radius=None,
                 enclosing_M=None, d=3):
        if kind not in self.KINDS:
            raise ValueError(f"unknown shape kind {kind!r}")
        self.kind = kind
        self.d = d
        if kind == "box-union":
            if not boxes:
                raise ValueError("box-union needs at least one box")
            lo = np.array([b[0] for b in boxes], float)
            hi = np.array([b[1] for b in boxes], float)
            if lo.shape[1] != d or np.any(hi <= lo):
                raise ValueError("boxes must be non-degenerate d-dim intervals")
            self.boxes_lo, self.boxes_hi = lo, hi
            bb_lo, bb_hi = lo.min(axis=0), hi.max(axis=0)
        else:
            self.center = np.asarray(center if center is not None else np.zeros(d), float)
            self.radius = float(radius)
            if self.radius <= 0:
                raise ValueError("ball radius must be positive")
            bb_lo = self.center - self.radius
            bb_hi = self.center + self.radius
        self.bbox = (bb_lo, bb_hi)
        if enclosing_M is None:
            enclosing_M = float(np.abs(np.concatenate(self.bbox)).max()) * 1.001
        self.enclosing_M = float(enclosing_M)
        if np.abs(np.concatenate(self.bbox)).max() >= self.enclosing_M:
            raise ValueError("shape must sit strictly inside (-M, M)^d")

    def contains(self, pts):
        """Membership of continuum points (n, d); closed shape."""
        pts = np.atleast_2d(np.asarray(pts, float))
        if self.kind == "box-union":
            ok = (pts[:, None, :] >= self.boxes_lo[None]) & (pts[:, None, :] <= self.boxes_hi[None])
            return ok.all(axis=2).any(axis=1)
        delta = pts - self.center
        if self.kind == "euclidean-ball":
            return (delta * delta).sum(axis=1) <= self.radius ** 2 + 1e-12
        return np.abs(delta).max(axis=1) <= self.radius + 1e-12


class SiteSet:
    """A finite, deduplicated set of lattice sites in canonical (lex) order."""

    def __init__(self, sites):
        sites = np.atleast_2d(np.asarray(sites, np.int64))
        if sites.size == 0:
            sites = sites.reshape(0, sites.shape[1] if sites.ndim == 2 else 0)
        else:
            sites = np.unique(sites, axis=0)
        self.sites = sites
        self.sites.setflags(write=False)
        self.d = sites.shape[1]
        if len(sites):
            self.bounding_box = Box(sites.min(axis=0), sites.max(axis=0))
        else:
            self.bounding_box = None
        self._keys = None

    def __len__(self):
        return len(self.sites)

    def __iter__(self):
        return iter(map(tuple, self.sites))

    def _key_set(self):
        if self._keys is None:
            self._keys = {tuple(s) for s in self.sites.tolist()}
        return self._keys

    def __contains__(self, x):
        return tuple(int(v) for v in x) in self._key_set()

    def contains_many(self, pts):
        keys = self._key_set()
        pts = np.atleast_2d(pts)
        return np.fromiter((tuple(p) in keys for p in pts.tolist()),
                           dtype=bool, count=len(pts))

    def index_of(self, pts):
        """Row indices of pts within this set (-1 where absent)."""
        if not hasattr(self, "_lookup"):
            self._lookup = {tuple(s): i for i, s in enumerate(self.sites.tolist())}
        lookup = self._lookup
        pts = np.atleast_2d(pts)
        return np.array([lookup.get(tuple(p), -1) for p in pts.tolist()], np.int64)

    def intersect(self, other):
        if not len(self):
            return self
        return SiteSet(self.sites[other.contains_many(self.sites)])

    def union(self, other):
        if not len(self):
            return other
        if not len(other):
            return self
        return SiteSet(np.vstack([self.sites, other.sites]))

    def difference(self, other):
        if not len(self) or not len(other):
            return self
        return SiteSet(self.sites[~other.contains_many(self.sites)])

    def mask_on(self, box: Box):
        """Boolean occupancy grid of this set over an enclosing Box."""
        grid = np.zeros(box.shape, bool)
        if len(self):
            rel = self.sites - box.lo
            grid[tuple(rel.T)] = True
        return grid

    def to_text(self, path):
        """One site per line, space-separated coordinates."""
        np.savetxt(path, self.sites, fmt="%d")

    @classmethod
    def from_text(cls, path, d=None):
        arr = np.loadtxt(path, dtype=np.int64, ndmin=2)
        if d is not None and arr.shape[1] != d:
            raise ValueError(f"expected dimension {d}, file has {arr.shape[1]}")
        return cls(arr)

    @classmethod
    def from_box(cls, box: Box):
        axes = [np.arange(lo, hi + 1) for lo, hi in zip(box.lo, box.hi)]
        grid = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([g.ravel() for g in grid], axis=1))

    @classmethod
    def ball_inf(cls, center, r, d=3):
        center = np.asarray(center, np.int64)
        return cls.from_box(Box(center - r, center + r))


def blow_up(shape: ShapeSpec, N: int) -> SiteSet:
    """Lattice points of N*shape."""
    if N < 1:
        raise ValueError("N must be a positive integer")
    lo = np.floor(N * shape.bbox[0]).astype(np.int64)
    hi = np.ceil(N * shape.bbox[1]).astype(np.int64)
    cand = SiteSet.from_box(Box(lo, hi)).sites
    inside = shape.contains(cand / N)
    if not inside.any():
        raise ValueError("blow-up is empty; shape has no lattice points at this N")
    return SiteSet(cand[inside])


def boundary_shell(M: float, N: int, d: int = 3) -> SiteSet:
    """Sites at sup-norm exactly floor(M*N)."""
    r = int(np.floor(M * N))
    if r < 1:
        raise ValueError("floor(M*N) must be >= 1")
    faces = []
    for j in range(d):
        axes = [np.arange(-r, r + 1)] * d
        for sign in (-r, r):
            axes_j = list(axes)
            axes_j[j] = np.array([sign])
            grid = np.meshgrid(*axes_j, indexing="ij")
            faces.append(np.stack([g.ravel() for g in grid], axis=1))
    return SiteSet(np.vstack(faces))


def neighbors(x):
    """The 2d nearest neighbors of a site."""
    x = np.asarray(x, np.int64)
    d = x.size
    eye = np.eye(d, dtype=np.int64)
    return np.vstack([x + eye, x - eye])
