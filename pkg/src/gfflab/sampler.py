"""Exact sampling of the Gaussian free field on finite windows.

One dense symmetric factorization of the window Green matrix is reused
across draws; seeds expand to per-chunk streams through SeedSequence
spawning, so results do not depend on worker count or batching. The same
factorization provides the Cameron-Martin weights for shifted (tilted)
sampling and the harmonic/local decomposition solves are sparse.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky
from scipy.sparse.linalg import splu

from .green import GreenTable
from .lattice import SiteSet, neighbors
from .potential import _killed_system

__all__ = [
    "FieldSample", "Decomposition", "WindowSampler",
    "decompose", "decompose_batch", "gaussian_tail_check",
]

MAX_WINDOW_SITES = 4000
CHUNK = 1024


@dataclass
class FieldSample:
    """One field realization on a window (values in canonical site order)."""

    window: SiteSet
    values: np.ndarray
    seed: int
    shift: np.ndarray = None
    log_weight: float = None

    def value_at(self, x):
        i = self.window.index_of(np.asarray(x)[None])[0]
        if i < 0:
            raise KeyError(f"site {x} not in window")
        return float(self.values[i])


@dataclass
class Decomposition:
    """phi = psi + h with h harmonic on U and psi = 0 off U."""

    psi: np.ndarray
    h: np.ndarray
    U: SiteSet


def _site_hash(arr):
    return hashlib.sha1(np.ascontiguousarray(arr).tobytes()).hexdigest()[:12]


class WindowSampler:
    """Sampler with exact covariance g restricted to a window."""

    def __init__(self, gt: GreenTable, window: SiteSet, max_sites=MAX_WINDOW_SITES):
        if len(window) > max_sites:
            raise ValueError(
                f"window has {len(window)} sites, over the factorization cap {max_sites}")
        self.gt = gt
        self.window = window
        self.G = gt.matrix(window.sites)
        try:
            self._chol = cholesky(self.G, lower=True, check_finite=False)
            self._cf = cho_factor(self.G, check_finite=False)
        except np.linalg.LinAlgError as e:
            raise RuntimeError("window Green matrix is not positive definite; "
                               "Green cache is corrupted") from e
        self.window_hash = _site_hash(window.sites)

    @property
    def n_sites(self):
        return len(self.window)

    def sample_array(self, n, seed):
        """(n, n_sites) i.i.d. draws; deterministic in (window, seed)."""
        out = np.empty((n, self.n_sites))
        streams = np.random.SeedSequence(seed).spawn((n + CHUNK - 1) // CHUNK)
        for c, ss in enumerate(streams):
            a = c * CHUNK
            b = min(a + CHUNK, n)
            # one row of normals per sample: draws for sample i never depend
            # on how many later samples are requested
            z = np.random.default_rng(ss).standard_normal((b - a, self.n_sites))
            out[a:b] = z @ self._chol.T
        return out

    def sample(self, n, seed):
        vals = self.sample_array(n, seed)
        return [FieldSample(self.window, vals[i], seed) for i in range(n)]

    def preimage(self, f):
        """lambda = G^{-1} f, the Cameron-Martin direction of a shift f."""
        f = np.asarray(f, float)
        if f.shape != (self.n_sites,):
            raise ValueError("shift must be given on the window")
        return cho_solve(self._cf, f, check_finite=False)

    def sample_shifted_array(self, f, n, seed):
        """Draws of phi' + f plus log dP/dP^f per draw:
        log w = -<lambda, phi> + (1/2) <lambda, f>."""
        f = np.asarray(f, float)
        lam = self.preimage(f)
        vals = self.sample_array(n, seed)
        vals += f
        logw = -(vals @ lam) + 0.5 * float(lam @ f)
        return vals, logw

    def sample_shifted(self, f, n, seed):
        vals, logw = self.sample_shifted_array(f, n, seed)
        return [FieldSample(self.window, vals[i], seed, shift=np.asarray(f, float),
                            log_weight=float(logw[i])) for i in range(n)]

    def shift_hash(self, f):
        return _site_hash(np.asarray(f, float))


# ---------------------------------------------------------------------------
# domain-Markov decomposition
# ---------------------------------------------------------------------------

def _check_U(window: SiteSet, U: SiteSet):
    if len(U) == 0:
        return
    if not window.contains_many(U.sites).all():
        raise ValueError("U must be contained in the window")
    for s in U.sites.tolist():
        for nb in neighbors(s).tolist():
            if tuple(nb) not in U._key_set() and nb not in window:
                raise ValueError("outer boundary of U leaves the window")


def decompose_batch(window: SiteSet, values, U: SiteSet, check=True):
    """Split many samples at once: returns (psi, h), each (n, n_sites)."""
    values = np.atleast_2d(values)
    if check:
        _check_U(window, U)
    h = values.copy()
    psi = np.zeros_like(values)
    if len(U) == 0:
        return psi, h
    uidx = window.index_of(U.sites)
    A = _killed_system(U)
    lu = splu(A.tocsc())
    d = window.d
    # rhs_i = (1/2d) sum over neighbors outside U of phi_neighbor
    rows, wcols = [], []
    for i, s in enumerate(U.sites.tolist()):
        for nb in neighbors(s).tolist():
            if tuple(nb) not in U._key_set():
                rows.append(i)
                wcols.append(window.index_of(np.asarray(nb)[None])[0])
    rows = np.asarray(rows)
    wcols = np.asarray(wcols)
    rhs = np.zeros((len(U), values.shape[0]))
    np.add.at(rhs, rows, values[:, wcols].T / (2 * d))
    hU = lu.solve(rhs)
    h[:, uidx] = hU.T
    psi[:, uidx] = values[:, uidx] - hU.T
    return psi, h


def decompose(phi: FieldSample, U: SiteSet) -> Decomposition:
    """Harmonic average h on U with boundary data phi, local field psi = phi - h."""
    psi, h = decompose_batch(phi.window, phi.values[None], U)
    return Decomposition(psi=psi[0], h=h[0], U=U)


# ---------------------------------------------------------------------------
# Gaussian quadratic-tail inequality check
# ---------------------------------------------------------------------------

def gaussian_tail_check(G, t_grid, n_draws, seed=0):
    """Empirical tails of sum Y_i^2 against the quadratic concentration bound
    exp{-(1/8) min(t / Gbar, t^2 / tr(G^2))}.

    Returns a list of rows (t, empirical_tail, bound).
    """
    G = np.asarray(G, float)
    m = G.shape[0]
    L = cholesky(G, lower=True, check_finite=False)
    trG = float(np.trace(G))
    trG2 = float((G * G).sum())
    gbar = float(np.abs(G).sum(axis=1).max())
    t_grid = np.asarray(t_grid, float)
    counts = np.zeros(len(t_grid))
    streams = np.random.SeedSequence(seed).spawn((n_draws + CHUNK - 1) // CHUNK)
    done = 0
    for ss in streams:
        b = min(CHUNK, n_draws - done)
        z = np.random.default_rng(ss).standard_normal((m, b))
        s = ((L @ z) ** 2).sum(axis=0)
        counts += (s[None, :] >= trG + t_grid[:, None]).sum(axis=1)
        done += b
    rows = []
    for t, c in zip(t_grid, counts):
        if t <= 0:
            bound = 1.0
        else:
            bound = float(np.exp(-0.125 * min(t / gbar, t * t / trG2)))
        rows.append((float(t), float(c / n_draws), bound))
    return rows


def samples_to_csv(window: SiteSet, values, path):
    """One row per site: coordinates then one column per sample."""
    values = np.atleast_2d(values)
    arr = np.column_stack([window.sites, values.T])
    hdr = " ".join(f"x{j}" for j in range(window.d)) + " " + \
        " ".join(f"sample{i}" for i in range(values.shape[0]))
    np.savetxt(path, arr, fmt="%.17g", header=hdr, comments="")
