import numpy as np
import pytest

from gfflab.lattice import Box, SiteSet, boundary_shell
from gfflab.percolation import (ConnectivityIndex, LevelSetMask,
                                component_stats, disconnects_batch,
                                is_disconnected, level_set)
from gfflab.sampler import FieldSample
from oracles import bfs_connected


def make_field(window, values):
    return FieldSample(window, np.asarray(values, float), seed=0)


@pytest.fixture(scope="module")
def window():
    return SiteSet.ball_inf((0, 0, 0), 3)


@pytest.fixture(scope="module")
def endsets():
    return SiteSet.ball_inf((0, 0, 0), 1), boundary_shell(1.0, 3)


def test_level_set_extremes(window):
    rng = np.random.default_rng(0)
    phi = make_field(window, rng.standard_normal(len(window)))
    assert level_set(phi, phi.values.min() - 1).mask.all()
    assert not level_set(phi, phi.values.max() + 1e-9).mask.any()


def test_level_set_nesting(window):
    rng = np.random.default_rng(1)
    phi = make_field(window, rng.standard_normal(len(window)))
    m1 = level_set(phi, -0.3).mask
    m2 = level_set(phi, 0.4).mask
    assert (m2 <= m1).all()


def test_disconnected_trivial_cases(window, endsets):
    A, S = endsets
    phi = make_field(window, np.full(len(window), -1.0))
    assert is_disconnected(phi, 0.0, A, S)          # empty level set
    phi2 = make_field(window, np.full(len(window), +1.0))
    assert not is_disconnected(phi2, 0.0, A, S)     # everything open


def test_blocking_slab(window, endsets):
    A, S = endsets
    # a full closed shell at sup-norm radius 2 separates A from S
    vals = np.ones(len(window))
    shell = np.abs(window.sites).max(axis=1) == 2
    vals[shell] = -1.0
    assert is_disconnected(make_field(window, vals), 0.0, A, S)
    # a slab only cuts one face; paths go around
    vals2 = np.ones(len(window))
    vals2[window.sites[:, 0] == 2] = -1.0
    assert not is_disconnected(make_field(window, vals2), 0.0, A, S)


def test_rejects_overlapping_sets(window):
    phi = make_field(window, np.zeros(len(window)))
    with pytest.raises(ValueError):
        is_disconnected(phi, 0.0, SiteSet.ball_inf((0, 0, 0), 3), boundary_shell(1.0, 3))


def test_agrees_with_bfs_oracle(window, endsets):
    A, S = endsets
    rng = np.random.default_rng(42)
    n_cases = 200
    vals = rng.standard_normal((n_cases, len(window)))
    got = disconnects_batch(window, vals, 0.0, A, S)
    sites = list(map(tuple, window.sites.tolist()))
    for i in range(n_cases):
        open_sites = {s for s, v in zip(sites, vals[i]) if v >= 0.0}
        want = not bfs_connected(open_sites, list(map(tuple, A.sites.tolist())),
                                 list(map(tuple, S.sites.tolist())))
        assert got[i] == want


def test_monotone_in_alpha(window, endsets):
    A, S = endsets
    rng = np.random.default_rng(3)
    for _ in range(20):
        phi = make_field(window, rng.standard_normal(len(window)))
        if not is_disconnected(phi, 0.3, A, S):
            assert not is_disconnected(phi, -0.2, A, S)


def test_component_stats_cases(window):
    empty = LevelSetMask(window, np.zeros(len(window), bool), 0.0)
    assert component_stats(empty) == []
    single = np.zeros(len(window), bool)
    single[window.index_of(np.array([[0, 0, 0]]))[0]] = True
    assert component_stats(LevelSetMask(window, single, 0.0)) == [(1, 0)]
    w5 = SiteSet.ball_inf((0, 0, 0), 2)
    full = LevelSetMask(w5, np.ones(len(w5), bool), 0.0)
    assert component_stats(full) == [(125, 4)]


def test_connectivity_index_roots(window):
    mask = np.zeros(len(window), bool)
    for s in [(0, 0, 0), (0, 0, 1), (3, 3, 3)]:
        mask[window.index_of(np.array([s]))[0]] = True
    idx = ConnectivityIndex(LevelSetMask(window, mask, 0.0))
    assert idx.n_components == 2
    assert idx.connected((0, 0, 0), (0, 0, 1))
    assert not idx.connected((0, 0, 0), (3, 3, 3))
    assert idx.root((1, 1, 1)) == 0


def test_order_independence(window, endsets):
    A, S = endsets
    rng = np.random.default_rng(9)
    vals = rng.standard_normal(len(window))
    perm = rng.permutation(len(window))
    w2 = SiteSet(window.sites[perm])        # same set, scrambled input order
    v2 = vals[perm][np.argsort(np.lexsort(window.sites[perm].T[::-1]))]
    phi1 = make_field(window, vals)
    r1 = is_disconnected(phi1, 0.0, A, S)
    # canonical ordering makes the scrambled construction identical
    order = np.lexsort(window.sites[perm].T[::-1])
    phi2 = make_field(w2, vals[perm][order])
    r2 = is_disconnected(phi2, 0.0, A, S)
    assert r1 == r2
