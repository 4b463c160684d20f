import numpy as np
import pytest

from gfflab.green import GreenTable, c_d
from oracles import green_fourier

WATSON_G0 = 1.5163860591519780  # independent closed-form value in d = 3


def test_g0_matches_fourier_oracle(gt3):
    g0 = gt3.zero()
    assert abs(g0 - green_fourier([0, 0, 0])) < 1e-6
    assert abs(g0 - WATSON_G0) < 1e-9


def test_neighbor_identity(gt3):
    # (I - P) g = delta_0 plus symmetry gives g(0) = 1 + g(e1)
    assert abs(gt3.zero() - 1.0 - gt3((1, 0, 0))) < 1e-9


def test_harmonicity_off_origin(gt3):
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = rng.integers(-6, 7, 3)
        if (x == 0).all():
            x = np.array([2, 1, 0])
        nbs = np.vstack([x + e for e in np.vstack([np.eye(3, dtype=int),
                                                   -np.eye(3, dtype=int)])])
        assert abs(gt3(x) - gt3.exact_many(nbs).mean()) < 1e-9


def test_symmetry(gt3):
    rng = np.random.default_rng(4)
    xs = rng.integers(-15, 16, (20, 3))
    assert np.allclose(gt3.many(xs), gt3.many(-xs), rtol=0, atol=0)


def test_c_d_value():
    assert abs(c_d(3) - 3.0 / (2.0 * np.pi)) < 1e-15


def test_far_field_ratio_band(gt3):
    # exact quadrature values against C_3/|x| for 30 <= |x| <= 45
    rng = np.random.default_rng(5)
    pts = rng.integers(-45, 46, (60, 3))
    r = np.linalg.norm(pts, axis=1)
    keep = (r >= 30) & (r <= 45)
    pts, r = pts[keep], r[keep]
    ratio = gt3.exact_many(pts) * r / c_d(3)
    assert ratio.min() > 0.98 and ratio.max() < 1.02


def test_crossover_error_documented(gt3):
    # measured asymptotic error at the r_star shell stays below 1e-3
    pts = np.array([[20, 0, 0], [20, 20, 20], [20, 12, 9]])
    rel = np.abs(gt3.asymptotic_many(pts) / gt3.exact_many(pts) - 1.0)
    assert rel.max() < 1e-3


def test_hybrid_switches_at_r_star(gt3):
    inside = np.array([19, 0, 0])
    outside = np.array([20, 0, 0])
    assert gt3(inside) == pytest.approx(float(gt3.exact_many(inside[None])[0]), rel=1e-12)
    assert gt3(outside) == pytest.approx(float(gt3.asymptotic_many(outside[None])[0]), rel=0, abs=0)


def test_matrix_assembly(gt3):
    sites = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [5, 5, 5]])
    G = gt3.matrix(sites)
    assert np.allclose(G, G.T)
    for i in range(4):
        for j in range(4):
            assert G[i, j] == pytest.approx(gt3(sites[i] - sites[j]), rel=0, abs=0)


def test_save_load_roundtrip(tmp_path, gt3):
    p = tmp_path / "green.npz"
    gt3.save(p)
    gt2 = GreenTable.load(p)
    assert gt2.zero() == gt3.zero()
    assert gt2.key() == gt3.key()


def test_d4_identity():
    gt4 = GreenTable(d=4, r_star=10, log2_smax=18)
    g0 = gt4.zero()
    assert g0 > 1.0
    assert abs(g0 - 1.0 - gt4((1, 0, 0, 0))) < 1e-8


def test_rejects_d2():
    with pytest.raises(ValueError):
        GreenTable(d=2)
