import json

import numpy as np
import pytest

from gfflab.coarse import (BoxClassification, BoxClassifier, CoarseGrainConfig,
                           ReducedScales, bad_event_count, check_gamma_rule,
                           extract_interface, gamma_rule_value,
                           interface_volume_capacity, scales)
from gfflab.lattice import SiteSet
from gfflab.sampler import FieldSample, decompose_batch
from oracles import bfs_connected


def reduced_cfg(N=20, M=1.0, alpha=-0.5, delta=0.0, gamma=0.5, L0=2,
                Lhat0=20, K=5, c_prime=1.0):
    return CoarseGrainConfig(N=N, M=M, alpha=alpha, delta=delta, gamma=gamma,
                             reduced=ReducedScales(L0=L0, Lhat0=Lhat0, K=K),
                             c_prime=c_prime)


# -- scales ---------------------------------------------------------------------

def test_scales_arithmetic():
    L0, Lhat0 = scales(1000, "d3-default", 3)
    gN = gamma_rule_value("d3-default", 1000, 3)
    assert gN == pytest.approx(0.21845, abs=1e-4)
    assert L0 == 177
    assert Lhat0 == 300 * 467 == 140100


def test_scale_ordering_at_large_N():
    from gfflab.coarse import scale_ordering_threshold
    L0, Lhat0 = scales(10 ** 6, "d3-default", 3)
    assert 0 < L0 <= Lhat0
    thresh = scale_ordering_threshold("d3-default", 3)
    La, Lb = scales(thresh, "d3-default", 3)
    assert La <= Lb


def test_gamma_rules_pass_conditions():
    assert check_gamma_rule("d3-default", 3)
    assert check_gamma_rule("general-default", 4)
    with pytest.raises(ValueError):
        gamma_rule_value("bogus", 100, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        CoarseGrainConfig(N=10, M=1, alpha=0.5, delta=0.0, gamma=1.0)
    with pytest.raises(ValueError):
        CoarseGrainConfig(N=10, M=1, alpha=-1, delta=0, gamma=1, K=50)
    with pytest.raises(ValueError):
        reduced_cfg(K=3)  # U_z cannot contain D_z
    assert reduced_cfg().non_asymptotic
    assert "L0" in reduced_cfg().manifest()


# -- classification ----------------------------------------------------------------

@pytest.fixture(scope="module")
def iid_window():
    return SiteSet.ball_inf((0, 0, 0), 12)


def brute_force_classify(window, psi_h_of, cfg, z, i):
    """Literal re-implementation of the two predicates (explicit infimum and
    pure-python BFS). Shares the harmonic/local decomposition with the
    classifier; the predicate logic is evaluated independently."""
    d = cfg.d
    L0 = cfg.L0
    z = np.asarray(z)

    def box_sites(center, lo, hi):
        ax = [range(int(center[j]) + lo, int(center[j]) + hi) for j in range(d)]
        out = []

        def rec(prefix, rem):
            if not rem:
                out.append(tuple(prefix))
                return
            for v in rem[0]:
                rec(prefix + [v], rem[1:])
        rec([], ax)
        return out

    site_list = list(map(tuple, window.sites.tolist()))

    def fields(center):
        psi, h = psi_h_of(tuple(int(v) for v in center))
        return (dict(zip(site_list, psi[i])), dict(zip(site_list, h[i])))

    psi_z, h_z = fields(z)
    dsites = box_sites(z, -3 * L0, 4 * L0)
    h_good = min(h_z[s] for s in dsites) > -cfg.a

    def big_components(center, psi_map):
        bs = box_sites(center, 0, L0)
        open_set = {s for s in bs if psi_map[s] >= cfg.gamma}
        comps = []
        left = set(open_set)
        while left:
            seed = left.pop()
            comp = {seed}
            stack = [seed]
            while stack:
                cur = stack.pop()
                for j in range(d):
                    for sgn in (1, -1):
                        nb = cur[:j] + (cur[j] + sgn,) + cur[j + 1:]
                        if nb in open_set and nb not in comp:
                            comp.add(nb)
                            left.discard(nb)
                            stack.append(nb)
            diam = max(max(p[j] for p in comp) - min(p[j] for p in comp)
                       for j in range(d))
            if diam >= L0 / 10.0:
                comps.append(comp)
        return comps

    comps = big_components(z, psi_z)
    psi_good = bool(comps)
    if psi_good:
        delta_open = {s for s in dsites if psi_z[s] >= cfg.delta}
        for ax in range(d):
            for sgn in (1, -1):
                zp = z + sgn * L0 * np.eye(d, dtype=int)[ax]
                try:
                    psi_p, _ = fields(zp)
                except ValueError:
                    continue
                for cb in big_components(zp, psi_p):
                    for ca in comps:
                        if not bfs_connected(delta_open, list(ca), list(cb)):
                            psi_good = False
    return BoxClassification(z=tuple(int(v) for v in z), psi_good=psi_good,
                             h_good=h_good)


def test_classify_constant_fields(iid_window):
    cfg = reduced_cfg()
    # constant field: harmonic part is the constant, local field vanishes;
    # so the box is h-good but has no gamma-crossing cluster
    vals = np.full(len(iid_window), cfg.gamma + 1.0)
    clf = BoxClassifier(iid_window, vals[None], cfg)
    cl = clf.classify((0, 0, 0))
    assert cl.h_good
    assert not cl.psi_good
    vals2 = np.full(len(iid_window), -cfg.a - 1.0)
    cl2 = BoxClassifier(iid_window, vals2[None], cfg).classify((0, 0, 0))
    assert not cl2.h_good


def test_classifier_rejects_escaping_box(iid_window):
    cfg = reduced_cfg()
    vals = np.zeros(len(iid_window))
    clf = BoxClassifier(iid_window, vals[None], cfg)
    with pytest.raises(ValueError):
        clf.classify((10, 0, 0))


def test_classify_matches_bruteforce_oracle(iid_window):
    cfg = reduced_cfg(alpha=-0.8, delta=-0.4, gamma=0.1)
    rng = np.random.default_rng(17)
    n_samples = 4
    vals = rng.standard_normal((n_samples, len(iid_window)))
    clf = BoxClassifier(iid_window, vals, cfg)
    centers = clf.centers()
    assert len(centers) == 27
    rng2 = np.random.default_rng(5)
    picks = [centers[i] for i in rng2.choice(len(centers), 7, replace=False)]
    checked = 0
    for i in range(n_samples):
        for z in picks:
            got = clf.classify(z, i)
            want = brute_force_classify(iid_window, clf.psi_h, cfg, z, i)
            assert got.psi_good == want.psi_good, (z, i)
            assert got.h_good == want.h_good, (z, i)
            checked += 1
    assert checked >= 25


def test_classify_mixed_levels(iid_window):
    # gamma far below the field: crossing clusters everywhere  ->  psi-good
    cfg_low = reduced_cfg(alpha=-9.0, delta=-8.5, gamma=-8.0)
    rng = np.random.default_rng(23)
    vals = rng.standard_normal((1, len(iid_window)))
    cl = BoxClassifier(iid_window, vals, cfg_low).classify((0, 0, 0))
    assert cl.psi_good and cl.h_good
    # gamma far above: no cluster
    cfg_high = reduced_cfg(alpha=8.0, delta=8.5, gamma=9.0)
    cl2 = BoxClassifier(iid_window, vals, cfg_high).classify((0, 0, 0))
    assert not cl2.psi_good


# -- bad-event counting -------------------------------------------------------------

def grid_classifications(span, L0, psi_bad_at=()):
    out = {}
    rng = range(-span, span + 1, L0)
    for x in rng:
        for y in rng:
            for z in rng:
                lab = (x, y, z)
                out[lab] = BoxClassification(lab, psi_good=lab not in psi_bad_at,
                                             h_good=True)
    return out


def test_bad_event_counts():
    cfg = reduced_cfg()
    cls = grid_classifications(4, 2)
    res = bad_event_count(cls, cfg.N, cfg)
    assert res["counts"] == [0, 0, 0]
    cls2 = grid_classifications(4, 2, psi_bad_at={(0, 2, -2)})
    res2 = bad_event_count(cls2, cfg.N, cfg)
    assert res2["counts"] == [1, 1, 1]
    # oracle: explicit column scan
    rng = np.random.default_rng(3)
    bad = {tuple(2 * rng.integers(-2, 3, 3)) for _ in range(5)}
    cls3 = grid_classifications(4, 2, psi_bad_at=bad)
    res3 = bad_event_count(cls3, cfg.N, cfg)
    for ax in range(3):
        cols = {tuple(v for j, v in enumerate(b) if j != ax) for b in bad}
        assert res3["counts"][ax] == len(cols)


# -- interface extraction --------------------------------------------------------------

def shell_classifications(span, L0, shell_lo, shell_hi):
    """h-bad, psi-good shell between sup-norm radii [shell_lo, shell_hi];
    everything else fully good."""
    out = {}
    rng = range(-span, span + 1, L0)
    for x in rng:
        for y in rng:
            for z in rng:
                lab = (x, y, z)
                r = max(abs(x), abs(y), abs(z))
                h_bad = shell_lo <= r <= shell_hi
                out[lab] = BoxClassification(lab, psi_good=True, h_good=not h_bad)
    return out


def test_extract_all_good_returns_none():
    cfg = reduced_cfg()
    cls = grid_classifications(10, 2)
    A_N = SiteSet.ball_inf((0, 0, 0), 2)
    spec, diag = extract_interface(cls, A_N, cfg, None)
    assert spec is None
    assert "connected" in diag


def test_extract_shell_interface():
    cfg = reduced_cfg(L0=2, Lhat0=12, K=5, c_prime=1.0)
    cls = shell_classifications(20, 2, shell_lo=8, shell_hi=12)
    A_N = SiteSet.ball_inf((0, 0, 0), 2)
    spec, diag = extract_interface(cls, A_N, cfg, None)
    assert spec is not None, diag
    # every selected box is h-bad and psi-good
    for z in spec.centers:
        assert not cls[z].h_good and cls[z].psi_good
    # mutual projected-distance contract, rechecked exhaustively
    for key, choice in spec.kappa["choices"].items():
        ax = choice["axis"]
        boxes = choice["boxes"]
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                pi = [v for k, v in enumerate(boxes[i]) if k != ax]
                pj = [v for k, v in enumerate(boxes[j]) if k != ax]
                assert max(abs(a - b) for a, b in zip(pi, pj)) >= 4 * cfg.K_eff * cfg.L0
    # the blow-up sits inside the bounded side U_0 of the segmentation
    pts = A_N.sites / cfg.N
    inside = np.zeros(len(pts), bool)
    for lo, hi in zip(spec.u0_lo, spec.u0_hi):
        inside |= np.all((pts >= lo) & (pts <= hi), axis=1)
    assert inside.all()
    # sigma boxes live in the shell region, scaled by 1/N
    mid = 0.5 * (spec.sigma_lo + spec.sigma_hi) * cfg.N
    r = np.abs(mid).max(axis=1)
    assert (r >= 6).all() and (r <= 15).all()


def test_extract_determinism():
    cfg = reduced_cfg(L0=2, Lhat0=12, K=5, c_prime=1.0)
    cls = shell_classifications(20, 2, shell_lo=8, shell_hi=12)
    A_N = SiteSet.ball_inf((0, 0, 0), 2)
    s1, _ = extract_interface(cls, A_N, cfg, None)
    s2, _ = extract_interface(cls, A_N, cfg, None)
    assert s1.kappa_json() == s2.kappa_json()
    assert (s1.C.sites == s2.C.sites).all()


def test_extract_unreachable_target():
    cfg = reduced_cfg(L0=2, Lhat0=20, K=5, c_prime=1.0)  # target 4, impossible
    cls = shell_classifications(20, 2, shell_lo=8, shell_hi=10)
    A_N = SiteSet.ball_inf((0, 0, 0), 2)
    spec, diag = extract_interface(cls, A_N, cfg, None)
    if spec is None:
        assert "unreachable" in diag or "segmentation" in diag
    else:  # if reachable, the contract still holds
        assert len(spec.centers) >= 1


def test_s_tilde_maximality():
    cfg = reduced_cfg(L0=2, Lhat0=12, K=5, c_prime=1.0)
    cls = shell_classifications(20, 2, shell_lo=8, shell_hi=12)
    spec, _ = extract_interface(cls, SiteSet.ball_inf((0, 0, 0), 2), cfg, None)
    s_hat = [tuple(x) for x in spec.kappa["S_hat"]]
    s_tilde = [tuple(x) for x in spec.kappa["S_tilde"]]
    for x in s_hat:
        if x in s_tilde:
            continue
        # adding x must violate disjointness of the B(., 2 Lhat0) balls
        assert any(max(abs(a - b) for a, b in zip(x, y)) <= 4 * cfg.Lhat0
                   for y in s_tilde)


def test_interface_volume_capacity(gt3):
    cfg = reduced_cfg(L0=2, Lhat0=12, K=5, c_prime=1.0)
    cls = shell_classifications(20, 2, shell_lo=8, shell_hi=12)
    spec, _ = extract_interface(cls, SiteSet.ball_inf((0, 0, 0), 2), cfg, None)
    vol, cap, info = interface_volume_capacity(spec, cfg.N, gt3)
    assert vol == len(spec.C) / cfg.N ** 3
    assert vol < 0.2
    assert cap > 0
    assert interface_volume_capacity(None, cfg.N, gt3)[:2] == (0.0, 0.0)


def test_kappa_serializes(gt3):
    cfg = reduced_cfg(L0=2, Lhat0=12, K=5, c_prime=1.0)
    cls = shell_classifications(20, 2, shell_lo=8, shell_hi=12)
    spec, _ = extract_interface(cls, SiteSet.ball_inf((0, 0, 0), 2), cfg, None)
    rec = json.loads(spec.kappa_json())
    assert set(rec) == {"S_hat", "S_tilde", "choices"}
