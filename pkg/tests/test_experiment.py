import csv
import json
from pathlib import Path

import numpy as np
import pytest

from gfflab.experiment import (ConditionalEstimate, DisconnectionLab,
                               ExperimentConfig, estimate_disconnection,
                               run_coupling_compare, run_pinning, run_profile,
                               run_pushdown, run_solidification_sweep,
                               write_results)


def easy_cfg(**kw):
    """Sub-critical-side config where disconnection is common (alpha well
    above the percolation regime), so smoke budgets stay tiny."""
    base = dict(N=8, M=0.5, shape_size=0.5, alpha=1.2, delta=1.3, gamma=1.4,
                h_bar_grid=(1.5, 1.8), eta_radius=0.2, eta_eps=0.15,
                n_rejection=3000, n_tilted=3000, master_seed=99)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def lab(gt3):
    return DisconnectionLab(easy_cfg(), gt3)


# -- configuration -------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(alpha=0.5, delta=0.2, gamma=0.6)
    with pytest.raises(ValueError):
        ExperimentConfig(h_bar_grid=(-1.0,), alpha=0.0)
    with pytest.raises(ValueError):
        ExperimentConfig(shape_size=0.0)
    with pytest.raises(ValueError):
        ExperimentConfig(shape_size=1.4, M=0.6)
    with pytest.raises(ValueError):
        ExperimentConfig(N=40, M=0.9)   # window over the sampler cap
    cfg = easy_cfg()
    m = cfg.manifest()
    assert m["kernel_backend"] in ("cython", "numpy")
    assert m["N"] == 8


def test_seed_for_stable():
    cfg = easy_cfg()
    assert cfg.seed_for("x") == cfg.seed_for("x")
    assert cfg.seed_for("x") != cfg.seed_for("y")
    assert easy_cfg(master_seed=100).seed_for("x") != cfg.seed_for("x")


# -- disconnection estimators -----------------------------------------------------

def test_certain_disconnection(gt3):
    cfg = easy_cfg(alpha=30.0, delta=30.1, gamma=30.2,
                   h_bar_grid=(30.5,), n_rejection=200)
    est = estimate_disconnection(cfg, "rejection", gt=gt3)
    assert est.value == 1.0
    assert est.acceptance_rate == 1.0


def test_rejection_aborts_on_zero_acceptance(gt3):
    cfg = easy_cfg(alpha=-30.0, delta=-29.9, gamma=-29.8,
                   h_bar_grid=(-29.0,), n_rejection=200)
    with pytest.raises(RuntimeError):
        estimate_disconnection(cfg, "rejection", gt=gt3)


def test_rejection_vs_tilted_consistency(gt3, lab):
    cfg = lab.cfg
    rej = estimate_disconnection(cfg, "rejection", lab=lab)
    til = estimate_disconnection(cfg, "tilted", lab=lab, s=0.4)
    assert rej.kind == "rejection" and til.kind == "tilted"
    assert til.ess > 100
    combined = np.hypot(rej.se, til.se)
    assert abs(rej.value - til.value) < 3 * combined


def test_tilt_weights_mean_one(lab):
    # E_{P^f}[dP/dP^f] = 1 exactly in expectation
    vals, w, dmask = lab.tilted(0.5, 4000)
    assert abs(w.mean() - 1.0) < 4 * w.std() / np.sqrt(len(w))


# -- runners -----------------------------------------------------------------------

def test_run_pushdown_smoke(gt3, lab):
    rep = run_pushdown(lab.cfg, lab=lab)
    keys = {r[1] for r in rep["rows"]}
    assert "unconditioned_mean" in keys
    assert "profile_corr_minus_hA" in keys
    un = [r for r in rep["rows"] if r[1] == "unconditioned_mean"][0]
    assert abs(un[2]) < 4 * un[3]
    cond = [r for r in rep["rows"] if r[1].startswith("cond_mean_x@")]
    assert all(c[2] < 0 for c in cond)        # entropic push-down in sign
    assert len(rep["profile"]) == len(lab.window)


def test_run_pinning_smoke(gt3, lab):
    rep = run_pinning(lab.cfg, lab=lab)
    keys = {r[1] for r in rep["rows"]}
    assert any(k.startswith("cond_loc_stat@") for k in keys)
    assert "argmin_h_bar" in keys
    for r in rep["rows"]:
        if r[1].startswith("self_test@"):
            assert r[2] == 0.0
    assert np.isfinite([c[1] for c in rep["curve"]]).all()


def test_run_profile_smoke(gt3, lab):
    rep = run_profile(lab.cfg, lab=lab, n_mc_inner=1000)
    keys = {r[1] for r in rep["rows"]}
    assert "cond_y_pair" in keys and "gap_argmin_s" in keys
    gaps = rep["gaps"]
    assert all(np.isfinite(g[1]) for g in gaps)


def test_run_solidify_and_couple_smoke(gt3):
    cfg = easy_cfg()
    rep = run_solidification_sweep(cfg, gt3, coverages=(1.0,), n_walks=500)
    keys = {r[1] for r in rep["rows"]}
    assert "degenerate_escape_gap" in keys
    assert any(k.startswith("capacity_ratio@") for k in keys)
    rep2 = run_coupling_compare(cfg, gt3, L_grid=(6,), n_walks=500)
    assert len(rep2["violations"]) == 1


# -- emission and reproducibility ----------------------------------------------------

def test_write_results_roundtrip(tmp_path, gt3):
    cfg = easy_cfg()
    rows = [("demo", "a", 1.5, 0.1), ("demo", "b", -2.0, 0.0)]
    path = write_results(tmp_path, "demo", rows, cfg,
                         extra_manifest={"workers": 2})
    with open(path) as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["experiment", "key", "value", "se"]
    assert got[1][0] == "demo" and float(got[1][2]) == 1.5
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["workers"] == 2
    assert manifest["master_seed"] == cfg.master_seed
    assert manifest["kernel_backend"] in ("cython", "numpy")


def test_runs_reproducible(gt3):
    cfg = easy_cfg()
    lab1 = DisconnectionLab(cfg, gt3)
    lab2 = DisconnectionLab(cfg, gt3)
    v1, w1, d1 = lab1.tilted(0.5, 500)
    v2, w2, d2 = lab2.tilted(0.5, 500)
    assert (v1 == v2).all() and (w1 == w2).all() and (d1 == d2).all()


def test_conditional_profile_symmetry(gt3, lab):
    rep = run_pushdown(lab.cfg, lab=lab)
    prof = rep["profile"]
    se = rep["profile_se"]
    sites = lab.window.sites
    # average over the coordinate-permutation orbit of each site
    perm = np.lexsort(sites[:, [1, 0, 2]].T[::-1])   # swap first two coords
    swapped = lab.window.index_of(sites[:, [1, 0, 2]])
    diffs = np.abs(prof - prof[swapped])
    comb = np.sqrt(se ** 2 + se[swapped] ** 2)
    assert diffs.mean() < 3 * comb.mean()


def test_tilted_consistency_three_functionals(gt3, lab):
    # rejection vs tilted agreement for three conditional functionals
    cfg = lab.cfg
    vals_r, dm_r = lab.rejection(6000, tag="cal3")
    vals_t, w, dm_t = lab.tilted(0.4, 6000, tag="cal3t")
    xs_r = lab.x_values(vals_r)
    xs_t = lab.x_values(vals_t)
    i0 = lab.window.index_of(np.array([[0, 0, 0]]))[0]
    funcs = [
        ("indicator", np.ones_like(xs_r), np.ones_like(xs_t)),
        ("x_pair", xs_r, xs_t),
        ("phi0_neg", (vals_r[:, i0] < 0).astype(float),
         (vals_t[:, i0] < 0).astype(float)),
    ]
    for name, fr, ft in funcs:
        a = fr * dm_r
        mr, sr = a.mean(), a.std(ddof=1) / np.sqrt(len(a))
        b = ft * w * dm_t
        mt, st = b.mean(), b.std(ddof=1) / np.sqrt(len(b))
        assert abs(mr - mt) < 3.5 * np.hypot(sr, st), name


def test_write_results_overwrites_for_reproducibility(tmp_path, gt3):
    cfg = easy_cfg()
    rows = [("demo", "a", 1.5, 0.1)]
    write_results(tmp_path, "demo", rows, cfg)
    first = (tmp_path / "results.csv").read_bytes()
    write_results(tmp_path, "demo", rows, cfg)
    assert (tmp_path / "results.csv").read_bytes() == first
    write_results(tmp_path, "demo", rows, cfg, append=True)
    assert len((tmp_path / "results.csv").read_text().splitlines()) == 3
