"""Command-line entry point.

    gfflab <subcommand> [--config cfg.json] [--seed S] [--workers W] [--out DIR]

Subcommands: pushdown, pinning, profile, disconnect-prob, solidify, couple,
potential (oracle dumps). The config file holds ExperimentConfig fields;
flags override. Outputs land in --out as results.csv + manifest.json.
"""

import argparse
import json
import sys

import numpy as np

from .experiment import (ExperimentConfig, estimate_disconnection,
                         run_coupling_compare, run_pinning, run_profile,
                         run_pushdown, run_solidification_sweep, write_results)
from .green import GreenTable


def load_config(path, overrides):
    data = {}
    if path:
        with open(path) as fh:
            data = json.load(fh)
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "h_bar_grid" in data:
        data["h_bar_grid"] = tuple(data["h_bar_grid"])
    return ExperimentConfig(**data)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="gfflab")
    ap.add_argument("command",
                    choices=["pushdown", "pinning", "profile",
                             "disconnect-prob", "solidify", "couple",
                             "potential"])
    ap.add_argument("--config", help="JSON file of ExperimentConfig fields")
    ap.add_argument("--seed", type=int, help="master seed override")
    ap.add_argument("--workers", type=int, default=1,
                    help="recorded in the manifest; results are "
                         "worker-count independent by seeding")
    ap.add_argument("--out", default="results", help="output directory")
    args = ap.parse_args(argv)

    cfg = load_config(args.config, {"master_seed": args.seed,
                                    "out_dir": args.out})
    gt = GreenTable(d=cfg.d)
    extra = {"workers": args.workers}

    if args.command in ("pushdown", "pinning", "profile", "disconnect-prob"):
        from .experiment import DisconnectionLab
        lab = DisconnectionLab(cfg, gt)
        extra.update(lab.manifest_extra())
    if args.command == "pushdown":
        report = run_pushdown(cfg, gt, lab=lab)
        sites = np.asarray(lab.window.sites)
        fields = {"conditional_mean": (sites, report["profile"]),
                  "minus_hA": (sites, report["minus_hA"])}
        write_results(args.out, "pushdown", report["rows"], cfg, extra, fields)
    elif args.command == "pinning":
        report = run_pinning(cfg, gt, lab=lab)
        write_results(args.out, "pinning", report["rows"], cfg, extra)
    elif args.command == "profile":
        report = run_profile(cfg, gt, lab=lab)
        write_results(args.out, "profile", report["rows"], cfg, extra)
    elif args.command == "disconnect-prob":
        rows = []
        rej = estimate_disconnection(cfg, "rejection", lab=lab)
        rows.append(("disconnect", "p_rejection", rej.value, rej.se))
        rows.append(("disconnect", "acceptance_rate", rej.acceptance_rate, 0.0))
        til = estimate_disconnection(cfg, "tilted", lab=lab)
        rows.append(("disconnect", "p_tilted", til.value, til.se))
        rows.append(("disconnect", "ess", til.ess, 0.0))
        rows.append(("disconnect", "tilt_strength", til.tilt_strength, 0.0))
        write_results(args.out, "disconnect-prob", rows, cfg, extra)
    elif args.command == "solidify":
        report = run_solidification_sweep(cfg, gt)
        write_results(args.out, "solidify", report["rows"], cfg, extra)
    elif args.command == "couple":
        report = run_coupling_compare(cfg, gt)
        write_results(args.out, "couple", report["rows"], cfg, extra)
    elif args.command == "potential":
        rows = _potential_dump(cfg, gt)
        write_results(args.out, "potential", rows, cfg, extra)
    print(f"wrote {args.out}/results.csv")
    return 0


def _potential_dump(cfg, gt):
    """Oracle dump: Green values, capacities, and the blow-up potential."""
    from .lattice import SiteSet, blow_up
    from .potential import equilibrium_measure, hitting_probability
    rows = [("potential", "g0", gt.zero(), 0.0),
            ("potential", "C_d", gt.C_d, 0.0)]
    for r in (1, 2, 4):
        eq = equilibrium_measure(gt, SiteSet.ball_inf((0,) * cfg.d, r))
        rows.append(("potential", f"cap_ball_{r}", eq.capacity, 0.0))
    A_N = blow_up(cfg.shape(), cfg.N)
    eq = equilibrium_measure(gt, A_N)
    rows.append(("potential", "cap_A_N", eq.capacity, 0.0))
    rows.append(("potential", "cap_A_N_scaled",
                 gt.d * eq.capacity / cfg.N ** (gt.d - 2), 0.0))
    return rows


if __name__ == "__main__":
    sys.exit(main())
