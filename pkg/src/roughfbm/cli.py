"""Batch entry point: kernel-check, simulate, verify, scaling, holder, combinat.

Configuration is one flat JSON file; every flag overrides the matching field.
Exit codes: 0 all gates pass, 1 a gate failed, 2 usage or config error.  All
emitted files carry provenance and no timestamps, so identical configs yield
byte-identical outputs.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import combinat
from .algebra import Grid
from .config import ConfigError, RunConfig, load_config
from .iterated import build_stack
from .kernel import (
    LEMMA_SWEEP_BOUNDS,
    QuadratureError,
    VolterraKernel,
    covariance_check,
    lemma_betaA,
    lemma_Ist,
    lemma_int_K2,
)
from .verify import chen_defect, holder_study, scaling_study, shuffle_defect
from .wiener import sample_wiener, synthesize_fbm, wiener_to_csv

__all__ = ["main"]


def _write_json(path: str, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _table_for(cfg: RunConfig, grid: Grid):
    kernel = VolterraKernel(cfg.H, c_H=cfg.c_H, tol_q=cfg.tol_q)
    cache_path = None
    if cfg.kernel_cache:
        os.makedirs(cfg.kernel_cache, exist_ok=True)
        cache_path = os.path.join(
            cfg.kernel_cache,
            f"ktable_H{cfg.H:.6g}_N{grid.N}_T{grid.T:.6g}"
            f"_tol{cfg.tol_q:.3g}_c{kernel.c_H:.12g}.npz",
        )
    return kernel, kernel.cell_table(grid, cache_path=cache_path)


def cmd_kernel_check(cfg: RunConfig, args) -> int:
    os.makedirs(cfg.outdir, exist_ok=True)
    kernel = VolterraKernel(cfg.H, c_H=cfg.c_H, tol_q=cfg.tol_q)
    t = cfg.T
    pairs = [(t, t), (t / 2, t), (t / 4, 3 * t / 4), (t / 5, 2 * t / 5), (0.6 * t, 0.9 * t)]
    cov_rows, cov_ok = [], True
    for s, u in pairs:
        computed, target, err = covariance_check(kernel, s, u)
        ok = err <= cfg.cov_tol
        cov_ok &= ok
        cov_rows.append(
            {"s": s, "t": u, "computed": computed, "target": target, "abs_error": err, "pass": ok}
        )
    ratios_k2 = [lemma_int_K2(kernel, v * t, t) for v in (0.1, 0.25, 0.5, 0.75, 0.9)]
    ratios_ist = [lemma_Ist(kernel, s * t, t) for s in (0.5, 0.75, 0.875, 0.9375)]
    beta_vals = []
    k_level = 2 if 4 * cfg.H < 1 else 1
    for a in (1.0, 10.0, 100.0, 1000.0):
        beta_vals.append(lemma_betaA(cfg.H, k_level, a))
    lemma_ok = (
        max(ratios_k2) <= LEMMA_SWEEP_BOUNDS["int_K2"]
        and max(ratios_ist) <= LEMMA_SWEEP_BOUNDS["Ist"]
        and max(beta_vals) <= LEMMA_SWEEP_BOUNDS["betaA"]
    )
    cells_ok = True
    try:
        grid = Grid(cfg.T, 32)
        for k in (1, 7, 32):
            kernel.cell_average_row(grid, k, validate=True)
    except QuadratureError as exc:
        cells_ok = False
        cell_error = str(exc)
    report = {
        "H": cfg.H,
        "c_H": kernel.c_H,
        "tol_q": cfg.tol_q,
        "covariance": cov_rows,
        "covariance_tol": cfg.cov_tol,
        "lemma_int_K2": {"ratios": ratios_k2, "bound": LEMMA_SWEEP_BOUNDS["int_K2"]},
        "lemma_Ist": {"ratios": ratios_ist, "bound": LEMMA_SWEEP_BOUNDS["Ist"]},
        "lemma_betaA": {
            "k_level": k_level,
            "values": beta_vals,
            "bound": LEMMA_SWEEP_BOUNDS["betaA"],
        },
        "cell_average_validation": "pass" if cells_ok else cell_error,
        "pass": bool(cov_ok and lemma_ok and cells_ok),
    }
    _write_json(os.path.join(cfg.outdir, "kernel_report.json"), report)
    print(f"kernel-check: {'pass' if report['pass'] else 'FAIL'} "
          f"(max covariance error {max(r['abs_error'] for r in cov_rows):.3g})")
    return 0 if report["pass"] else 1


def cmd_simulate(cfg: RunConfig, args) -> int:
    os.makedirs(cfg.outdir, exist_ok=True)
    grid = Grid(cfg.T, cfg.N)
    _, table = _table_for(cfg, grid)
    path = sample_wiener(grid, cfg.d, cfg.seed)
    wiener_to_csv(path, os.path.join(cfg.outdir, "wiener.csv"))
    fbm = synthesize_fbm(path, table)
    with open(os.path.join(cfg.outdir, "fbm.csv"), "w") as fh:
        fh.write(f"# provenance: {json.dumps({'seed': cfg.seed, 'N': cfg.N, 'T': cfg.T, 'H': cfg.H, 'scheme': cfg.scheme, 'c_H': table.c_H}, sort_keys=True)}\n")
        fh.write("t," + ",".join(f"B_{i+1}" for i in range(cfg.d)) + "\n")
        for k, t in enumerate(grid.points):
            fh.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in fbm.values[k]) + "\n")
    stack = build_stack([tuple(w) for w in cfg.windows], cfg.n_max, path, table)
    stack.to_csv(os.path.join(cfg.outdir, "stack.csv"))
    stack.to_json(os.path.join(cfg.outdir, "stack.json"))
    print(f"simulate: wrote wiener.csv, fbm.csv, stack.csv, stack.json to {cfg.outdir}")
    return 0


def _verify_stack(cfg: RunConfig):
    grid = Grid(cfg.T, cfg.N)
    _, table = _table_for(cfg, grid)
    path = sample_wiener(grid, cfg.d, cfg.seed)
    windows = [tuple(w) for w in cfg.windows]
    triples = []
    for s, t in windows:
        si, ti = grid.index_of(s), grid.index_of(t)
        if ti - si >= 2:
            u = grid.points[(si + ti) // 2]
            triples.append((s, float(u), t))
    needed = set(windows)
    for s, u, t in triples:
        needed.update({(s, u), (u, t), (s, t)})
    stack = build_stack(sorted(needed), cfg.n_max, path, table)
    return stack, triples, windows


def cmd_verify(cfg: RunConfig, args) -> int:
    os.makedirs(cfg.outdir, exist_ok=True)
    which = args.which
    stack, triples, windows = _verify_stack(cfg)
    d = cfg.d
    reports = []
    if which in ("chen", "both"):
        import itertools as it

        for s, u, t in triples:
            for n in range(2, cfg.n_max + 1):
                for idx in it.product(range(1, d + 1), repeat=n):
                    reports.append(chen_defect(stack, s, u, t, idx, tol=cfg.identity_tol))
    if which in ("shuffle", "both"):
        import itertools as it

        pairs = [(1, 1)]
        if cfg.n_max >= 3:
            pairs += [(1, 2), (2, 1)]
        for s, t in windows:
            for n, m in pairs:
                for i_t in it.product(range(1, d + 1), repeat=n):
                    for j_t in it.product(range(1, d + 1), repeat=m):
                        reports.append(
                            shuffle_defect(stack, s, t, i_t, j_t, tol=cfg.identity_tol)
                        )
    worst = max((r.relative for r in reports), default=0.0)
    ok = all(r.passed for r in reports)
    payload = {
        "which": which,
        "identity_tol": cfg.identity_tol,
        "checks": len(reports),
        "max_relative_defect": worst,
        "pass": ok,
        "defects": [
            {
                "identity": r.identity,
                "windows": r.windows,
                "index_tuples": r.index_tuples,
                "relative": r.relative,
                "pass": r.passed,
            }
            for r in reports
        ],
    }
    _write_json(os.path.join(cfg.outdir, "verify_report.json"), payload)
    print(f"verify[{which}]: {'pass' if ok else 'FAIL'} "
          f"({len(reports)} checks, max relative defect {worst:.3g})")
    return 0 if ok else 1


def cmd_scaling(cfg: RunConfig, args) -> int:
    os.makedirs(cfg.outdir, exist_ok=True)
    grid = Grid(cfg.T, cfg.N)
    _, table = _table_for(cfg, grid)
    report = scaling_study(
        cfg.level,
        cfg.H,
        grid,
        cfg.window_sizes,
        cfg.samples,
        cfg.seed,
        d=cfg.d,
        tol_q=cfg.tol_q,
        table=table,
        workers=cfg.workers,
    )
    payload = {
        "level": report.level,
        "H": report.hurst,
        "window_sizes": list(report.window_sizes),
        "samples": report.samples,
        "moments": list(report.moments),
        "std_errors": list(report.std_errors),
        "slope": report.slope,
        "half_width": report.half_width,
        "expected_slope": report.expected_slope,
        "pass": report.passed,
    }
    _write_json(os.path.join(cfg.outdir, "scaling_report.json"), payload)
    data_path = os.path.join(cfg.outdir, "scaling_data.csv")
    with open(data_path, "w") as fh:
        fh.write("window_size,moment,std_error\n")
        for w, m, s in zip(report.window_sizes, report.moments, report.std_errors):
            fh.write(f"{w:.17g},{m:.17g},{s:.17g}\n")
    with open(os.path.join(cfg.outdir, "scaling_plot.gp"), "w") as fh:
        fh.write(
            "set logscale xy\n"
            "set datafile separator ','\n"
            f"set title 'level {report.level} moment scaling, H={cfg.H}'\n"
            "set xlabel 'window size'\nset ylabel 'E|B^n|^2'\n"
            f"fitted(x) = exp({report.slope:.6g}*log(x) + c)\n"
            f"# fitted slope {report.slope:.6g}, expected {report.expected_slope:.6g}\n"
            "plot 'scaling_data.csv' skip 1 using 1:2:3 with yerrorbars title 'MC', \\\n"
            f"     x**{report.expected_slope:.6g} * "
            f"{report.moments[0] / report.window_sizes[0] ** report.expected_slope:.6g}"
            " title 'expected slope'\n"
        )
    print(
        f"scaling: level {report.level} slope {report.slope:.4f} "
        f"(expected {report.expected_slope:.4f}) -> {'pass' if report.passed else 'FAIL'}"
    )
    return 0 if report.passed else 1


def cmd_holder(cfg: RunConfig, args) -> int:
    os.makedirs(cfg.outdir, exist_ok=True)
    gamma = cfg.gamma
    if gamma >= cfg.H:
        raise ConfigError(f"gamma = {gamma} must stay below H = {cfg.H}")
    seeds = [cfg.seed + i for i in range(args.holder_seeds)]
    study = holder_study(
        cfg.H,
        cfg.level,
        gamma,
        [cfg.N // 2, cfg.N],
        cfg.mesh_step,
        seeds,
        d=cfg.d,
        T=cfg.T,
        tol_q=cfg.tol_q,
    )
    ok = True
    for key in ("holder", "grr"):
        for per_seed in study["ratios"][key]:
            for ratio in per_seed.values():
                ok &= 0.5 <= ratio <= 2.0
    payload = {
        "H": cfg.H,
        "level": cfg.level,
        "gamma": gamma,
        "exponent": study["exponent"],
        "p": study["p"],
        "n_values": study["n_values"],
        "per_seed": [
            {
                "seed": rec["seed"],
                "holder": {str(k): v for k, v in rec["holder"].items()},
                "grr": {str(k): v for k, v in rec["grr"].items()},
            }
            for rec in study["per_seed"]
        ],
        "pass": ok,
    }
    _write_json(os.path.join(cfg.outdir, "holder_report.json"), payload)
    print(f"holder: stability factor-2 gate -> {'pass' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_combinat(cfg: RunConfig, args) -> int:
    out = {}
    if args.shuffles:
        a, b = args.shuffles.split("x")
        i_t = tuple(int(x) for x in a.split(","))
        j_t = tuple(int(x) for x in b.split(","))
        out["shuffles"] = [list(w) for w in combinat.shuffles(i_t, j_t)]
    if args.compositions:
        n, k = (int(x) for x in args.compositions.split(","))
        out["compositions"] = [list(c) for c in combinat.compositions(n, k)]
    if args.valleys:
        n, j = (int(x) for x in args.valleys.split(","))
        out["valley_interleavings"] = [list(p) for p in combinat.valley_interleavings(n, j)]
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--H", type=float, dest="H")
    p.add_argument("--d", type=int, dest="d")
    p.add_argument("--T", type=float, dest="T")
    p.add_argument("--N", type=int, dest="N")
    p.add_argument("--n-max", type=int, dest="n_max")
    p.add_argument("--seed", type=int, dest="seed")
    p.add_argument("--samples", type=int, dest="samples")
    p.add_argument("--level", type=int, dest="level")
    p.add_argument("--mesh-step", type=int, dest="mesh_step")
    p.add_argument("--gamma-factor", type=float, dest="gamma_factor")
    p.add_argument("--tol-q", type=float, dest="tol_q")
    p.add_argument("--identity-tol", type=float, dest="identity_tol")
    p.add_argument("--cov-tol", type=float, dest="cov_tol")
    p.add_argument("--c-H", type=float, dest="c_H")
    p.add_argument("--outdir", dest="outdir")
    p.add_argument("--kernel-cache", dest="kernel_cache")
    p.add_argument("--workers", type=int, dest="workers")
    p.add_argument(
        "--window",
        action="append",
        dest="window",
        metavar="S:T",
        help="window 's:t' (repeatable, replaces the config list)",
    )
    p.add_argument(
        "--sizes",
        dest="sizes",
        help="comma-separated scaling window sizes",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roughfbm",
        description="Iterated-integral levels above fractional Brownian motion: "
        "simulation and verification of their multiplicative, geometric, and "
        "scaling properties.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("kernel-check", cmd_kernel_check, "covariance and integral-bound gates"),
        ("simulate", cmd_simulate, "sample a path and emit the level stack"),
        ("verify", cmd_verify, "check the Chen and shuffle identities"),
        ("scaling", cmd_scaling, "fit the moment-scaling exponent"),
        ("holder", cmd_holder, "Hölder/GRR refinement stability"),
        ("combinat", cmd_combinat, "print enumeration debug output as JSON"),
    ]
    for name, fn, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.set_defaults(func=fn)
        if name == "verify":
            p.add_argument("--which", choices=("chen", "shuffle", "both"), default="both")
        if name == "holder":
            p.add_argument("--holder-seeds", type=int, default=3)
        if name == "combinat":
            p.add_argument("--shuffles", metavar="I1,I2xJ1", help="e.g. 1,2x3")
            p.add_argument("--compositions", metavar="N,K")
            p.add_argument("--valleys", metavar="N,J")
    return parser


_OVERRIDE_FIELDS = (
    "H", "d", "T", "N", "n_max", "seed", "samples", "level", "mesh_step",
    "gamma_factor", "tol_q", "identity_tol", "cov_tol", "c_H", "outdir",
    "kernel_cache", "workers",
)


def _config_from_args(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_FIELDS}
    if getattr(args, "window", None):
        windows = []
        for spec in args.window:
            s, t = spec.split(":")
            windows.append([float(s), float(t)])
        overrides["windows"] = windows
    if getattr(args, "sizes", None):
        overrides["window_sizes"] = [float(x) for x in args.sizes.split(",")]
    return load_config(getattr(args, "config", None), overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except (ConfigError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except QuadratureError as exc:
        print(f"quadrature failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
