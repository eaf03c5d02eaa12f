"""Command-line interface.

Subcommands: profile, march, rates, check, sweep.  Exit codes: 0 success,
2 usage error, 3 solver failure, 4 check failure.  The output directory comes
from --out, else the FSLAB_OUT environment variable, else the config.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import diagnostics as diag
from .background import SelfSimilarBackground
from .config import RunConfig
from .corpus import corpus_functions
from .errors import FslabError
from .fs_profile import FsParams, solve_fs
from .functionals import calibrate_sigma
from .numerics import uniform_grid
from .runner import (default_rate_specs, execute_run, resolved_theorem_rate,
                     write_json, write_run_outputs)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4


def _default_calibration_path():
    return os.path.join(os.path.dirname(__file__), "data", "calibration.json")


def _load_config(args):
    if args.config is None:
        raise ValueError("--config is required")
    cfg = RunConfig.from_json(args.config)
    out = args.out or os.environ.get("FSLAB_OUT") or cfg.output_dir
    if args.seed is not None:
        d = dict(cfg.raw)
        d["seed"] = args.seed
        cfg = RunConfig.from_dict(d)
    return cfg, out


def _say(quiet, msg):
    if not quiet:
        print(msg)


def cmd_profile(args):
    cfg, out = _load_config(args)
    params = FsParams.from_beta(cfg.beta, eta_max=float(cfg.fs["eta_max"]),
                                n_xi=int(cfg.fs["n_xi"]),
                                shoot_tol=float(cfg.fs["shoot_tol"]))
    profile = solve_fs(params)
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "profile.csv")
    profile.to_csv(csv_path)
    summary = {
        "beta": cfg.beta,
        "m": cfg.m,
        "wall_shear": profile.wall_shear,
        "far_field_mismatch": float(abs(profile.fp[-1] - 1.0)),
        "eta_max": float(cfg.fs["eta_max"]),
        "n_xi": int(cfg.fs["n_xi"]),
    }
    write_json(summary, os.path.join(out, "profile_summary.json"))
    _say(args.quiet, f"wall_shear = {profile.wall_shear!r} -> {csv_path}")
    return EXIT_OK


def cmd_march(args):
    cfg, out = _load_config(args)
    run = execute_run(cfg)
    write_run_outputs(run, out)
    _say(args.quiet, f"marched to x = {run.records[-1].x:g}, "
                     f"{run.stats.get('steps', 0)} steps -> {out}")
    return EXIT_OK


def _svg_loglog(path, xs, ys, ref_slope, title):
    """Minimal deterministic SVG of a log-log decay curve with reference slope."""
    lx, ly = np.log10(xs), np.log10(ys)
    W, H, pad = 480, 320, 40

    def sx(v):
        return pad + (v - lx.min()) / max(lx.ptp(), 1e-12) * (W - 2 * pad)

    def sy(v):
        return H - pad - (v - ly.min()) / max(ly.ptp(), 1e-12) * (H - 2 * pad)

    pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(lx, ly))
    refy = ly[0] + ref_slope * (lx - lx[0])
    ref = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(lx, refy))
    with open(path, "w") as fh:
        fh.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">\n')
        fh.write(f'<text x="{pad}" y="20" font-size="12">{title}</text>\n')
        fh.write(f'<polyline points="{pts}" fill="none" stroke="black"/>\n')
        fh.write(f'<polyline points="{ref}" fill="none" stroke="red" '
                 f'stroke-dasharray="4 3"/>\n')
        fh.write("</svg>\n")


def cmd_rates(args):
    cfg, out = _load_config(args)
    run = execute_run(cfg)
    os.makedirs(out, exist_ok=True)
    specs = cfg.diagnostics.get("quantities") or default_rate_specs(cfg)
    fits = []
    all_pass = True
    for spec in specs:
        xs, vals = run.series(spec)
        rate = resolved_theorem_rate(spec, cfg.m)
        fit = diag.fit_decay(xs, vals, spec["window"], theorem_rate=rate,
                             name=spec["name"])
        fits.append(fit)
        all_pass &= fit.passed
        if cfg.diagnostics.get("plots"):
            inside = (xs >= spec["window"][0]) & (xs <= spec["window"][1])
            _svg_loglog(os.path.join(out, f"rate_{spec['name']}.svg"),
                        xs[inside], vals[inside],
                        fit.theorem_rate if rate is not None else fit.slope,
                        f"{spec['name']}: slope {fit.slope:.4f}")
    payload = [{"name": f.name, "slope": f.slope, "r2": f.r2,
                "theorem_rate": None if np.isnan(f.theorem_rate) else f.theorem_rate,
                "window": list(f.window), "n_points": f.n_points,
                "pass": bool(f.passed)} for f in fits]
    write_json(payload, os.path.join(out, "rates.json"))
    for f in fits:
        _say(args.quiet, f"{f.name}: slope={f.slope:.4f} "
                         f"theorem={f.theorem_rate:.4f} pass={f.passed}")
    return EXIT_OK if all_pass else EXIT_CHECK


def run_inequality_checks(cfg, constants):
    """Corpus inequality checks against calibrated constants."""
    checks = []
    corpus = corpus_functions(int(cfg.check["corpus_n"]), int(cfg.check["corpus_seed"]))
    for m in cfg.check["ms"]:
        params = FsParams.from_m(float(m))
        provider = SelfSimilarBackground(solve_fs(params))
        for x in cfg.check["xs"]:
            scale = float(x) ** (0.5 * (1.0 - float(m)))
            y = uniform_grid(14.0 * scale, 2801)
            bg = provider.fields(float(x), y)
            for label, f in corpus:
                checks.append(diag.check_hardy(f, bg, 0.5, c_ref=constants["hardy"]))
                checks.append(diag.check_nash(f, bg, c_ref=constants["nash"]))
                stack = diag.power_law_stack(bg, lambda e, f=f: e * f(e), 0.7, k_max=2)
                checks.append(diag.check_interpolation(
                    stack, bg, "dy_weight_gain", 0.1, k=0, n=10,
                    c_ref=constants["interp_dy_weight_gain"]))
    return checks


def cmd_check(args):
    cfg, out = _load_config(args)
    os.makedirs(out, exist_ok=True)
    cal_path = cfg.diagnostics.get("calibration_path") or _default_calibration_path()
    if cfg.diagnostics.get("recalibrate") or not os.path.exists(cal_path):
        constants = recalibrate(cfg, cal_path)
    else:
        constants = diag.load_calibration(cal_path)

    checks = run_inequality_checks(cfg, constants)

    for m in cfg.check["ms"]:
        ode = diag.ode_compare(1.0, float(m), 1.0, 100.0)
        res = float(np.max(np.abs(diag.explicit_solution_residual(
            1.0, float(m), 1.0, np.geomspace(1.0, 100.0, 64)))))
        checks.append(diag.InequalityCheck(
            name=f"ode_explicit_m{m}", lhs=res, rhs=1e-10, ratio=res / 1e-10,
            params={"m": m}, passed=res <= 1e-10))
        checks.append(diag.InequalityCheck(
            name=f"ode_bounded_m{m}", lhs=ode.x_at_sup, rhs=10.0,
            ratio=ode.x_at_sup / 10.0, params={"m": m},
            passed=ode.x_at_sup <= 10.0 and ode.tail_nonincreasing))

    run = execute_run(cfg)
    levels = cfg.diagnostics.get("residual_levels") or list(diag.ALL_LEVELS)
    max_frac = float(cfg.check["max_violation_fraction"])
    for level in levels:
        key = f"energy_{level}_m{run.config.m:g}"
        c_emp = constants.get(key)
        series = diag.energy_residual(run.records, level, c_emp=c_emp,
                                      lam=float(cfg.diagnostics["lam"]),
                                      transient_x=float(cfg.diagnostics["transient_x"]))
        checks.append(diag.InequalityCheck(
            name=f"energy_{level}", lhs=series.violation_fraction, rhs=max_frac,
            ratio=series.violation_fraction / max_frac if max_frac else 0.0,
            params={"m": run.config.m, "c": series.c_used},
            passed=series.violation_fraction <= max_frac))

    diag.write_checks_csv(checks, os.path.join(out, "checks.csv"))
    n_fail = sum(not c.passed for c in checks)
    _say(args.quiet, f"{len(checks)} checks, {n_fail} failures -> {out}/checks.csv")
    return EXIT_OK if n_fail == 0 else EXIT_CHECK


def recalibrate(cfg, cal_path):
    """Rebuild every calibrated constant (corpus checks + run residual levels)."""
    corpus = corpus_functions(int(cfg.check["corpus_n"]), int(cfg.check["corpus_seed"]))
    bgs = []
    for m in cfg.check["ms"]:
        provider = SelfSimilarBackground(solve_fs(FsParams.from_m(float(m))))
        for x in cfg.check["xs"]:
            scale = float(x) ** (0.5 * (1.0 - float(m)))
            bgs.append(provider.fields(float(x), uniform_grid(14.0 * scale, 2801)))
    constants = diag.calibrate_inequality_constants(bgs, corpus)
    run = execute_run(cfg)
    for level in diag.ALL_LEVELS:
        constants[f"energy_{level}_m{run.config.m:g}"] = diag.fit_residual_constant(
            run.records, level, lam=float(cfg.diagnostics["lam"]),
            transient_x=float(cfg.diagnostics["transient_x"]))
    os.makedirs(os.path.dirname(cal_path), exist_ok=True)
    diag.save_calibration(constants, cal_path)
    return constants


def _sweep_worker(item):
    path, out, seed, quiet = item
    ns = argparse.Namespace(config=path, out=out, seed=seed, quiet=quiet)
    return path, cmd_march(ns)


def cmd_sweep(args):
    with open(args.config) as fh:
        spec = json.load(fh)
    configs = spec.get("configs", [])
    if not configs:
        raise ValueError("sweep config needs a 'configs' list")
    base_out = args.out or os.environ.get("FSLAB_OUT") or spec.get("output_dir", "out")
    items = [(path, os.path.join(base_out, f"run_{i:02d}"), args.seed, True)
             for i, path in enumerate(configs)]
    workers = int(spec.get("max_workers", min(4, len(items))))
    results = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for path, code in pool.map(_sweep_worker, items):
            results.append((path, code))
            _say(args.quiet, f"{path}: exit {code}")
    return EXIT_OK if all(code == EXIT_OK for _, code in results) else EXIT_SOLVER


def main(argv=None):
    parser = argparse.ArgumentParser(prog="fslab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [("profile", cmd_profile), ("march", cmd_march),
                     ("rates", cmd_rates), ("check", cmd_check),
                     ("sweep", cmd_sweep)]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=False)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--quiet", action="store_true")
        p.set_defaults(fn=fn)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FslabError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
