"""Run orchestration: profile -> background -> march -> per-station records."""

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .background import SelfSimilarBackground
from .config import RunConfig
from .diagnostics import enhanced_rate, scattering_rate
from .fs_profile import FsParams, solve_fs
from .functionals import evaluate_all
from .good_unknowns import build_stack, iterate_cauchy_data, project_compatible
from .marching import init_perturbation, march_to
from .numerics import deriv1, uniform_grid


def initial_data_fn(spec, rng=None):
    """Named initial-data family as a callable of the wall-normal coordinate."""
    family = spec["family"]
    if family == "eta_gauss":
        a, p = float(spec["amplitude"]), int(spec.get("power", 1))
        c, w = float(spec.get("center", 0.0)), float(spec.get("width", 1.0))
        return lambda y: a * y ** p * np.exp(-((y - c) / w) ** 2)
    if family == "eta_exp":
        a, p = float(spec["amplitude"]), int(spec.get("power", 1))
        w = float(spec.get("width", 1.0))
        return lambda y: a * y ** p * np.exp(-y / w)
    if family == "csv":
        data = np.loadtxt(spec["path"], delimiter=",", skiprows=1)
        spline = CubicSpline(data[:, 0], data[:, 1])
        y_hi = data[-1, 0]
        return lambda y: np.where(y <= y_hi, spline(np.minimum(y, y_hi)), 0.0)
    raise ValueError(f"unknown initial data family {family!r}")


@dataclass(frozen=True)
class StationRecord:
    x: float
    state: object
    bg: object
    stack: object
    report: object


@dataclass(frozen=True)
class RunResult:
    config: RunConfig
    profile: object
    provider: SelfSimilarBackground
    records: tuple
    compat_report: object
    stats: dict

    @property
    def xs(self):
        return np.array([r.x for r in self.records])

    def series(self, spec):
        """Per-station series for a named quantity spec (see rate_specs)."""
        kind = spec["kind"]
        if kind == "sup_u":
            vals = [float(np.max(np.abs(r.state.u))) for r in self.records]
        elif kind == "sup_dyu":
            vals = [float(np.max(np.abs(deriv1(r.state.y_grid, r.state.u))))
                    for r in self.records]
        elif kind == "sup_u_weighted":
            M = float(spec.get("M", 3))
            vals = [float(np.max(np.abs(r.state.u)
                                 * (1.0 + r.bg.eta_grid ** 2) ** (M / 2.0)))
                    for r in self.records]
        elif kind == "energy":
            k, n = int(spec.get("k", 0)), int(spec.get("n", 10))
            vals = [float(r.report.E[k, n]) for r in self.records]
        else:
            raise ValueError(f"unknown quantity kind {kind!r}")
        return self.xs, np.asarray(vals)


def resolved_theorem_rate(spec, m):
    th = spec.get("theorem", "baseline")
    k, j = int(spec.get("k", 0)), int(spec.get("j", 0))
    if th == "baseline":
        return scattering_rate(m, k, j)
    if th == "enhanced":
        return enhanced_rate(m, k, j)
    if th == "boost3m":
        # post-boost monotonicity of x^{3m} E translates to slope <= -3m
        return -3.0 * m
    if th is None or th == "none":
        return None
    return float(th)


def default_rate_specs(config):
    w = tuple(config.diagnostics["rate_window"])
    return [
        {"name": "sup_u", "kind": "sup_u", "theorem": "baseline", "k": 0, "j": 0,
         "window": w},
        {"name": "sup_dyu", "kind": "sup_dyu", "theorem": "baseline", "k": 0, "j": 1,
         "window": w},
        {"name": "sup_u_w3", "kind": "sup_u_weighted", "M": 3, "theorem": "baseline",
         "k": 0, "j": 0, "window": w},
        {"name": "E_k0_n10", "kind": "energy", "k": 0, "n": 10, "theorem": "boost3m",
         "window": w},
    ]


def execute_run(config: RunConfig, source=None) -> RunResult:
    params = FsParams.from_m(config.m, eta_max=float(config.fs["eta_max"]),
                             n_xi=int(config.fs["n_xi"]),
                             shoot_tol=float(config.fs["shoot_tol"]))
    profile = solve_fs(params)
    provider = SelfSimilarBackground(profile)
    march_cfg = config.march_config()
    y = march_cfg.grid.build()

    u0_fn = initial_data_fn(config.initial_data)
    compat_report = None
    if config.compat.get("project", True):
        y_c = uniform_grid(config.compat["y_max"],
                           int(round(config.compat["y_max"] / config.compat["step"])) + 1)
        bg_c = provider.fields(march_cfg.x_start, y_c)
        corrected = project_compatible(u0_fn(y_c), bg_c, int(config.compat["k_max"]),
                                       config.epsilon,
                                       cutoff_width=float(config.compat["width"]))
        compat_report = iterate_cauchy_data(corrected, bg_c,
                                            int(config.compat["k_max"]), config.epsilon)
        spline = CubicSpline(y_c, corrected)
        y_hi = y_c[-1]
        u0 = np.where(y <= y_hi, spline(np.minimum(y, y_hi)), 0.0)
        u0[0] = 0.0
    else:
        u0 = np.asarray(u0_fn(y), dtype=float)

    state = init_perturbation(march_cfg, u0)
    stats = {}
    snapshots = march_to(state, march_cfg.x_end, march_cfg, provider,
                         source=source, stats=stats)

    k_max = int(config.diagnostics["k_max"])
    records = []
    for snap in snapshots:
        bg = provider.fields(snap.x, y)
        k_eff = min(k_max, len(snap.history) - 1)
        stack = build_stack(snap, bg, k_eff, config.epsilon)
        report = evaluate_all(stack, bg)
        records.append(StationRecord(x=snap.x, state=snap, bg=bg,
                                     stack=stack, report=report))
    stats["wall_shear"] = profile.wall_shear
    return RunResult(config=config, profile=profile, provider=provider,
                     records=tuple(records), compat_report=compat_report,
                     stats=stats)


# ---------------------------------------------------------------------------
# output writing

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_run_outputs(run: RunResult, outdir):
    """Station CSVs, functional report CSV, and the hashed manifest."""
    os.makedirs(outdir, exist_ok=True)
    files = []
    for i, rec in enumerate(run.records):
        name = f"station_{i:03d}.csv"
        rec.state.to_csv(os.path.join(outdir, name))
        files.append(name)
    from .functionals import write_reports_csv

    write_reports_csv([r.report for r in run.records], os.path.join(outdir, "reports.csv"))
    files.append("reports.csv")

    manifest = {
        "config": run.config.canonical(),
        "stations": [float(r.x) for r in run.records],
        "wall_shear": run.stats.get("wall_shear"),
        "solver_stats": {k: v for k, v in sorted(run.stats.items())},
        "compat_max_residual": (None if run.compat_report is None
                                else run.compat_report.max_residual()),
        "files": {},
    }
    for name in files:
        manifest["files"][name] = _sha256(os.path.join(outdir, name))
    write_json(manifest, os.path.join(outdir, "manifest.json"))
    return manifest
