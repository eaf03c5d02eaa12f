"""Run configuration: a single JSON file with nested sections.

Exactly one of "m" / "beta" selects the background family.  Every run is
reproducible from (config, seed); the canonical dict feeds the output
manifest and its hash.
"""

import json
from dataclasses import dataclass, field

from .fs_profile import beta_from_m, m_from_beta
from .marching import GridSpec, MarchConfig

import numpy as np

DEFAULT_ETA_CAP = 12.0


@dataclass(frozen=True)
class RunConfig:
    m: float
    beta: float
    epsilon: float
    seed: int
    output_dir: str
    fs: dict
    grid: dict
    march: dict
    stations: tuple
    initial_data: dict
    compat: dict
    diagnostics: dict
    check: dict
    raw: dict = field(repr=False)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if ("m" in d) == ("beta" in d):
            raise ValueError("config must set exactly one of 'm' and 'beta'")
        if "m" in d:
            m = float(d["m"])
            beta = beta_from_m(m)
        else:
            beta = float(d["beta"])
            m = m_from_beta(beta)
        eps = float(d.get("epsilon", 1e-2))
        if eps <= 0:
            raise ValueError("epsilon must be positive")
        seed = int(d.get("seed", 20240))

        fs = {"eta_max": 15.0, "n_xi": 4001, "shoot_tol": 1e-10}
        fs.update(d.get("fs", {}))

        march = {"x_end": 500.0, "x_start": 1.0, "dx_init": 5e-3, "dx_max": 5.0,
                 "nonlinear_tol": 1e-12, "max_picard_iters": 30, "scheme": "be"}
        march.update(d.get("march", {}))

        grid = {"kind": "geometric", "eta_cap": DEFAULT_ETA_CAP,
                "first_step": 1e-3, "ratio": 1.01, "n": 801}
        grid.update(d.get("grid", {}))

        st = d.get("stations", {"count": 41})
        if isinstance(st, dict) and "list" in st:
            stations = tuple(float(s) for s in st["list"])
        elif isinstance(st, dict):
            count = int(st.get("count", 41))
            stations = tuple(np.geomspace(march["x_start"], march["x_end"], count))
        else:
            stations = tuple(float(s) for s in st)

        initial = {"family": "eta_gauss", "amplitude": 1.0, "power": 1,
                   "center": 0.0, "width": 1.0}
        initial.update(d.get("initial_data", {}))

        compat = {"project": True, "k_max": 2, "y_max": 14.0, "step": 0.02,
                  "width": 0.35}
        compat.update(d.get("compat", {}))

        diag = {"k_max": 5, "transient_x": 20.0, "lam": 0.1,
                "rate_window": (50.0, 500.0), "plots": False,
                "calibration_path": None, "recalibrate": False,
                "residual_levels": None, "quantities": None}
        diag.update(d.get("diagnostics", {}))

        check = {"ms": (0.0, 1.0), "xs": (1.0, 10.0), "corpus_n": 200,
                 "corpus_seed": seed, "max_violation_fraction": 0.05}
        check.update(d.get("check", {}))

        return cls(m=m, beta=beta, epsilon=eps, seed=seed,
                   output_dir=str(d.get("output_dir", "out")),
                   fs=fs, grid=grid, march=march, stations=stations,
                   initial_data=initial, compat=compat, diagnostics=diag,
                   check=check, raw=d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def grid_spec(self):
        y_max = self.grid.get("y_max")
        if y_max is None:
            y_max = self.grid["eta_cap"] * self.march["x_end"] ** (0.5 * (1.0 - self.m))
        return GridSpec(kind=self.grid["kind"], y_max=float(y_max),
                        first_step=float(self.grid["first_step"]),
                        ratio=float(self.grid["ratio"]), n=int(self.grid["n"]))

    def march_config(self):
        return MarchConfig(m=self.m, epsilon=self.epsilon,
                           x_end=float(self.march["x_end"]),
                           x_start=float(self.march["x_start"]),
                           grid=self.grid_spec(),
                           station_schedule=self.stations,
                           dx_init=float(self.march["dx_init"]),
                           dx_max=float(self.march["dx_max"]),
                           nonlinear_tol=float(self.march["nonlinear_tol"]),
                           max_picard_iters=int(self.march["max_picard_iters"]),
                           scheme=self.march["scheme"])

    def canonical(self):
        """Fully resolved, JSON-stable dictionary (for manifests and hashing)."""
        return {
            "m": self.m, "beta": self.beta, "epsilon": self.epsilon,
            "seed": self.seed, "fs": self.fs, "grid": self.grid,
            "march": self.march, "stations": list(self.stations),
            "initial_data": self.initial_data, "compat": self.compat,
            "diagnostics": {k: (list(v) if isinstance(v, tuple) else v)
                            for k, v in self.diagnostics.items()},
            "check": {k: (list(v) if isinstance(v, tuple) else v)
                      for k, v in self.check.items()},
        }
