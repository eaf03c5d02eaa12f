"""Downstream marching of the perturbation system.

The perturbation (u, v) of a Falkner-Skan background obeys

    (ub + eps u) u_x + (vb + eps v) u_y + ub_x u + ub_y v - u_yy = S,
    u_x + v_y = 0,   u(x, 0) = 0,   u -> 0 as y -> inf,

with x playing the role of time (parabolic while ub + eps u >= 0).  Stepping
is implicit in x (backward Euler, optionally BDF2) with Picard-frozen
transport coefficients; each Picard pass is one tridiagonal solve in y.  The
wall row stays the Dirichlet condition, so the vanishing transport coefficient
at y = 0 needs no regularization.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_banded

from .errors import (FlowReversal, IncompatibleData, InsufficientHistory,
                     PicardDivergence)
from .numerics import cumtrapz0, fd_weights, geometric_grid, uniform_grid

_HISTORY_LEN = 6


@dataclass(frozen=True)
class GridSpec:
    """Wall-normal grid specification."""

    kind: str = "geometric"
    y_max: float = 12.0
    first_step: float = 1e-3
    ratio: float = 1.01
    n: int = 401

    def build(self):
        if self.kind == "geometric":
            return geometric_grid(self.y_max, self.first_step, self.ratio)
        if self.kind == "uniform":
            return uniform_grid(self.y_max, self.n)
        raise ValueError(f"unknown grid kind {self.kind!r}")


@dataclass(frozen=True)
class MarchConfig:
    m: float
    epsilon: float
    x_end: float
    grid: GridSpec
    station_schedule: tuple
    x_start: float = 1.0
    dx_init: float = 5e-3
    dx_max: float = 5.0
    nonlinear_tol: float = 1e-12
    max_picard_iters: int = 30
    scheme: str = "be"

    def __post_init__(self):
        if not (self.x_end > self.x_start >= 1.0):
            raise ValueError("need x_end > x_start >= 1")
        if self.dx_init > self.dx_max:
            raise ValueError("need dx_init <= dx_max")
        if self.nonlinear_tol <= 0.0:
            raise ValueError("nonlinear_tol must be positive")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.scheme not in ("be", "bdf2"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass(frozen=True)
class PerturbationState:
    """Perturbation snapshot plus the recent-station ring for x-stencils."""

    x: float
    y_grid: np.ndarray
    u: np.ndarray
    v: np.ndarray
    psi: np.ndarray
    history: tuple  # ((x, u), ...) oldest first, last entry is current

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("y,u,v,psi\n")
            for row in zip(self.y_grid, self.u, self.v, self.psi):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def init_perturbation(config: MarchConfig, u_in) -> PerturbationState:
    """State at x_start from initial data (callable of y or array on the grid)."""
    y = config.grid.build()
    if callable(u_in):
        u0 = np.asarray(u_in(y), dtype=float)
    else:
        u0 = np.asarray(u_in, dtype=float)
        if u0.shape != y.shape:
            raise ValueError("initial data array does not match the grid")
    if abs(u0[0]) > 1e-13 * max(1.0, float(np.max(np.abs(u0)))):
        raise IncompatibleData(f"u_IN(0) = {u0[0]} violates the wall condition")
    psi0 = cumtrapz0(y, u0)
    v0 = np.zeros_like(u0)
    return PerturbationState(x=config.x_start, y_grid=y, u=u0, v=v0, psi=psi0,
                             history=((config.x_start, u0),))


def _dx_stencil(state, dx, scheme):
    """Nodes and derivative weights at the new station x + dx."""
    x_new = state.x + dx
    if scheme == "bdf2" and len(state.history) >= 2:
        xs = [state.history[-2][0], state.x, x_new]
        us = [state.history[-2][1], state.u]
    else:
        xs = [state.x, x_new]
        us = [state.u]
    w = fd_weights(np.asarray(xs), x_new, 1)
    return x_new, w, us


def march_step(state: PerturbationState, background, dx, config: MarchConfig,
               source=None, stats=None) -> PerturbationState:
    """Advance one implicit step of size dx."""
    if dx <= 0:
        raise ValueError("dx must be positive")
    y = state.y_grid
    n = len(y)
    eps = config.epsilon
    x_new, w, us_hist = _dx_stencil(state, dx, config.scheme)
    bg = background.fields(x_new, y)
    src = np.zeros(n) if source is None else np.asarray(source(x_new, y), dtype=float)

    hist_term = sum(wi * ui for wi, ui in zip(w[:-1], us_hist))
    w_new = w[-1]

    hm = y[1:-1] - y[:-2]
    hp = y[2:] - y[1:-1]
    # 3-point nonuniform interior stencils
    d1_lo = -hp / (hm * (hm + hp))
    d1_di = (hp - hm) / (hm * hp)
    d1_hi = hm / (hp * (hm + hp))
    d2_lo = 2.0 / (hm * (hm + hp))
    d2_di = -2.0 / (hm * hp)
    d2_hi = 2.0 / (hp * (hm + hp))

    u_lag = state.u.copy()
    ab = np.zeros((3, n))
    rhs = np.zeros(n)
    converged = False
    iters = 0
    prev_delta = np.inf
    for iters in range(1, config.max_picard_iters + 1):
        dudx_lag = w_new * u_lag + hist_term
        v_lag = -cumtrapz0(y, dudx_lag)
        mu = bg.u_bar + eps * u_lag
        if float(np.min(mu)) < -1e-6 * max(1.0, float(np.max(mu))):
            raise FlowReversal(
                f"transport coefficient negative at x={x_new} (parabolicity lost)")
        nu = bg.v_bar + eps * v_lag

        diag = mu * w_new + bg.u_bar_x
        ab[0, 2:] = nu[1:-1] * d1_hi - d2_hi
        ab[1, 1:-1] = diag[1:-1] + nu[1:-1] * d1_di - d2_di
        ab[2, :-2] = nu[1:-1] * d1_lo - d2_lo
        ab[1, 0] = 1.0
        ab[0, 1] = 0.0
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
        rhs[1:-1] = (src[1:-1] - mu[1:-1] * hist_term[1:-1]
                     - bg.u_bar_y[1:-1] * v_lag[1:-1])
        rhs[0] = 0.0
        rhs[-1] = 0.0

        u_next = solve_banded((1, 1), ab, rhs)
        # pivoting can smear roundoff into the Dirichlet rows; keep them exact
        u_next[0] = 0.0
        u_next[-1] = 0.0
        delta = float(np.max(np.abs(u_next - u_lag)))
        u_lag = u_next
        if delta < config.nonlinear_tol:
            converged = True
            break
        # roundoff plateau: updates this small no longer contract
        scale = max(1.0, float(np.max(np.abs(u_next))))
        if delta < 1e-9 * scale and delta >= 0.25 * prev_delta:
            converged = True
            break
        prev_delta = delta
    if not converged:
        raise PicardDivergence(
            f"Picard stalled at x={x_new}: update {delta:.3e} after {iters} iterations")

    mu_final = bg.u_bar + eps * u_lag
    if float(np.min(mu_final)) < 0.0:
        raise FlowReversal(f"transport coefficient negative at x={x_new}")

    dudx = w_new * u_lag + hist_term
    v_new = -cumtrapz0(y, dudx)
    psi_new = cumtrapz0(y, u_lag)
    history = (state.history + ((x_new, u_lag),))[-_HISTORY_LEN:]
    if stats is not None:
        stats["steps"] = stats.get("steps", 0) + 1
        stats["picard_iters"] = stats.get("picard_iters", 0) + iters
        stats["max_picard"] = max(stats.get("max_picard", 0), iters)
    return PerturbationState(x=x_new, y_grid=y, u=u_lag, v=v_new, psi=psi_new,
                             history=history)


def march_to(state: PerturbationState, x_target, config: MarchConfig, background,
             source=None, stats=None):
    """March to x_target, returning snapshots at the configured stations."""
    if x_target > config.x_end * (1 + 1e-12):
        raise ValueError("x_target exceeds config.x_end")
    sched = sorted(s for s in config.station_schedule if s <= x_target * (1 + 1e-12))
    snapshots = []
    tol = 1e-9

    def at_station(x):
        return any(abs(x - s) <= tol * max(1.0, s) for s in sched)

    if at_station(state.x):
        snapshots.append(state)
    dx_rel = config.dx_init / config.x_start
    while state.x < x_target * (1 - 1e-12):
        next_stop = min([s for s in sched if s > state.x * (1 + tol)] + [x_target])
        dx = min(dx_rel * state.x, config.dx_max, next_stop - state.x)
        state = march_step(state, background, dx, config, source=source, stats=stats)
        if at_station(state.x):
            snapshots.append(state)
    return snapshots


def x_derivatives(state: PerturbationState, k):
    """d^k/dx^k of u at the current station from the nonuniform history ring."""
    if k == 0:
        return state.u.copy()
    if len(state.history) < k + 1:
        raise InsufficientHistory(
            f"order {k} needs {k + 1} stations, have {len(state.history)}")
    xs = np.array([h[0] for h in state.history])
    w = fd_weights(xs, xs[-1], k)
    out = np.zeros_like(state.u)
    for wi, (_, ui) in zip(w, state.history):
        out += wi * ui
    return out


def stencil_order(state: PerturbationState, k):
    """Formal accuracy order of the x-derivative stencil for order k."""
    return max(len(state.history) - k, 0)
