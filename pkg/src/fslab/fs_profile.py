"""Falkner-Skan boundary-value solver.

Solves f''' + f f'' + beta (1 - f'^2) = 0 on [0, xi_max] with f(0) = f'(0) = 0
and f' -> 1 in the far field, by shooting on the wall shear s = f''(0).
The one-parameter family beta in [0, 2) corresponds to the power-law exponent
m = beta / (2 - beta) of the outer flow trace x^m.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import NoBracket, NonConvergence

_BRACKET_HI = 3.0
_BRACKET_DOUBLINGS = 5
_MAX_SHOTS = 200


def beta_from_m(m):
    if m < 0:
        raise ValueError(f"need m >= 0, got {m}")
    return 2.0 * m / (m + 1.0)


def m_from_beta(beta):
    if not 0.0 <= beta < 2.0:
        raise ValueError(f"need beta in [0, 2), got {beta}")
    return beta / (2.0 - beta)


@dataclass(frozen=True)
class FsParams:
    """Solver parameters; beta and m must round-trip exactly."""

    beta: float
    m: float
    eta_max: float = 15.0
    n_xi: int = 4001
    shoot_tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 <= self.beta < 2.0:
            raise ValueError(f"beta must lie in [0, 2), got {self.beta}")
        if self.m < 0.0:
            raise ValueError(f"m must be >= 0, got {self.m}")
        if abs(self.beta - beta_from_m(self.m)) > 4 * np.finfo(float).eps * max(1.0, self.beta):
            raise ValueError("beta and m are inconsistent")
        if self.eta_max < 8.0:
            raise ValueError("eta_max must be >= 8")
        if self.n_xi < 200:
            raise ValueError("n_xi must be >= 200")
        if self.shoot_tol <= 0.0:
            raise ValueError("shoot_tol must be positive")

    @classmethod
    def from_beta(cls, beta, **kw):
        return cls(beta=float(beta), m=m_from_beta(beta), **kw)

    @classmethod
    def from_m(cls, m, **kw):
        return cls(beta=beta_from_m(m), m=float(m), **kw)

    @property
    def xi_max(self):
        # similarity coordinate of the FS equation: xi = sqrt((m+1)/2) eta
        return math.sqrt((self.m + 1.0) / 2.0) * self.eta_max


def _shoot(beta, s, xi_max, n):
    """RK4 march of (f, f', f'') from the wall; returns f'(xi_max) - 1.

    Off-shoot trajectories are classified early so the mismatch keeps a
    usable sign: f' decisively above 1 means overshoot (positive mismatch),
    while f'' turning negative with f' still well below 1 means the velocity
    has peaked short of the free stream (negative mismatch).  Both exits
    happen before the cubic blow-up of wrong trajectories.
    """
    h = xi_max / (n - 1)
    f, fp, fpp = 0.0, 0.0, s
    for _ in range(n - 1):
        if fp > 1.01:
            break
        if fpp < 0.0 and fp < 0.99:
            return fp - 1.0
        k1f, k1p, k1pp = fp, fpp, -f * fpp - beta * (1.0 - fp * fp)
        f2, p2, pp2 = f + 0.5 * h * k1f, fp + 0.5 * h * k1p, fpp + 0.5 * h * k1pp
        k2f, k2p, k2pp = p2, pp2, -f2 * pp2 - beta * (1.0 - p2 * p2)
        f3, p3, pp3 = f + 0.5 * h * k2f, fp + 0.5 * h * k2p, fpp + 0.5 * h * k2pp
        k3f, k3p, k3pp = p3, pp3, -f3 * pp3 - beta * (1.0 - p3 * p3)
        f4, p4, pp4 = f + h * k3f, fp + h * k3p, fpp + h * k3pp
        k4f, k4p, k4pp = p4, pp4, -f4 * pp4 - beta * (1.0 - p4 * p4)
        f += h * (k1f + 2.0 * k2f + 2.0 * k3f + k4f) / 6.0
        fp += h * (k1p + 2.0 * k2p + 2.0 * k3p + k4p) / 6.0
        fpp += h * (k1pp + 2.0 * k2pp + 2.0 * k3pp + k4pp) / 6.0
    return fp - 1.0


def _shoot_store(beta, s, xi_grid):
    """Same march as _shoot but records the trajectory on xi_grid."""
    n = len(xi_grid)
    h = xi_grid[1] - xi_grid[0]
    f = np.empty(n)
    fp = np.empty(n)
    fpp = np.empty(n)
    f[0], fp[0], fpp[0] = 0.0, 0.0, s
    a, b, c = 0.0, 0.0, s
    for i in range(1, n):
        k1f, k1p, k1pp = b, c, -a * c - beta * (1.0 - b * b)
        f2, p2, pp2 = a + 0.5 * h * k1f, b + 0.5 * h * k1p, c + 0.5 * h * k1pp
        k2f, k2p, k2pp = p2, pp2, -f2 * pp2 - beta * (1.0 - p2 * p2)
        f3, p3, pp3 = a + 0.5 * h * k2f, b + 0.5 * h * k2p, c + 0.5 * h * k2pp
        k3f, k3p, k3pp = p3, pp3, -f3 * pp3 - beta * (1.0 - p3 * p3)
        f4, p4, pp4 = a + h * k3f, b + h * k3p, c + h * k3pp
        k4f, k4p, k4pp = p4, pp4, -f4 * pp4 - beta * (1.0 - p4 * p4)
        a += h * (k1f + 2.0 * k2f + 2.0 * k3f + k4f) / 6.0
        b += h * (k1p + 2.0 * k2p + 2.0 * k3p + k4p) / 6.0
        c += h * (k1pp + 2.0 * k2pp + 2.0 * k3pp + k4pp) / 6.0
        f[i], fp[i], fpp[i] = a, b, c
    return f, fp, fpp


@dataclass(frozen=True)
class FsProfile:
    """Solved profile with f, f', f'', f''' on a uniform xi grid."""

    params: FsParams
    xi_grid: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    fpp: np.ndarray
    fppp: np.ndarray
    wall_shear: float

    @property
    def xi_max(self):
        return float(self.xi_grid[-1])

    @property
    def far_field_shift(self):
        # c_beta in the linear asymptote f(xi) ~ xi - c_beta
        return float(self.xi_grid[-1] - self.f[-1])

    def derivative_table(self, max_order):
        """Arrays of f^(j) on the grid, j = 0..max_order, from the ODE recurrence.

        f''' = -f f'' - beta (1 - f'^2); higher orders follow by Leibniz
        differentiation, so every entry is algebraic in (f, f', f'').
        """
        beta = self.params.beta
        d = [self.f, self.fp, self.fpp, self.fppp]
        while len(d) <= max_order:
            n = len(d) - 3
            acc = np.zeros_like(self.f)
            for i in range(n + 1):
                cni = math.comb(n, i)
                acc -= cni * d[i] * d[n - i + 2]
                acc += beta * cni * d[i + 1] * d[n - i + 1]
            d.append(acc)
        return d[: max_order + 1]

    def _splines(self):
        cache = getattr(self, "_spline_cache", None)
        if cache is None:
            cache = {}
            object.__setattr__(self, "_spline_cache", cache)
        return cache

    def spline(self, order):
        """Cubic Hermite interpolant of f^(order) (value + known next derivative)."""
        cache = self._splines()
        if order not in cache:
            table = self.derivative_table(order + 1)
            cache[order] = CubicHermiteSpline(self.xi_grid, table[order], table[order + 1])
        return cache[order]

    def eval_deriv(self, order, xi):
        """f^(order) at xi >= 0 with the far-field linear extension beyond the grid."""
        xi = np.asarray(xi, dtype=float)
        out = np.empty_like(xi)
        inside = xi <= self.xi_max
        out[inside] = self.spline(order)(xi[inside])
        far = ~inside
        if np.any(far):
            if order == 0:
                out[far] = xi[far] - self.far_field_shift
            elif order == 1:
                out[far] = 1.0
            else:
                out[far] = 0.0
        return out

    def eval(self, xi):
        """(f, f', f'') at xi >= 0; total in xi."""
        xi = np.asarray(xi, dtype=float)
        if np.any(xi < 0):
            raise ValueError("xi must be >= 0")
        return self.eval_deriv(0, xi), self.eval_deriv(1, xi), self.eval_deriv(2, xi)

    def ode_residual(self):
        """f''' + f f'' + beta (1 - f'^2) with f''' from centered differences of f''.

        Measures discretization consistency; the stored fppp (ODE-exact) would
        give an identically zero residual.
        """
        from .numerics import deriv1

        fppp_fd = deriv1(self.xi_grid, self.fpp)
        return fppp_fd + self.f * self.fpp + self.params.beta * (1.0 - self.fp ** 2)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(f"# beta={self.params.beta!r} m={self.params.m!r} wall_shear={self.wall_shear!r}\n")
            fh.write("xi,f,fp,fpp\n")
            for row in zip(self.xi_grid, self.f, self.fp, self.fpp):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def solve_fs(params: FsParams) -> FsProfile:
    """Shoot for the wall shear and return the solved profile.

    Bisection on the far-field mismatch over [0, 3] (doubled on failure to
    bracket), then secant refinement down to shoot_tol.
    """
    beta = params.beta
    xi_max = params.xi_max
    n = params.n_xi
    shots = 0

    def mismatch(s):
        nonlocal shots
        shots += 1
        if shots > _MAX_SHOTS:
            raise NonConvergence("shooting exceeded its iteration cap")
        return _shoot(beta, s, xi_max, n)

    lo, hi = 0.0, _BRACKET_HI
    g_lo = mismatch(lo)
    g_hi = mismatch(hi)
    widenings = 0
    while g_lo * g_hi > 0.0:
        if widenings >= _BRACKET_DOUBLINGS:
            raise NoBracket(f"no sign change of far-field mismatch on [0, {hi}]")
        hi *= 2.0
        g_hi = mismatch(hi)
        widenings += 1

    # bisection to narrow the bracket
    for _ in range(14):
        mid = 0.5 * (lo + hi)
        g_mid = mismatch(mid)
        if abs(g_mid) <= params.shoot_tol:
            lo = hi = mid
            g_lo = g_hi = g_mid
            break
        if g_lo * g_mid <= 0.0:
            hi, g_hi = mid, g_mid
        else:
            lo, g_lo = mid, g_mid

    # secant refinement inside the bracket, falling back to bisection
    s0, s1 = lo, hi
    g0, g1 = g_lo, g_hi
    s_best, g_best = (s0, g0) if abs(g0) < abs(g1) else (s1, g1)
    while abs(g_best) > params.shoot_tol:
        if hi - lo <= 8.0 * np.finfo(float).eps * max(1.0, hi):
            raise NonConvergence(
                f"far-field mismatch floor {abs(g_best):.3e} above shoot_tol "
                f"(beta={beta}, xi_max={xi_max:.1f}); reduce eta_max")
        if g1 != g0 and s1 != s0:
            s2 = s1 - g1 * (s1 - s0) / (g1 - g0)
        else:
            s2 = 0.5 * (lo + hi)
        if not lo <= s2 <= hi:
            s2 = 0.5 * (lo + hi)
        g2 = mismatch(s2)
        if abs(g2) < abs(g_best):
            s_best, g_best = s2, g2
        if g_lo * g2 <= 0.0:
            hi, g_hi = s2, g2
        else:
            lo, g_lo = s2, g2
        s0, g0, s1, g1 = s1, g1, s2, g2

    xi_grid = np.linspace(0.0, xi_max, n)
    f, fp, fpp = _shoot_store(beta, s_best, xi_grid)
    fppp = -f * fpp - beta * (1.0 - fp ** 2)
    return FsProfile(params=params, xi_grid=xi_grid, f=f, fp=fp, fpp=fpp,
                     fppp=fppp, wall_shear=float(s_best))
