"""Self-similar Prandtl background built from a Falkner-Skan profile.

The stream function psi(x, y) = sqrt(2a/(m+1)) x^{(1+m)/2} f(xi) with
xi = sqrt(a(m+1)/2) * eta and eta = y / x^{(1-m)/2} generates the background
(u, v) for the outer trace u_E = a x^m.  Streamwise derivatives of any
background field are taken analytically through the similarity form: every
field is x^s * G(eta) for some G built from f-derivatives, and

    d/dx [x^s G(eta)] = x^{s-1} (s G - (1-m)/2 * eta * G').

Fields in eta are represented as sparse sums of eta^p * f^(l)(xi), which makes
the recurrence exact to interpolation accuracy at every order.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidBeta, StationOutOfRange
from .fs_profile import FsProfile
from .numerics import deriv1


def _expr_dx(terms, power, m, c_xi):
    """One streamwise derivative of x^power * sum c eta^p f^(l)(c_xi eta)."""
    out = {}

    def add(key, val):
        out[key] = out.get(key, 0.0) + val

    half = 0.5 * (1.0 - m)
    for (p, l), c in terms.items():
        add((p, l), power * c)
        # -(1-m)/2 * eta * d/deta[eta^p f^(l)]
        if p > 0:
            add((p, l), -half * c * p)
        add((p + 1, l + 1), -half * c * c_xi)
    return {k: v for k, v in out.items() if v != 0.0}, power - 1.0


class SelfSimilarBackground:
    """Provider of background fields and their analytic x-derivatives."""

    def __init__(self, profile: FsProfile, euler_amplitude: float = 1.0):
        if euler_amplitude <= 0:
            raise ValueError("euler_amplitude must be positive")
        self.profile = profile
        self.m = profile.params.m
        self.beta = profile.params.beta
        self.a = float(euler_amplitude)
        self.c_xi = math.sqrt(self.a * (self.m + 1.0) / 2.0)
        self.c_psi = math.sqrt(2.0 * self.a / (self.m + 1.0))
        self._dx_cache = {}

    # base fields as (terms, x-power)
    def _base(self, name):
        m, a, c_xi, c_psi = self.m, self.a, self.c_xi, self.c_psi
        if name == "u":
            return {(0, 1): a}, m
        if name == "v":
            return {(0, 0): -c_psi * (1.0 + m) / 2.0,
                    (1, 1): c_psi * (1.0 - m) / 2.0 * c_xi}, (m - 1.0) / 2.0
        if name == "uy":
            return {(0, 2): a * c_xi}, (3.0 * m - 1.0) / 2.0
        raise KeyError(name)

    def _dx_expr(self, name, p):
        key = (name, p)
        if key not in self._dx_cache:
            if p == 0:
                self._dx_cache[key] = self._base(name)
            else:
                terms, power = self._dx_expr(name, p - 1)
                self._dx_cache[key] = _expr_dx(terms, power, self.m, self.c_xi)
        return self._dx_cache[key]

    def _eval_expr(self, terms, power, x, eta):
        xi = self.c_xi * eta
        acc = np.zeros_like(eta, dtype=float)
        for (p, l), c in terms.items():
            term = c * self.profile.eval_deriv(l, xi)
            if p:
                term = term * eta ** p
            acc += term
        return acc * x ** power

    def dx_field(self, name, p, x, y_grid):
        """d^p/dx^p of a base field ("u", "v", "uy") at station x on y_grid."""
        eta = np.asarray(y_grid) / x ** (0.5 * (1.0 - self.m))
        terms, power = self._dx_expr(name, p)
        return self._eval_expr(terms, power, x, eta)

    def minus_dx_pE(self, x):
        # -dp_E/dx = u_E du_E/dx = a^2 m x^{2m-1}
        return self.a * self.a * self.m * x ** (2.0 * self.m - 1.0)

    def fields(self, x, y_grid) -> "BackgroundFields":
        if x < 1.0:
            raise StationOutOfRange(f"station x={x} < 1")
        y = np.asarray(y_grid, dtype=float)
        if y[0] != 0.0 or np.any(np.diff(y) <= 0):
            raise ValueError("y_grid must increase from 0")
        m, a = self.m, self.a
        eta = y / x ** (0.5 * (1.0 - m))
        xi = self.c_xi * eta
        f = self.profile.eval_deriv(0, xi)
        fp = self.profile.eval_deriv(1, xi)
        fpp = self.profile.eval_deriv(2, xi)
        dxi_dy = self.c_xi * x ** (-0.5 * (1.0 - m))
        u_bar = a * x ** m * fp
        psi_bar = self.c_psi * x ** (0.5 * (1.0 + m)) * f
        v_bar = -self.c_psi * x ** (0.5 * (m - 1.0)) * (
            0.5 * (1.0 + m) * f - 0.5 * (1.0 - m) * xi * fp)
        duy = []
        for j in range(1, 5):
            duy.append(a * x ** m * self.profile.eval_deriv(1 + j, xi) * dxi_dy ** j)
        u_bar_x = a * x ** (m - 1.0) * (m * fp - 0.5 * (1.0 - m) * xi * fpp)
        return BackgroundFields(
            m=m, x=float(x), y_grid=y, eta_grid=eta,
            u_bar=u_bar, v_bar=v_bar, psi_bar=psi_bar,
            du_bar_dy=tuple(duy), u_bar_x=u_bar_x, v_bar_y=-u_bar_x,
            provider=self)

    def shift_coefficients(self, x, y_grid):
        """(u_bar_x / u_bar, d/dy of it) with l'Hopital wall values.

        u_bar_x/u_bar = (m - (1-m)/2 W(xi)) / x with W = xi f''/f', W(0) = 1,
        W'(0) = -beta / (2 f''(0)).
        """
        m = self.m
        eta = np.asarray(y_grid) / x ** (0.5 * (1.0 - m))
        xi = self.c_xi * eta
        fp = self.profile.eval_deriv(1, xi)
        fpp = self.profile.eval_deriv(2, xi)
        fppp = self.profile.eval_deriv(3, xi)
        s = self.profile.wall_shear
        W = np.empty_like(xi)
        Wp = np.empty_like(xi)
        pos = xi > 0
        W[pos] = xi[pos] * fpp[pos] / fp[pos]
        Wp[pos] = (fpp[pos] + xi[pos] * fppp[pos]) / fp[pos] - W[pos] * fpp[pos] / fp[pos]
        W[~pos] = 1.0
        Wp[~pos] = -self.beta / (2.0 * s)
        ratio = (m - 0.5 * (1.0 - m) * W) / x
        dxi_dy = self.c_xi * x ** (-0.5 * (1.0 - m))
        d_ratio = -0.5 * (1.0 - m) / x * Wp * dxi_dy
        return ratio, d_ratio


@dataclass(frozen=True)
class BackgroundFields:
    """Background state at one station; immutable after construction."""

    m: float
    x: float
    y_grid: np.ndarray
    eta_grid: np.ndarray
    u_bar: np.ndarray
    v_bar: np.ndarray
    psi_bar: np.ndarray
    du_bar_dy: tuple
    u_bar_x: np.ndarray
    v_bar_y: np.ndarray
    provider: SelfSimilarBackground = field(repr=False, compare=False)

    @property
    def u_bar_y(self):
        return self.du_bar_dy[0]

    @property
    def u_bar_yy(self):
        return self.du_bar_dy[1]

    @property
    def u_bar_yyy(self):
        return self.du_bar_dy[2]

    @property
    def u_bar_yyyy(self):
        return self.du_bar_dy[3]

    @property
    def dx_pE(self):
        return -self.provider.minus_dx_pE(self.x)

    @property
    def minus_dx_pE(self):
        return self.provider.minus_dx_pE(self.x)

    def divergence_residual(self):
        """|d/dx u_bar + d/dy v_bar| with the y-derivative by finite differences."""
        return np.abs(self.u_bar_x + deriv1(self.y_grid, self.v_bar))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("x,y,eta,u_bar,v_bar,psi_bar,duy1,duy2,duy3,duy4\n")
            for i in range(len(self.y_grid)):
                row = (self.x, self.y_grid[i], self.eta_grid[i], self.u_bar[i],
                       self.v_bar[i], self.psi_bar[i], self.du_bar_dy[0][i],
                       self.du_bar_dy[1][i], self.du_bar_dy[2][i], self.du_bar_dy[3][i])
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def build_background(profile: FsProfile, x, y_grid, euler_amplitude=1.0) -> BackgroundFields:
    return SelfSimilarBackground(profile, euler_amplitude).fields(x, y_grid)


@dataclass(frozen=True)
class VDecomposition:
    """v_bar = (-m eta + v_star(eta)) x^{-(1-m)/2} with v_star bounded."""

    eta_grid: np.ndarray
    v_star: np.ndarray
    sup_v_star: float


def decompose_v(bg: BackgroundFields) -> VDecomposition:
    scale = bg.x ** (0.5 * (1.0 - bg.m))
    v_star = bg.v_bar * scale + bg.m * bg.eta_grid
    return VDecomposition(eta_grid=bg.eta_grid, v_star=v_star,
                          sup_v_star=float(np.max(np.abs(v_star))))


@dataclass(frozen=True)
class WedgeFlow:
    """Potential flow in the wedge sector beta*pi/2 < theta < pi.

    psi_E(theta, r) = r^{2/(2-beta)} sin((2/(2-beta)) (pi - theta)) vanishes on
    both rays and is harmonic; its wall trace reproduces the power law
    (1+m) tau^m.
    """

    beta: float

    def __post_init__(self):
        if not 0.0 <= self.beta < 2.0:
            raise InvalidBeta(f"beta must lie in [0, 2), got {self.beta}")

    @property
    def m(self):
        return self.beta / (2.0 - self.beta)

    @property
    def wall_angle(self):
        return self.beta * math.pi / 2.0

    def psi(self, theta, r):
        k = 2.0 / (2.0 - self.beta)
        return r ** k * np.sin(k * (math.pi - np.asarray(theta)))

    def trace_closed_form(self, tau):
        if np.any(np.asarray(tau) <= 0):
            raise ValueError("tau must be positive")
        return (1.0 + self.m) * np.asarray(tau) ** self.m

    def trace_fd(self, tau, h):
        """One-sided wall-normal difference psi(tau, h)/h into the fluid."""
        r = math.hypot(tau, h)
        theta = self.wall_angle + math.atan2(h, tau)
        return float(self.psi(theta, r)) / h

    def harmonicity_residual(self, r_lo=1.0, r_hi=2.0, h=1e-3, n_r=21, n_theta=21):
        """Max |polar Laplacian| by centered differences with step h over an annulus."""
        pad = 2.0 * h
        thetas = np.linspace(self.wall_angle + pad, math.pi - pad, n_theta)
        rs = np.linspace(r_lo, r_hi, n_r)
        R, T = np.meshgrid(rs, thetas, indexing="ij")
        psi = self.psi
        lap = ((psi(T, R + h) - 2.0 * psi(T, R) + psi(T, R - h)) / h ** 2
               + (psi(T, R + h) - psi(T, R - h)) / (2.0 * h * R)
               + (psi(T + h, R) - 2.0 * psi(T, R) + psi(T - h, R)) / (h ** 2 * R ** 2))
        return float(np.max(np.abs(lap)))


def wedge_euler_trace(beta, tau):
    """Wall trace u_E(tau) = (1+m) tau^m of the wedge potential flow."""
    if np.any(np.asarray(tau) <= 0):
        raise ValueError("tau must be positive")
    return WedgeFlow(beta).trace_closed_form(tau)


def wedge_harmonicity_check(beta, r_lo=1.0, r_hi=2.0, h=1e-3, n_r=21, n_theta=21):
    return WedgeFlow(beta).harmonicity_residual(r_lo, r_hi, h, n_r, n_theta)
