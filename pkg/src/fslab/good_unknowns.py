"""Renormalized transport unknowns and wall-compatibility machinery.

For each streamwise-derivative order k the linear good unknowns are

    Q_k = psi^(k) / ub,     U_k = dQ_k/dy = (u^(k) - (ub_y/ub) psi^(k)) / ub,

with the inversion u^(k) = ub U_k + ub_y Q_k.  Quasilinear versions replace
ub by mu = ub + eps u.  Near the wall both numerator and denominator vanish
linearly, so the wall value is taken as the limit d_y u^(k)(0) / (2 ub_y(0))
(psi^(k) vanishes quadratically, which contributes the extra factor 2).

Compatibility of initial data is checked through the order-raising maps

    Ray[U]   = ub U + ub_y int_0^y U,
    Jump_k[U] = (G_k + d_yy Ray[U] - ub vb d_y U - ub_yyy int_0^y U
                 - 2 (ub_yy - dp_E/dx) U) / ub^2,
    Shift[U] = (ub_x/ub) U + d_y{ub_x/ub} int_0^y U,

whose well-definedness at the wall (numerator vanishing to second order) is
exactly the order-k compatibility condition pair.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateBackground, IllConditionedCorrection,
                     IncompatibleData, NonConvergence, OrderUnavailable)
from .marching import PerturbationState, x_derivatives
from .numerics import cumtrapz0, deriv1, deriv2, fd_weights, wall_derivative


@dataclass(frozen=True)
class GoodUnknownStack:
    """Linear and quasilinear good unknowns up to order k_max at one station."""

    x: float
    y_grid: np.ndarray
    k_max: int
    eps: float
    u_derivs: tuple      # u^(k), k = 0..k_max
    psi_derivs: tuple    # psi^(k) = int_0^y u^(k)
    v_derivs: tuple      # v^(k) = -int_0^y u^(k+1), k = 0..k_max-1
    Q: tuple
    U: tuple
    calQ: tuple
    calU: tuple
    mu: np.ndarray
    nu: np.ndarray
    mu_y: np.ndarray
    coeff_a: np.ndarray
    coeff_b: np.ndarray
    coeff_c: np.ndarray
    shift_ratio: np.ndarray     # ub_x / ub
    shift_ratio_dy: np.ndarray  # d/dy of it

    def dy_U(self, k):
        return deriv1(self.y_grid, self.U[k])

    def dyy_U(self, k):
        return deriv2(self.y_grid, self.U[k])

    def dy_calU(self, k):
        return deriv1(self.y_grid, self.calU[k])

    def dx_U(self, k):
        """d/dx U_k through the order-raising identity (needs order k+1)."""
        if k + 1 > self.k_max:
            raise OrderUnavailable(f"dx_U({k}) needs order {k + 1}")
        return self.U[k + 1] - self.shift_ratio * self.U[k] - self.shift_ratio_dy * self.Q[k]

    def to_csv(self, prefix):
        for k in range(self.k_max + 1):
            with open(f"{prefix}_k{k}.csv", "w") as fh:
                fh.write("y,Q,U,calQ,calU\n")
                for row in zip(self.y_grid, self.Q[k], self.U[k], self.calQ[k], self.calU[k]):
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _good_pair(y, u_k, psi_k, denom, denom_y):
    """(Q, U) for one order against a linearly-vanishing denominator."""
    Q = np.empty_like(u_k)
    U = np.empty_like(u_k)
    Q[0] = 0.0
    Q[1:] = psi_k[1:] / denom[1:]
    U[1:] = (u_k[1:] - (denom_y[1:] / denom[1:]) * psi_k[1:]) / denom[1:]
    U[0] = wall_derivative(y, u_k, 1) / (2.0 * denom_y[0])
    return Q, U


def build_stack_from_derivatives(u_derivs, bg, eps, u_field=None, v_field=None,
                                 k_max=None) -> GoodUnknownStack:
    """Assemble a stack from explicit u^(k) arrays (the marching-free core)."""
    y = bg.y_grid
    if bg.u_bar_y[0] <= 0.0:
        raise DegenerateBackground("wall shear of the background is not positive")
    if k_max is None:
        k_max = len(u_derivs) - 1
    u_derivs = tuple(np.asarray(a, dtype=float) for a in u_derivs[: k_max + 1])
    psi_derivs = tuple(cumtrapz0(y, a) for a in u_derivs)
    v_derivs = tuple(-cumtrapz0(y, u_derivs[k + 1]) for k in range(k_max))

    u = u_derivs[0] if u_field is None else np.asarray(u_field, dtype=float)
    if v_field is None:
        v = v_derivs[0] if k_max >= 1 else np.zeros_like(u)
    else:
        v = np.asarray(v_field, dtype=float)

    mu = bg.u_bar + eps * u
    nu = bg.v_bar + eps * v
    mu_y = bg.u_bar_y + eps * deriv1(y, u)

    Q, U, calQ, calU = [], [], [], []
    for k in range(k_max + 1):
        q, uu = _good_pair(y, u_derivs[k], psi_derivs[k], bg.u_bar, bg.u_bar_y)
        Q.append(q)
        U.append(uu)
        cq, cu = _good_pair(y, u_derivs[k], psi_derivs[k], mu, mu_y)
        calQ.append(cq)
        calU.append(cu)

    if k_max >= 1:
        mu_x = bg.u_bar_x + eps * u_derivs[1]
        ub_xy = bg.provider.dx_field("uy", 1, bg.x, y)
        mu_xy = ub_xy + eps * deriv1(y, u_derivs[1])
        mu_yy = bg.u_bar_yy + eps * deriv2(y, u)
        coeff_a = mu * mu_x + bg.u_bar_x * mu + 2.0 * bg.v_bar * mu_y
        coeff_b = mu * mu_xy + bg.v_bar * mu_yy - (mu_x - bg.u_bar_x) * mu_y
        coeff_c = bg.v_bar * mu
    else:
        coeff_a = coeff_b = coeff_c = np.full_like(u, np.nan)

    ratio, ratio_dy = bg.provider.shift_coefficients(bg.x, y)
    return GoodUnknownStack(
        x=bg.x, y_grid=y, k_max=k_max, eps=eps,
        u_derivs=u_derivs, psi_derivs=psi_derivs, v_derivs=v_derivs,
        Q=tuple(Q), U=tuple(U), calQ=tuple(calQ), calU=tuple(calU),
        mu=mu, nu=nu, mu_y=mu_y,
        coeff_a=coeff_a, coeff_b=coeff_b, coeff_c=coeff_c,
        shift_ratio=ratio, shift_ratio_dy=ratio_dy)


def build_stack(state: PerturbationState, bg, k_max, eps) -> GoodUnknownStack:
    """Stack from a marching state, with u^(k) from the history ring."""
    u_derivs = [x_derivatives(state, k) for k in range(k_max + 1)]
    return build_stack_from_derivatives(u_derivs, bg, eps,
                                        u_field=state.u, v_field=state.v)


def _commutator_sums(provider, x, y, u_list, v_list, k):
    """The four commutator sums from d^k/dx^k of the transport terms."""
    F = np.zeros_like(u_list[0])
    for kp in range(k):
        c = float(math.comb(k, kp))
        F += c * provider.dx_field("u", k - kp, x, y) * u_list[kp + 1]
        F += c * provider.dx_field("u", k - kp + 1, x, y) * u_list[kp]
        F += c * provider.dx_field("v", k - kp, x, y) * deriv1(y, u_list[kp])
        F += c * provider.dx_field("uy", k - kp, x, y) * v_list[kp]
    return F


def commutator_forcing(stack: GoodUnknownStack, bg, k):
    """Forcing from commuting d^k/dx^k past the background transport."""
    if k < 1:
        raise ValueError("commutator forcing is defined for k >= 1")
    if k > stack.k_max:
        raise OrderUnavailable(f"stack holds orders <= {stack.k_max}")
    return _commutator_sums(bg.provider, stack.x, stack.y_grid,
                            stack.u_derivs, stack.v_derivs, k)


def quadratic_lower(stack: GoodUnknownStack, k):
    """Lower-order quadratic interactions of d^k/dx^k of the nonlinearity."""
    if k < 1:
        raise ValueError("defined for k >= 1")
    if k > stack.k_max:
        raise OrderUnavailable(f"stack holds orders <= {stack.k_max}")
    y = stack.y_grid
    out = np.zeros_like(stack.u_derivs[0])
    for kp in range(k):
        c = float(math.comb(k, kp))
        out += c * (stack.u_derivs[k - kp] * stack.u_derivs[kp + 1]
                    + deriv1(y, stack.u_derivs[k - kp]) * stack.v_derivs[kp])
    return out


def source_term(stack: GoodUnknownStack, bg, k, quasilinear=False):
    """G_k (or H_k for the quasilinear top level) at the stack's station.

    G_k = F_comm,k - eps (u u^(k+1) + u_y v^(k) + lower quadratics); the top
    two terms need order k+1, so they are only available for k < k_max.
    H_k drops them by construction.
    """
    F = commutator_forcing(stack, bg, k) if k >= 1 else np.zeros_like(stack.u_derivs[0])
    qlo = quadratic_lower(stack, k) if k >= 1 else np.zeros_like(stack.u_derivs[0])
    if quasilinear:
        return F - stack.eps * qlo
    if k + 1 > stack.k_max:
        raise OrderUnavailable(f"full G_{k} needs order {k + 1}")
    u = stack.u_derivs[0]
    u_y = deriv1(stack.y_grid, u)
    v_k = stack.v_derivs[k]
    return F - stack.eps * (u * stack.u_derivs[k + 1] + u_y * v_k + qlo)


@dataclass(frozen=True)
class CompatReport:
    """Wall-compatibility residuals of initial data up to order k_max."""

    cc0_ok: bool
    cc_residuals: tuple   # ((cc_k1, cc_k2) for k = 1..k_max)
    data_stack: tuple     # U_IN;k arrays, k = 0..k_max
    tol: float

    def passed(self):
        return self.cc0_ok and all(
            abs(r1) <= self.tol and abs(r2) <= self.tol for r1, r2 in self.cc_residuals)

    def max_residual(self):
        if not self.cc_residuals:
            return 0.0
        return max(max(abs(r1), abs(r2)) for r1, r2 in self.cc_residuals)


def _initial_good_unknown(y, u0, bg):
    psi0 = cumtrapz0(y, u0)
    _, U0 = _good_pair(y, u0, psi0, bg.u_bar, bg.u_bar_y)
    return U0


def _ray(bg, U):
    return bg.u_bar * U + bg.u_bar_y * cumtrapz0(bg.y_grid, U)


def _compat_chain(u0, bg, k_max, eps):
    """Run the order-raising recursion; returns (U-stack, residual pairs).

    The order-(k+1) nonlinear source terms u u^(k+1) and u_y v^(k) are not yet
    available when building U_IN;k+1; both vanish at the wall together with
    their first y-derivative, so the reported residuals are unaffected by
    dropping them.
    """
    y = bg.y_grid
    ratio, ratio_dy = bg.provider.shift_coefficients(bg.x, y)
    T = [_initial_good_unknown(y, u0, bg)]
    u_list = [u0]
    v_list = []
    residuals = []
    extrap_w = fd_weights(y[1:4], y[0], 0)
    for k in range(1, k_max + 1):
        km1 = k - 1
        F = _commutator_sums(bg.provider, bg.x, y, u_list, v_list, km1)
        qlo = np.zeros_like(u0)
        for kp in range(km1):
            c = float(math.comb(km1, kp))
            qlo += c * (u_list[km1 - kp] * u_list[kp + 1]
                        + deriv1(y, u_list[km1 - kp]) * v_list[kp])
        G = F - eps * qlo
        Tk = T[km1]
        intT = cumtrapz0(y, Tk)
        # Ray[T_{k-1}] = u^{(k-1)} by construction; differentiating the stored
        # u-array avoids first-cell quadrature pollution of the round trip
        N = (G + deriv2(y, u_list[km1]) - bg.u_bar * bg.v_bar * deriv1(y, Tk)
             - bg.u_bar_yyy * intT - 2.0 * (bg.u_bar_yy - bg.dx_pE) * Tk)
        cc1 = float(N[0])
        cc2 = wall_derivative(y, N, 1)
        residuals.append((cc1, cc2))
        jump = np.empty_like(N)
        jump[1:] = N[1:] / bg.u_bar[1:] ** 2
        jump[0] = float(extrap_w @ jump[1:4])
        shift = ratio * Tk + ratio_dy * intT
        T.append(jump + shift)
        u_list.append(_ray(bg, T[k]))
        v_list = [-cumtrapz0(y, u_list[j + 1]) for j in range(len(u_list) - 1)]
    return T, residuals


def iterate_cauchy_data(u_in, bg, k_max, eps, tol=1e-6) -> CompatReport:
    """Build the derived initial good unknowns and report wall residuals."""
    y = bg.y_grid
    u0 = np.asarray(u_in(y) if callable(u_in) else u_in, dtype=float)
    scale = max(1.0, float(np.max(np.abs(u0))))
    if abs(u0[0]) > 1e-13 * scale:
        raise IncompatibleData(f"u_IN(0) = {u0[0]} violates the wall condition")
    u0 = u0.copy()
    u0[0] = 0.0
    T, residuals = _compat_chain(u0, bg, k_max, eps)
    return CompatReport(cc0_ok=True, cc_residuals=tuple(residuals),
                        data_stack=tuple(T), tol=tol)


def project_compatible(u_in, bg, k_max, eps, tol=1e-7, max_newton=12,
                       cutoff_width=0.35):
    """Correct initial data by localized wall functions until compatible.

    Correctors are c_j y^j exp(-(y/w)^2): the j = 0 term removes a wall
    offset exactly, and the order-k condition pair is driven mainly by
    (y^{2k}, y^{2k+1}).  The full Newton system over j = 2..2*k_max+1 is
    solved with row equilibration (condition residuals grow steeply with the
    order).  Narrower cutoffs give sup-smaller corrections but need grid
    resolution ~10 cells across the cutoff.
    """
    y = bg.y_grid
    u0 = np.asarray(u_in(y) if callable(u_in) else u_in, dtype=float).copy()
    w = float(cutoff_width)

    def phi(j):
        raw = y ** j * np.exp(-((y / w) ** 2))
        return raw / float(np.max(np.abs(raw)))

    u0 = u0 - u0[0] * phi(0)
    u0[0] = 0.0
    if k_max == 0:
        return u0
    basis = [phi(j) for j in range(2, 2 * k_max + 2)]
    n_c = len(basis)
    data_scale = max(1.0, float(np.max(np.abs(u0))))

    def residual(c):
        corrected = u0.copy()
        for j in range(n_c):
            corrected -= c[j] * basis[j]
        _, res = _compat_chain(corrected, bg, k_max, eps)
        return np.array([r for pair in res for r in pair])

    c = np.zeros(n_c)
    r = residual(c)
    delta = 1e-6 * data_scale
    r_scale = None
    for _ in range(max_newton):
        J = np.empty((n_c, n_c))
        for j in range(n_c):
            cp = c.copy()
            cp[j] += delta
            J[:, j] = (residual(cp) - r) / delta
        if r_scale is None:
            # natural units of each condition: its response to an O(data)
            # corrector, so the criterion is meaningful for any input size
            r_scale = np.maximum(np.max(np.abs(J), axis=1) * data_scale, 1.0)
        if float(np.max(np.abs(r) / r_scale)) <= tol:
            break
        row = np.maximum(np.max(np.abs(J), axis=1), 1e-300)
        Js = J / row[:, None]
        cond = np.linalg.cond(Js)
        if not np.isfinite(cond) or cond > 1e13:
            raise IllConditionedCorrection(f"corrector system condition {cond:.3e}")
        step, *_ = np.linalg.lstsq(Js, r / row, rcond=None)
        c = c - step
        r = residual(c)
    else:
        raise NonConvergence("compatibility projection did not converge")
    corrected = u0.copy()
    for j in range(n_c):
        corrected -= c[j] * basis[j]
    corrected[0] = 0.0
    return corrected
