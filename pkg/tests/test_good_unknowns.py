import math

import numpy as np
import pytest

from fslab import (FsParams, SelfSimilarBackground, build_stack,
                   build_stack_from_derivatives, commutator_forcing,
                   iterate_cauchy_data, project_compatible, quadratic_lower,
                   solve_fs)
from fslab.errors import (DegenerateBackground, IncompatibleData,
                          OrderUnavailable)
from fslab.good_unknowns import source_term
from fslab.numerics import cumtrapz0, deriv1, uniform_grid


@pytest.fixture(scope="module")
def provider(blasius_profile):
    return SelfSimilarBackground(blasius_profile)


@pytest.fixture(scope="module")
def bg1(provider):
    return provider.fields(1.0, uniform_grid(14.0, 701))


def power_derivs(g, q, x, k_max):
    """Exact d^k/dx^k of u = x^{-q} g(y)."""
    out = []
    coef = 1.0
    for k in range(k_max + 1):
        out.append(coef * x ** (-q - k) * g)
        coef *= -(q + k)
    return out


def test_zero_field_gives_zero_unknowns(bg1):
    y = bg1.y_grid
    zeros = [np.zeros_like(y) for _ in range(4)]
    stack = build_stack_from_derivatives(zeros, bg1, eps=1e-2)
    for k in range(4):
        assert np.all(stack.U[k] == 0.0)
        assert np.all(stack.Q[k] == 0.0)
        assert np.all(stack.calU[k] == 0.0)


def test_inversion_round_trip(bg1):
    # u^(k) = ub U_k + ub_y Q_k pointwise
    y = bg1.y_grid
    g = y * np.exp(-((y - 0.5) ** 2))
    derivs = power_derivs(g, 0.8, 2.0, 3)
    bg = bg1.provider.fields(2.0, y)
    stack = build_stack_from_derivatives(derivs, bg, eps=1e-2)
    for k in range(4):
        recon = bg.u_bar * stack.U[k] + bg.u_bar_y * stack.Q[k]
        scale = max(np.max(np.abs(stack.u_derivs[k])), 1e-30)
        assert np.max(np.abs(recon - stack.u_derivs[k])) <= 1e-8 * scale


def test_wall_values_finite(bg1):
    y = bg1.y_grid
    g = y * np.exp(-y)
    stack = build_stack_from_derivatives(power_derivs(g, 1.0, 1.0, 3), bg1, eps=1e-2)
    for k in range(4):
        assert np.all(np.isfinite(stack.U[k]))
        assert np.all(np.isfinite(stack.calU[k]))
        assert stack.Q[k][0] == 0.0
        # wall limit: d_y u^(k)(0) / (2 ub_y(0)); stencil-level agreement
        expect = deriv1(y, stack.u_derivs[k])[0] / (2 * bg1.u_bar_y[0])
        assert abs(stack.U[k][0] - expect) < 5e-3 * max(1.0, abs(expect))


def test_quasilinear_equals_linear_at_eps_zero(bg1):
    y = bg1.y_grid
    g = y ** 2 * np.exp(-y)
    stack = build_stack_from_derivatives(power_derivs(g, 0.5, 1.0, 3), bg1, eps=0.0)
    for k in range(4):
        assert np.array_equal(stack.calU[k], stack.U[k])
        assert np.array_equal(stack.calQ[k], stack.Q[k])


def test_eps_convergence_first_order(bg1):
    # || calU_k - U_k ||_inf = O(eps), slope 1.0 +/- 0.1
    y = bg1.y_grid
    g = y * np.exp(-((y - 1.0) ** 2))
    derivs = power_derivs(g, 0.7, 1.0, 2)
    eps_values = (1e-2, 1e-3, 1e-4)
    diffs = {k: [] for k in (0, 1, 2)}
    for eps in eps_values:
        stack = build_stack_from_derivatives(derivs, bg1, eps=eps)
        for k in diffs:
            diffs[k].append(np.max(np.abs(stack.calU[k] - stack.U[k])))
    for k, d in diffs.items():
        slope = np.polyfit(np.log(eps_values), np.log(d), 1)[0]
        assert abs(slope - 1.0) <= 0.1, (k, slope)


def test_order_raising_identity(provider):
    # U_{k+1} = d_x U_k + (ub_x/ub) U_k + d_y{ub_x/ub} Q_k, checked with a
    # dense centered difference in x on a synthetic power-law field
    y = uniform_grid(14.0, 1401)
    g = y * np.exp(-((y - 0.8) ** 2) / 2.0)
    q = 0.9
    x0, h = 2.0, 1e-3

    def stack_at(x, k_max):
        bg = provider.fields(x, y)
        return build_stack_from_derivatives(power_derivs(g, q, x, k_max), bg,
                                            eps=0.0), bg

    for k in (0, 1):
        sp, _ = stack_at(x0 + h, k)
        sm, _ = stack_at(x0 - h, k)
        s0, bg0 = stack_at(x0, k + 1)
        dxU_fd = (sp.U[k] - sm.U[k]) / (2 * h)
        lhs = s0.U[k + 1]
        rhs = dxU_fd + s0.shift_ratio * s0.U[k] + s0.shift_ratio_dy * s0.Q[k]
        scale = np.max(np.abs(lhs))
        assert np.max(np.abs(lhs - rhs)) <= 1e-5 * scale, k


def test_dx_U_matches_identity(provider):
    y = uniform_grid(14.0, 701)
    g = y * np.exp(-y)
    bg = provider.fields(3.0, y)
    stack = build_stack_from_derivatives(power_derivs(g, 1.1, 3.0, 3), bg, eps=0.0)
    dxU = stack.dx_U(1)
    h = 1e-3
    sp = build_stack_from_derivatives(power_derivs(g, 1.1, 3.0 + h, 1),
                                      provider.fields(3.0 + h, y), eps=0.0)
    sm = build_stack_from_derivatives(power_derivs(g, 1.1, 3.0 - h, 1),
                                      provider.fields(3.0 - h, y), eps=0.0)
    fd = (sp.U[1] - sm.U[1]) / (2 * h)
    assert np.max(np.abs(dxU - fd)) <= 1e-5 * np.max(np.abs(dxU))
    with pytest.raises(OrderUnavailable):
        stack.dx_U(3)


class TestCommutator:
    def test_zero_perturbation(self, bg1):
        zeros = [np.zeros_like(bg1.y_grid) for _ in range(4)]
        stack = build_stack_from_derivatives(zeros, bg1, eps=1e-2)
        for k in (1, 2, 3):
            assert np.all(commutator_forcing(stack, bg1, k) == 0.0)

    def test_binomial_weights_k2(self, provider):
        # independent assembly with explicit C(2,0)=1, C(2,1)=2
        y = uniform_grid(14.0, 401)
        bg = provider.fields(2.0, y)
        g = y * np.exp(-y)
        stack = build_stack_from_derivatives(power_derivs(g, 0.6, 2.0, 3), bg,
                                             eps=1e-2)
        hand = np.zeros_like(y)
        for kp, c in ((0, 1.0), (1, 2.0)):
            hand += c * (provider.dx_field("u", 2 - kp, 2.0, y) * stack.u_derivs[kp + 1]
                         + provider.dx_field("u", 3 - kp, 2.0, y) * stack.u_derivs[kp]
                         + provider.dx_field("v", 2 - kp, 2.0, y) * deriv1(y, stack.u_derivs[kp])
                         + provider.dx_field("uy", 2 - kp, 2.0, y) * stack.v_derivs[kp])
        got = commutator_forcing(stack, bg, 2)
        assert np.allclose(got, hand, rtol=0, atol=1e-12 * max(1, np.max(np.abs(hand))))

    def test_symbolic_expansion_k1(self, provider):
        # F_comm,1 = ub_x u^(1) + ub_xx u + v_x u_y + ub_xy v for u = g(y)/x
        y = uniform_grid(14.0, 1401)
        bg = provider.fields(2.0, y)
        g = y * np.exp(-y)
        stack = build_stack_from_derivatives(power_derivs(g, 1.0, 2.0, 2), bg, eps=1e-2)
        got = commutator_forcing(stack, bg, 1)
        x = 2.0
        expect = (provider.dx_field("u", 1, x, y) * stack.u_derivs[1]
                  + provider.dx_field("u", 2, x, y) * stack.u_derivs[0]
                  + provider.dx_field("v", 1, x, y) * deriv1(y, g / x)
                  + provider.dx_field("uy", 1, x, y) * stack.v_derivs[0])
        assert np.allclose(got, expect, rtol=1e-12, atol=1e-14)

    def test_order_unavailable(self, bg1):
        zeros = [np.zeros_like(bg1.y_grid) for _ in range(2)]
        stack = build_stack_from_derivatives(zeros, bg1, eps=1e-2)
        with pytest.raises(OrderUnavailable):
            commutator_forcing(stack, bg1, 3)


class TestQuadraticLower:
    def test_zero(self, bg1):
        zeros = [np.zeros_like(bg1.y_grid) for _ in range(3)]
        stack = build_stack_from_derivatives(zeros, bg1, eps=1e-2)
        assert np.all(quadratic_lower(stack, 2) == 0.0)

    def test_hand_expansion_k1(self, bg1):
        # k = 1 has the single term u^(1) u^(1) + d_y u^(1) v^(0)
        y = bg1.y_grid
        g = y * np.exp(-y)
        stack = build_stack_from_derivatives(power_derivs(g, 1.0, 1.0, 2), bg1,
                                             eps=1e-2)
        got = quadratic_lower(stack, 1)
        hand = (stack.u_derivs[1] * stack.u_derivs[1]
                + deriv1(y, stack.u_derivs[1]) * stack.v_derivs[0])
        assert np.allclose(got, hand, rtol=1e-13, atol=1e-16)

    def test_symbolic_k3(self, bg1):
        # exact power-law field: compare against an independent binomial sum
        y = bg1.y_grid
        g = y ** 2 * np.exp(-y)
        derivs = power_derivs(g, 0.75, 1.0, 4)
        stack = build_stack_from_derivatives(derivs, bg1, eps=1e-2)
        got = quadratic_lower(stack, 3)
        hand = np.zeros_like(y)
        for kp in range(3):
            c = math.comb(3, kp)
            v_kp = -cumtrapz0(y, derivs[kp + 1])
            hand += c * (derivs[3 - kp] * derivs[kp + 1]
                         + deriv1(y, derivs[3 - kp]) * v_kp)
        assert np.allclose(got, hand, rtol=1e-12, atol=1e-15)


def test_source_term_requires_next_order(bg1):
    g = bg1.y_grid * np.exp(-bg1.y_grid)
    stack = build_stack_from_derivatives(power_derivs(g, 1.0, 1.0, 2), bg1, eps=1e-2)
    assert np.all(np.isfinite(source_term(stack, bg1, 1)))
    with pytest.raises(OrderUnavailable):
        source_term(stack, bg1, 2)
    assert np.all(np.isfinite(source_term(stack, bg1, 2, quasilinear=True)))


def test_degenerate_background_rejected(provider):
    y = uniform_grid(10.0, 301)
    bg = provider.fields(1.0, y)
    object.__setattr__(bg, "du_bar_dy", (bg.du_bar_dy[0] * 0.0,) + bg.du_bar_dy[1:])
    with pytest.raises(DegenerateBackground):
        build_stack_from_derivatives([np.zeros_like(y)], bg, eps=0.0)


class TestCauchyData:
    def test_zero_data(self, bg1):
        rep = iterate_cauchy_data(np.zeros_like(bg1.y_grid), bg1, 2, 1e-2)
        assert rep.cc0_ok
        assert rep.max_residual() == 0.0
        for U in rep.data_stack:
            assert np.all(U == 0.0)

    def test_cc0_violation(self, bg1):
        with pytest.raises(IncompatibleData):
            iterate_cauchy_data(0.1 + 0.0 * bg1.y_grid, bg1, 1, 1e-2)

    def test_wall_taylor_oracle(self, provider):
        # u_IN = eta^2 exp(-eta): the first condition pair reduces to the wall
        # Taylor coefficients (u''(0), u'''(0)) = (2, -6) because the wall
        # curvature of the background cancels the pressure term and
        # ub_yyy(0) = 0 (the data has u'(0) = 0 as well)
        errs = []
        for n in (701, 2801):
            bg = provider.fields(1.0, uniform_grid(14.0, n))
            y = bg.y_grid
            rep = iterate_cauchy_data(y ** 2 * np.exp(-y), bg, 1, 1e-2)
            cc1, cc2 = rep.cc_residuals[0]
            assert cc1 != 0.0 and cc2 != 0.0
            errs.append((abs(cc1 - 2.0), abs(cc2 - (-6.0))))
        assert errs[1][0] < errs[0][0]
        assert errs[1][1] < errs[0][1]
        assert errs[1][0] < 1e-3
        assert errs[1][1] < 0.15

    def test_data_stack_length(self, bg1):
        y = bg1.y_grid
        rep = iterate_cauchy_data(y * np.exp(-y ** 2), bg1, 3, 1e-2)
        assert len(rep.data_stack) == 4
        assert len(rep.cc_residuals) == 3
        for U in rep.data_stack:
            assert np.all(np.isfinite(U))


class TestProjectCompatible:
    def test_already_compatible_unchanged(self, bg1):
        y = bg1.y_grid
        corrected = project_compatible(y * np.exp(-y ** 2), bg1, 2, 1e-2)
        again = project_compatible(corrected, bg1, 2, 1e-2)
        assert np.max(np.abs(again - corrected)) < 1e-7

    def test_corrected_passes_checker(self, bg1):
        y = bg1.y_grid
        u0 = y * np.exp(-y ** 2)
        raw = iterate_cauchy_data(u0, bg1, 2, 1e-2)
        corrected = project_compatible(u0, bg1, 2, 1e-2)
        rep = iterate_cauchy_data(corrected, bg1, 2, 1e-2)
        for (r1, r2), (s1, s2) in zip(rep.cc_residuals, raw.cc_residuals):
            scale = max(1.0, abs(s1), abs(s2))
            assert abs(r1) <= 1e-6 * scale
            assert abs(r2) <= 1e-6 * scale

    def test_correction_magnitude(self, bg1):
        # measured on the default family; wall-Taylor defects of order one
        # force corrections of a few percent of the data
        y = bg1.y_grid
        u0 = y * np.exp(-y ** 2)
        corrected = project_compatible(u0, bg1, 2, 1e-2)
        ratio = np.max(np.abs(corrected - u0)) / np.max(np.abs(u0))
        assert ratio <= 0.2


def test_stack_csv(tmp_path, bg1):
    g = bg1.y_grid * np.exp(-bg1.y_grid)
    stack = build_stack_from_derivatives(power_derivs(g, 1.0, 1.0, 1), bg1, eps=1e-2)
    stack.to_csv(str(tmp_path / "stack"))
    for k in (0, 1):
        lines = (tmp_path / f"stack_k{k}.csv").read_text().splitlines()
        assert lines[0] == "y,Q,U,calQ,calU"
        assert len(lines) == 1 + len(bg1.y_grid)
