import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fslab import SelfSimilarBackground, solve_fs, FsParams
from fslab.corpus import corpus_functions
from fslab.diagnostics import (check_hardy, check_interpolation, check_nash,
                               energy_residual, enhanced_rate,
                               explicit_decay_solution,
                               explicit_solution_residual, fit_decay,
                               linf_report, ode_compare, power_law_stack,
                               scattering_rate, calibrate_inequality_constants,
                               load_calibration, save_calibration,
                               write_checks_csv)
from fslab.errors import (BadWeight, InsufficientStations, NonPositiveQuantity)
from fslab.numerics import uniform_grid

from oracles import quad_oracle


@pytest.fixture(scope="module")
def provider(blasius_profile):
    return SelfSimilarBackground(blasius_profile)


@pytest.fixture(scope="module")
def bg1(provider):
    return provider.fields(1.0, uniform_grid(14.0, 4001))


class TestHardy:
    def test_zero_function(self, bg1):
        ch = check_hardy(np.zeros_like(bg1.y_grid), bg1, 0.5)
        assert ch.lhs == 0.0 and ch.rhs == 0.0
        assert ch.passed

    def test_homogeneity(self, bg1):
        f = np.exp(-bg1.eta_grid ** 2)
        c1 = check_hardy(f, bg1, 0.5)
        c2 = check_hardy(2.0 * f, bg1, 0.5)
        assert np.isclose(c1.ratio, c2.ratio, rtol=1e-12)

    def test_gaussian_under_corpus_constant(self, bg1):
        corpus = corpus_functions(n=60, seed=7)
        c_emp = max(check_hardy(f, bg1, 0.5).ratio for _, f in corpus)
        ch = check_hardy(lambda e: np.exp(-e ** 2), bg1, 0.5, c_ref=c_emp)
        assert ch.passed
        assert ch.ratio <= c_emp * 1.1


class TestInterpolation:
    def test_zero_stack(self, bg1):
        stack = power_law_stack(bg1, lambda e: 0.0 * e, 0.5, k_max=2)
        ch = check_interpolation(stack, bg1, "dy_weight_gain", 0.1, k=0, n=10)
        assert ch.lhs == 0.0
        assert ch.passed

    def test_bounded_over_random_widths(self, bg1):
        rng = np.random.default_rng(11)
        ratios = {"dy_weight_gain": [], "dx_weight_gain": [], "order_lowering": []}
        for _ in range(50):
            w = rng.uniform(0.3, 2.5)
            stack = power_law_stack(bg1, lambda e: e * np.exp(-((e / w) ** 2)),
                                    0.7, k_max=2)
            ratios["dy_weight_gain"].append(
                check_interpolation(stack, bg1, "dy_weight_gain", 0.1, 0, 10).ratio)
            ratios["dx_weight_gain"].append(
                check_interpolation(stack, bg1, "dx_weight_gain", 0.1, 0, 9).ratio)
            ratios["order_lowering"].append(
                check_interpolation(stack, bg1, "order_lowering", 0.1, 1, 9).ratio)
        for kind, vals in ratios.items():
            assert np.all(np.isfinite(vals)), kind
            assert max(vals) < 1e4, kind

    def test_lambda_tradeoff(self, bg1):
        # larger lambda -> larger absorbable term -> smaller fitted constant
        corpus = corpus_functions(n=30, seed=3, wall_zero=True)
        fitted = []
        for lam in (0.1, 0.3, 0.5):
            fitted.append(max(
                check_interpolation(power_law_stack(bg1, f, 0.7, k_max=2),
                                    bg1, "dy_weight_gain", lam, 0, 10).ratio
                for _, f in corpus))
        assert fitted[0] >= fitted[1] >= fitted[2]

    def test_unknown_kind(self, bg1):
        stack = power_law_stack(bg1, lambda e: e * np.exp(-e), 0.5, k_max=2)
        with pytest.raises(ValueError):
            check_interpolation(stack, bg1, "bogus", 0.1)


class TestNash:
    def test_zero_function(self, bg1):
        ch = check_nash(np.zeros_like(bg1.y_grid), bg1)
        assert ch.passed

    def test_gaussian_reference_quadrature(self, provider, bg1):
        # independent Simpson evaluation of B^2, gam^2, A^2 at m=0, x=1, q=ub
        U = np.exp(-bg1.eta_grid ** 2)
        ch = check_nash(U, bg1)
        c_xi = provider.c_xi
        fp = lambda e: provider.profile.eval_deriv(1, c_xi * e)
        fpp = lambda e: provider.profile.eval_deriv(2, c_xi * e)
        B2 = quad_oracle(lambda e: fp(e) * (2 * e * np.exp(-e ** 2)) ** 2, 14.0)
        gam2 = quad_oracle(lambda e: fp(e) ** 2 * np.exp(-2 * e ** 2), 14.0)
        A2 = quad_oracle(lambda e: fp(e) ** 3 * e * np.exp(-2 * e ** 2), 14.0)
        rhs = min(gam2 ** 2.5 / A2 ** 1.5, gam2 ** 3 / A2 ** 2)
        assert abs(ch.lhs - B2) < 1e-6
        assert abs(ch.rhs - rhs) < 1e-6
        corpus = corpus_functions(n=60, seed=7)
        c_emp = min(check_nash(f, bg1).ratio for _, f in corpus
                    if check_nash(f, bg1).rhs > 0)
        assert ch.ratio >= c_emp / 1.1

    @pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
    def test_scaling_invariance(self, bg1, lam):
        corpus = corpus_functions(n=12, seed=5)
        for _, f in corpus:
            c1 = check_nash(lambda e: f(e), bg1, c_ref=1e-3)
            c2 = check_nash(lambda e: lam * f(e), bg1, c_ref=1e-3)
            assert np.isclose(c1.ratio, c2.ratio, rtol=1e-8)
            assert c1.passed == c2.passed

    def test_bad_weight_rejected(self, bg1):
        with pytest.raises(BadWeight):
            check_nash(np.exp(-bg1.eta_grid ** 2), bg1, q=lambda e: e ** 2)


class TestOdeCompare:
    def test_explicit_solution_residual(self):
        for m in (0.0, 1.0):
            xs = np.geomspace(1.0, 100.0, 101)
            res = explicit_solution_residual(1.0, m, 1.0, xs)
            assert np.max(np.abs(res)) <= 1e-10

    def test_explicit_solution_decay_rate(self):
        xs = np.geomspace(1.0, 1e4, 41)
        for m in (0.0, 1.0):
            g = explicit_decay_solution(1.0, m, 1.0, xs)
            w = g * xs ** (0.5 + 0.5 * m)
            assert w[-1] < 1.2 * w[0] or w[-1] < 2.0

    def test_weighted_sup_before_x10(self):
        for m in (0.0, 1.0):
            out = ode_compare(1.0, m, 1.0, 200.0)
            assert out.x_at_sup <= 10.0
            assert out.tail_nonincreasing

    def test_derived_window_bound(self):
        out = ode_compare(1.0, 0.0, 1.0, 200.0)
        g10 = out.gamma[np.searchsorted(out.x, 10.0)]
        g100 = out.gamma[np.searchsorted(out.x, 100.0)]
        assert g100 * 100.0 ** 0.5 <= 1.05 * g10 * 10.0 ** 0.5

    def test_zero_initial_state(self):
        out = ode_compare(1.0, 0.5, 0.0, 50.0)
        assert np.all(out.gamma == 0.0)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(min_value=0.1, max_value=2.0),
           st.floats(min_value=1.2, max_value=4.0))
    def test_comparison_principle(self, c1, factor):
        c2 = c1 * factor
        g1 = ode_compare(c1, 0.0, 1.0, 50.0, n_steps=800).gamma
        g2 = ode_compare(c2, 0.0, 1.0, 50.0, n_steps=800).gamma
        assert np.all(g1 >= g2 - 1e-12)

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            ode_compare(0.0, 0.0, 1.0, 10.0)
        with pytest.raises(ValueError):
            ode_compare(1.0, 0.0, -1.0, 10.0)


class TestFitDecay:
    def test_exact_power_law(self):
        xs = np.geomspace(1.0, 1000.0, 40)
        fit = fit_decay(xs, 3.7 * xs ** -0.7, (1.0, 1000.0), theorem_rate=-0.5)
        assert abs(fit.slope + 0.7) < 1e-10
        assert fit.r2 > 1.0 - 1e-12
        assert fit.passed

    def test_noisy_power_law(self):
        rng = np.random.default_rng(42)
        xs = np.geomspace(1.0, 1000.0, 60)
        vals = xs ** -1.2 * (1.0 + 0.05 * rng.standard_normal(60))
        fit = fit_decay(xs, vals, (1.0, 1000.0))
        assert abs(fit.slope + 1.2) < 0.03

    def test_pass_is_one_sided(self):
        xs = np.geomspace(1.0, 100.0, 20)
        faster = fit_decay(xs, xs ** -2.0, (1.0, 100.0), theorem_rate=-1.0)
        slower = fit_decay(xs, xs ** -0.5, (1.0, 100.0), theorem_rate=-1.0)
        assert faster.passed
        assert not slower.passed

    def test_window_too_small(self):
        xs = np.geomspace(1.0, 100.0, 20)
        with pytest.raises(InsufficientStations):
            fit_decay(xs, xs ** -1.0, (90.0, 100.0))

    def test_nonpositive(self):
        xs = np.geomspace(1.0, 100.0, 20)
        vals = xs ** -1.0
        vals[5] = 0.0
        with pytest.raises(NonPositiveQuantity):
            fit_decay(xs, vals, (1.0, 100.0))

    def test_theorem_rates(self):
        assert np.isclose(scattering_rate(0.0), -(0.25 - 1 / 200))
        assert np.isclose(scattering_rate(1.0, k=1, j=1), -(1.5 - 1 / 200) - 1)
        assert np.isclose(enhanced_rate(0.0), -(0.5 - 1 / 200))
        assert np.isclose(enhanced_rate(1.0), -(2.0 - 1 / 200))


class TestEnergyResidual:
    def test_zero_run(self, provider):
        from fslab.good_unknowns import build_stack_from_derivatives
        from fslab.functionals import evaluate_all
        from fslab.runner import StationRecord

        y = uniform_grid(14.0, 301)
        records = []
        for x in np.geomspace(1.0, 50.0, 12):
            bg = provider.fields(x, y)
            zeros = [np.zeros_like(y) for _ in range(6)]
            stack = build_stack_from_derivatives(zeros, bg, eps=1e-2)
            records.append(StationRecord(x=x, state=None, bg=bg, stack=stack,
                                         report=evaluate_all(stack, bg)))
        series = energy_residual(records, "int_k0", c_emp=1.0)
        assert np.all(series.residual == 0.0)
        assert series.violation_fraction == 0.0

    def test_fitted_run_has_no_violations(self, run_m0):
        for level in ("int_k0", "Y_k1", "Z_k2", "quasi5", "hat_k1"):
            series = energy_residual(run_m0.records, level, transient_x=5.0)
            assert series.violation_fraction == 0.0
            assert np.isfinite(series.c_used)

    def test_insufficient_stations(self, run_m0):
        with pytest.raises(InsufficientStations):
            energy_residual(run_m0.records[:2], "int_k0")


def test_linf_report_bounded_on_reference_run(run_m0):
    for rec in (run_m0.records[5], run_m0.records[-1]):
        rep = linf_report(rec.stack, rec.bg)
        assert rep, "report should not be empty"
        for name, val in rep.items():
            assert np.isfinite(val), name


def test_calibration_io(tmp_path, bg1):
    corpus = corpus_functions(n=10, seed=2)
    consts = calibrate_inequality_constants([bg1], corpus)
    path = tmp_path / "cal.json"
    save_calibration(consts, path)
    loaded = load_calibration(path)
    assert loaded == {k: float(v) for k, v in consts.items()}
    assert set(loaded) == {"hardy", "interp_dy_weight_gain",
                           "interp_dx_weight_gain", "interp_order_lowering",
                           "nash"}


def test_checks_csv(tmp_path, bg1):
    checks = [check_hardy(np.exp(-bg1.eta_grid ** 2), bg1, 0.5, c_ref=10.0)]
    path = tmp_path / "checks.csv"
    write_checks_csv(checks, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "name,lhs,rhs,ratio,pass"
    assert lines[1].startswith("hardy,")
