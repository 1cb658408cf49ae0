import logging
import math
from fractions import Fraction

import gmpy2
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpmsim.stability import (
    REPORT_COLUMNS,
    FluidParams,
    Region,
    StabilityError,
    char_derivative,
    char_residual,
    default_region,
    eta_for,
    eta_identity_residual,
    find_dominant_roots,
    gamma,
    integrate_fluid,
    s_star,
    stability_report,
    stability_sweep,
)

from .oracles import quasi_poly, real_sign_changes, s_star_symbolic, winding_count

log = logging.getLogger(__name__)

SMALL = (1.0, 0.5, 2.0, 1.0, 0.5)  # a, b, c, d, d_s


class TestGamma:
    def test_unit_loop(self):
        assert gamma(1, 0.5, 1, 1) == pytest.approx(1 / 3)

    def test_exact_fraction(self):
        want = Fraction(1) * Fraction(1, 2) * 100 / (1 + Fraction(1, 2) * 100**2 * Fraction(1, 10) ** 2)
        assert gamma(1, 0.5, 100, 0.1) == pytest.approx(float(want), rel=1e-15)

    def test_vanishes_with_b(self):
        assert gamma(1, 0.0, 1000, 0.04) == 0.0
        assert gamma(1, 1e-12, 1000, 0.04) == pytest.approx(1e-9, rel=1e-6)

    @pytest.mark.parametrize("args", [(0, 0.5, 1, 1), (1, -0.1, 1, 1), (1, 0.5, 0, 1), (1, 0.5, 1, 0)])
    def test_rejects_bad_inputs(self, args):
        with pytest.raises(StabilityError):
            gamma(*args)


class TestSStar:
    @pytest.mark.parametrize("g, d, ds", [(1.923, 0.1, 0.03), (0.6242, 0.04, 0.02), (5.0, 1.0, 0.9), (1e-3, 2.0, 0.1)])
    def test_matches_symbolic_form(self, g, d, ds):
        assert s_star(g, d, ds) == pytest.approx(s_star_symbolic(g, d, ds), rel=1e-12)

    @settings(max_examples=200)
    @given(st.floats(1e-3, 1e3), st.floats(1e-3, 1.0), st.floats(0.01, 0.99))
    def test_always_negative(self, g, d, frac):
        assert s_star(g, d, d * frac) < 0

    def test_singular_inputs(self):
        with pytest.raises(StabilityError):
            s_star(1.0, 0.1, 0.1)
        with pytest.raises(StabilityError):
            s_star(0.0, 0.1, 0.05)


class TestEta:
    def test_zero_at_origin(self):
        assert eta_for(0.0, 0.04, 0.02, 1000, 0.6) == 0.0

    @pytest.mark.parametrize("s", [-0.3, -2.0, complex(-1, 2)])
    def test_places_a_root(self, s):
        a, b, c, d, ds = SMALL
        e = eta_for(s, d, ds, c, gamma(a, b, c, d))
        assert abs(char_residual(s, e, SMALL)) < 1e-12

    def test_float_matches_multiprecision(self):
        g = gamma(1, 0.5, 1000, 0.04)
        s = 1.05 * s_star(g, 0.04, 0.02)
        with gmpy2.context(gmpy2.get_context(), precision=400):
            hi = eta_for(gmpy2.mpfr(s), 0.04, 0.02, 1000, gmpy2.mpfr(g))
        assert eta_for(s, 0.04, 0.02, 1000, g) == pytest.approx(float(hi), rel=1e-9)

    @pytest.mark.parametrize("c, d, frac", [(1000, 0.04, 0.5), (100, 0.2, 0.1), (10, 1.0, 0.9)])
    def test_identity_at_recipe_point(self, c, d, frac):
        res, s0, eta, bits = eta_identity_residual(c, d, d * frac)
        assert res < 1e-9 and s0 < 0 and bits > 96
        # the recipe's gain comes out negative on every tuple tried; logged, not asserted
        log.info("c=%s d=%s d_s=%s eta=%.6g", c, d, d * frac, eta)


class TestCharacteristic:
    def test_origin_value(self):
        a, b, c, d, ds = SMALL
        eta = 0.7
        assert char_residual(0.0, eta, SMALL) == pytest.approx(eta * a / d**2 + b * c * c * eta)

    @pytest.mark.parametrize("s", [0.3, -1.2, complex(-0.5, 3.0)])
    def test_matches_oracle(self, s):
        got = char_residual(s, 0.4, SMALL)
        want = complex(quasi_poly(s, 0.4, *SMALL))
        assert abs(got - want) <= 1e-12 * max(1.0, abs(want))

    def test_derivative_by_finite_difference(self):
        s, h = complex(-0.7, 1.3), 1e-6
        fd = (char_residual(s + h, 0.4, SMALL) - char_residual(s - h, 0.4, SMALL)) / (2 * h)
        assert abs(char_derivative(s, 0.4, SMALL) - fd) < 1e-6

    def test_overflow_is_reported(self):
        with pytest.raises(StabilityError, match="overflow"):
            char_residual(-1e6, 1.0, (1, 0.5, 1000, 0.04, 0.02))


class TestRoots:
    def test_zero_gain_roots(self):
        scan = find_dominant_roots(0.0, SMALL)
        assert scan.max_real == pytest.approx(0.0, abs=1e-9)
        reals = sorted(r.real for r in scan if r.imag == 0)
        oracle = real_sign_changes(0.0, *SMALL, -5, 0.5, n=2000)
        assert len(reals) == len(oracle)
        for got, want in zip(reals, oracle):
            assert got == pytest.approx(want, abs=5e-3)
        for r in scan:
            assert abs(char_residual(r, 0.0, SMALL)) < 1e-8

    def test_count_matches_argument_principle(self):
        # keep the zero root outside the contour
        region = Region(re_min=-5.0, re_max=-0.05, im_max=20.0)
        scan = find_dominant_roots(0.0, SMALL, region)
        n_real = sum(1 for r in scan if r.imag == 0)
        n_cplx = len(scan) - n_real
        assert n_real + 2 * n_cplx == winding_count(0.0, *SMALL, -5, -0.05, -20, 20, n_side=1500)

    def test_positive_real_root_with_recipe_gain(self):
        p = (1.0, 0.5, 1000.0, 0.04, 0.02)
        rep = stability_report(1000, 0.04, 0.02)
        assert rep.eta < 0
        [root] = real_sign_changes(rep.eta, *p, 0, 200, n=4000)
        scan = find_dominant_roots(rep.eta, p, Region(-10.0, 300.0, 50.0))
        assert scan.max_real == pytest.approx(root, abs=0.05)

    def test_empty_region(self):
        scan = find_dominant_roots(0.0, SMALL, Region(50.0, 60.0, 1.0))
        assert len(scan) == 0 and math.isnan(scan.max_real)

    def test_default_region_scales_with_delay(self):
        r = default_region(0.04)
        assert (r.re_min, r.re_max, r.im_max) == pytest.approx((-125.0, 12.5, 500.0))


class TestFluid:
    def params(self, eta=0.0, **kw):
        return FluidParams.from_loop(100.0, 0.2, 0.1, eta=eta, x_star=5.0, **kw)

    def test_zero_gain_window_never_shrinks(self):
        tr = integrate_fluid(self.params(), horizon=5.0, step=0.001)
        assert (tr.w[1:] >= tr.w[:-1] - 1e-12).all()
        assert (tr.x >= 0).all()

    def test_step_halving_converges(self):
        p = self.params(eta=0.01)
        coarse = integrate_fluid(p, 3.0, 0.002)
        fine = integrate_fluid(p, 3.0, 0.001)
        assert coarse.w[-1] == pytest.approx(fine.w[-1], rel=1e-2)

    def test_step_too_large(self):
        with pytest.raises(StabilityError, match="exceeds"):
            integrate_fluid(self.params(), 1.0, 0.01)

    def test_bad_horizon(self):
        with pytest.raises(StabilityError):
            integrate_fluid(self.params(), 0.0, 0.001)

    @pytest.mark.parametrize(
        "kw",
        [dict(c=0), dict(b=1.0), dict(a=0), dict(tau_q=-1.0), dict(tau_rs=0.3), dict(x_star=-1.0)],
    )
    def test_param_validation(self, kw):
        base = dict(c=100.0, tau_f=0.05, tau_r=0.15, tau_rs=0.05)
        base.update(kw)
        with pytest.raises(StabilityError):
            FluidParams(**base)

    def test_loop_split(self):
        p = self.params()
        assert p.d == pytest.approx(0.2) and p.d_s == pytest.approx(0.1)
        assert p.gamma == gamma(1.0, 0.5, 100.0, 0.2)


class TestReport:
    def test_row_columns(self):
        row = stability_report(1000, 0.04, 0.02).row()
        assert tuple(row) == REPORT_COLUMNS
        assert row["verdict"] == "unstable"

    def test_zero_gain_is_marginal(self):
        assert stability_report(1000, 0.04, 0.02, eta_scale=0.0).verdict == "marginal"

    def test_error_is_reported_in_row(self):
        row = stability_report(1000, 0.04, 0.04).row()
        assert row["verdict"].startswith("error:")

    def test_sweep(self):
        rows = stability_sweep(1000, 0.04, [0.004, 0.02, 0.036])
        assert [r.d_s for r in rows] == [0.004, 0.02, 0.036]
