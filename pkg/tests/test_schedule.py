import math
from fractions import Fraction

import pytest

from flowrestore.schedule import (BoundInputs, Schedule, accel_bound_terms,
                                  alpha_k, beta_k, case_B,
                                  gronwall_error_bound, partial_pseudo_time,
                                  pseudo_time_grid, sigma_k)


class TestSchedule:
    def test_geometric_levels(self):
        s = Schedule.geometric(0.9, 100)
        assert s.level(0) == 0.0
        assert s.level(2) == pytest.approx(1 - 0.81)
        levels = [s.level(k) for k in range(200)]
        assert all(0.0 <= l <= 1.0 for l in levels)
        assert all(a <= b for a, b in zip(levels, levels[1:]))

    def test_linear_levels(self):
        s = Schedule.linear(10)
        assert s.level(0) == 0.0
        assert s.level(5) == 0.5
        assert s.level(10) == 1.0
        assert s.level(15) == 1.0

    def test_geometric_summability_closed_form(self):
        """Partial sums of 1 - l_k stay under 1/(1-lam); tail is lam^N.

        Exact check with rationals at small N; float cross-check at N=1000.
        """
        lam = Fraction(9, 10)
        partial = sum(lam ** k for k in range(50))
        assert partial == (1 - lam ** 50) / (1 - lam)
        assert partial < 1 / (1 - lam)

        s = Schedule.geometric(0.9, 1000)
        total = partial_pseudo_time(s, 1000)
        assert total <= 1 / (1 - 0.9) + 1e-9
        assert abs((1.0 - s.level(100)) - 0.9 ** 100) < 1e-15

    def test_linear_divergence(self):
        """Partial sum (N+1)/2 grows at least like N/2."""
        for N in (10, 100, 1000):
            s = Schedule.linear(N)
            total = partial_pseudo_time(s, N)
            assert total == pytest.approx((N + 1) / 2 - 0.5 + 0.5)
            assert total >= N / 2

    def test_gamma_tied(self):
        s = Schedule.geometric(0.95, 100)
        for k in (0, 3, 50):
            assert s.gamma(k) == 1.0 - s.level(k)

    def test_gamma_constant_capped(self):
        s = Schedule.geometric(0.5, 100, gamma=0.3)
        assert s.gamma(0) == 0.3
        # 1 - l_k = 0.5^k drops below 0.3 at k >= 2.
        assert s.gamma(2) == 0.25
        assert all(s.gamma(k) <= 1.0 - s.level(k) + 1e-15 for k in range(20))

    def test_h_constant_and_ramp(self):
        const = Schedule.geometric(0.9, 100, h=0.5)
        assert const.h(0) == 0.5 and const.h(99) == 0.5
        ramp = Schedule.geometric(0.9, 100, h=0.5, h_policy="ramp",
                                  ramp_len=10)
        assert ramp.h(0) == 0.0
        assert ramp.h(5) == pytest.approx(0.25)
        assert ramp.h(10) == 0.5
        assert ramp.h(50) == 0.5

    def test_validation(self):
        with pytest.raises(ValueError):
            Schedule("cubic", 10)
        with pytest.raises(ValueError):
            Schedule.geometric(1.0, 10)
        with pytest.raises(ValueError):
            Schedule.geometric(0.9, 0)
        with pytest.raises(ValueError):
            Schedule.linear(10, lam=0.5)
        with pytest.raises(ValueError):
            Schedule.geometric(0.9, 10, gamma=-0.1)
        with pytest.raises(ValueError):
            Schedule.geometric(0.9, 10, h_policy="ramp")


class TestDerivedSequences:
    def test_beta_at_zero(self):
        assert beta_k(Schedule.geometric(0.9, 10), 0) == 0.0

    def test_beta_arithmetic(self):
        # l = 0.5, gamma = 0.5 -> beta = 0.5: realized by geometric lam=0.5, k=1.
        s = Schedule.geometric(0.5, 10)
        assert beta_k(s, 1) == pytest.approx(0.5)

    def test_beta_tied_equals_level(self):
        s = Schedule.geometric(0.9, 10)
        assert beta_k(s, 2) == pytest.approx(1 - 0.81)
        for k in range(8):
            assert beta_k(s, k) == pytest.approx(s.level(k))

    def test_beta_rejects_level_one(self):
        with pytest.raises(ValueError):
            beta_k(Schedule.linear(5), 5)

    def test_sigma(self):
        geo = Schedule.geometric(0.96, 200)
        assert sigma_k(geo, 0) == 1.0
        assert sigma_k(geo, 100) == pytest.approx(0.96 ** 50)
        for s in (geo, Schedule.linear(50)):
            vals = [sigma_k(s, k) for k in range(50)]
            assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_alpha_zero_h(self):
        assert alpha_k(Schedule.geometric(0.9, 10, h=0.0), 3) == 0.0

    def test_alpha_cross_check_small(self):
        # geometric lam=0.5, k=1, h=0.5: both formulas give 0.5.
        s = Schedule.geometric(0.5, 10, h=0.5)
        direct = alpha_k(s, 1)
        remark = (1 - 0.5 ** 1) * 0.5 / 0.5
        assert direct == pytest.approx(0.5)
        assert direct == pytest.approx(remark)

    def test_alpha_dual_formula_full_precision(self):
        """Definition vs geometric shorthand (1 - lam^k) h / lam at k=80."""
        lam, h, k = 0.965, 0.5, 80
        s = Schedule.geometric(lam, 100, h=h)
        direct = alpha_k(s, k)
        shorthand = (1 - lam ** k) * h / lam
        assert math.isclose(direct, shorthand, rel_tol=1e-14)

    def test_alpha_requires_k_ge_1(self):
        with pytest.raises(ValueError):
            alpha_k(Schedule.geometric(0.9, 10, h=0.5), 0)

    def test_pseudo_time_grid(self):
        s = Schedule.geometric(0.9, 10)
        grid = pseudo_time_grid(s, 2, 5)
        assert len(grid) == 4
        assert grid[0] == 0.0
        assert grid[1] == pytest.approx(0.9 ** 2)
        assert grid[3] == pytest.approx(0.9 ** 2 + 0.9 ** 3 + 0.9 ** 4)
        assert pseudo_time_grid(s, 4, 4) == [0.0]
        with pytest.raises(ValueError):
            pseudo_time_grid(s, 5, 4)


class TestGronwallBound:
    def test_zero_inputs_give_zero(self):
        inp = BoundInputs(t0=0.0, t=1.0)
        assert gronwall_error_bound(inp) == 0.0

    def test_unit_case_gives_e(self):
        inp = BoundInputs(t0=0.0, t=1.0, eps0=1.0)
        assert gronwall_error_bound(inp) == pytest.approx(math.e, rel=1e-12)

    def test_trapezoid_refinement(self):
        """1024-panel vs 10240-panel integrals agree to 1e-6 relative."""
        inp = BoundInputs(t0=0.0, t=2.0, eps0=0.5,
                          approx_error=lambda s: 0.1 * math.exp(-s),
                          L_u=0.3, L_f=1.0,
                          beta=lambda s: 1.0 / (1.0 + s))
        coarse = gronwall_error_bound(inp, panels=1024)
        fine = gronwall_error_bound(inp, panels=10240)
        assert abs(coarse - fine) <= 1e-6 * abs(fine)

    def test_monotone_in_inputs(self):
        base = dict(t0=0.0, t=1.5, eps0=0.2,
                    approx_error=lambda s: 0.05, L_u=0.4, L_f=0.8,
                    beta=lambda s: 0.5)
        ref = gronwall_error_bound(BoundInputs(**base))
        for bump in ({"eps0": 0.3}, {"L_u": 0.6}, {"L_f": 1.2}, {"t": 2.0}):
            assert gronwall_error_bound(BoundInputs(**{**base, **bump})) > ref

    def test_validation(self):
        with pytest.raises(ValueError):
            BoundInputs(t0=1.0, t=0.5)
        with pytest.raises(ValueError):
            BoundInputs(t0=0.0, t=1.0, eta=0.0)
        with pytest.raises(ValueError):
            BoundInputs(t0=0.0, t=1.0, eps0=-0.1)


class TestCaseB:
    def test_convex_formula(self):
        assert case_B("convex", L_u=0.5, L_f=0.0, mu_f=0.0, beta_s=0.0,
                      eta=1.0) == -0.5

    def test_lipschitz_reduces_to_convex_at_zero_Lf(self):
        for beta in (0.0, 0.3, 0.9):
            a = case_B("lipschitz", 0.4, 0.0, 0.0, beta, 2.0)
            b = case_B("convex", 0.4, 0.0, 0.0, beta, 2.0)
            assert a == b

    def test_strongly_convex_cancellation(self):
        """mu_f = eta/2 cancels the beta terms, leaving -1 + L_u.

        The strongly-convex coefficient then equals the convex one exactly
        when beta = 0 (both collapse to -1 + L_u).
        """
        eta = 0.8
        for beta in (0.0, 0.5, 1.0):
            a = case_B("strongly-convex", 0.2, 0.0, eta / 2, beta, eta)
            assert a == pytest.approx(-1 + 0.2)
        assert case_B("strongly-convex", 0.2, 0.0, eta / 2, 0.0, eta) == \
            case_B("convex", 0.2, 0.0, 0.0, 0.0, eta)

    def test_monotone_when_beta_nonincreasing(self):
        beta = lambda s: 1.0 / (1.0 + 2 * s)
        for case in ("lipschitz", "convex"):
            vals = [case_B(case, 0.3, 0.7, 0.0, beta(s), 1.0)
                    for s in [0.1 * i for i in range(20)]]
            assert all(a >= b for a, b in zip(vals, vals[1:])), case

    def test_unknown_case_rejected(self):
        with pytest.raises(ValueError):
            case_B("concave", 0, 0, 0, 0, 1.0)
        with pytest.raises(ValueError):
            case_B("convex", 0, 0, 0, 0, 0.0)


class TestAccelBoundTerms:
    def base_inputs(self, **kw):
        args = dict(t0=0.0, t=1.0, eta=1.0, L_u=0.2, L_f=0.5, mu_f=1.0,
                    M_f=0.7, beta=lambda s: 0.5, sigma=lambda s: 0.3,
                    dim=4, start_msq=2.0, case="convex")
        args.update(kw)
        return BoundInputs(**args)

    def test_alpha_zero_reduction_bit_exact(self):
        inp = self.base_inputs()
        A0, f0 = accel_bound_terms(inp, alpha=None)
        Az, fz = accel_bound_terms(inp, alpha=lambda s: 0.0)
        assert A0 == Az
        for s in (0.0, 0.25, 0.7, 1.0):
            assert f0(s) == fz(s)

    def test_constant_alpha_half_doubles_integrand(self):
        inp = self.base_inputs()
        _, f0 = accel_bound_terms(inp, alpha=None)
        _, f5 = accel_bound_terms(inp, alpha=lambda s: 0.5)
        for s in (0.0, 0.5, 1.0):
            assert f5(s) == pytest.approx(2.0 * f0(s))

    def test_negative_B_scaled_integral_is_smaller(self):
        """For B(s) < 0 and alpha in [0,1): integral of B/(1-alpha) <= integral of B."""
        import random
        rnd = random.Random(7)
        for _ in range(20):
            Bval = -rnd.uniform(0.1, 2.0)
            a = rnd.uniform(0.0, 0.9)
            inp = self.base_inputs(L_u=1.0 + Bval, beta=lambda s: 0.0,
                                   case="convex")
            # convex case with beta == 0: B(s) = -1 + L_u = Bval < 0
            _, f = accel_bound_terms(inp, alpha=lambda s, a=a: a)
            _, f0 = accel_bound_terms(inp, alpha=None)
            assert f(0.5) <= f0(0.5)

    def test_A_alpha_scaling(self):
        inp = self.base_inputs()
        A0, _ = accel_bound_terms(inp, alpha=None)
        A5, _ = accel_bound_terms(inp, alpha=lambda s: 0.5)
        assert A5 - inp.start_msq == pytest.approx(4.0 * (A0 - inp.start_msq))

    def test_alpha_out_of_range_rejected(self):
        inp = self.base_inputs()
        with pytest.raises(ValueError):
            accel_bound_terms(inp, alpha=lambda s: 1.0)
        with pytest.raises(ValueError):
            accel_bound_terms(inp, alpha=lambda s: -0.1)
