"""Tests for the heat/killed kernels and the integral-bound certifications."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavefront_lab import kernels, rng
from wavefront_lab.errors import DomainError, PreconditionError


class TestHeatKernel:
    def test_origin_value(self):
        assert kernels.heat_kernel(0.0, 0.0, 1.0, 0.0) == pytest.approx(
            1.0 / math.sqrt(4.0 * math.pi)
        )

    def test_normalization(self):
        x = np.linspace(-40.0, 40.0, 20001)
        vals = kernels.heat_kernel(0.0, 0.0, 1.0, x)
        assert np.trapezoid(vals, x) == pytest.approx(1.0, abs=1e-8)

    def test_symmetry(self):
        assert kernels.heat_kernel(0.0, 0.3, 1.0, 1.1) == pytest.approx(
            kernels.heat_kernel(0.0, 1.1, 1.0, 0.3)
        )

    def test_time_order_enforced(self):
        with pytest.raises(DomainError):
            kernels.heat_kernel(1.0, 0.0, 0.5, 0.0)


class TestKilledKernel:
    def test_zero_off_domain(self):
        assert kernels.killed_kernel(0.0, -1.0, 0.5, 0.6, 1.0) == 0.0
        assert kernels.killed_kernel(0.0, 0.5, 0.5, -1.0, 1.0) == 0.0

    def test_nonnegative_and_below_heat(self):
        gen = rng.stream(0, "kk-points")
        for _ in range(10_000):
            v = gen.uniform(0.1, 3.0)
            t = gen.uniform(0.05, 2.0)
            s = gen.uniform(0.0, t - 0.01)
            y = v * s - gen.uniform(0.01, 3.0)
            x = v * t - gen.uniform(0.01, 3.0)
            killed = kernels.killed_kernel(s, y, t, x, v)
            heat = kernels.heat_kernel(s, y, t, x)
            assert killed >= 0.0
            assert killed <= heat + 1e-14

    def test_large_v_limit_is_heat_kernel(self):
        val = kernels.killed_kernel(0.0, -1.0, 0.5, -0.5, 1e6)
        assert val == pytest.approx(kernels.heat_kernel(0.0, -1.0, 0.5, -0.5), rel=1e-9)

    def test_boundary_vanishes(self):
        # density goes to 0 as x approaches the absorbing line
        v = 1.0
        t = 0.5
        vals = [kernels.killed_kernel(0.0, -1.0, t, v * t - h, v) for h in (0.1, 0.01, 0.001)]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] < 1e-2

    def test_time_order_enforced(self):
        with pytest.raises(DomainError):
            kernels.killed_kernel(1.0, -1.0, 0.5, -1.0, 1.0)


class TestZeta:
    def test_infinite_y_sentinel(self):
        assert kernels.zeta(1.0, 1.0, math.inf) == 0.0

    def test_nonpositive_y(self):
        assert kernels.zeta(1.0, 1.0, -1.0) == math.inf
        assert kernels.zeta(1.0, 1.0, 0.0) == math.inf

    def test_reference_value(self):
        # 2^8 * 1 / 64 * exp(-16/16) = 4/e
        assert kernels.zeta(1.0, 1.0, 4.0) == pytest.approx(4.0 / math.e)

    def test_invalid_theta(self):
        with pytest.raises(DomainError):
            kernels.zeta(0.0, 1.0, 1.0)

    @given(
        theta=st.floats(0.1, 5.0),
        s=st.floats(0.01, 5.0),
    )
    @settings(max_examples=30)
    def test_decreasing_in_y(self, theta, s):
        y = np.linspace(0.5, 20.0, 100)
        vals = np.array([kernels.zeta(theta, s, yy) for yy in y])
        assert np.all(np.diff(vals) <= 1e-15)


class TestMovingBound:
    def test_coincident_pair(self):
        report = kernels.verify_difference_bound_moving(
            1.0, [((0.25, -0.5), (0.25, -0.5))], kernels.QuadratureSpec()
        )
        assert report.all_hold
        assert report.pairs[0].lhs <= 1e-12

    def test_reference_pair(self):
        report = kernels.verify_difference_bound_moving(
            1.0, [((0.25, -0.5), (0.5, 0.0))], kernels.QuadratureSpec()
        )
        assert report.all_hold
        assert report.max_ratio < 1.0

    @pytest.mark.parametrize("v", [0.5, 1.0, 2.0])
    def test_random_admissible_sweep(self, v):
        gen = rng.stream(0, f"sweep/{v!r}")
        pairs = kernels.random_admissible_pairs_moving(v, 20, gen)
        report = kernels.verify_difference_bound_moving(v, pairs, kernels.QuadratureSpec())
        assert report.all_hold

    def test_hypothesis_violation_rejected(self):
        with pytest.raises(PreconditionError):
            # t beyond v^-2
            kernels.verify_difference_bound_moving(
                2.0, [((0.5, -0.1), (0.5, -0.1))], kernels.QuadratureSpec()
            )

    def test_deterministic_reports(self):
        pair = [((0.25, -0.5), (0.5, 0.0))]
        a = kernels.verify_difference_bound_moving(1.0, pair, kernels.QuadratureSpec())
        b = kernels.verify_difference_bound_moving(1.0, pair, kernels.QuadratureSpec())
        assert a.pairs[0].lhs == b.pairs[0].lhs


class TestStaticBound:
    def test_coincident_pair(self):
        report = kernels.verify_difference_bound_static(
            1.0, [((0.25, -1.0), (0.25, -1.0))], kernels.QuadratureSpec()
        )
        assert report.all_hold
        assert report.pairs[0].lhs <= 1e-12

    def test_reference_pair(self):
        report = kernels.verify_difference_bound_static(
            1.0, [((0.25, -1.0), (0.25, 1.0))], kernels.QuadratureSpec()
        )
        assert report.all_hold

    @pytest.mark.parametrize("v", [0.5, 1.0, 2.0])
    def test_uniform_in_v(self, v):
        gen = rng.stream(1, f"static/{v!r}")
        pairs = kernels.random_admissible_pairs_static(v, 20, gen)
        report = kernels.verify_difference_bound_static(v, pairs, kernels.QuadratureSpec())
        assert report.all_hold


class TestSurvivalConsistency:
    def test_kernel_integrates_to_survival(self):
        # integral of the killed kernel over x < vt equals the survival
        # probability; cross-checked against a short Monte Carlo run
        report = kernels.killed_kernel_mc(
            v=1.0, s=0.0, y=-1.0, t=0.5, n_paths=200_000, dt=0.005, seed=7
        )
        assert report.survival_kernel == pytest.approx(report.survival_mc, rel=0.01)


class TestProfilePde:
    def _ledger(self):
        from wavefront_lab import model

        return model.ledger_from_wave_speed(0.5, 0.75, 2.0)

    def test_residual_small(self):
        report = kernels.verify_profile_pde(self._ledger(), dx=0.01)
        assert report.max_residual < 0.05

    def test_second_order_convergence(self):
        led = self._ledger()
        coarse = kernels.verify_profile_pde(led, dx=0.02)
        fine = kernels.verify_profile_pde(led, dx=0.01)
        ratio = coarse.max_residual / fine.max_residual
        assert 3.0 <= ratio <= 5.5

    def test_boundary_slope(self):
        led = self._ledger()
        report = kernels.verify_profile_pde(led, dx=0.01)
        assert report.slope_rel_error < 1e-6
        assert report.slope_target == pytest.approx(-led.eps_small)
