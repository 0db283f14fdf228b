"""Tests for the branching-coalescing particle system and duality."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavefront_lab import dual, rng, spde
from wavefront_lab.errors import CapacityError, DomainError, EmptySystemError


class TestOffspringPmf:
    def test_q2(self):
        assert dual.offspring_pmf(0.5, 2) == pytest.approx(0.5)

    def test_q3(self):
        assert dual.offspring_pmf(0.5, 3) == pytest.approx(0.125)

    def test_q4(self):
        # p(1-p)(2-p)/6 for p=0.5
        assert dual.offspring_pmf(0.5, 4) == pytest.approx(0.5 * 0.5 * 1.5 / 6.0)

    def test_below_two_rejected(self):
        with pytest.raises(DomainError):
            dual.offspring_pmf(0.5, 1)

    def test_partial_sum_near_one(self):
        total = sum(dual.offspring_pmf(0.5, n) for n in range(2, 10_001))
        assert 0.98 < total < 1.0

    @given(p=st.floats(0.05, 0.95))
    @settings(max_examples=25)
    def test_partial_sums_monotone_bounded(self, p):
        pmf = dual.offspring_pmf_array(p, 200)
        partial = np.cumsum(pmf)
        assert np.all(np.diff(partial) >= 0.0)
        assert partial[-1] <= 1.0 + 1e-12

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_pgf_identity(self, s):
        # sum q_n s^n = s - s(1-s)^p within the truncation tail N^-p
        p = 0.5
        n_max = 100_000
        n = np.arange(2, n_max + 1)
        pmf = dual.offspring_pmf_array(p, n_max)[2:]
        lhs = float(np.sum(pmf * s**n))
        rhs = s - s * (1.0 - s) ** p
        assert abs(lhs - rhs) <= n_max**-p + 1e-9


class TestSampleOffspring:
    def test_never_below_two(self):
        sampler = dual.OffspringSampler(p=0.5)
        draws = dual.sample_offspring(sampler, rng.stream(0, "off"), size=10_000)
        assert np.min(draws) >= 2

    def test_empirical_pmf_matches(self):
        sampler = dual.OffspringSampler(p=0.5)
        n_draws = 10**6
        draws = dual.sample_offspring(sampler, rng.stream(1, "off"), size=n_draws)
        for n in range(2, 11):
            q = dual.offspring_pmf(0.5, n)
            freq = np.mean(draws == n)
            se = math.sqrt(q * (1.0 - q) / n_draws)
            assert abs(freq - q) <= 4.0 * se

    def test_pgf_monte_carlo(self):
        sampler = dual.OffspringSampler(p=0.5)
        draws = dual.sample_offspring(sampler, rng.stream(2, "off"), size=10**6)
        est = np.mean(0.5 ** draws.astype(float))
        target = 0.5 - 0.5 * math.sqrt(0.5)
        assert est == pytest.approx(target, abs=2e-3)

    def test_concentrates_at_p_near_one(self):
        sampler = dual.OffspringSampler(p=0.99)
        draws = dual.sample_offspring(sampler, rng.stream(3, "off"), size=10_000)
        assert np.mean(draws == 2) > 0.98

    def test_cap_hit_frequency(self):
        cap = 50
        sampler = dual.OffspringSampler(p=0.5, n_max=cap)
        draws = dual.sample_offspring(sampler, rng.stream(4, "off"), size=200_000)
        tail = sampler.tail_beyond_cap()
        freq = np.mean(draws == cap)
        assert freq <= tail + 4.0 * math.sqrt(tail / 200_000) + 1e-4


class TestDriftFromPgf:
    def test_endpoints(self):
        assert dual.drift_from_pgf(0.5, 0.0) == pytest.approx(0.0, abs=1e-2)
        assert dual.drift_from_pgf(0.5, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_midpoint(self):
        val = dual.drift_from_pgf(0.5, 0.5, n_terms=10**5)
        assert val == pytest.approx(math.sqrt(0.5) * 0.5, abs=1e-3)


class TestStepSystem:
    def test_dt_zero_identity(self):
        sys = dual.ParticleSystem.single(0.0)
        out = dual.step_system(sys, 0.0, 0.05, rng.stream(0, "d"))
        assert out is sys

    def test_count_preserved_without_events(self):
        sys = dual.ParticleSystem(
            np.linspace(0.0, 100.0, 20), branch_rate=0.0, coalescence_strength=0.0
        )
        out = dual.step_system(sys, 0.01, 0.05, rng.stream(1, "d"))
        assert out.count == 20

    def test_motion_variance(self):
        # generator d^2/dx^2 gives variance 2t
        t = 1.0
        dt = 0.01
        finals = []
        for r in range(400):
            gen = rng.stream(2, f"mv/{r}")
            sys = dual.ParticleSystem.single(0.0, branch_rate=0.0,
                                             coalescence_strength=0.0)
            for _ in range(int(t / dt)):
                sys = dual.step_system(sys, dt, 0.05, gen)
            finals.append(sys.positions[0])
        var = np.var(finals, ddof=1)
        se = var * math.sqrt(2.0 / 399)
        assert abs(var - 2.0) <= 3.0 * se

    def test_yule_mean_growth(self):
        # binary branching without coalescence: E[count at t] = e^t
        t = 1.0
        dt = 0.01
        counts = []
        for r in range(300):
            gen = rng.stream(3, f"yule/{r}")
            sys = dual.ParticleSystem.single(0.0, coalescence_strength=0.0)
            for _ in range(int(t / dt)):
                sys = dual.step_system(sys, dt, 0.05, gen)
            counts.append(sys.count)
        mean = np.mean(counts)
        se = np.std(counts, ddof=1) / math.sqrt(len(counts))
        assert abs(mean - math.e) <= 3.0 * se

    def test_capacity_error_preserves_state(self):
        sys = dual.ParticleSystem(
            np.zeros(8), branch_rate=50.0, coalescence_strength=0.0, particle_cap=16
        )
        gen = rng.stream(4, "cap")
        with pytest.raises(CapacityError) as err:
            for _ in range(200):
                sys = dual.step_system(sys, 0.05, 0.05, gen)
        assert err.value.partial_state is not None

    def test_coalescence_reduces_count(self):
        sys = dual.ParticleSystem(
            np.zeros(50), branch_rate=0.0, coalescence_strength=100.0
        )
        gen = rng.stream(5, "coal")
        for _ in range(50):
            sys = dual.step_system(sys, 0.01, 0.5, gen)
        assert sys.count < 50


class TestRightmost:
    def test_single(self):
        assert dual.rightmost(dual.ParticleSystem.single(0.0)) == 0.0

    def test_max(self):
        sys = dual.ParticleSystem(np.array([-1.0, 3.0, 2.0]))
        assert dual.rightmost(sys) == 3.0

    def test_empty_raises(self):
        with pytest.raises(EmptySystemError):
            dual.rightmost(dual.ParticleSystem(np.array([])))


class TestDualityGap:
    def test_short_time_small_gap(self):
        scheme = spde.SchemeConfig(
            dx=0.2, dt=0.01, window_cells=200, shift_trigger_margin=30,
            zero_snap=0.015, seed=5,
        )
        budget = dual.DualityBudget(n_spde=40, n_dual=400, dual_dt=0.005,
                                    delta=0.05, seed=5)
        rows = dual.duality_gap(0.25, [-1.0, 0.5], 1.0, budget, scheme)
        assert len(rows) == 2
        for row in rows:
            assert 0.0 <= row.lhs <= 1.0
            assert 0.0 <= row.rhs <= 1.0
            assert row.combined_se > 0.0
            assert row.gap == pytest.approx(row.lhs - row.rhs)
