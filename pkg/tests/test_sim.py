"""Generator correctness, stream determinism, calibration, and presets."""

import math

import numpy as np
import pytest

from attribound.model import ValidationError
from attribound.sim import (
    SimScenario,
    calibrate_effect_scale,
    expected_attributable_effect,
    fig3_scenario,
    generate,
    preset,
    run,
)


def scenario(**overrides):
    base = dict(grid_side=12, n_treat=5, p0=0.1, sigma_h=1.0,
                effect_scale=0.8, d_max_h=2.0, seed=3, reps=4,
                estimator="basic")
    base.update(overrides)
    return SimScenario(**base)


class TestGenerate:
    def test_monotone_construction(self):
        sc = scenario()
        for rep in range(25):
            data, theta, _ = generate(sc, rep)
            assert np.all(theta <= data.outcomes)

    def test_deterministic_streams(self):
        sc = scenario()
        a_data, a_theta, _ = generate(sc, 7)
        b_data, b_theta, _ = generate(sc, 7)
        assert np.array_equal(a_data.outcomes, b_data.outcomes)
        assert np.array_equal(a_data.treatment, b_data.treatment)
        assert np.array_equal(a_theta, b_theta)
        c_data, _, _ = generate(sc, 8)
        assert not np.array_equal(a_data.outcomes, c_data.outcomes)

    def test_direct_effect_only_flips_treated_cells(self):
        # No baseline ones and zero spillover radius: every positive outcome
        # sits on a treated unit.
        sc = scenario(p0=0.0, d_max_h=0.0, effect_scale=1.0, reps=1)
        for rep in range(20):
            data, theta, _ = generate(sc, rep)
            assert theta.sum() == 0
            assert np.all(data.outcomes <= data.treatment)

    def test_coordinates_are_row_major_grid(self):
        sc = scenario(grid_side=3)
        _, _, coords = generate(sc, 0)
        assert coords.shape == (9, 2)
        assert list(coords[4]) == [1.0, 1.0]

    def test_counterfactual_mean_calibration(self):
        # E[sum theta] = N * p0; check over many reps within 3 binomial SEs.
        sc = scenario(grid_side=10, p0=0.2, reps=1)
        reps = 500
        totals = [generate(sc, rep)[1].sum() for rep in range(reps)]
        expect = 100 * 0.2
        se = math.sqrt(100 * 0.2 * 0.8 / reps)
        assert np.mean(totals) == pytest.approx(expect, abs=3 * se)

    def test_attributable_effect_calibration(self):
        # Empirical A matches the closed-form expectation.
        sc = scenario(grid_side=9, n_treat=6, p0=0.05, sigma_h=1.0,
                      effect_scale=0.7, d_max_h=2.0)
        reps = 600
        effects = []
        for rep in range(reps):
            data, theta, _ = generate(sc, rep)
            effects.append(data.total_outcomes - int(theta.sum()))
        expect = expected_attributable_effect(9, 6, 0.05, 1.0, 0.7, 2.0)
        se = np.std(effects, ddof=1) / math.sqrt(reps)
        assert np.mean(effects) == pytest.approx(expect, abs=3 * se)


class TestRun:
    def test_basic_summary_deterministic(self):
        sc = scenario(reps=6)
        _, s1 = run(sc)
        _, s2 = run(sc)
        assert s1 == s2

    def test_covered_flag_consistency(self):
        sc = scenario(reps=8)
        results, _ = run(sc)
        for r in results:
            assert r.covered == (r.bound_a <= r.true_a)
            if r.true_a > 0:
                assert r.accuracy == r.bound_a / r.true_a
            else:
                assert math.isnan(r.accuracy)

    def test_ttest_estimator_runs(self):
        sc = scenario(estimator="ttest", reps=3)
        results, summary = run(sc)
        assert summary["estimator"] == "ttest"
        assert all(r.bound_a >= 0 for r in results)

    def test_spill_estimator_runs(self):
        sc = scenario(grid_side=8, n_treat=4, estimator="spill",
                      kernel_sigma_multiplier=1.0, d_max_k=1.0, reps=2)
        results, summary = run(sc)
        assert len(results) == 2
        assert summary["coverage_rate"] in (0.0, 0.5, 1.0)


class TestCalibration:
    def test_expected_effect_increases_with_scale(self):
        lo = expected_attributable_effect(10, 5, 0.1, 1.0, 0.2, 2.0)
        hi = expected_attributable_effect(10, 5, 0.1, 1.0, 0.9, 2.0)
        assert hi > lo

    def test_calibration_roundtrip(self):
        target = 6.0
        scale = calibrate_effect_scale(12, 6, 0.1, 1.2, 3.0, target)
        got = expected_attributable_effect(12, 6, 0.1, 1.2, scale, 3.0)
        assert got == pytest.approx(target, rel=1e-4)

    def test_unreachable_target_rejected(self):
        with pytest.raises(ValidationError, match="unreachable"):
            calibrate_effect_scale(4, 2, 0.0, 0.5, 0.0, 50.0)


class TestPresetCoverage:
    @pytest.mark.parametrize("name,desk,index", [
        ("fig1", 12.0, 0),    # smallest bandwidth, smallest multiplier
        ("fig1", 12.0, 24),   # mid bandwidth, matched multiplier
        ("fig1", 12.0, 48),   # largest bandwidth, largest multiplier
        ("fig4", 6.0, 0),
        ("fig4", 6.0, 3),
    ])
    def test_sampled_preset_coverage(self, name, desk, index):
        # Sampled check of the preset-wide conservativeness invariant:
        # empirical coverage of the 95% bounds stays above 0.90.
        scenario = preset(name, desk_scale=desk, reps=60, seed=11)[index]
        _, summary = run(scenario)
        assert summary["coverage_rate"] >= 0.90, scenario.label

    def test_fig3_corner_coverage(self):
        scenario = fig3_scenario(10, 0.36, reps=60, seed=11)
        _, summary = run(scenario)
        assert summary["coverage_rate"] >= 0.90


class TestPresets:
    def test_fig1_full_scale(self):
        scenarios = preset("fig1")
        assert len(scenarios) == 49  # 7 effect shapes x 7 kernel multipliers
        assert all(s.n_units == 90_000 and s.n_treat == 50 for s in scenarios)
        mults = sorted({s.kernel_sigma_multiplier for s in scenarios})
        assert mults[0] == pytest.approx(1 / 3)
        assert mults[-1] == 6.0

    def test_fig1_effect_held_constant(self):
        scenarios = preset("fig1", desk_scale=6.0)
        effects = {
            round(expected_attributable_effect(
                s.grid_side, s.n_treat, s.p0, s.sigma_h, s.effect_scale,
                s.d_max_h), 3)
            for s in scenarios}
        assert len(effects) == 1  # A constant in expectation across shapes

    def test_fig3_corner_scenarios(self):
        scenarios = preset("fig3")
        combos = {(s.n_treat, round(9.0 * s.n_treat / s.n_units, 2))
                  for s in scenarios}
        assert (10, 0.04) in combos
        assert (100, 0.36) in combos
        assert all(s.d_max_k == s.d_max_h for s in scenarios)  # matched kernel

    def test_fig3_nominal_density_grid_sides(self):
        assert fig3_scenario(10, 0.04).grid_side == 47
        assert fig3_scenario(300, 0.04).grid_side == 260
        assert fig3_scenario(100, 0.36).grid_side == 50

    def test_fig4_desk_scale_six(self):
        scenarios = preset("fig4", desk_scale=6.0)
        assert scenarios[0].grid_side == 50
        assert scenarios[0].n_treat == 8
        assert [s.estimator for s in scenarios] == ["basic"] + ["spill"] * 3
        assert [s.d_max_k for s in scenarios[1:]] == [0.0, 1.0, 2.0]
        assert all(s.d_max_h == 0.0 for s in scenarios)

    def test_unknown_preset(self):
        with pytest.raises(ValidationError):
            preset("fig9")

    def test_scenario_validation(self):
        with pytest.raises(ValidationError):
            scenario(n_treat=200)  # >= N
        with pytest.raises(ValidationError):
            scenario(estimator="magic")
