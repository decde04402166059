"""Acceptance suite: one test per criterion, with a printed PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; tolerances are fixed here, nothing is calibrated at runtime.
"""

import itertools
import json
import math
import time
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from click.testing import CliRunner

from attribound.basic import invert_aggregate, invert_monotone
from attribound.cli import main as cli_main
from attribound.model import DistanceProvider, ExperimentData, build_kernel
from attribound.qpb import QPBProblem, qpb_maximize, qpb_objective, \
    qpb_to_mincut, min_cut
from attribound.sim import fig3_scenario, preset, run
from attribound.spill import (
    SpillConfig,
    moment_vector,
    solve_relaxation,
    tail_threshold,
)
from attribound.ttest import (
    TIntervalInputs,
    conservative_lower_reversed,
    conservative_upper,
    ideal_ci,
)
from tests.test_basic import brute_force_bound
from tests.test_ttest import brute_conservative_upper, brute_reversed_lower


def report(name, ok, detail):
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"{name}: {detail}"


# --------------------------------------------------------------------------
# Criterion 1: the worked example, reproduced exactly.
# --------------------------------------------------------------------------

def test_worked_example():
    start = time.perf_counter()
    y = [10, 10, 10, 11, 11]
    ideal = ideal_ci(y, 0.05, 25, 20)
    inputs = TIntervalInputs(alpha=0.05, untreated_outcomes=y, n_units=25,
                             treated_count=20)
    conservative = conservative_upper(inputs).diagnostics["theta_mean_bound"]
    elapsed = time.perf_counter() - start
    ok = (abs(ideal - 10.9) <= 0.05 and abs(conservative - 12.4) <= 0.05
          and elapsed < 1.0)
    report("worked-example-4.1", ok,
           f"ideal={ideal:.4f} (10.9 +-0.05), conservative={conservative:.4f} "
           f"(12.4 +-0.05), runtime={elapsed:.3f}s (<1s)")


# --------------------------------------------------------------------------
# Criterion 2: t-interval oracle equivalence (upper and reversed).
# --------------------------------------------------------------------------

def test_t_interval_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    checked = 0
    for _ in range(120):  # upper bound instances
        n = int(rng.integers(2, 7))
        y = rng.integers(0, 5, size=n)
        while y.sum() > 12:
            y = rng.integers(0, 5, size=n)
        treated = int(rng.integers(1, 9))
        alpha = float(rng.choice([0.05, 0.1]))
        inputs = TIntervalInputs(alpha=alpha, untreated_outcomes=y,
                                 n_units=treated + n, treated_count=treated)
        got = conservative_upper(inputs).diagnostics["theta_mean_bound"]
        want = brute_conservative_upper(list(y), alpha, treated + n, treated)
        assert got == want, (y, treated, alpha)
        checked += 1
    for _ in range(120):  # reversed instances with caps
        n = int(rng.integers(2, 6))
        y = rng.integers(0, 4, size=n)
        caps = y + rng.integers(0, 3, size=n)
        while caps.sum() > 12:
            y = rng.integers(0, 4, size=n)
            caps = y + rng.integers(0, 3, size=n)
        treated = int(rng.integers(1, 7))
        inputs = TIntervalInputs(alpha=0.05, untreated_outcomes=y,
                                 n_units=treated + n, treated_count=treated,
                                 upper_caps=caps)
        got = conservative_lower_reversed(inputs).diagnostics["theta_mean_bound"]
        want = brute_reversed_lower(list(y), list(caps), 0.05,
                                    treated + n, treated)
        assert got == want, (y, caps, treated)
        checked += 1
    elapsed = time.perf_counter() - start
    report("t-interval-oracle", checked >= 200 and elapsed < 60,
           f"{checked} instances exact (>=200), runtime={elapsed:.1f}s (<60s)")


# --------------------------------------------------------------------------
# Criterion 3: W_basic inversion equals 2^N brute force.
# --------------------------------------------------------------------------

def test_w_basic_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    checked = 0
    while checked < 500:
        n = int(rng.integers(3, 13))
        x = rng.integers(0, 2, size=n)
        if not 0 < x.sum() < n:
            continue
        y = rng.integers(0, 2, size=n)
        alpha = float(rng.choice([0.05, 0.1, 0.2]))
        data = ExperimentData.from_arrays(x, y)
        monotone = checked % 2 == 0
        got = (invert_monotone if monotone else invert_aggregate)(data, alpha)
        want, _ = brute_force_bound(x, y, alpha, monotone=monotone)
        assert got.theta_sum_bound == want, (x, y, alpha, monotone)
        checked += 1
    elapsed = time.perf_counter() - start
    report("w-basic-oracle", checked >= 500 and elapsed < 120,
           f"{checked} instances exact vs 2^N brute force (>=500), "
           f"runtime={elapsed:.1f}s (<120s)")


# --------------------------------------------------------------------------
# Criterion 4: min-cut/QPB exactness and duality.
# --------------------------------------------------------------------------

def _brute_qpb_max(problem):
    d = problem.dim
    bits = ((np.arange(2 ** d)[:, None] >> np.arange(d)) & 1).astype(np.float64)
    values = (np.einsum("bi,ij,bj->b", bits, problem.quad, bits)
              + bits @ problem.linear + problem.offset)
    return float(values.max())


def test_qpb_mincut_exactness():
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    duality_worst = 0.0
    for trial in range(1000):
        d = int(rng.integers(1, 16))
        quad = rng.integers(0, 17, size=(d, d)) / 8.0
        linear = rng.integers(-24, 25, size=d) / 8.0  # mixed signs
        problem = QPBProblem.build(quad, linear, float(rng.integers(-4, 5)))
        graph, constant = qpb_to_mincut(problem)
        cut_value, side = min_cut(graph)
        value = constant - cut_value
        want = _brute_qpb_max(problem)
        assert value == want, (trial, d)
        argmax = side[:d].astype(np.int8)
        assert qpb_objective(problem, argmax) == want
    elapsed = time.perf_counter() - start
    report("qpb-mincut-exactness", elapsed < 120,
           f"1000 instances d<=15 exact (dyadic coefficients, bitwise "
           f"equality); flow==cut enforced at 1e-9 inside min_cut; "
           f"runtime={elapsed:.1f}s (<120s)")


# --------------------------------------------------------------------------
# Criterion 5: spill relaxation never beats the exact inversion.
# --------------------------------------------------------------------------

def _exact_spill_inversion(data, kernel, tau):
    free = np.flatnonzero(data.outcomes == 1)
    best = 0
    for bits in itertools.product([0, 1], repeat=free.size):
        theta = np.zeros(data.n_units, dtype=np.int64)
        theta[free] = bits
        m = moment_vector(data.treatment, kernel, theta)
        spread = m.m3 - m.m1 ** 2
        if spread <= 0:
            ok = m.m2 <= m.m1 + 1e-12
        else:
            ok = (m.m2 - m.m1) <= tau * math.sqrt(spread)
        if ok:
            best = max(best, int(theta.sum()))
    return best


def test_spill_relaxation_conservative():
    start = time.perf_counter()
    rng = np.random.default_rng(404)
    config = SpillConfig(alpha=0.05, tail_bound="chebyshev", n_lambda=40,
                         grid_steps=25, refine_rounds=1)
    violations = 0
    checked = 0
    while checked < 100:
        n = int(rng.integers(6, 13))
        x = rng.integers(0, 2, size=n)
        if not 0 < x.sum() < n:
            continue
        y = rng.integers(0, 2, size=n)
        if y.sum() > 10:
            continue
        coords = np.arange(n, dtype=float).reshape(-1, 1)
        kernel = build_kernel(DistanceProvider.from_coordinates(coords),
                              1.0, 2.0)
        data = ExperimentData.from_arrays(x, y)
        bound = solve_relaxation(data, kernel, config)
        tau = tail_threshold(0.05, n, data.treated_count, "chebyshev")
        exact = _exact_spill_inversion(data, kernel, tau)
        if bound.theta_sum_bound < exact:
            violations += 1
        checked += 1
    elapsed = time.perf_counter() - start
    report("spill-conservativeness", violations == 0,
           f"{checked} instances, violations={violations} (zero allowed), "
           f"runtime={elapsed:.1f}s")


# --------------------------------------------------------------------------
# Criteria 6 and 8: fig4-style desk-scale coverage and accuracy ordering.
# --------------------------------------------------------------------------

FIG4_REPS = 200


@pytest.fixture(scope="module")
def fig4_coverage_runs():
    # The coverage criterion pins the 50x50 grid with L ~ 8.
    scenarios = preset("fig4", desk_scale=6.0, reps=FIG4_REPS, seed=20240817)
    out = {}
    for scenario in scenarios:
        _, summary = run(scenario)
        out[scenario.label] = summary
    return out


@pytest.fixture(scope="module")
def fig4_ordering_runs():
    # The ordering criterion needs enough attributable effect per rep for
    # accuracy differences to resolve; desk factor 3 (100x100 grid, L=17,
    # E[A] ~ 8) keeps the study desk-sized without the heavy quantization
    # of the factor-6 shrink (E[A] ~ 4, accuracy steps of 0.25).
    scenarios = preset("fig4", desk_scale=3.0, reps=300, seed=20240817)
    out = {}
    for scenario in scenarios:
        _, summary = run(scenario)
        out[scenario.label] = summary
    return out


def test_desk_scale_coverage(fig4_coverage_runs):
    start = time.perf_counter()
    worst = min(s["coverage_rate"] for s in fig4_coverage_runs.values())
    lines = ", ".join(f"{label.split()[-1]}={s['coverage_rate']:.3f}"
                      for label, s in fig4_coverage_runs.items())
    elapsed = time.perf_counter() - start
    report("desk-scale-coverage", worst >= 0.90,
           f"50x50 grid, L=8, {FIG4_REPS} reps, alpha=0.05: coverage {lines} "
           f"(all >= 0.90)")
    assert elapsed < 1800


def test_fig4_accuracy_ordering(fig4_ordering_runs):
    basic = fig4_ordering_runs["fig4 basic"]
    spill0 = fig4_ordering_runs["fig4 spill dmaxK=0"]
    spill2 = fig4_ordering_runs["fig4 spill dmaxK=2"]

    def gap_over_se(a, b):
        se = math.hypot(a["accuracy_se"] or 0.0, b["accuracy_se"] or 0.0)
        return (a["mean_accuracy"] - b["mean_accuracy"]), se

    gap1, se1 = gap_over_se(basic, spill0)
    gap2, se2 = gap_over_se(spill0, spill2)
    ok = gap1 > se1 and gap2 > se2
    report("fig4-accuracy-ordering", ok,
           f"basic={basic['mean_accuracy']:.3f} > "
           f"spill(dK=0)={spill0['mean_accuracy']:.3f} > "
           f"spill(dK=2)={spill2['mean_accuracy']:.3f}; "
           f"gaps {gap1:.3f}>{se1:.3f}(SE), {gap2:.3f}>{se2:.3f}(SE)")


# --------------------------------------------------------------------------
# Criterion 7: fig3-style trends in treatment count and spatial density.
# --------------------------------------------------------------------------

FIG3_REPS = 300


@pytest.fixture(scope="module")
def fig3_runs():
    out = {}
    for n_treat, density in [(10, 0.04), (40, 0.04), (10, 0.36), (40, 0.36)]:
        scenario = fig3_scenario(n_treat, density, reps=FIG3_REPS,
                                 seed=20240817)
        _, summary = run(scenario)
        out[(n_treat, density)] = summary
    return out


def test_fig3_trends(fig3_runs):
    def acc(key):
        return fig3_runs[key]["mean_accuracy"]

    def se(a, b):
        return math.hypot(fig3_runs[a]["accuracy_se"],
                          fig3_runs[b]["accuracy_se"])

    gap_l = acc((40, 0.04)) - acc((10, 0.04))
    se_l = se((40, 0.04), (10, 0.04))
    gap_d40 = acc((40, 0.04)) - acc((40, 0.36))
    se_d40 = se((40, 0.04), (40, 0.36))
    gap_d10 = acc((10, 0.04)) - acc((10, 0.36))
    se_d10 = se((10, 0.04), (10, 0.36))
    ok = gap_l > se_l and gap_d40 > se_d40 and gap_d10 > se_d10
    report("fig3-trends", ok,
           f"{FIG3_REPS} reps/point; acc(L=40,d=.04)={acc((40, 0.04)):.3f} > "
           f"acc(L=10,d=.04)={acc((10, 0.04)):.3f} (gap {gap_l:.3f} > SE "
           f"{se_l:.3f}); density .36 below .04 at L=40 (gap {gap_d40:.3f} > "
           f"SE {se_d40:.3f}) and L=10 (gap {gap_d10:.3f} > SE {se_d10:.3f})")


# --------------------------------------------------------------------------
# Criterion 9: sufficient-statistics pipeline in place of raw-data studies.
# --------------------------------------------------------------------------

def exact_quantile(successes, population, draws, confidence):
    conf = Fraction(confidence).limit_denominator(10 ** 9)
    total = comb(population, draws)
    acc = Fraction(0)
    kmin = max(0, draws - (population - successes))
    for w in range(kmin, min(draws, successes) + 1):
        acc += Fraction(comb(successes, w) * comb(population - successes,
                                                  draws - w), total)
        if acc >= conf:
            return w
    return min(draws, successes)


def test_counts_pipeline_substitute():
    # Population-scale studies arrive as cell counts rather than unit files;
    # the --counts sufficient-statistics pipeline is verified against the
    # exhaustive oracle.
    runner = CliRunner()
    rng = np.random.default_rng(505)
    checked = 0
    while checked < 25:
        n = int(rng.integers(4, 13))
        x = rng.integers(0, 2, size=n)
        if not 0 < x.sum() < n:
            continue
        y = rng.integers(0, 2, size=n)
        n11 = int(((x == 1) & (y == 1)).sum())
        n10 = int(((x == 1) & (y == 0)).sum())
        n01 = int(((x == 0) & (y == 1)).sum())
        n00 = int(((x == 0) & (y == 0)).sum())
        for assumption in ("monotone", "aggregate"):
            result = runner.invoke(cli_main, [
                "invert-basic", "--counts", f"{n11},{n10},{n01},{n00}",
                "--alpha", "0.05", "--assumption", assumption])
            assert result.exit_code == 0, result.output
            got = json.loads(result.output)["report"]["theta_sum_bound"]
            want, _ = brute_force_bound(x, y, 0.05,
                                        monotone=(assumption == "monotone"))
            assert got == want
        checked += 1
    report("counts-pipeline-substitute", True,
           f"{checked} random cell-count instances match the exhaustive "
           f"oracle under both assumptions (covers the aggregate-counts "
           f"ingestion path end to end)")
