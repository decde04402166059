"""Spatial grid experiments: generation, replicated estimation, and presets.

Units sit on a square lattice; treatments are sampled with replacement, each
active treatment independently flips nearby baseline-zero outcomes with a
truncated-gaussian probability.  Streams are counter-based (Philox keyed by
(seed, rep)) with a fixed draw order, so every replication is reproducible
for a given numpy version.
"""

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from attribound.basic import invert_monotone
from attribound.model import (
    DistanceProvider,
    ExperimentData,
    ValidationError,
    build_kernel,
)
from attribound.spill import NORMAL, SpillConfig, solve_relaxation
from attribound.ttest import TIntervalInputs, conservative_upper

__all__ = [
    "SimScenario",
    "SimResult",
    "generate",
    "run",
    "preset",
    "expected_attributable_effect",
    "calibrate_effect_scale",
]

ESTIMATORS = ("basic", "spill", "ttest")
PRESETS = ("fig1", "fig3", "fig4")

# Relaxation settings used by the harness; coarser than the CLI defaults
# because conservativeness is resolution-independent and desk-scale studies
# run hundreds of replications.
HARNESS_SPILL = {"n_lambda": 150, "grid_steps": 80, "refine_rounds": 2}


@dataclass(frozen=True)
class SimScenario:
    """One simulated experiment family (grid, effect shape, estimator)."""

    grid_side: int
    n_treat: int
    p0: float
    sigma_h: float
    effect_scale: float
    d_max_h: float
    seed: int
    reps: int
    estimator: str
    kernel_sigma_multiplier: float = 1.0
    d_max_k: float = 0.0
    alpha: float = 0.05
    label: str = ""

    def __post_init__(self):
        if self.grid_side < 2:
            raise ValidationError("grid_side must be >= 2")
        if not 1 <= self.n_treat < self.n_units:
            raise ValidationError("n_treat must be in [1, N)")
        if not 0.0 <= self.p0 < 1.0:
            raise ValidationError("p0 must be in [0, 1)")
        if self.sigma_h <= 0 or self.effect_scale <= 0:
            raise ValidationError("sigma_h and effect_scale must be positive")
        if self.d_max_h < 0 or self.d_max_k < 0:
            raise ValidationError("cutoffs must be nonnegative")
        if self.reps < 1:
            raise ValidationError("reps must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ValidationError(f"unknown estimator {self.estimator!r}")
        if not 0.0 < self.alpha < 0.5:
            raise ValidationError("alpha must be in (0, 0.5)")

    @property
    def n_units(self) -> int:
        return self.grid_side ** 2


@dataclass(frozen=True)
class SimResult:
    """Score of one replication."""

    rep: int
    true_a: int
    bound_a: float
    accuracy: float  # bound/true when true > 0, else nan
    covered: bool
    runtime: float


def _grid_coords(side: int) -> np.ndarray:
    rows, cols = np.divmod(np.arange(side * side), side)
    return np.column_stack([rows, cols]).astype(np.float64)


def _effect_probability(dist_sq, sigma_h, effect_scale):
    return np.minimum(1.0, effect_scale * np.exp(-dist_sq / sigma_h ** 2))


def _rng_for(seed: int, rep_index: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(rep_index & 0xFFFFFFFFFFFFFFFF)])
    return np.random.Generator(np.random.Philox(key=key))


def generate(scenario: SimScenario, rep_index: int):
    """One replication: (ExperimentData, theta, coordinates).

    Draw order is fixed: treatment locations, activation flags, baseline
    outcomes, then outcome uniforms in unit (row-major) order.  Duplicate
    treatment locations are kept as separate effect terms; the treatment
    vector marks the distinct treated units.
    """
    side = scenario.grid_side
    n = scenario.n_units
    ell = scenario.n_treat
    rng = _rng_for(scenario.seed, rep_index)

    locations = np.minimum((rng.random(ell) * n).astype(np.int64), n - 1)
    active = rng.random(ell) < 0.5
    theta = (rng.random(n) < scenario.p0).astype(np.int8)
    u_outcome = rng.random(n)

    keep_prob = np.ones(n)
    window = int(math.floor(scenario.d_max_h))
    for j in locations[active]:
        r, c = divmod(int(j), side)
        r0, r1 = max(0, r - window), min(side - 1, r + window)
        c0, c1 = max(0, c - window), min(side - 1, c + window)
        rr, cc = np.meshgrid(np.arange(r0, r1 + 1), np.arange(c0, c1 + 1),
                             indexing="ij")
        dist_sq = (rr - r) ** 2.0 + (cc - c) ** 2.0
        h = np.where(dist_sq <= scenario.d_max_h ** 2,
                     _effect_probability(dist_sq, scenario.sigma_h,
                                         scenario.effect_scale),
                     0.0)
        idx = (rr * side + cc).ravel()
        keep_prob[idx] *= (1.0 - h.ravel())
    flip_prob = 1.0 - keep_prob

    outcomes = np.where(theta == 1, 1, (u_outcome < flip_prob).astype(np.int8))
    treatment = np.zeros(n, dtype=np.int8)
    treatment[np.unique(locations)] = 1
    data = ExperimentData.from_arrays(treatment, outcomes)
    return data, theta, _grid_coords(side)


def _estimate(scenario: SimScenario, data: ExperimentData, kernel):
    """Lower bound on the attributable effect, clamped at the trivial zero."""
    if scenario.estimator == "basic":
        return invert_monotone(data, scenario.alpha).attributable_lower
    if scenario.estimator == "spill":
        config = SpillConfig(alpha=scenario.alpha, tail_bound=NORMAL,
                             **HARNESS_SPILL)
        return solve_relaxation(data, kernel, config).attributable_lower
    inputs = TIntervalInputs(
        alpha=scenario.alpha,
        untreated_outcomes=data.untreated_outcomes(),
        n_units=data.n_units,
        treated_count=data.treated_count,
    )
    bound = conservative_upper(inputs, total_outcome_sum=data.total_outcomes)
    return max(0.0, bound.attributable_lower)


def run(scenario: SimScenario):
    """Replicate, estimate, and score a scenario.

    Returns (results, summary); the summary is a deterministic function of
    the scenario (runtimes are reported per replication only).
    """
    kernel = None
    if scenario.estimator == "spill":
        provider = DistanceProvider.from_coordinates(_grid_coords(scenario.grid_side))
        kernel = build_kernel(provider,
                              scenario.kernel_sigma_multiplier * scenario.sigma_h,
                              scenario.d_max_k)
    results = []
    for rep in range(scenario.reps):
        start = time.perf_counter()
        data, theta, _ = generate(scenario, rep)
        true_a = int(data.total_outcomes - int(theta.sum()))
        bound_a = float(_estimate(scenario, data, kernel))
        elapsed = time.perf_counter() - start
        accuracy = bound_a / true_a if true_a > 0 else math.nan
        results.append(SimResult(
            rep=rep,
            true_a=true_a,
            bound_a=bound_a,
            accuracy=accuracy,
            covered=bool(bound_a <= true_a),
            runtime=elapsed,
        ))
    acc = np.array([r.accuracy for r in results if r.true_a > 0])
    summary = {
        "label": scenario.label,
        "estimator": scenario.estimator,
        "n_units": scenario.n_units,
        "n_treat": scenario.n_treat,
        "reps": scenario.reps,
        "coverage_rate": float(np.mean([r.covered for r in results])),
        "n_accuracy_reps": int(acc.size),
        "mean_accuracy": float(acc.mean()) if acc.size else None,
        "accuracy_se": float(acc.std(ddof=1) / math.sqrt(acc.size))
        if acc.size > 1 else None,
        "mean_true_a": float(np.mean([r.true_a for r in results])),
        "mean_bound_a": float(np.mean([r.bound_a for r in results])),
    }
    return results, summary


def _stencil(sigma_h, effect_scale, d_max_h):
    window = int(math.floor(d_max_h))
    offsets = np.arange(-window, window + 1, dtype=np.float64)
    rr, cc = np.meshgrid(offsets, offsets, indexing="ij")
    dist_sq = rr ** 2 + cc ** 2
    h = np.where(dist_sq <= d_max_h ** 2,
                 _effect_probability(dist_sq, sigma_h, effect_scale), 0.0)
    return h


def expected_attributable_effect(grid_side, n_treat, p0, sigma_h,
                                 effect_scale, d_max_h) -> float:
    """Closed-form E[A] under the generative model.

    A unit flips iff it starts at zero and at least one active treatment
    hits it; averaging over locations, activations, and baselines gives
    E[A] = (1 - p0) * sum_i [1 - (1 - s_i / 2N)^L] where s_i sums the effect
    probability from every possible location (border-aware, via convolution).
    """
    n = grid_side ** 2
    stencil = _stencil(sigma_h, effect_scale, d_max_h)
    s = fftconvolve(np.ones((grid_side, grid_side)), stencil, mode="same")
    s = np.clip(s, 0.0, None)
    per_unit = 1.0 - np.power(1.0 - s / (2.0 * n), n_treat)
    return float((1.0 - p0) * per_unit.sum())


def calibrate_effect_scale(grid_side, n_treat, p0, sigma_h, d_max_h,
                           target_effect, rel_tol=1e-6) -> float:
    """Bisection on the effect scale so that E[A] hits the target."""
    if target_effect <= 0:
        raise ValidationError("target effect must be positive")

    def value(scale):
        return expected_attributable_effect(grid_side, n_treat, p0, sigma_h,
                                            scale, d_max_h)

    hi = 1.0
    for _ in range(60):
        if value(hi) >= target_effect:
            break
        hi *= 2.0
    else:
        raise ValidationError(
            f"target E[A]={target_effect} unreachable on this grid")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if value(mid) < target_effect:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * max(hi, 1.0):
            break
    return 0.5 * (lo + hi)


def _scaled(value, factor, minimum=1):
    return max(minimum, int(round(value / factor)))


# Density labels are nominal, running 9x the realized treated fraction L/N
# (label 0.36 with 100 treatments means a 50x50 grid; label 0.04 with 10
# treatments a 47x47 grid).
DENSITY_LABEL_FACTOR = 9.0


def fig3_scenario(n_treat, density, desk_scale=1.0, reps=400, seed=0,
                  estimator="spill") -> SimScenario:
    """One matched-kernel spillover scenario on the density/size grid.

    Calibrated so each sampled treatment causes 1.5 outcomes in expectation
    and the counterfactual total is 70% of the outcome total.
    """
    ell = _scaled(n_treat, desk_scale, minimum=5)
    side = max(3, int(round(math.sqrt(DENSITY_LABEL_FACTOR * ell / density))))
    if side * side <= ell:
        side = int(math.ceil(math.sqrt(ell + 1.0)))
    n = side * side
    p0 = min(3.5 * ell / n, 0.75)
    sigma_h = 1.0
    d_max_h = 3.0
    scale = calibrate_effect_scale(side, ell, p0, sigma_h, d_max_h,
                                   target_effect=1.5 * ell)
    return SimScenario(
        grid_side=side, n_treat=ell, p0=p0, sigma_h=sigma_h,
        effect_scale=scale, d_max_h=d_max_h, seed=seed, reps=reps,
        estimator=estimator, kernel_sigma_multiplier=1.0, d_max_k=d_max_h,
        label=f"fig3 L={ell} density={density}",
    )


def preset(name: str, desk_scale: float = 1.0, reps: int | None = None,
           seed: int = 0):
    """Standard scenario grids, optionally shrunk by a desk-scale factor.

    The factor divides lengths (grid side, bandwidths) and treatment counts,
    and the expected-effect calibration targets by its square, so the
    qualitative structure survives shrinking.  fig1 varies the effect shape
    against mismatched kernel bandwidths at constant expected effect; fig3
    varies treatment count and spatial density with matched kernels; fig4
    has no spillovers and compares the basic and smoothed estimators.
    """
    if desk_scale < 1.0:
        raise ValidationError("desk_scale must be >= 1")
    if name == "fig1":
        side = _scaled(300, desk_scale, minimum=10)
        ell = _scaled(50, desk_scale)
        p0 = 1.0 / 150.0
        target = 625.0 / desk_scale ** 2
        scenarios = []
        for sigma_h in (3.0, 5.0, 7.0, 10.0, 13.0, 16.0, 20.0):
            sig = max(sigma_h / desk_scale, 0.35)
            d_max_h = 3.0 * sig
            scale = calibrate_effect_scale(side, ell, p0, sig, d_max_h, target)
            for mult in (1.0 / 3.0, 0.5, 1.0, 2.0, 3.0, 4.5, 6.0):
                scenarios.append(SimScenario(
                    grid_side=side, n_treat=ell, p0=p0, sigma_h=sig,
                    effect_scale=scale, d_max_h=d_max_h, seed=seed,
                    reps=reps or 100, estimator="spill",
                    kernel_sigma_multiplier=mult, d_max_k=3.0 * mult * sig,
                    label=f"fig1 sigma_h={sig:g} mult={mult:g}",
                ))
        return scenarios
    if name == "fig3":
        return [fig3_scenario(ell, density, desk_scale, reps or 400, seed)
                for ell in (10, 40, 100, 300)
                for density in (0.04, 0.36)]
    if name == "fig4":
        side = _scaled(300, desk_scale, minimum=10)
        ell = _scaled(50, desk_scale)
        p0 = 1.0 / 150.0
        base = dict(grid_side=side, n_treat=ell, p0=p0, sigma_h=1.0,
                    effect_scale=1.0, d_max_h=0.0, seed=seed,
                    reps=reps or 100)
        scenarios = [SimScenario(estimator="basic", label="fig4 basic", **base)]
        for d_max_k in (0.0, 1.0, 2.0):
            scenarios.append(SimScenario(
                estimator="spill", kernel_sigma_multiplier=1.0,
                d_max_k=d_max_k, label=f"fig4 spill dmaxK={d_max_k:g}", **base))
        return scenarios
    raise ValidationError(f"unknown preset {name!r}")
