"""Conservative t-interval bounds for count-valued outcomes.

The upper bound maximizes the plug-in one-sided interval over every integer
counterfactual vector between 0 and the observed outcomes; the reversed
variant minimizes it between the observed outcomes and per-unit ceilings.
Both reduce to maximizing the sum of squares on each level set of the mean.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from attribound import _kernels
from attribound.model import (
    LOWER_ON_THETA,
    UPPER_ON_THETA,
    CounterfactualBound,
    ValidationError,
    _require_integers,
)
from attribound.special import student_t_upper

__all__ = [
    "TIntervalInputs",
    "LevelSetSolution",
    "ideal_ci",
    "greedy_fill",
    "conservative_upper",
    "conservative_lower_reversed",
    "heavy_tail_diagnostic",
    "bootstrap_check",
]

DP_TOTAL_LIMIT = 10 ** 6  # reversed DP state space guard


@dataclass(frozen=True, eq=False)
class TIntervalInputs:
    """Inputs for the one-sided t-interval optimizations."""

    alpha: float
    untreated_outcomes: np.ndarray
    n_units: int
    treated_count: int
    upper_caps: np.ndarray | None = None

    def __post_init__(self):
        raw = np.asarray(self.untreated_outcomes)
        _require_integers(raw, "untreated_outcomes")
        y = raw.astype(np.int64)
        object.__setattr__(self, "untreated_outcomes", y)
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must be in (0, 1), got {self.alpha}")
        if y.ndim != 1 or y.size < 2:
            raise ValidationError("need at least 2 untreated outcomes")
        if np.any(y < 0):
            raise ValidationError("outcomes must be nonnegative")
        if self.treated_count < 1:
            raise ValidationError("treated_count must be positive")
        if self.n_units != self.treated_count + y.size:
            raise ValidationError(
                f"n_units={self.n_units} != treated_count + len(untreated)"
                f"={self.treated_count + y.size}")
        if self.upper_caps is not None:
            caps = np.asarray(self.upper_caps, dtype=np.int64)
            object.__setattr__(self, "upper_caps", caps)
            if caps.shape != y.shape:
                raise ValidationError("upper_caps length mismatch")
            if np.any(caps < y):
                raise ValidationError("upper_caps must dominate outcomes elementwise")


@dataclass(eq=False)
class LevelSetSolution:
    """A level-set optimizer: theta with fixed sum and maximal sum of squares."""

    theta: np.ndarray
    level: int
    objective: float | None = None

    @property
    def sum_of_squares(self) -> int:
        return int(np.sum(self.theta.astype(np.int64) ** 2))


def _ci_value(sum_theta, sum_sq, n_untreated, alpha, n_units, treated_count,
              sign=1.0):
    """One-sided interval endpoint from integer sufficient statistics.

    Computed from (sum, sum of squares) so the value does not depend on the
    ordering of the underlying vector.
    """
    n = n_untreated
    mean = sum_theta / n
    var = max((sum_sq - sum_theta * sum_theta / n) / (n - 1), 0.0)
    t_crit = student_t_upper(alpha, n - 1)
    half = t_crit * math.sqrt((treated_count / n_units) * var / n)
    return mean + sign * half


def ideal_ci(theta_values, alpha, n_units, treated_count) -> float:
    """Plug-in upper interval endpoint for the mean counterfactual outcome."""
    theta = np.asarray(theta_values, dtype=np.int64)
    if theta.size < 2:
        raise ValidationError("need at least 2 values")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    if theta.size != n_units - treated_count:
        raise ValidationError("values must cover exactly the untreated units")
    return _ci_value(int(theta.sum()), int(np.sum(theta ** 2)), theta.size,
                     alpha, n_units, treated_count)


def greedy_fill(y_untreated, c: int) -> LevelSetSolution:
    """Maximize sum(theta^2) over 0 <= theta <= Y with sum(theta) == c.

    Entries are filled to capacity in decreasing order of Y; ties are broken
    by original index, which leaves the objective unchanged.
    """
    y = np.asarray(y_untreated, dtype=np.int64)
    total = int(y.sum())
    if not 0 <= c <= total:
        raise ValidationError(f"level c={c} outside [0, {total}]")
    order = np.argsort(-y, kind="stable")
    theta = np.zeros_like(y)
    remaining = c
    for idx in order:
        take = min(remaining, int(y[idx]))
        theta[idx] = take
        remaining -= take
        if remaining == 0:
            break
    return LevelSetSolution(theta=theta, level=c)


def _require_optimizable_alpha(alpha):
    # The level-set reduction maximizes the variance term, which is only the
    # right move while the t critical value is positive.
    if alpha >= 0.5:
        raise ValidationError(
            f"optimized bounds require alpha < 0.5, got {alpha}")


def conservative_upper(inputs: TIntervalInputs,
                       total_outcome_sum: int | None = None,
                       ) -> CounterfactualBound:
    """Worst-case upper bound over all counterfactuals dominated by Y."""
    _require_optimizable_alpha(inputs.alpha)
    y = inputs.untreated_outcomes
    n = y.size
    total = int(y.sum())
    best_value = -math.inf
    best = None
    sorted_desc = np.sort(y)[::-1].astype(np.int64)
    cum = np.concatenate([[0], np.cumsum(sorted_desc)])
    cum_sq = np.concatenate([[0], np.cumsum(sorted_desc ** 2)])
    for c in range(total + 1):
        # Greedy-fill sum of squares without materializing theta: full
        # prefixes plus one partial entry.
        k = int(np.searchsorted(cum, c, side="right")) - 1
        partial = c - int(cum[k])
        sum_sq = int(cum_sq[k]) + partial * partial
        value = _ci_value(c, sum_sq, n, inputs.alpha, inputs.n_units,
                          inputs.treated_count)
        if value > best_value:
            best_value = value
            best = (c, sum_sq)
    c_star, sum_sq_star = best
    bound_sum = inputs.n_units * best_value
    attributable = None
    if total_outcome_sum is not None:
        attributable = total_outcome_sum - bound_sum
    return CounterfactualBound(
        theta_sum_bound=bound_sum,
        direction=UPPER_ON_THETA,
        alpha=inputs.alpha,
        method="t-interval-conservative",
        attributable_lower=attributable,
        diagnostics={
            "theta_mean_bound": best_value,
            "argmax_level_c": c_star,
            "argmax_sum_sq": sum_sq_star,
        },
    )


def conservative_lower_reversed(inputs: TIntervalInputs) -> CounterfactualBound:
    """Worst-case lower bound with per-unit ceilings Y <= theta <= S.

    Every level set between sum(Y) and sum(S) is solved by value-iteration
    dynamic programming for the maximal sum of squares, then the reversed
    interval endpoint is minimized across levels.
    """
    _require_optimizable_alpha(inputs.alpha)
    if inputs.upper_caps is None:
        raise ValidationError("reversed bound requires upper_caps")
    y = inputs.untreated_outcomes
    caps = inputs.upper_caps
    total_hi = int(caps.sum())
    total_lo = int(y.sum())
    if total_hi > DP_TOTAL_LIMIT:
        raise ValidationError(
            f"sum of caps {total_hi} exceeds the DP limit {DP_TOTAL_LIMIT}")
    table = _kernels.bounded_level_dp(np.ascontiguousarray(y),
                                      np.ascontiguousarray(caps))
    n = y.size
    best_value = math.inf
    best = None
    for c in range(total_lo, total_hi + 1):
        sum_sq = int(table[c])
        if sum_sq < 0:
            continue
        value = _ci_value(c, sum_sq, n, inputs.alpha, inputs.n_units,
                          inputs.treated_count, sign=-1.0)
        if value < best_value:
            best_value = value
            best = (c, sum_sq)
    if best is None:
        raise ValidationError("empty level range for the reversed bound")
    c_star, sum_sq_star = best
    return CounterfactualBound(
        theta_sum_bound=inputs.n_units * best_value,
        direction=LOWER_ON_THETA,
        alpha=inputs.alpha,
        method="t-interval-reversed",
        diagnostics={
            "theta_mean_bound": best_value,
            "argmin_level_c": c_star,
            "argmin_sum_sq": sum_sq_star,
        },
    )


def heavy_tail_diagnostic(theta_values) -> float:
    """Berry-Esseen-style ratio: raw third absolute moment over sd cubed."""
    theta = np.asarray(theta_values, dtype=np.float64)
    if theta.size < 2:
        raise ValidationError("need at least 2 values")
    var = float(np.mean((theta - theta.mean()) ** 2))
    if var == 0.0:
        raise ValidationError("diagnostic undefined: zero variance")
    third = float(np.mean(np.abs(theta) ** 3))
    return third * var ** -1.5


def bootstrap_check(untreated_y, alpha, n_units, treated_count,
                    reps: int = 2000, seed: int = 0) -> dict:
    """Distributional check of the plug-in interval at theta = Y.

    Resamples the untreated outcomes with replacement and reports how often
    the studentized resampled mean exceeds the t critical value; under
    approximate normality the exceedance rate should be close to alpha.
    """
    if reps < 100:
        raise ValidationError(f"reps must be >= 100, got {reps}")
    y = np.asarray(untreated_y, dtype=np.int64)
    if y.size < 2:
        raise ValidationError("need at least 2 untreated outcomes")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    n = y.size
    if y.min() == y.max():
        return {
            "status": "zero variance, check inconclusive",
            "reps": reps,
            "exceedance_rate": None,
        }
    t_crit = student_t_upper(alpha, n - 1)
    mean_obs = float(y.mean())
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, n, size=(reps, n))
    samples = y[draws]
    means = samples.mean(axis=1)
    variances = samples.var(axis=1, ddof=1)
    scale = (treated_count / n_units) / n
    stats = np.full(reps, np.inf)
    nonzero = variances > 0
    stats[nonzero] = (means[nonzero] - mean_obs) / np.sqrt(scale * variances[nonzero])
    stats[~nonzero & (means <= mean_obs)] = 0.0
    exceed = float(np.mean(stats > t_crit))
    return {
        "status": "ok",
        "reps": reps,
        "nominal_alpha": alpha,
        "t_critical": t_crit,
        "exceedance_rate": exceed,
        "empirical_upper_quantile": float(np.quantile(stats, 1.0 - alpha)),
    }
