"""Non-asymptotic bounds for binary outcomes by inverting the treated sum.

Under the experiment design the treated sum of any hypothesized
counterfactual is hypergeometric, so the confidence set reduces to a search
over the two aggregates (treated sum, untreated sum) of the hypothesis.
"""

import math
from dataclasses import dataclass

import numpy as np

from attribound import _kernels
from attribound.model import (
    LOWER_ON_THETA,
    UPPER_ON_THETA,
    CounterfactualBound,
    ExperimentData,
    ValidationError,
    validate,
)

__all__ = [
    "HypergeometricSpec",
    "InversionSearchState",
    "hypergeom_quantile",
    "w_basic",
    "invert_monotone",
    "invert_aggregate",
    "full_treatment_bound",
    "invert_from_counts",
]

SCAN_LIMIT = 10_000       # descending scans longer than this use bisection
BRACKET_POPULATION = 10 ** 7  # normal-approximation bracket above this N


@dataclass(frozen=True)
class HypergeometricSpec:
    """Population composition and draw count for the treated-sum statistic."""

    successes: int
    failures: int
    draws: int

    def __post_init__(self):
        if self.successes < 0 or self.failures < 0:
            raise ValidationError("successes and failures must be nonnegative")
        if not 0 <= self.draws <= self.population:
            raise ValidationError(
                f"draws must be in [0, {self.population}], got {self.draws}")

    @property
    def population(self) -> int:
        return self.successes + self.failures

    @property
    def support_min(self) -> int:
        return max(0, self.draws - self.failures)

    @property
    def support_max(self) -> int:
        return min(self.draws, self.successes)


@dataclass(frozen=True)
class InversionSearchState:
    """Aggregates of a hypothesis: treated sum a, untreated sum b."""

    a: int
    b: int

    @property
    def total(self) -> int:
        return self.a + self.b


def _tail_at_most(spec: HypergeometricSpec, w: int, alpha_tail: float) -> bool:
    """True when P(W > w) <= alpha_tail, counting exact-equality boundaries.

    Discrete CDFs routinely hit round confidence levels exactly (e.g. 4/5);
    the relative slack absorbs the float representation of the level and the
    log-gamma rounding so the defining equality case is kept, as in the
    criticality definition P(W <= w) = confidence.
    """
    tail = _kernels.hypergeom_uppertail(w, spec.successes, spec.population,
                                        spec.draws)
    return tail <= alpha_tail * (1.0 + 1e-9) + 1e-15


def hypergeom_quantile(spec: HypergeometricSpec, confidence: float) -> int:
    """Smallest integer w with CDF(w) >= confidence (conservative rounding).

    The CDF comparison runs through the upper tail, summed exactly in
    log-gamma arithmetic with a geometric remainder bound, so rounding always
    errs upward.  Large populations are bracketed by a normal approximation
    before the exact binary search.
    """
    if not 0.0 < confidence < 1.0:
        raise ValidationError(f"confidence must be in (0, 1), got {confidence}")
    alpha_tail = 1.0 - confidence
    lo, hi = spec.support_min, spec.support_max
    if lo >= hi:
        return hi
    if spec.population >= BRACKET_POPULATION:
        mean = spec.draws * spec.successes / spec.population
        var = (spec.draws * spec.successes * spec.failures
               * (spec.population - spec.draws)
               / (spec.population ** 2 * max(spec.population - 1, 1)))
        spread = 12.0 * math.sqrt(var) + 10.0
        blo = max(lo, int(mean - spread))
        bhi = min(hi, int(mean + spread))
        while bhi < hi and not _tail_at_most(spec, bhi, alpha_tail):
            bhi = min(hi, bhi + max(int(spread), 1))
        while blo > lo and _tail_at_most(spec, blo - 1, alpha_tail):
            blo = max(lo, blo - max(int(spread), 1))
        lo, hi = blo, bhi
    # Binary search for the smallest w whose tail is small enough; the
    # predicate is monotone in w.
    while lo < hi:
        mid = (lo + hi) // 2
        if _tail_at_most(spec, mid, alpha_tail):
            hi = mid
        else:
            lo = mid + 1
    return lo


def w_basic(x, theta) -> int:
    """Treated sum of the hypothesized counterfactual."""
    xv = np.asarray(x, dtype=np.int64)
    tv = np.asarray(theta, dtype=np.int64)
    if xv.shape != tv.shape:
        raise ValidationError("x and theta must have equal length")
    return int(xv @ tv)


def _search_max_total(a_max: int, b_max: int, n_units: int, treated: int,
                      alpha: float) -> InversionSearchState:
    """Largest a + b with a <= quantile(a + b), a <= a_max, b <= b_max.

    Feasibility is downward closed in the total (the quantile drops by at
    most one per removed success), so a descending scan stops at the optimum;
    long ranges switch to bisection with boundary verification.
    """
    confidence = 1.0 - alpha

    def feasible(total: int) -> bool:
        need_a = total - b_max
        if need_a <= 0:
            return True
        if need_a > a_max:
            return False
        spec = HypergeometricSpec(total, n_units - total, treated)
        return need_a <= hypergeom_quantile(spec, confidence)

    s_max = min(a_max + b_max, n_units)
    if s_max - b_max <= SCAN_LIMIT:
        s = s_max
        while s > 0 and not feasible(s):
            s -= 1
        best = s
    else:
        lo, hi = b_max, s_max  # lo is always feasible
        if feasible(s_max):
            best = s_max
        else:
            while lo < hi - 1:
                mid = (lo + hi) // 2
                if feasible(mid):
                    lo = mid
                else:
                    hi = mid
            best = lo
        if best < s_max and feasible(best + 1):  # paranoia guard
            while best < s_max and feasible(best + 1):
                best += 1
    a_star = max(0, best - b_max)
    return InversionSearchState(a=a_star, b=best - a_star)


def _counts(data: ExperimentData):
    y = data.outcomes
    x = data.treatment
    n11 = int(np.sum((x == 1) & (y == 1)))
    n01 = int(np.sum((x == 0) & (y == 1)))
    return n11, n01


def _bound_from_state(state, data_sum, n_units, alpha, method):
    return CounterfactualBound(
        theta_sum_bound=float(state.total),
        direction=UPPER_ON_THETA,
        alpha=alpha,
        method=method,
        attributable_lower=float(data_sum - state.total),
        diagnostics={"a_star": state.a, "b_star": state.b},
    )


def invert_monotone(data: ExperimentData, alpha: float) -> CounterfactualBound:
    """Upper bound on the counterfactual total under elementwise monotonicity."""
    validate(data, require_binary=True)
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    n11, n01 = _counts(data)
    state = _search_max_total(n11, n01, data.n_units, data.treated_count, alpha)
    return _bound_from_state(state, data.total_outcomes, data.n_units, alpha,
                             "w-basic-monotone")


def invert_aggregate(data: ExperimentData, alpha: float) -> CounterfactualBound:
    """Same search with the treated-side cap relaxed to the treated count."""
    validate(data, require_binary=True)
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    _, n01 = _counts(data)
    state = _search_max_total(data.treated_count, n01, data.n_units,
                              data.treated_count, alpha)
    return _bound_from_state(state, data.total_outcomes, data.n_units, alpha,
                             "w-basic-aggregate")


def full_treatment_bound(data: ExperimentData, alpha: float) -> CounterfactualBound:
    """Lower bound on the full-treatment counterfactual total.

    Runs the monotone inversion on the complemented experiment (treatment and
    outcomes flipped); the resulting upper bound on the complemented total
    converts to a lower bound on the full-treatment total.
    """
    validate(data, require_binary=True)
    flipped = ExperimentData.from_arrays(1 - data.treatment, 1 - data.outcomes,
                                         unit_ids=data.unit_ids or None)
    inner = invert_monotone(flipped, alpha)
    n = data.n_units
    return CounterfactualBound(
        theta_sum_bound=float(n) - inner.theta_sum_bound,
        direction=LOWER_ON_THETA,
        alpha=alpha,
        method="w-basic-full-treatment",
        diagnostics={
            "transformed_upper_bound": inner.theta_sum_bound,
            "a_star": inner.diagnostics["a_star"],
            "b_star": inner.diagnostics["b_star"],
        },
    )


def invert_from_counts(n11: int, n10: int, n01: int, n00: int, alpha: float,
                       assumption: str = "monotone") -> CounterfactualBound:
    """Inversion from the four treatment/outcome cell counts.

    The search depends on the data only through these sufficient statistics,
    so unit-level files are unnecessary when aggregates are available.
    """
    for name, v in (("n11", n11), ("n10", n10), ("n01", n01), ("n00", n00)):
        if v < 0:
            raise ValidationError(f"{name} must be nonnegative")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    n_units = n11 + n10 + n01 + n00
    treated = n11 + n10
    if treated == 0 or treated == n_units:
        raise ValidationError("need both treated and untreated units")
    total_y = n11 + n01
    if assumption == "monotone":
        a_max = n11
        method = "w-basic-monotone"
    elif assumption == "aggregate":
        a_max = treated
        method = "w-basic-aggregate"
    else:
        raise ValidationError(f"unknown assumption {assumption!r}")
    state = _search_max_total(a_max, n01, n_units, treated, alpha)
    return _bound_from_state(state, total_y, n_units, alpha, method)
