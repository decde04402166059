"""Inverse-CDF numerics for the Student-t and standard normal distributions.

Both quantiles are computed from first principles (regularized incomplete beta
via continued fraction, Acklam's rational approximation) and refined with
Newton steps, so the statistical modules carry no external dependency for
their critical values.
"""

import math

__all__ = ["reg_incomplete_beta", "student_t_upper", "normal_upper"]

_FPMIN = 1e-300
_CF_EPS = 3e-16
_CF_MAXIT = 300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz's method)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def reg_incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError("shape parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        a * math.log(x)
        + b * math.log1p(-x)
        - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_upper(alpha: float, df: float) -> float:
    """Upper one-sided critical value of the Student-t distribution.

    Returns t such that P(T > t) = alpha for T with `df` degrees of freedom.
    Solved by inverting I_x(df/2, 1/2) = 2*alpha with bisection on x followed
    by Newton refinement; accurate to ~1e-12.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if alpha == 0.5:
        return 0.0
    if alpha > 0.5:
        return -student_t_upper(1.0 - alpha, df)

    a = df / 2.0
    b = 0.5
    target = 2.0 * alpha  # P(T > t) = I_x(df/2, 1/2) / 2 with x = df/(df+t^2)

    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if reg_incomplete_beta(a, b, mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(hi, 1e-30):
            break
    x = 0.5 * (lo + hi)

    ln_beta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    for _ in range(4):
        f = reg_incomplete_beta(a, b, x) - target
        if x <= 0.0 or x >= 1.0:
            break
        deriv = math.exp((a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - ln_beta)
        if deriv <= 0.0:
            break
        step = f / deriv
        x_new = x - step
        if 0.0 < x_new < 1.0:
            x = x_new
        else:
            break
    return math.sqrt(df * (1.0 - x) / x)


def _acklam_norminv(p: float) -> float:
    """Acklam's rational approximation to the standard normal inverse CDF."""
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    if p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    q = math.sqrt(-2.0 * math.log1p(-p))
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)


def normal_upper(alpha: float) -> float:
    """Upper critical value z such that P(Z > z) = alpha for Z ~ N(0, 1)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    z = -_acklam_norminv(alpha)
    # Newton polish against the exact upper tail erfc(z/sqrt(2))/2.
    for _ in range(3):
        tail = 0.5 * math.erfc(z / math.sqrt(2.0))
        pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        if pdf <= 0.0:
            break
        z += (tail - alpha) / pdf
    return z
