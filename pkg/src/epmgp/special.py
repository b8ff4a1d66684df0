"""Error function family for real double-precision arguments.

The rational approximations are those of W. J. Cody, "Rational Chebyshev
approximation for the error function", Math. Comp. 23 (1969) 631-637, as
distributed in the public-domain SPECFUN routine CALERF (Netlib, specfun/
calerf.f, revision of March 19, 1990).  Three intervals are used:

    |x| <= 0.46875        erf(x)   = x * R1(x^2)
    0.46875 < |x| <= 4    erfcx(x) = R2(x)
    |x| > 4               erfcx(x) = (1/sqrt(pi) - R3(1/x^2) / x^2) / x

where erfcx(x) = exp(x^2) * erfc(x) is the scaled complementary function.
Factors exp(-x^2) are formed as exp(-xs^2) * exp(-(x - xs)(x + xs)) with xs
the argument truncated to a multiple of 1/16, which keeps the product exact
to working precision for large |x|.
"""

from __future__ import annotations

import math

__all__ = ["erf", "erfc", "erfcx", "normal_cdf", "log_normal_cdf"]

_THRESH = 0.46875
_SQRPI = 5.6418958354775628695e-1  # 1/sqrt(pi)
_XSMALL = 1.11e-16
_XBIG = 26.543
_XHUGE = 6.71e7
_XMAX = 2.53e307
_XNEG = -26.628

_A = (
    3.16112374387056560e00,
    1.13864154151050156e02,
    3.77485237685302021e02,
    3.20937758913846947e03,
    1.85777706184603153e-1,
)
_B = (
    2.36012909523441209e01,
    2.44024637934444173e02,
    1.28261652607737228e03,
    2.84423683343917062e03,
)
_C = (
    5.64188496988670089e-1,
    8.88314979438837594e00,
    6.61191906371416295e01,
    2.98635138197400131e02,
    8.81952221241769090e02,
    1.71204761263407058e03,
    2.05107837782607147e03,
    1.23033935479799725e03,
    2.15311535474403846e-8,
)
_D = (
    1.57449261107098347e01,
    1.17693950891312499e02,
    5.37181101862009858e02,
    1.62138957456669019e03,
    3.29079923573345963e03,
    4.36261909014324716e03,
    3.43936767414372164e03,
    1.23033935480374942e03,
)
_P = (
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
)
_Q = (
    2.56852019228982242e00,
    1.87295284992346725e00,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
)

_LOG_HALF = math.log(0.5)
_SQRT1_2 = 0.7071067811865475244


def _erf_small(x: float) -> float:
    """erf(x) for |x| <= 0.46875."""
    ysq = x * x if abs(x) > _XSMALL else 0.0
    xnum = _A[4] * ysq
    xden = ysq
    for i in range(3):
        xnum = (xnum + _A[i]) * ysq
        xden = (xden + _B[i]) * ysq
    return x * (xnum + _A[3]) / (xden + _B[3])


def _erfcx_positive(y: float) -> float:
    """erfcx(y) for y > 0.46875."""
    if y <= 4.0:
        xnum = _C[8] * y
        xden = y
        for i in range(7):
            xnum = (xnum + _C[i]) * y
            xden = (xden + _D[i]) * y
        return (xnum + _C[7]) / (xden + _D[7])
    if y >= _XHUGE:
        return _SQRPI / y if y < _XMAX else 0.0
    ysq = 1.0 / (y * y)
    xnum = _P[5] * ysq
    xden = ysq
    for i in range(4):
        xnum = (xnum + _P[i]) * ysq
        xden = (xden + _Q[i]) * ysq
    result = ysq * (xnum + _P[4]) / (xden + _Q[4])
    return (_SQRPI - result) / y


def _exp_neg_square(y: float) -> float:
    # exp(-y^2) split so the rounding of y^2 does not get amplified
    ysq = math.trunc(y * 16.0) / 16.0
    delta = (y - ysq) * (y + ysq)
    return math.exp(-ysq * ysq) * math.exp(-delta)


def _erfc_positive(y: float) -> float:
    """erfc(y) for y > 0.46875."""
    if y >= _XBIG:
        return 0.0
    return _exp_neg_square(y) * _erfcx_positive(y)


def erf(x: float) -> float:
    """Error function."""
    x = float(x)
    if math.isnan(x):
        return x
    y = abs(x)
    if y <= _THRESH:
        return _erf_small(x)
    r = 1.0 - _erfc_positive(y)
    return r if x > 0 else -r


def erfc(x: float) -> float:
    """Complementary error function, accurate in the upper tail."""
    x = float(x)
    if math.isnan(x):
        return x
    y = abs(x)
    if y <= _THRESH:
        return 1.0 - _erf_small(x)
    r = _erfc_positive(y)
    return r if x > 0 else 2.0 - r


def erfcx(x: float) -> float:
    """Scaled complementary error function ``exp(x**2) * erfc(x)``.

    Overflows to ``inf`` for ``x < -26.628``.
    """
    x = float(x)
    if math.isnan(x):
        return x
    y = abs(x)
    if y <= _THRESH:
        return math.exp(x * x) * (1.0 - _erf_small(x))
    r = _erfcx_positive(y)
    if x > 0:
        return r
    if x < _XNEG:
        return math.inf
    ysq = math.trunc(x * 16.0) / 16.0
    delta = (x - ysq) * (x + ysq)
    e = math.exp(ysq * ysq) * math.exp(delta)
    return (e + e) - r


def normal_cdf(x: float) -> float:
    """Standard normal cdf, ``0.5 * erfc(-x / sqrt(2))``."""
    return 0.5 * erfc(-x * _SQRT1_2)


def log_normal_cdf(x: float) -> float:
    """Logarithm of the standard normal cdf, finite for every finite x.

    For x < -1 the lower tail is written as
    ``log(erfcx(-x/sqrt(2)) / 2) - x**2 / 2`` so nothing underflows.
    """
    x = float(x)
    if x == math.inf:
        return 0.0
    if x == -math.inf:
        return -math.inf
    if x > 5.0:
        # cdf = 1 - tiny; log1p keeps the tiny part
        return math.log1p(-0.5 * erfc(x * _SQRT1_2))
    if x >= -1.0:
        return math.log(normal_cdf(x))
    return _LOG_HALF + math.log(erfcx(-x * _SQRT1_2)) - 0.5 * x * x
