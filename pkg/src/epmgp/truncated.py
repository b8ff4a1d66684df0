"""Moments of a univariate Gaussian restricted to an interval.

Everything is computed in standardized coordinates ``a = (l - mu) / sigma``,
``b = (u - mu) / sigma``.  Three regimes:

* the interval straddles the mode: the mass is a sum of two positive erf
  values and the textbook formulas are used directly;
* the interval lies in one tail: masses and density ratios are written with
  erfcx and a common factor ``exp(-a^2/2)`` that is kept in the log domain;
* the interval is narrow: a 16-point Gauss-Legendre rule centred on the
  midpoint, which avoids the ``O(eps / width^2)`` cancellation in the
  variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TailUnderflow, ValidationError
from .special import erf, erfcx

__all__ = ["TruncatedMoments", "truncated_moments", "LOG_ZHAT_FLOOR"]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2 = 1.0 / _SQRT2
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

LOG_ZHAT_FLOOR = math.log(1e-300)

# narrow-interval branch: width * (1 + |midpoint|) below this
_NARROW = 0.25
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_GL_HALF = _GL_NODES.size // 2
# nodes come out ascending and symmetric: pair k with -(k+1)
_GL_POS = _GL_NODES[_GL_HALF:]
_GL_POS_W = _GL_WEIGHTS[_GL_HALF:]


@dataclass(frozen=True)
class TruncatedMoments:
    """Zeroth moment, mean and variance of ``N(mu, sig2)`` restricted to ``(l, u)``.

    ``log_zhat`` is kept alongside ``zhat`` since the mass may be far below
    the double-precision range of a direct product.
    """

    zhat: float
    muhat: float
    sighat2: float
    log_zhat: float


def _straddle(a: float, b: float) -> tuple[float, float, float]:
    """a <= 0 <= b, either possibly infinite."""
    z = 0.5 * (erf(b * _INV_SQRT2) - erf(a * _INV_SQRT2))
    pa = 0.0 if a == -math.inf else _INV_SQRT_2PI * math.exp(-0.5 * a * a)
    pb = 0.0 if b == math.inf else _INV_SQRT_2PI * math.exp(-0.5 * b * b)
    ta = 0.0 if a == -math.inf else a * pa
    tb = 0.0 if b == math.inf else b * pb
    mean = (pa - pb) / z
    var = 1.0 + (ta - tb) / z - mean * mean
    return math.log(z), mean, var


def _upper_tail(a: float, b: float) -> tuple[float, float, float]:
    """0 < a < b <= inf.

    With ``r(x) = erfcx(x / sqrt 2)`` the mass is
    ``0.5 * exp(-a^2/2) * (r(a) - exp((a^2 - b^2)/2) r(b))``; the density ratios
    ``phi(a) / Z`` and ``phi(b) / Z`` share the same exponential factor.
    """
    ra = erfcx(a * _INV_SQRT2)
    if b == math.inf:
        d = ra
        rb_term = 0.0
        eb = 0.0
    else:
        eb = math.exp(-0.5 * (b - a) * (b + a))
        rb_term = eb * erfcx(b * _INV_SQRT2)
        d = ra - rb_term
    log_z = math.log(0.5) - 0.5 * a * a + math.log(d)
    # phi(a)/Z = 2 / (sqrt(2 pi) d), phi(b)/Z = eb * phi(a)/Z
    qa = 2.0 * _INV_SQRT_2PI / d
    qb = eb * qa
    mean = qa - qb
    tb = 0.0 if b == math.inf else b * qb
    var = 1.0 + a * qa - tb - mean * mean
    return log_z, mean, var


def _narrow(a: float, b: float) -> tuple[float, float, float]:
    """Gauss-Legendre on a short interval, centred at its midpoint c.

    phi(c + s) = phi(c) * exp(-c s - s^2/2); pairing symmetric nodes makes the
    first moment vanish exactly when c == 0.
    """
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    s = h * _GL_POS
    e_plus = np.exp(-c * s - 0.5 * s * s)
    e_minus = np.exp(c * s - 0.5 * s * s)
    w = h * _GL_POS_W
    m0 = float(np.sum(w * (e_plus + e_minus)))
    m1 = float(np.sum(w * s * (e_plus - e_minus))) / m0
    m2 = float(np.sum(w * s * s * (e_plus + e_minus))) / m0
    log_z = math.log(m0) - 0.5 * c * c - _LOG_SQRT_2PI
    return log_z, c + m1, m2 - m1 * m1


def truncated_moments(mu_cav: float, sig2_cav: float, l: float, u: float) -> TruncatedMoments:
    """Moments of ``N(mu_cav, sig2_cav)`` restricted to ``(l, u)``.

    Infinite bounds are exact: their density terms are dropped rather than
    replaced by a large finite number.  Raises :class:`TailUnderflow` when the
    mass is below ``1e-300``.
    """
    if not sig2_cav > 0 or not math.isfinite(sig2_cav):
        raise ValidationError("sig2_cav", f"must be positive and finite, got {sig2_cav}")
    if not l < u:
        raise ValidationError("l/u", f"need l < u, got {l} >= {u}")
    sigma = math.sqrt(sig2_cav)
    a = (l - mu_cav) / sigma
    b = (u - mu_cav) / sigma

    if a == -math.inf and b == math.inf:
        return TruncatedMoments(1.0, mu_cav, sig2_cav, 0.0)

    flip = False
    if math.isfinite(a) and math.isfinite(b) and (b - a) * (1.0 + max(abs(a), abs(b))) < _NARROW:
        log_z, mean, var = _narrow(a, b)
    elif a > 0.0:
        log_z, mean, var = _upper_tail(a, b)
    elif b < 0.0:
        flip = True
        log_z, mean, var = _upper_tail(-b, -a)
    else:
        log_z, mean, var = _straddle(a, b)
    if flip:
        mean = -mean

    if not log_z >= LOG_ZHAT_FLOOR:
        raise TailUnderflow(
            f"truncated mass exp({log_z:.6g}) below 1e-300 for interval ({a:.6g}, {b:.6g}) in cavity units"
        )
    # rounding guard; the variance is a difference of O(a^2) terms in the tails
    var = min(max(var, 0.0), 1.0)
    muhat = mu_cav + sigma * mean
    muhat = min(max(muhat, l), u)
    return TruncatedMoments(math.exp(log_z), muhat, sig2_cav * var, log_z)
