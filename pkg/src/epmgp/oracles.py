"""Reference answers for Gaussian probabilities.

These estimators deliberately avoid the EP code path: normal cdfs and their
inverses come from ``scipy.special`` rather than :mod:`epmgp.special`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import fft, ifft
from scipy.special import erf as _sp_erf
from scipy.special import erfc as _sp_erfc
from scipy.special import ndtr, ndtri

from .errors import NotReducible, Unsupported, ValidationError
from .gaussian import GaussianDist, PolyhedralRegion, singular_values

__all__ = [
    "OracleEstimate",
    "PRNG_ID",
    "rng_stream",
    "mc_rejection",
    "genz_qmc",
    "genz_qmc_linear",
    "orthant_analytic",
    "univariate_exact",
    "reduce_to_rectangle",
    "cbc_lattice",
]

PRNG_ID = "numpy.random.Philox(SeedSequence(entropy=seed, spawn_key=stream))"
LATTICE_ID = "fast-CBC rank-1 lattice (Nuyens-Cools), product weights 0.8^j, prime size, tent-periodized"

_MC_CHUNK = 100_000


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    stderr: float
    method: str
    samples: int

    @property
    def log_value(self) -> float:
        return math.log(self.value) if self.value > 0 else -math.inf


def rng_stream(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``seed`` and a stream path.

    ``rng_stream(seed, case, shift)`` gives independent, reproducible
    streams for every case and shift.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def mc_rejection(prior: GaussianDist, region: PolyhedralRegion, n_samples: int, seed: int, stream: tuple = ()) -> OracleEstimate:
    """Fraction of ``x = m + L z`` samples falling inside the region."""
    if n_samples < 1:
        raise ValidationError("n_samples", "must be at least 1")
    rng = rng_stream(seed, *stream)
    L = prior.chol.lower
    # project the sampling map once: c^T x = c^T m + (L^T c)^T z
    G = region.directions @ L
    shift = region.directions @ prior.mean
    lo = region.lower - shift
    hi = region.upper - shift
    hits = 0
    done = 0
    while done < n_samples:
        k = min(_MC_CHUNK, n_samples - done)
        z = rng.standard_normal((k, prior.n))
        proj = z @ G.T
        hits += int(np.count_nonzero(np.all((proj > lo) & (proj < hi), axis=1)))
        done += k
    p = hits / n_samples
    return OracleEstimate(p, math.sqrt(p * (1.0 - p) / n_samples), "mc", n_samples)


def _primes_upto(n: int) -> np.ndarray:
    sieve = np.ones(n + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, int(n**0.5) + 1):
        if sieve[p]:
            sieve[p * p :: p] = False
    return np.flatnonzero(sieve)


def _prime_factors(n: int) -> list[int]:
    out = []
    p = 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def _primitive_root(p: int) -> int:
    factors = _prime_factors(p - 1)
    g = 2
    while any(pow(g, (p - 1) // f, p) == 1 for f in factors):
        g += 1
    return g


@lru_cache(maxsize=32)
def cbc_lattice(dim: int, n_points: int) -> tuple[tuple[int, ...], int]:
    """Rank-1 lattice generating vector by fast component-by-component search.

    Uses the Nuyens-Cools FFT formulation for a prime number of points (the
    largest prime not exceeding ``n_points``), the Korobov-space kernel
    ``B2(x) = x^2 - x + 1/6`` and product weights ``0.8^j``.
    Returns ``(z, n)``.
    """
    n = int(_primes_upto(max(int(n_points), 2))[-1])
    z = [1]
    if dim <= 1 or n < 5:
        return tuple(z + [1] * (dim - 1))[:max(dim, 1)], n
    half = (n - 1) // 2
    g = _primitive_root(n)
    perm = np.empty(half, dtype=np.int64)
    perm[0] = 1
    for j in range(1, half):
        perm[j] = (g * perm[j - 1]) % n
    perm = np.minimum(perm, n - perm)
    x = perm / n
    c = x * x - x + 1.0 / 6.0
    fc = fft(c)
    q = np.ones(half)
    w = 0
    for s in range(1, dim):
        reordered = np.concatenate([c[: w + 1][::-1], c[w + 1 :][::-1]])
        q = q * (1.0 + 0.8 ** (s - 1) * reordered)
        w = int(np.argmin(ifft(fc * fft(q)).real))
        z.append(int(perm[w]))
    return tuple(z), n


def reduce_to_rectangle(prior: GaussianDist, region: PolyhedralRegion) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rewrite the problem as ``P(lower < y < upper)`` for ``y ~ N(0, cov)``.

    ``y = C x - C m`` with ``cov = C K C^T``; requires ``m <= n`` and a
    full-rank direction matrix.  Raises :class:`NotReducible` otherwise.
    """
    C = region.directions
    if region.m > region.n:
        raise NotReducible(f"{region.m} constraints exceed dimension {region.n}")
    s = singular_values(C)
    if s[-1] < 1e-12 * s[0]:
        raise NotReducible("constraint directions are rank deficient")
    shift = C @ prior.mean
    cov = C @ prior.cov @ C.T
    return 0.5 * (cov + cov.T), region.lower - shift, region.upper - shift


def _interval_mass(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Phi(hi) - Phi(lo) and the cdf endpoints, reflected into the lower tail."""
    flip = lo > 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    d = ndtr(a)
    e = ndtr(b)
    return e - d, d, flip


def _genz_sweep(chol: np.ndarray, lo: np.ndarray, hi: np.ndarray, w: np.ndarray, groups=None) -> np.ndarray:
    """Sequential-conditioning integrand at points ``w`` of shape (r-1, N).

    ``chol`` is (m, r) lower trapezoidal.  Rows past ``r`` are surplus
    constraints; ``groups[i]`` lists those whose last nonzero coefficient is
    in column ``i`` and they narrow that variable's interval.  Points are
    stored variable-major so each conditional shift is one contiguous
    matrix-vector product.
    """
    n = chol.shape[1]
    npts = w.shape[1]
    y = np.empty((n, npts))
    f = np.ones(npts)
    for i in range(n):
        shift = chol[i, :i] @ y[:i] if i else np.zeros(npts)
        a = (lo[i] - shift) / chol[i, i]
        b = (hi[i] - shift) / chol[i, i]
        if groups is not None and len(groups[i]):
            a, b = _surplus_bounds(chol[groups[i], : i + 1], lo[groups[i]], hi[groups[i]], y[:i], a, b)
        mass, d, flip = _interval_mass(a, b)
        f *= mass
        if i == n - 1:
            break
        u = d + w[i] * mass
        np.clip(u, 1e-300, 1.0 - 1e-16, out=u)
        t = ndtri(u)
        y[i] = np.where(flip, -t, t)
    return f


def _surplus_bounds(rows, lo, hi, y, a, b):
    """Intersect ``lo <= rows[:, :-1] y + rows[:, -1] t <= hi`` into ``a <= t <= b``."""
    c = rows[:, -1]
    shift = rows[:, :-1] @ y if y.shape[0] else np.zeros((rows.shape[0], 1))
    t_lo = (lo[:, None] - shift) / c[:, None]
    t_hi = (hi[:, None] - shift) / c[:, None]
    neg = (c < 0)[:, None]
    a = np.maximum(a, np.where(neg, t_hi, t_lo).max(axis=0))
    b = np.minimum(b, np.where(neg, t_lo, t_hi).min(axis=0))
    # an empty intersection has zero mass
    return a, np.maximum(a, b)


def _surplus_groups(L: np.ndarray) -> list[np.ndarray] | None:
    """Surplus rows of a trapezoidal factor, grouped by last nonzero column."""
    m, r = L.shape
    if m == r:
        return None
    last = np.empty(m - r, dtype=int)
    for k, row in enumerate(L[r:]):
        nz = np.flatnonzero(np.abs(row) > 1e-12 * np.linalg.norm(row))
        last[k] = nz[-1]
    return [r + np.flatnonzero(last == i) for i in range(r)]


def _genz_order(cov: np.ndarray, lo: np.ndarray, hi: np.ndarray, rank: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pivoted Cholesky with Genz's variable ordering (smallest expected interval mass first).

    With ``rank`` below the size of ``cov`` only that many pivots are taken
    and the factor is (m, rank); the remaining rows keep their order.
    """
    m = cov.shape[0]
    r = m if rank is None else rank
    cov = cov.copy()
    lo = lo.copy()
    hi = hi.copy()
    L = np.zeros((m, r))
    y = np.zeros(r)
    for i in range(r):
        best, best_mass = i, math.inf
        for j in range(i, m):
            sd2 = cov[j, j] - L[j, :i] @ L[j, :i]
            if sd2 <= 1e-12 * cov[j, j]:
                # already determined by the pivots so far
                continue
            sd = math.sqrt(sd2)
            shift = L[j, :i] @ y[:i]
            mass = float(_interval_mass(np.array([(lo[j] - shift) / sd]), np.array([(hi[j] - shift) / sd]))[0][0])
            if mass < best_mass:
                best, best_mass = j, mass
        if best_mass == math.inf:
            raise NotReducible("working covariance is singular")
        if best != i:
            cov[[i, best]] = cov[[best, i]]
            cov[:, [i, best]] = cov[:, [best, i]]
            L[[i, best]] = L[[best, i]]
            lo[[i, best]] = lo[[best, i]]
            hi[[i, best]] = hi[[best, i]]
        d2 = cov[i, i] - L[i, :i] @ L[i, :i]
        if d2 <= 1e-12 * cov[i, i]:
            raise NotReducible("working covariance is singular")
        L[i, i] = math.sqrt(d2)
        for j in range(i + 1, m):
            L[j, i] = (cov[j, i] - L[j, :i] @ L[i, :i]) / L[i, i]
        # expected value of the i-th variable on its interval, for the next pick
        shift = L[i, :i] @ y[:i]
        a = (lo[i] - shift) / L[i, i]
        b = (hi[i] - shift) / L[i, i]
        mass = float(_interval_mass(np.array([a]), np.array([b]))[0][0])
        pa = 0.0 if math.isinf(a) else math.exp(-0.5 * a * a)
        pb = 0.0 if math.isinf(b) else math.exp(-0.5 * b * b)
        y[i] = (pa - pb) / (math.sqrt(2 * math.pi) * mass) if mass > 0 else 0.5 * (max(a, -40) + min(b, 40))
    return L, lo, hi


def _lattice_estimate(L, lo, hi, n_points, n_shifts, seed, stream) -> OracleEstimate:
    n = L.shape[1]
    groups = _surplus_groups(L)
    if n_shifts < 2:
        raise ValidationError("n_shifts", "need at least 2 shifts for an error estimate")
    if n == 1:
        mass = float(_genz_sweep(L, lo, hi, np.empty((0, 1)), groups)[0])
        return OracleEstimate(mass, 0.0, "qmc", 1)
    z, npts = cbc_lattice(n - 1, n_points)
    # exact integer arithmetic for the lattice, then scale
    k = np.arange(npts, dtype=np.int64)
    base = (np.asarray(z, dtype=np.int64)[:, None] * k[None, :]) % npts / npts
    rng = rng_stream(seed, *stream)
    estimates = np.empty(n_shifts)
    pts = np.empty_like(base)
    for s in range(n_shifts):
        shift = rng.random(n - 1)
        np.add(base, shift[:, None], out=pts)
        np.mod(pts, 1.0, out=pts)
        # tent periodization
        pts *= 2.0
        pts -= 1.0
        np.abs(pts, out=pts)
        estimates[s] = float(np.mean(_genz_sweep(L, lo, hi, pts, groups)))
    value = float(np.mean(estimates))
    stderr = float(np.std(estimates, ddof=1) / math.sqrt(n_shifts))
    return OracleEstimate(min(max(value, 0.0), 1.0), stderr, "qmc", npts * n_shifts)


def genz_qmc(
    prior: GaussianDist,
    region: PolyhedralRegion,
    n_points: int = 500_000,
    n_shifts: int = 8,
    seed: int = 0,
    stream: tuple = (),
    reorder: bool = True,
) -> OracleEstimate:
    """Genz separation-of-variables integration with a shifted lattice rule.

    The problem is first reduced to a rectangle (see
    :func:`reduce_to_rectangle`).  ``n_points`` is the lattice size per
    shift (rounded down to a prime); the estimate is the mean over
    ``n_shifts`` uniformly shifted copies and ``stderr`` the standard error
    of that mean.
    """
    cov, lo, hi = reduce_to_rectangle(prior, region)
    if reorder:
        L, lo, hi = _genz_order(cov, lo, hi)
    else:
        L = np.linalg.cholesky(cov)
    return _lattice_estimate(L, lo, hi, n_points, n_shifts, seed, stream)


def genz_qmc_linear(
    prior: GaussianDist,
    region: PolyhedralRegion,
    n_points: int = 500_000,
    n_shifts: int = 8,
    seed: int = 0,
    stream: tuple = (),
) -> OracleEstimate:
    """:func:`genz_qmc` for more constraints than dimensions.

    ``y = C x - C m`` has a rank-n covariance.  A pivoted Cholesky takes n
    constraints as integration variables; every other constraint is a
    linear function of the first k of them and narrows the k-th variable's
    interval (the Genz-Bretz treatment of singular problems).  Requires ``m > n`` and
    directions spanning the space.
    """
    C = region.directions
    if region.m <= region.n:
        raise ValidationError("region", "use genz_qmc when constraints do not outnumber dimensions")
    s = singular_values(C)
    if s[-1] < 1e-12 * s[0]:
        raise NotReducible("constraint directions do not span the space")
    shift = C @ prior.mean
    cov = C @ prior.cov @ C.T
    cov = 0.5 * (cov + cov.T)
    L, lo, hi = _genz_order(cov, region.lower - shift, region.upper - shift, rank=region.n)
    return _lattice_estimate(L, lo, hi, n_points, n_shifts, seed, stream)


def orthant_analytic(corr) -> OracleEstimate:
    """Positive-orthant probability of a zero-mean Gaussian, n = 2 or 3.

    Only correlations matter; a covariance is rescaled to unit diagonal.
    """
    corr = np.asarray(corr, dtype=float)
    n = corr.shape[0]
    if n not in (2, 3):
        raise Unsupported(f"closed-form orthant probability only for n in (2, 3), got {n}")
    d = np.sqrt(np.diag(corr))
    r = corr / np.outer(d, d)
    if n == 2:
        value = 0.25 + math.asin(r[0, 1]) / (2.0 * math.pi)
    else:
        value = 0.125 + (math.asin(r[0, 1]) + math.asin(r[0, 2]) + math.asin(r[1, 2])) / (4.0 * math.pi)
    return OracleEstimate(value, 0.0, "orthant", 0)


def univariate_exact(mu: float, sig2: float, l: float, u: float) -> OracleEstimate:
    """``Phi((u - mu)/sigma) - Phi((l - mu)/sigma)`` without tail cancellation."""
    if not l < u:
        raise ValidationError("l/u", "need l < u")
    s = math.sqrt(sig2 * 2.0)
    a = (l - mu) / s
    b = (u - mu) / s
    if a >= 0:
        value = 0.5 * (float(_sp_erfc(a)) - float(_sp_erfc(b)))
    elif b <= 0:
        value = 0.5 * (float(_sp_erfc(-b)) - float(_sp_erfc(-a)))
    else:
        # opposite signs: a sum of two positive terms
        value = 0.5 * (float(_sp_erf(b)) - float(_sp_erf(a)))
    return OracleEstimate(value, 0.0, "univariate", 0)
