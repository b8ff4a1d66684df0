"""Gaussian and polyhedral-region types, SPD linear algebra and whitening."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NotPositiveDefinite, ValidationError

__all__ = [
    "GaussianDist",
    "CholeskyFactor",
    "BoxConstraint",
    "PolyhedralRegion",
    "RegionMetrics",
    "cholesky",
    "whiten",
    "singular_values",
    "region_metrics",
]

SYMMETRY_RTOL = 1e-12
UNIT_NORM_TOL = 1e-12
RANK_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular ``L`` with positive diagonal and ``L @ L.T == cov``."""

    lower: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def solve_lower(self, b: np.ndarray) -> np.ndarray:
        """``L^{-1} b``."""
        return solve_triangular(self.lower, b, lower=True)

    def solve_upper(self, b: np.ndarray) -> np.ndarray:
        """``L^{-T} b``."""
        return solve_triangular(self.lower, b, lower=True, trans="T")

    def solve(self, b: np.ndarray) -> np.ndarray:
        """``cov^{-1} b``."""
        return self.solve_upper(self.solve_lower(b))


def cholesky(cov: np.ndarray) -> CholeskyFactor:
    """Cholesky factor of a symmetric positive-definite matrix.

    If the plain factorization fails it is retried once with
    ``1e-10 * trace(cov) / n`` added to the diagonal; a second failure raises
    :class:`NotPositiveDefinite`.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValidationError("cov", f"expected a square matrix, got shape {cov.shape}")
    try:
        return CholeskyFactor(_frozen(np.linalg.cholesky(cov)))
    except np.linalg.LinAlgError:
        pass
    n = cov.shape[0]
    jitter = 1e-10 * float(np.trace(cov)) / n
    if not jitter > 0:
        raise NotPositiveDefinite("matrix has non-positive trace")
    try:
        lower = np.linalg.cholesky(cov + jitter * np.eye(n))
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix is not positive definite (jitter retry failed)") from None
    return CholeskyFactor(_frozen(lower), jitter=jitter)


class GaussianDist:
    """Multivariate normal ``N(mean, cov)``.

    The covariance is symmetrized on construction; an asymmetry above
    ``1e-12`` relative to the largest entry is rejected.  The Cholesky factor
    is computed eagerly so an invalid covariance fails here.
    """

    __slots__ = ("mean", "cov", "chol")

    def __init__(self, mean: Sequence[float] | np.ndarray, cov: Sequence[Sequence[float]] | np.ndarray):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if mean.ndim != 1:
            raise ValidationError("mean", "must be a vector")
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise ValidationError("cov", f"shape {cov.shape} does not match mean length {n}")
        if not np.all(np.isfinite(mean)):
            raise ValidationError("mean", "entries must be finite")
        if not np.all(np.isfinite(cov)):
            raise ValidationError("cov", "entries must be finite")
        scale = float(np.max(np.abs(cov))) if cov.size else 0.0
        if scale == 0.0:
            raise ValidationError("cov", "matrix is zero")
        asym = float(np.max(np.abs(cov - cov.T)))
        if asym > SYMMETRY_RTOL * scale:
            raise ValidationError("cov", f"not symmetric (max |K - K^T| = {asym:.3g})")
        cov = 0.5 * (cov + cov.T)
        try:
            chol = cholesky(cov)
        except NotPositiveDefinite as exc:
            raise ValidationError("cov", str(exc)) from None
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))
        object.__setattr__(self, "chol", chol)

    def __setattr__(self, name, value):
        raise AttributeError("GaussianDist is immutable")

    def __repr__(self) -> str:
        return f"GaussianDist(n={self.n})"

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def standard(cls, n: int) -> "GaussianDist":
        return cls(np.zeros(n), np.eye(n))


@dataclass(frozen=True)
class BoxConstraint:
    """Slab ``lower < direction @ x < upper`` with a unit-norm direction.

    Use :meth:`create` to build one from an arbitrary nonzero direction; the
    bounds are rescaled with the direction so the slab is unchanged.
    """

    direction: np.ndarray
    lower: float
    upper: float

    @classmethod
    def create(cls, direction, lower=-math.inf, upper=math.inf) -> "BoxConstraint":
        c = np.atleast_1d(np.asarray(direction, dtype=float))
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise ValidationError("direction", "must be a finite vector")
        norm = float(np.linalg.norm(c))
        if norm == 0.0:
            raise ValidationError("direction", "must be nonzero")
        lower = -math.inf if lower is None else float(lower)
        upper = math.inf if upper is None else float(upper)
        if math.isnan(lower) or math.isnan(upper):
            raise ValidationError("lower/upper", "bounds must not be NaN")
        if not lower < upper:
            raise ValidationError("lower/upper", f"need lower < upper, got {lower} >= {upper}")
        if lower == -math.inf and upper == math.inf:
            raise ValidationError("lower/upper", "at least one bound must be finite")
        if upper == -math.inf or lower == math.inf:
            raise ValidationError("lower/upper", "empty slab")
        return cls(_frozen(c / norm), lower / norm, upper / norm)


class PolyhedralRegion:
    """Intersection of ``m >= 1`` slabs in ``R^n``.

    Stored as a direction matrix ``C`` of shape ``(m, n)`` (one unit row per
    constraint) and bound vectors ``lower``, ``upper`` of length ``m``.
    """

    __slots__ = ("directions", "lower", "upper")

    def __init__(self, constraints: Iterable[BoxConstraint]):
        constraints = list(constraints)
        if not constraints:
            raise ValidationError("constraints", "at least one constraint is required")
        n = constraints[0].direction.shape[0]
        for k, c in enumerate(constraints):
            if c.direction.shape != (n,):
                raise ValidationError(f"constraints[{k}].direction", f"expected length {n}")
        object.__setattr__(self, "directions", _frozen(np.stack([c.direction for c in constraints])))
        object.__setattr__(self, "lower", _frozen([c.lower for c in constraints]))
        object.__setattr__(self, "upper", _frozen([c.upper for c in constraints]))

    def __setattr__(self, name, value):
        raise AttributeError("PolyhedralRegion is immutable")

    def __repr__(self) -> str:
        return f"PolyhedralRegion(m={self.m}, n={self.n})"

    def __len__(self) -> int:
        return self.m

    @property
    def m(self) -> int:
        return self.directions.shape[0]

    @property
    def n(self) -> int:
        return self.directions.shape[1]

    @property
    def constraints(self) -> list[BoxConstraint]:
        return [BoxConstraint(self.directions[i], float(self.lower[i]), float(self.upper[i])) for i in range(self.m)]

    @classmethod
    def from_arrays(cls, directions, lower, upper) -> "PolyhedralRegion":
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        lower = np.broadcast_to(np.asarray(lower, dtype=float), directions.shape[:1])
        upper = np.broadcast_to(np.asarray(upper, dtype=float), directions.shape[:1])
        return cls(BoxConstraint.create(c, lo, up) for c, lo, up in zip(directions, lower, upper))

    @classmethod
    def box(cls, lower, upper) -> "PolyhedralRegion":
        """Axis-aligned hyperrectangle."""
        lower = np.asarray(lower, dtype=float)
        return cls.from_arrays(np.eye(lower.shape[0]), lower, upper)

    def is_axis_aligned(self) -> bool:
        """True when every direction is a signed cardinal axis."""
        c = np.abs(self.directions)
        return bool(np.all((c == 0.0) | (c == 1.0)) and np.all(np.sum(c == 1.0, axis=1) == 1))

    def is_rectangular(self) -> bool:
        """Axis-aligned with each axis used exactly once."""
        if not self.is_axis_aligned() or self.m != self.n:
            return False
        axes = np.argmax(np.abs(self.directions), axis=1)
        return len(set(axes.tolist())) == self.n

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Membership test for points stored as rows of ``x``."""
        proj = np.atleast_2d(x) @ self.directions.T
        return np.all((proj > self.lower) & (proj < self.upper), axis=1)


def whiten(dist: GaussianDist, region: PolyhedralRegion) -> tuple[GaussianDist, PolyhedralRegion]:
    """Map ``N(m, K)`` and the region through ``y = L^{-1}(x - m)``.

    ``c^T x`` becomes ``c^T m + (L^T c)^T y``, so each new direction is
    ``L^T c`` (renormalized) with bounds shifted by ``c^T m``.  The result is a
    standard normal problem with the same probability.
    """
    if region.n != dist.n:
        raise ValidationError("constraints", f"dimension {region.n} does not match Gaussian dimension {dist.n}")
    L = dist.chol.lower
    new_dirs = region.directions @ L  # rows are (L^T c_i)^T
    shift = region.directions @ dist.mean
    return (
        GaussianDist.standard(dist.n),
        PolyhedralRegion.from_arrays(new_dirs, region.lower - shift, region.upper - shift),
    )


def singular_values(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60) -> np.ndarray:
    """Singular values by one-sided cyclic Jacobi (Hestenes) rotations.

    Columns are orthogonalized pairwise until every normalized inner product
    is below ``tol``; the singular values are then the column norms.  This
    keeps high relative accuracy for the small singular values, which the
    condition-number metrics depend on.  Returned in descending order.
    """
    a = np.array(a, dtype=float)
    if a.shape[0] < a.shape[1]:
        a = a.T.copy()
    k = a.shape[1]
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(k - 1):
            for q in range(p + 1, k):
                ap, aq = a[:, p], a[:, q]
                alpha = ap @ ap
                beta = aq @ aq
                gamma = ap @ aq
                if alpha == 0.0 or beta == 0.0:
                    continue
                rel = abs(gamma) / math.sqrt(alpha * beta)
                off = max(off, rel)
                if rel <= tol:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = cs * t
                a[:, p], a[:, q] = cs * ap - sn * aq, sn * ap + cs * aq
        if off <= tol:
            break
    return np.sort(np.linalg.norm(a, axis=0))[::-1]


@dataclass(frozen=True)
class RegionMetrics:
    cond_k: float
    cond_cprime: float
    gram_fro: float
    gram_l1: float


def region_metrics(dist: GaussianDist, region: PolyhedralRegion) -> RegionMetrics:
    """Geometric conditioning of the whitened problem.

    ``C'`` has columns ``L^T c_i``.  ``cond_cprime`` is the ratio of its extreme
    singular values (``inf`` when the smallest is below ``1e-12`` times the
    largest).  ``gram_fro`` and ``gram_l1`` are the Frobenius and entrywise
    l1 norms of ``C'^T C' / n``.  ``cond_k`` is obtained from the singular
    values of ``L`` squared, which avoids forming eigenvalues of ``K``.
    """
    L = dist.chol.lower
    s_l = singular_values(L)
    cond_k = float((s_l[0] / s_l[-1]) ** 2)
    cprime = L.T @ region.directions.T
    s_c = singular_values(cprime)
    if s_c[-1] < RANK_TOL * s_c[0]:
        cond_c = math.inf
    else:
        cond_c = float(s_c[0] / s_c[-1])
    gram = cprime.T @ cprime / dist.n
    return RegionMetrics(
        cond_k=cond_k,
        cond_cprime=cond_c,
        gram_fro=float(np.linalg.norm(gram, "fro")),
        gram_l1=float(np.sum(np.abs(gram))),
    )
