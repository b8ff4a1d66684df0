"""Random problem generators, error studies and pathology constructions."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .ep import EPConfig, EPState, run_epmgp, run_power_ep
from .errors import NotReducible, ValidationError
from .gaussian import GaussianDist, PolyhedralRegion, region_metrics
from .oracles import OracleEstimate, genz_qmc, genz_qmc_linear, mc_rejection, orthant_analytic, rng_stream

__all__ = [
    "GENERATOR_VERSION",
    "StudyConfig",
    "CaseResult",
    "AggregateRow",
    "PathologyRow",
    "AlphaRow",
    "gen_gaussian",
    "gen_rect_region",
    "gen_poly_region",
    "redundancy_region",
    "extramass_region",
    "rotated_region",
    "pathology_region",
    "run_study",
    "study_reference",
    "run_orthant_study",
    "orthant_grid",
    "run_pathology",
    "run_alpha_sweep",
    "optimal_alpha",
    "TRUE_BOX_LOG_Z",
]

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "1"
STUDY_KINDS = ("rect", "poly", "polyM", "orthant")
PATHOLOGY_KINDS = ("redundancy", "extramass", "rotated")

# N(0, I) mass of [-1, 1]^2
TRUE_BOX_LOG_Z = 2.0 * math.log(math.erf(1.0 / math.sqrt(2.0)))

# stream tags; Gaussians are keyed by dimension and case only so that rect,
# poly and polyM studies with one seed share their covariances
_GAUSS, _ANCHOR, _REGION, _ORACLE = 0, 1, 2, 3


def default_study_ep_config() -> EPConfig:
    return EPConfig(tol=1e-10, max_sweeps=500, sequential=True)


def default_pathology_ep_config() -> EPConfig:
    return EPConfig(tol=1e-12, max_sweeps=1000, sequential=True)


@dataclass(frozen=True)
class StudyConfig:
    kind: str
    dims: tuple[int, ...] = (2, 3, 5, 10, 20)
    m_list: tuple[int, ...] = (2, 4, 8, 10, 12, 16, 32, 64)
    cases_per_cell: int = 50
    seed: int = 0
    ep_config: EPConfig = field(default_factory=default_study_ep_config)
    region_scale: float = 1.0
    qmc_points: int = 62_500
    qmc_shifts: int = 8
    mc_samples: int = 1_000_000

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise ValidationError("kind", f"unknown study kind {self.kind!r}")
        if self.cases_per_cell < 1:
            raise ValidationError("cases", "must be at least 1")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "m_list", tuple(int(m) for m in self.m_list))
        if any(d < 1 for d in self.dims):
            raise ValidationError("dims", "dimensions must be positive")
        if any(m < 1 for m in self.m_list):
            raise ValidationError("m_list", "constraint counts must be positive")


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    cell: int
    n: int
    m: int
    seed: int
    log_z_ep: float
    log_z_oracle: float
    rel_error: float
    cond_k: float
    cond_cprime: float
    gram_fro: float
    gram_l1: float
    sweeps: int
    converged: bool
    oracle_method: str
    oracle_stderr: float


@dataclass(frozen=True)
class AggregateRow:
    cell: int
    count: int
    rel_error_median: float
    rel_error_q25: float
    rel_error_q75: float
    oracle_rel_stderr_median: float
    not_converged: int


@dataclass(frozen=True)
class PathologyRow:
    kind: str
    sweep_value: float
    log_z_ep: float
    log_z_true: float
    signed_rel_error: float
    sweeps: int
    converged: bool


@dataclass(frozen=True)
class AlphaRow:
    kind: str
    sweep_value: float
    alpha: float
    log_z_ep: float
    log_z_true: float
    signed_rel_error: float
    sweeps: int
    converged: bool
    oscillation: bool
    optimal: bool


def rel_error(log_z_ep: float, log_z_ref: float) -> float:
    """``|Z_ep - Z_ref| / Z_ref`` computed from logs."""
    return abs(math.expm1(log_z_ep - log_z_ref))


# ---------------------------------------------------------------------------
# generators


def gen_gaussian(n: int, rng: np.random.Generator) -> GaussianDist:
    """Zero-mean Gaussian with Exp(1) eigenvalues and a Haar-random eigenbasis."""
    if n < 1:
        raise ValidationError("n", "must be at least 1")
    lam = rng.exponential(1.0, size=n)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    cov = (q * lam) @ q.T
    return GaussianDist(np.zeros(n), 0.5 * (cov + cov.T))


def _anchor(dist: GaussianDist, rng: np.random.Generator) -> np.ndarray:
    return dist.mean + dist.chol.lower @ rng.standard_normal(dist.n)


def _bracket(centers: np.ndarray, n: int, rng: np.random.Generator, scale: float) -> tuple[np.ndarray, np.ndarray]:
    half = scale * math.sqrt(n)
    u1 = rng.random(centers.shape[0])
    u2 = rng.random(centers.shape[0])
    return centers - half * u2, centers + half * u1


def gen_rect_region(dist: GaussianDist, n: int, rng: np.random.Generator, scale: float = 1.0, anchor=None) -> PolyhedralRegion:
    """Axis-aligned box around a draw ``x0`` from ``dist``.

    Each side spans ``x0_i - s sqrt(n) U2`` to ``x0_i + s sqrt(n) U1``.
    """
    x0 = _anchor(dist, rng) if anchor is None else anchor
    lower, upper = _bracket(x0, n, rng, scale)
    return PolyhedralRegion.box(lower, upper)


def random_directions(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    d = rng.standard_normal((m, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def gen_poly_region(dist: GaussianDist, n: int, m: int, rng: np.random.Generator, scale: float = 1.0, anchor=None) -> PolyhedralRegion:
    """``m`` uniformly oriented slabs, each bracketing the projection of ``x0``."""
    if m < 1:
        raise ValidationError("m", "must be at least 1")
    x0 = _anchor(dist, rng) if anchor is None else anchor
    C = random_directions(n, m, rng)
    lower, upper = _bracket(C @ x0, n, rng, scale)
    return PolyhedralRegion.from_arrays(C, lower, upper)


# ---------------------------------------------------------------------------
# studies


def study_reference(prior: GaussianDist, region: PolyhedralRegion, cfg: StudyConfig, seed: int, stream: tuple) -> OracleEstimate:
    """Genz QMC, its surplus-constraint form when m > n, MC rejection if neither applies."""
    try:
        if region.m > region.n:
            return genz_qmc_linear(prior, region, cfg.qmc_points, cfg.qmc_shifts, seed=seed, stream=stream)
        return genz_qmc(prior, region, cfg.qmc_points, cfg.qmc_shifts, seed=seed, stream=stream)
    except NotReducible:
        return mc_rejection(prior, region, cfg.mc_samples, seed=seed, stream=stream)


def _case(case_id: str, cell: int, prior: GaussianDist, region: PolyhedralRegion, oracle: OracleEstimate, cfg: StudyConfig) -> CaseResult:
    state = run_epmgp(prior, region, cfg.ep_config)
    metrics = region_metrics(prior, region)
    log_or = oracle.log_value
    return CaseResult(
        case_id=case_id,
        cell=cell,
        n=prior.n,
        m=region.m,
        seed=cfg.seed,
        log_z_ep=state.log_z,
        log_z_oracle=log_or,
        rel_error=rel_error(state.log_z, log_or) if math.isfinite(log_or) else math.inf,
        cond_k=metrics.cond_k,
        cond_cprime=metrics.cond_cprime,
        gram_fro=metrics.gram_fro,
        gram_l1=metrics.gram_l1,
        sweeps=state.sweeps,
        converged=state.converged,
        oracle_method=oracle.method,
        oracle_stderr=oracle.stderr,
    )


def _cells(cfg: StudyConfig) -> list[tuple[int, int]]:
    """(cell value, dimension) pairs; the cell is n, or m for polyM."""
    if cfg.kind == "polyM":
        return [(m, 10) for m in cfg.m_list]
    return [(n, n) for n in cfg.dims]


def _problem(cfg: StudyConfig, cell: int, n: int, case: int) -> tuple[GaussianDist, PolyhedralRegion]:
    seed = cfg.seed
    prior = gen_gaussian(n, rng_stream(seed, n, case, _GAUSS))
    x0 = _anchor(prior, rng_stream(seed, n, case, _ANCHOR))
    if cfg.kind == "rect":
        region = gen_rect_region(prior, n, rng_stream(seed, n, case, _REGION), cfg.region_scale, anchor=x0)
    else:
        m = n if cfg.kind == "poly" else cell
        region = gen_poly_region(prior, n, m, rng_stream(seed, n, case, _REGION, m), cfg.region_scale, anchor=x0)
    return prior, region


def aggregate(rows: Sequence[CaseResult]) -> list[AggregateRow]:
    out = []
    for cell in sorted({r.cell for r in rows}, key=lambda c: [r.cell for r in rows].index(c)):
        sel = [r for r in rows if r.cell == cell]
        err = np.array([r.rel_error for r in sel])
        z = np.exp(np.array([r.log_z_oracle for r in sel]))
        rel_se = np.array([r.oracle_stderr for r in sel]) / z
        out.append(
            AggregateRow(
                cell=cell,
                count=len(sel),
                rel_error_median=float(np.median(err)),
                rel_error_q25=float(np.percentile(err, 25)),
                rel_error_q75=float(np.percentile(err, 75)),
                oracle_rel_stderr_median=float(np.median(rel_se)),
                not_converged=sum(not r.converged for r in sel),
            )
        )
    return out


def run_study(cfg: StudyConfig) -> tuple[list[CaseResult], list[AggregateRow]]:
    """Run EP against the reference on every case of every cell.

    The reference is Genz QMC (with surplus constraints folded into the last
    variable when m > n), and MC rejection only for directions that do not
    span the space.  Non-converged cases are kept and flagged.
    """
    if cfg.kind == "orthant":
        return run_orthant_study(cfg.dims, cfg.cases_per_cell, cfg.seed, cfg.ep_config)
    rows = []
    for cell, n in _cells(cfg):
        for case in range(cfg.cases_per_cell):
            prior, region = _problem(cfg, cell, n, case)
            m = region.m
            oracle = study_reference(prior, region, cfg, cfg.seed, (n, case, _ORACLE, m))
            row = _case(f"{cfg.kind}-{cell}-{case}", cell, prior, region, oracle, cfg)
            if not row.converged:
                logger.warning("case %s did not converge", row.case_id)
            rows.append(row)
    return rows, aggregate(rows)


def orthant_region(n: int) -> PolyhedralRegion:
    return PolyhedralRegion.box(np.zeros(n), np.full(n, math.inf))


def equicorrelation(n: int, rho: float) -> np.ndarray:
    return (1.0 - rho) * np.eye(n) + rho * np.ones((n, n))


def orthant_grid(n: int) -> np.ndarray:
    """41 equicorrelations including 0: (-0.95, 0.95) for n=2, (-0.45, 0.75) for n=3."""
    # adding 0.0 turns a rounded -0.0 into +0.0
    if n == 2:
        return np.round(np.linspace(-0.95, 0.95, 41), 12) + 0.0
    if n == 3:
        return np.round(np.linspace(-0.45, 0.75, 41), 12) + 0.0
    raise ValidationError("dims", "orthant studies support n in {2, 3}")


def run_orthant_study(dims: Iterable[int], cases_per_cell: int, seed: int, ep_config: EPConfig | None = None, grid: bool = True):
    """EP against closed-form orthant probabilities.

    For each n: the equicorrelation grid of :func:`orthant_grid` (when
    ``grid``), then ``cases_per_cell`` random correlations obtained by
    rescaling :func:`gen_gaussian` covariances to unit diagonal.
    """
    ep_config = ep_config or default_study_ep_config()
    cfg = StudyConfig(kind="orthant", dims=tuple(dims), cases_per_cell=max(cases_per_cell, 1), seed=seed, ep_config=ep_config)
    rows = []
    for n in cfg.dims:
        if n not in (2, 3):
            raise ValidationError("dims", "orthant studies support n in {2, 3}")
        region = orthant_region(n)
        problems = []
        if grid:
            problems += [(f"orthant-{n}-rho{rho:+.4f}", equicorrelation(n, rho)) for rho in orthant_grid(n)]
        for case in range(cases_per_cell):
            cov = gen_gaussian(n, rng_stream(seed, n, case, _GAUSS)).cov
            d = np.sqrt(np.diag(cov))
            problems.append((f"orthant-{n}-{case}", cov / np.outer(d, d)))
        for case_id, corr in problems:
            prior = GaussianDist(np.zeros(n), corr)
            rows.append(_case(case_id, n, prior, region, orthant_analytic(corr), cfg))
    return rows, aggregate(rows)


# ---------------------------------------------------------------------------
# pathologies on N(0, I) over [-1, 1]^2


def redundancy_region(k: int) -> PolyhedralRegion:
    """The [-1, 1]^2 box with both axis factors repeated ``k`` times."""
    if k < 1:
        raise ValidationError("sweep", "redundancy count must be >= 1")
    return PolyhedralRegion.from_arrays(np.tile(np.eye(2), (k, 1)), -1.0, 1.0)


def extramass_region(w: float) -> PolyhedralRegion:
    """Two squares of half-width ``w`` anchored at opposite corners of [-1, 1]^2.

    ``[-1, 2w-1]^2`` and ``[1-2w, 1]^2`` intersect exactly in the target
    square; each alone holds mass outside it.  ``w = 1`` is plain
    duplication.
    """
    if w < 1:
        raise ValidationError("sweep", "extra-mass half-width must be >= 1")
    C = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    lower = [-1.0, -1.0, 1.0 - 2.0 * w, 1.0 - 2.0 * w]
    upper = [2.0 * w - 1.0, 2.0 * w - 1.0, 1.0, 1.0]
    return PolyhedralRegion.from_arrays(C, lower, upper)


def rotated_region(r: int) -> PolyhedralRegion:
    """``r`` squares rotated by ``j pi / (2r)``, each circumscribing [-1, 1]^2.

    A square rotated by theta touches the target's corners when its
    half-width is ``|cos theta| + |sin theta|``, so no constraint cuts into
    the target and their intersection is exactly [-1, 1]^2.
    """
    if r < 1:
        raise ValidationError("sweep", "rotated box count must be >= 1")
    dirs, half = [], []
    for j in range(r):
        th = j * math.pi / (2 * r)
        c, s = math.cos(th), math.sin(th)
        h = abs(c) + abs(s)
        dirs += [[c, s], [-s, c]]
        half += [h, h]
    half = np.array(half)
    return PolyhedralRegion.from_arrays(np.array(dirs), -half, half)


def pathology_region(kind: str, value: float) -> PolyhedralRegion:
    if kind == "redundancy":
        return redundancy_region(int(value))
    if kind == "extramass":
        return extramass_region(float(value))
    if kind == "rotated":
        return rotated_region(int(value))
    raise ValidationError("kind", f"unknown pathology {kind!r}")


def run_pathology(kind: str, sweep: Sequence[float], ep_config: EPConfig | None = None) -> list[PathologyRow]:
    """Standard EP on one of the [-1, 1]^2 constructions for each sweep value."""
    ep_config = ep_config or default_pathology_ep_config()
    prior = GaussianDist.standard(2)
    rows = []
    for v in sweep:
        state = run_epmgp(prior, pathology_region(kind, v), ep_config)
        rows.append(
            PathologyRow(kind, float(v), state.log_z, TRUE_BOX_LOG_Z, math.expm1(state.log_z - TRUE_BOX_LOG_Z), state.sweeps, state.converged)
        )
    return rows


def _alpha_run(kind: str, value: float, alpha: float, ep_config: EPConfig) -> EPState:
    prior = GaussianDist.standard(2)
    region = pathology_region(kind, value)
    if alpha == 1.0:
        # same code path as run_pathology so the two agree bit for bit
        return run_epmgp(prior, region, ep_config)
    return run_power_ep(prior, region, ep_config, alphas=alpha)


def _alpha_row(kind, value, alpha, state, optimal=False) -> AlphaRow:
    return AlphaRow(
        kind,
        float(value),
        float(alpha),
        state.log_z,
        TRUE_BOX_LOG_Z,
        math.expm1(state.log_z - TRUE_BOX_LOG_Z),
        state.sweeps,
        state.converged,
        state.oscillation,
        optimal,
    )


def alpha_bracket(kind: str, value: float) -> tuple[float, float]:
    """Search interval for the corrective power.

    Redundant and rotated factors undercount, so the correction is above 1
    (up to twice the repeat count); extra mass overcounts and needs a power
    below 1.
    """
    if kind == "extramass":
        return 0.05, 1.0
    # k is the repeat count, or the number of boxes for rotated
    return 1.0, max(2.0 * float(value), 2.0)


def optimal_alpha(kind: str, value: float, ep_config: EPConfig | None = None, xtol: float = 1e-12, max_iter: int = 200) -> tuple[float, EPState]:
    """Golden-section search for the power minimizing ``|signed rel. error|``.

    Runs that do not converge score ``inf``.
    """
    ep_config = ep_config or default_pathology_ep_config()
    lo, hi = alpha_bracket(kind, value)
    cache: dict[float, EPState] = {}

    def f(a: float) -> float:
        if a not in cache:
            cache[a] = _alpha_run(kind, value, a, ep_config)
        st = cache[a]
        if not (st.converged and math.isfinite(st.log_z)):
            # large powers stop converging; failures count as worst
            return math.inf
        return abs(math.expm1(st.log_z - TRUE_BOX_LOG_Z))

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= xtol * max(1.0, abs(a)):
            break
        # ties go left: both probes failing means the power is too large
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    best = min(cache, key=lambda k: f(k))
    return best, cache[best]


def run_alpha_sweep(
    kind: str,
    sweep: Sequence[float],
    alpha_grid: Sequence[float],
    ep_config: EPConfig | None = None,
    search: bool = True,
) -> list[AlphaRow]:
    """Power EP with one power for all factors, over a grid of powers.

    With ``search`` an extra row per sweep value holds the golden-section
    optimum (flagged ``optimal``).
    """
    ep_config = ep_config or default_pathology_ep_config()
    if any(not a > 0 for a in alpha_grid):
        raise ValidationError("grid", "powers must be positive")
    rows = []
    for v in sweep:
        for a in alpha_grid:
            rows.append(_alpha_row(kind, v, a, _alpha_run(kind, v, float(a), ep_config)))
        if search:
            a_opt, state = optimal_alpha(kind, v, ep_config)
            rows.append(_alpha_row(kind, v, a_opt, state, optimal=True))
    return rows
