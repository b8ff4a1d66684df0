"""Expectation propagation for Gaussian probabilities over polyhedra.

Each slab factor ``1{l_i < c_i^T x < u_i}`` is approximated by a rank-one
Gaussian site ``exp(s_i + nu_i * y - tau_i * y^2 / 2)`` in ``y = c_i^T x``.
The posterior is kept in mean/covariance form and rebuilt from the sites
through the whitened matrix ``A = I + G^T diag(tau) G`` with ``G = C L``;
``A`` has eigenvalues >= 1, so nothing involving ``K^{-1}`` is ever formed.

Power EP: a site with power ``alpha`` is removed fractionally from the
marginal (``tau_cav = tau_marg - alpha * tau_i``) and its update is scaled by
``1 / alpha``.  Indicator factors satisfy ``t^alpha = t``, so the tilted
moments are those of the plain truncation.  ``alpha = 1`` is standard EP.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NegativeCavityVariance, NonFinite, ValidationError
from .gaussian import GaussianDist, PolyhedralRegion
from .truncated import TruncatedMoments, truncated_moments

__all__ = [
    "SiteFactor",
    "EPConfig",
    "EPState",
    "Cavity",
    "cavity",
    "site_update",
    "update_posterior",
    "log_partition",
    "log_partition_classic",
    "run_epmgp",
    "run_power_ep",
]

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)
CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class SiteFactor:
    """Rank-one Gaussian site in natural parameters.

    ``log_ztilde`` is the log scale of the site written as
    ``Ztilde * N(c^T x; nu/tau, 1/tau)``; it is 0 for the unit site ``tau == 0``.
    """

    tau: float = 0.0
    nu: float = 0.0
    log_ztilde: float = 0.0


@dataclass(frozen=True)
class EPConfig:
    tol: float = 1e-10
    max_sweeps: int = 200
    damping: float = 1.0
    alphas: tuple[float, ...] | None = None
    # refresh (mu, Sigma) after every factor instead of once per sweep
    sequential: bool = False
    oscillation_window: int = 50

    def __post_init__(self):
        if not self.tol > 0:
            raise ValidationError("tol", "must be positive")
        if self.max_sweeps < 1:
            raise ValidationError("max_sweeps", "must be at least 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValidationError("damping", "must lie in (0, 1]")
        if self.alphas is not None:
            alphas = tuple(float(a) for a in self.alphas)
            if not all(a > 0 and math.isfinite(a) for a in alphas):
                raise ValidationError("alphas", "all powers must be positive and finite")
            object.__setattr__(self, "alphas", alphas)


@dataclass(frozen=True)
class Cavity:
    mu: float
    sig2: float
    tau: float
    nu: float
    # natural parameters of the current marginal along c_i
    tau_marg: float
    nu_marg: float


@dataclass
class EPState:
    """Result (and working state) of an EP run."""

    prior: GaussianDist
    region: PolyhedralRegion
    mu: np.ndarray
    sigma: np.ndarray
    sites: list[SiteFactor]
    alphas: np.ndarray
    log_z: float = 0.0
    sweeps: int = 0
    converged: bool = False
    max_delta: float = math.inf
    skipped: int = 0
    clamped: int = 0
    oscillation: bool = False
    log_zhat: np.ndarray = field(default=None, repr=False)

    @property
    def z(self) -> float:
        return math.exp(self.log_z)

    @property
    def tau(self) -> np.ndarray:
        return np.array([s.tau for s in self.sites])

    @property
    def nu(self) -> np.ndarray:
        return np.array([s.nu for s in self.sites])


def _alphas(region: PolyhedralRegion, alphas) -> np.ndarray:
    if alphas is None:
        return np.ones(region.m)
    a = np.asarray(alphas, dtype=float)
    if a.shape == ():
        a = np.full(region.m, float(a))
    if a.shape != (region.m,):
        raise ValidationError("alphas", f"expected {region.m} powers, got {a.shape[0]}")
    if not np.all(a > 0):
        raise ValidationError("alphas", "all powers must be positive")
    return a


def _cavity_params(s: float, proj: float, tau_i: float, nu_i: float, alpha: float) -> Cavity:
    tau_m = 1.0 / s
    nu_m = proj / s
    tau_c = tau_m - alpha * tau_i
    nu_c = nu_m - alpha * nu_i
    if not tau_c > 0:
        raise NegativeCavityVariance(f"cavity precision {tau_c:.6g} <= 0")
    return Cavity(nu_c / tau_c, 1.0 / tau_c, tau_c, nu_c, tau_m, nu_m)


def cavity(state: EPState, i: int, alpha: float = 1.0) -> Cavity:
    """Cavity along ``c_i`` with ``alpha`` times site ``i`` removed."""
    c = state.region.directions[i]
    site = state.sites[i]
    return _cavity_params(float(c @ state.sigma @ c), float(c @ state.mu), site.tau, site.nu, alpha)


def _log_partition_1d(mu: float, sig2: float) -> float:
    # log of the integral of exp(nu*y - tau*y^2/2), in mean form
    return 0.5 * mu * mu / sig2 + 0.5 * (_LOG_2PI + math.log(sig2))


def _site_scale(log_zhat: float, cav: Cavity, alpha: float) -> float:
    """Log scale ``s_i`` of the site so that its zeroth moment matches.

    ``(1/alpha) * [log Zhat + Phi(eta_cav) - Phi(eta_cav + alpha * eta_site)]``
    where ``eta_cav + alpha * eta_site`` is the marginal.
    """
    mu_m = cav.nu_marg / cav.tau_marg
    return (
        log_zhat
        + _log_partition_1d(cav.mu, cav.sig2)
        - _log_partition_1d(mu_m, 1.0 / cav.tau_marg)
    ) / alpha


def _site_log_ztilde(scale: float, tau: float, nu: float) -> float:
    if tau <= 0.0:
        return 0.0
    return scale + _log_partition_1d(nu / tau, 1.0 / tau)


def site_update(
    cav: Cavity,
    moments: TruncatedMoments,
    old_site: SiteFactor,
    alpha: float = 1.0,
    damping: float = 1.0,
) -> tuple[SiteFactor, bool]:
    """Moment-matching site update.

    Returns the new site and whether its precision had to be clamped at 0.
    The undamped target is ``tau = (tau_hat - tau_cav) / alpha`` (likewise for
    ``nu``), i.e. ``old + (tau_hat - tau_marg) / alpha``; damping mixes natural
    parameters linearly.
    """
    tau_hat = 1.0 / moments.sighat2
    nu_hat = moments.muhat / moments.sighat2
    tau_new = (tau_hat - cav.tau) / alpha
    nu_new = (nu_hat - cav.nu) / alpha
    clamped = False
    if tau_new < 0.0:
        clamped = tau_new < -CLAMP_TOL * max(1.0, tau_hat)
        tau_new = 0.0
    if damping != 1.0:
        tau_new = (1.0 - damping) * old_site.tau + damping * tau_new
        nu_new = (1.0 - damping) * old_site.nu + damping * nu_new
    if tau_new == 0.0:
        nu_new = 0.0
    # scale is evaluated against the marginal this site would produce
    tau_marg = cav.tau + alpha * tau_new
    nu_marg = cav.nu + alpha * nu_new
    post = Cavity(cav.mu, cav.sig2, cav.tau, cav.nu, tau_marg, nu_marg)
    scale = _site_scale(moments.log_zhat, post, alpha)
    return SiteFactor(tau_new, nu_new, _site_log_ztilde(scale, tau_new, nu_new)), clamped


class _Posterior:
    """Dense posterior rebuilt from sites, plus pieces needed for log Z."""

    __slots__ = ("mu", "sigma", "logdet_ratio", "wm", "wmu")

    def __init__(self, prior: GaussianDist, C: np.ndarray, G: np.ndarray, tau: np.ndarray, nu: np.ndarray):
        n = prior.n
        L = prior.chol.lower
        A = np.eye(n) + (G.T * tau) @ G
        R = np.linalg.cholesky(A)
        W = solve_triangular(R, L.T, lower=True)  # Sigma = W^T W
        self.sigma = W.T @ W
        self.sigma = 0.5 * (self.sigma + self.sigma.T)
        m = prior.mean
        self.mu = m + self.sigma @ (C.T @ (nu - tau * (C @ m)))
        # log|Sigma| - log|K|
        self.logdet_ratio = -2.0 * float(np.sum(np.log(np.diag(R))))
        self.wm = prior.chol.solve_lower(m)
        self.wmu = prior.chol.solve_lower(self.mu)


def update_posterior(prior: GaussianDist, region: PolyhedralRegion, sites: Sequence[SiteFactor]) -> tuple[np.ndarray, np.ndarray]:
    """``Sigma^{-1} = K^{-1} + sum tau_i c_i c_i^T``, ``mu = Sigma (K^{-1} m + sum nu_i c_i)``."""
    tau = np.array([s.tau for s in sites], dtype=float)
    nu = np.array([s.nu for s in sites], dtype=float)
    if np.any(tau < 0):
        raise ValidationError("sites", "site precisions must be non-negative")
    C = region.directions
    post = _Posterior(prior, C, C @ prior.chol.lower, tau, nu)
    return post.mu, post.sigma


def _energy(prior: GaussianDist, C: np.ndarray, post: _Posterior, nu: np.ndarray, scales: np.ndarray) -> float:
    quad = -0.5 * float(post.wm @ post.wm) + 0.5 * (float(post.wmu @ post.wm) + float((C @ post.mu) @ nu))
    log_z = quad + 0.5 * post.logdet_ratio + float(np.sum(scales))
    if not math.isfinite(log_z):
        raise NonFinite(f"log Z evaluated to {log_z}")
    return log_z


def _scales_at(prior, region, post, tau, nu, alphas) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-site log scales, tilted log masses and log Ztilde at the current posterior."""
    C = region.directions
    s_all = np.einsum("ij,jk,ik->i", C, post.sigma, C)
    proj = C @ post.mu
    scales = np.zeros(region.m)
    log_zhat = np.zeros(region.m)
    log_zt = np.zeros(region.m)
    for i in range(region.m):
        cav = _cavity_params(float(s_all[i]), float(proj[i]), float(tau[i]), float(nu[i]), float(alphas[i]))
        mom = truncated_moments(cav.mu, cav.sig2, float(region.lower[i]), float(region.upper[i]))
        log_zhat[i] = mom.log_zhat
        scales[i] = _site_scale(mom.log_zhat, cav, float(alphas[i]))
        log_zt[i] = _site_log_ztilde(scales[i], float(tau[i]), float(nu[i]))
    return scales, log_zhat, log_zt


def log_partition(
    prior: GaussianDist,
    region: PolyhedralRegion,
    sites: Sequence[SiteFactor],
    mu: np.ndarray | None = None,
    sigma: np.ndarray | None = None,
    alphas=None,
) -> float:
    """Power-EP free energy ``log Z`` of the approximation.

    Prior and ``q`` contributions as in the standard formula; site ``i``
    contributes ``(1/alpha_i) [log Zhat_i + Phi(eta_cav) - Phi(eta_marg)]``
    with cavities and tilted masses evaluated at the given sites.  ``mu`` and
    ``sigma`` are recomputed from the sites; passing them is accepted for
    interface symmetry but they are not trusted.
    """
    tau = np.array([s.tau for s in sites], dtype=float)
    nu = np.array([s.nu for s in sites], dtype=float)
    a = _alphas(region, alphas)
    C = region.directions
    post = _Posterior(prior, C, C @ prior.chol.lower, tau, nu)
    scales, _, _ = _scales_at(prior, region, post, tau, nu, a)
    return _energy(prior, C, post, nu, scales)


def log_partition_classic(prior: GaussianDist, sites: Sequence[SiteFactor], mu: np.ndarray, sigma: np.ndarray) -> float:
    """Three-term ``log Z`` from ``log Ztilde`` and the site means/variances.

    Prior part ``-(m^T K^{-1} m + log|K|)/2``, one term per site
    ``log Ztilde - (mu_t^2/s2_t + log s2_t + log 2pi)/2`` and the ``q`` part
    ``(mu^T Sigma^{-1} mu + log|Sigma|)/2``.  Unit sites (``tau == 0``)
    contribute nothing.  Only meaningful when every power is 1.
    """
    m = prior.mean
    prior_term = -0.5 * (float(m @ prior.chol.solve(m)) + prior.chol.logdet())
    site_term = 0.0
    for s in sites:
        if s.tau <= 0.0:
            continue
        mu_t = s.nu / s.tau
        s2_t = 1.0 / s.tau
        site_term += s.log_ztilde - 0.5 * (mu_t * mu_t / s2_t + math.log(s2_t) + _LOG_2PI)
    cs = np.linalg.cholesky(sigma)
    w = solve_triangular(cs, mu, lower=True)
    q_term = 0.5 * (float(w @ w) + 2.0 * float(np.sum(np.log(np.diag(cs)))))
    return prior_term + site_term + q_term


def _try_energy(prior, region, post, tau, nu, alphas) -> tuple[float, np.ndarray, np.ndarray]:
    """Free energy at the current sites, NaN where it is undefined.

    With powers above 1 a cavity can have negative precision; the energy
    does not exist there and the run is simply not converged yet.
    """
    try:
        scales, log_zhat, log_zt = _scales_at(prior, region, post, tau, nu, alphas)
        return _energy(prior, region.directions, post, nu, scales), log_zhat, log_zt
    except (NegativeCavityVariance, NonFinite):
        nan = np.full(region.m, math.nan)
        return math.nan, nan, nan


def _run(prior: GaussianDist, region: PolyhedralRegion, config: EPConfig, alphas: np.ndarray) -> EPState:
    if region.n != prior.n:
        raise ValidationError("constraints", f"dimension {region.n} does not match Gaussian dimension {prior.n}")
    C = region.directions
    G = C @ prior.chol.lower
    lower, upper = region.lower, region.upper
    m = region.m
    tau = np.zeros(m)
    nu = np.zeros(m)
    log_zt = np.zeros(m)
    gamma = config.damping

    post = _Posterior(prior, C, G, tau, nu)
    mu, sigma = post.mu.copy(), post.sigma.copy()
    log_z = 0.0
    skipped = clamped = 0
    converged = oscillation = False
    best_delta = math.inf
    since_best = 0
    max_delta = math.inf
    sweep = 0

    for sweep in range(1, config.max_sweeps + 1):
        max_delta = 0.0
        if not config.sequential:
            s_all = np.einsum("ij,jk,ik->i", C, sigma, C)
            proj = C @ mu
        for i in range(m):
            c = C[i]
            if config.sequential:
                sc = sigma @ c
                s_i = float(c @ sc)
                p_i = float(c @ mu)
            else:
                s_i = float(s_all[i])
                p_i = float(proj[i])
            a_i = float(alphas[i])
            try:
                cav = _cavity_params(s_i, p_i, float(tau[i]), float(nu[i]), a_i)
            except NegativeCavityVariance:
                skipped += 1
                continue
            mom = truncated_moments(cav.mu, cav.sig2, float(lower[i]), float(upper[i]))
            old = SiteFactor(float(tau[i]), float(nu[i]), float(log_zt[i]))
            new, was_clamped = site_update(cav, mom, old, a_i, gamma)
            clamped += was_clamped
            d_tau = new.tau - old.tau
            d_nu = new.nu - old.nu
            max_delta = max(max_delta, abs(d_tau), abs(d_nu))
            tau[i], nu[i], log_zt[i] = new.tau, new.nu, new.log_ztilde
            if config.sequential and (d_tau != 0.0 or d_nu != 0.0):
                denom = 1.0 + d_tau * s_i
                sigma = sigma - (d_tau / denom) * np.outer(sc, sc)
                mu = mu + sc * ((d_nu - d_tau * p_i) / denom)

        post = _Posterior(prior, C, G, tau, nu)
        mu, sigma = post.mu.copy(), post.sigma.copy()
        new_log_z = _try_energy(prior, region, post, tau, nu, alphas)[0]
        delta_z = abs(new_log_z - log_z)
        max_delta = max(max_delta, delta_z) if math.isfinite(delta_z) else math.inf
        log_z = new_log_z

        if max_delta < config.tol:
            converged = True
            break
        if max_delta < best_delta:
            best_delta = max_delta
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.oscillation_window:
                oscillation = True
                logger.warning("EP stalled: max delta %.3g not improved in %d sweeps", max_delta, since_best)
                break

    if not converged and not oscillation:
        logger.info("EP hit the sweep limit (%d) with max delta %.3g", config.max_sweeps, max_delta)

    log_z, log_zhat, log_zt = _try_energy(prior, region, post, tau, nu, alphas)
    if not math.isfinite(log_z):
        converged = False
    sites = [SiteFactor(float(t), float(v), float(z)) for t, v, z in zip(tau, nu, log_zt)]
    return EPState(
        prior=prior,
        region=region,
        mu=mu,
        sigma=sigma,
        sites=sites,
        alphas=alphas,
        log_z=log_z,
        sweeps=sweep,
        converged=converged,
        max_delta=max_delta,
        skipped=skipped,
        clamped=clamped,
        oscillation=oscillation,
        log_zhat=log_zhat,
    )


def run_epmgp(prior: GaussianDist, region: PolyhedralRegion, config: EPConfig | None = None) -> EPState:
    """Approximate ``log P(x in region)`` for ``x ~ prior`` with standard EP.

    Any ``alphas`` in ``config`` are ignored; use :func:`run_power_ep`.
    The returned state has ``converged=False`` if the sweep limit was hit or
    the site changes stopped decreasing.
    """
    config = config or EPConfig()
    return _run(prior, region, config, np.ones(region.m))


def run_power_ep(
    prior: GaussianDist,
    region: PolyhedralRegion,
    config: EPConfig | None = None,
    alphas=None,
) -> EPState:
    """Power EP with per-factor powers (``alphas`` argument or ``config.alphas``).

    A scalar ``alphas`` applies one power to every factor.
    """
    config = config or EPConfig()
    if alphas is None:
        alphas = config.alphas
    return _run(prior, region, config, _alphas(region, alphas))
