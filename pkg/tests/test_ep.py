import math

import numpy as np
import pytest

from epmgp.ep import (
    EPConfig,
    SiteFactor,
    cavity,
    log_partition,
    log_partition_classic,
    run_epmgp,
    run_power_ep,
    site_update,
    update_posterior,
)
from epmgp.errors import ValidationError
from epmgp.experiments import TRUE_BOX_LOG_Z, extramass_region, redundancy_region
from epmgp.gaussian import GaussianDist, PolyhedralRegion, whiten
from epmgp.oracles import orthant_analytic, univariate_exact
from epmgp.truncated import truncated_moments
from helpers import random_problem

# N(0, 1) mass of [-1, 1], and truncated variance from the quadrature oracle
P1 = math.erf(1 / math.sqrt(2))
VAR1 = 0.29112509477279314
SEQ = EPConfig(tol=1e-12, max_sweeps=1000, sequential=True)


def _state(prior, region, tau, nu):
    st = run_epmgp(prior, region, EPConfig(max_sweeps=1))
    st.sites = [SiteFactor(t, v, 0.0) for t, v in zip(tau, nu)]
    st.mu, st.sigma = update_posterior(prior, region, st.sites)
    return st


def test_config_validation():
    for kw in [dict(tol=0), dict(max_sweeps=0), dict(damping=0), dict(damping=1.5), dict(alphas=(1, -1))]:
        with pytest.raises(ValidationError):
            EPConfig(**kw)


def test_cavity_examples():
    prior = GaussianDist.standard(1)
    region = PolyhedralRegion.box([0.0], [math.inf])
    fresh = _state(prior, region, [0.0], [0.0])
    cav = cavity(fresh, 0)
    assert cav.mu == 0.0 and cav.sig2 == 1.0

    st = _state(prior, region, [1.0], [0.0])
    assert abs(st.sigma[0, 0] - 0.5) < 1e-15
    assert abs(cavity(st, 0).sig2 - 1.0) < 1e-15
    assert abs(cavity(st, 0, alpha=0.5).tau - 1.5) < 1e-15


def test_site_update_examples():
    prior = GaussianDist.standard(1)
    region = PolyhedralRegion.box([-1.0], [1.0])
    st = _state(prior, region, [0.0], [0.0])
    cav = cavity(st, 0)
    mom = truncated_moments(cav.mu, cav.sig2, -1.0, 1.0)
    site, clamped = site_update(cav, mom, st.sites[0])
    assert not clamped
    assert site.nu == 0.0
    assert abs(site.tau - (1 / VAR1 - 1)) < 1e-12
    assert abs(site.tau - 2.43495) < 1e-5
    half, _ = site_update(cav, mom, st.sites[0], alpha=2.0)
    assert abs(half.tau - site.tau / 2) < 1e-15
    damped, _ = site_update(cav, mom, st.sites[0], damping=0.5)
    assert abs(damped.tau - site.tau / 2) < 1e-15


def test_update_posterior_examples():
    prior = GaussianDist.standard(2)
    region = PolyhedralRegion.box([-1, -1], [1, 1])
    mu, sigma = update_posterior(prior, region, [SiteFactor(0.0, 0.0, 0.0)] * 2)
    assert np.array_equal(mu, np.zeros(2)) and np.allclose(sigma, np.eye(2), atol=1e-15)
    t = 2.4351
    mu, sigma = update_posterior(prior, region, [SiteFactor(t, 0.0, 0.0)] * 2)
    assert np.allclose(sigma, np.eye(2) / (1 + t), atol=1e-15)
    assert np.array_equal(mu, np.zeros(2))
    mu, sigma = update_posterior(GaussianDist.standard(1), PolyhedralRegion.box([0.0], [1.0]), [SiteFactor(1.0, 1.0, 0.0)])
    assert abs(sigma[0, 0] - 0.5) < 1e-15 and abs(mu[0] - 0.5) < 1e-15


def test_update_posterior_matches_dense_inverse():
    rng = np.random.default_rng(4)
    prior, region = random_problem(4, 6, rng)
    tau = rng.uniform(0, 3, 6)
    nu = rng.normal(0, 1, 6)
    mu, sigma = update_posterior(prior, region, [SiteFactor(a, b, 0.0) for a, b in zip(tau, nu)])
    C = region.directions
    P = np.linalg.inv(prior.cov) + (C.T * tau) @ C
    S = np.linalg.inv(P)
    assert np.allclose(sigma, S, rtol=1e-10, atol=1e-12)
    assert np.allclose(mu, S @ (np.linalg.solve(prior.cov, prior.mean) + C.T @ nu), rtol=1e-10, atol=1e-12)


def test_box_example():
    st = run_epmgp(GaussianDist.standard(2), PolyhedralRegion.box([-1, -1], [1, 1]))
    assert st.converged and st.sweeps <= 3
    assert abs(st.log_z - 2 * math.log(P1)) < 1e-12
    assert abs(st.log_z - (-0.763430)) < 1e-6


def test_half_line_example():
    st = run_epmgp(GaussianDist.standard(1), PolyhedralRegion.box([0.0], [math.inf]))
    assert abs(st.log_z - math.log(0.5)) < 1e-12


def test_orthant_example():
    corr = np.array([[1.0, 0.5], [0.5, 1.0]])
    st = run_epmgp(GaussianDist(np.zeros(2), corr), PolyhedralRegion.box([0, 0], [math.inf, math.inf]))
    exact = orthant_analytic(corr).value
    assert abs(exact - 1 / 3) < 1e-15
    assert abs(st.z - exact) / exact < 1e-2


def test_single_factor_exact():
    rng = np.random.default_rng(1)
    worst = 0.0
    for case in range(100):
        n = int(rng.integers(1, 11))
        prior, region = random_problem(n, 1, rng)
        if case % 4 == 0:
            region = PolyhedralRegion.from_arrays(region.directions, region.lower, [math.inf])
        st = run_epmgp(prior, region)
        c = region.directions[0]
        ref = univariate_exact(float(c @ prior.mean), float(c @ prior.cov @ c), region.lower[0], region.upper[0])
        worst = max(worst, abs(st.log_z - ref.log_value))
    assert worst < 1e-10


def test_decomposable_boxes():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(1, 11))
        mean = rng.normal(0, 1, n)
        var = rng.uniform(0.1, 4, n)
        lo = mean + rng.uniform(-2, 0.5, n) * np.sqrt(var)
        hi = lo + rng.uniform(0.1, 3, n) * np.sqrt(var)
        hi[rng.random(n) < 0.2] = math.inf
        st = run_epmgp(GaussianDist(mean, np.diag(var)), PolyhedralRegion.box(lo, hi))
        ref = sum(univariate_exact(mean[i], var[i], lo[i], hi[i]).log_value for i in range(n))
        assert abs(st.log_z - ref) < 1e-9


def test_whitening_invariance():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(2, 8))
        prior, region = random_problem(n, int(rng.integers(1, 2 * n + 1)), rng)
        a = run_epmgp(prior, region, SEQ)
        b = run_epmgp(*whiten(prior, region), SEQ)
        if a.converged and b.converged:
            assert abs(a.log_z - b.log_z) < 1e-8


def test_damping_invariance():
    rng = np.random.default_rng(5)
    for _ in range(20):
        prior, region = random_problem(4, 6, rng)
        a = run_epmgp(prior, region, EPConfig(tol=1e-12, max_sweeps=2000))
        b = run_epmgp(prior, region, EPConfig(tol=1e-12, max_sweeps=2000, damping=0.5))
        if a.converged and b.converged:
            assert abs(a.log_z - b.log_z) < 1e-6


def test_site_positivity_and_consistency():
    rng = np.random.default_rng(6)
    for _ in range(30):
        prior, region = random_problem(5, 8, rng)
        st = run_epmgp(prior, region, SEQ)
        assert st.converged
        assert np.all(st.tau >= 0)
        assert np.all(np.linalg.eigvalsh(st.sigma) > 0)
        mu, sigma = update_posterior(prior, region, st.sites)
        assert np.allclose(sigma, st.sigma, rtol=1e-8, atol=1e-12)
        assert np.allclose(mu, st.mu, rtol=1e-8, atol=1e-10)


def test_sequential_and_parallel_agree():
    rng = np.random.default_rng(7)
    for _ in range(20):
        prior, region = random_problem(5, 7, rng)
        a = run_epmgp(prior, region, EPConfig(tol=1e-12, max_sweeps=1000))
        b = run_epmgp(prior, region, SEQ)
        if a.converged and b.converged:
            assert abs(a.log_z - b.log_z) < 1e-9


def test_classic_log_z_matches_energy():
    rng = np.random.default_rng(8)
    for _ in range(30):
        prior, region = random_problem(int(rng.integers(1, 7)), int(rng.integers(1, 9)), rng)
        st = run_epmgp(prior, region, SEQ)
        assert st.converged
        classic = log_partition_classic(prior, st.sites, st.mu, st.sigma)
        assert abs(classic - st.log_z) < 1e-10
        assert abs(log_partition(prior, region, st.sites) - st.log_z) < 1e-10


def test_factor_order_robustness():
    rng = np.random.default_rng(9)
    for _ in range(20):
        prior, region = random_problem(4, 7, rng)
        perm = rng.permutation(region.m)
        shuffled = PolyhedralRegion.from_arrays(region.directions[perm], region.lower[perm], region.upper[perm])
        a = run_epmgp(prior, region, SEQ)
        b = run_epmgp(prior, shuffled, SEQ)
        if a.converged and b.converged:
            assert abs(a.log_z - b.log_z) < 1e-8


def test_power_ep_all_ones_is_standard():
    rng = np.random.default_rng(10)
    prior, region = random_problem(4, 6, rng)
    a = run_epmgp(prior, region)
    b = run_power_ep(prior, region, alphas=1.0)
    assert abs(a.log_z - b.log_z) < 1e-12
    c = run_power_ep(prior, region, EPConfig(alphas=(1.0,) * 6))
    assert abs(a.log_z - c.log_z) < 1e-12


def test_power_ep_bad_alphas():
    prior = GaussianDist.standard(2)
    region = PolyhedralRegion.box([-1, -1], [1, 1])
    with pytest.raises(ValidationError):
        run_power_ep(prior, region, alphas=[1.0, 2.0, 3.0])
    with pytest.raises(ValidationError):
        run_power_ep(prior, region, alphas=[1.0, 0.0])


def test_redundancy_underestimates_and_correction():
    prior = GaussianDist.standard(2)
    prev = math.inf
    for k in (1, 2, 5, 10):
        region = redundancy_region(k)
        st = run_epmgp(prior, region, SEQ)
        assert st.log_z < prev
        prev = st.log_z
        fixed = run_power_ep(prior, region, SEQ, alphas=float(k))
        assert abs(fixed.log_z - TRUE_BOX_LOG_Z) < 1e-8
    assert run_epmgp(prior, redundancy_region(2), SEQ).log_z < TRUE_BOX_LOG_Z


def test_duplication_equals_fractional_power():
    rng = np.random.default_rng(12)
    for _ in range(10):
        prior, region = random_problem(3, 4, rng)
        reps = rng.integers(1, 4, region.m)
        idx = np.repeat(np.arange(region.m), reps)
        dup = PolyhedralRegion.from_arrays(region.directions[idx], region.lower[idx], region.upper[idx])
        a = run_epmgp(prior, dup, SEQ)
        b = run_power_ep(prior, region, SEQ, alphas=1.0 / reps)
        assert a.converged and b.converged
        assert abs(a.log_z - b.log_z) < 1e-9


def test_extramass_overestimates():
    prior = GaussianDist.standard(2)
    prev = -math.inf
    for w in (1.5, 2.0, 3.0):
        st = run_epmgp(prior, extramass_region(w), SEQ)
        assert st.log_z >= TRUE_BOX_LOG_Z
        assert st.log_z > prev
        prev = st.log_z


def test_non_convergence_is_flagged():
    rng = np.random.default_rng(13)
    prior, region = random_problem(4, 8, rng)
    st = run_epmgp(prior, region, EPConfig(max_sweeps=1))
    assert not st.converged and st.sweeps == 1
    assert math.isfinite(st.log_z)
