import math

import numpy as np
import pytest

from epmgp.errors import NotPositiveDefinite, ValidationError
from epmgp.gaussian import (
    BoxConstraint,
    GaussianDist,
    PolyhedralRegion,
    cholesky,
    region_metrics,
    singular_values,
    whiten,
)
from epmgp.oracles import mc_rejection
from helpers import random_spd


def test_cholesky_examples():
    assert np.array_equal(cholesky(np.eye(2)).lower, np.eye(2))
    assert np.allclose(cholesky(np.array([[4.0, 0.0], [0.0, 9.0]])).lower, [[2, 0], [0, 3]], atol=0)
    L = cholesky(np.array([[2.0, 1.0], [1.0, 2.0]])).lower
    assert abs(L[0, 0] - math.sqrt(2)) < 1e-15
    assert abs(L[1, 0] - 1 / math.sqrt(2)) < 1e-15
    assert abs(L[1, 1] - math.sqrt(1.5)) < 1e-15
    assert L[0, 1] == 0.0


@pytest.mark.parametrize("n", [2, 5, 10, 30])
def test_cholesky_round_trip_ill_conditioned(n):
    rng = np.random.default_rng(n)
    for _ in range(20):
        K = random_spd(n, rng, log_cond=8.0)
        f = cholesky(K)
        err = np.linalg.norm(f.lower @ f.lower.T - K) / np.linalg.norm(K)
        assert err < 1e-10
        assert np.all(np.diag(f.lower) > 0)


def test_cholesky_solves_and_logdet():
    rng = np.random.default_rng(3)
    K = random_spd(6, rng)
    f = cholesky(K)
    b = rng.standard_normal(6)
    assert np.allclose(f.solve(b), np.linalg.solve(K, b), rtol=1e-10, atol=1e-12)
    assert abs(f.logdet() - np.linalg.slogdet(K)[1]) < 1e-10


def test_cholesky_jitter_and_failure():
    # singular but PSD: rescued by the one jitter retry
    v = np.array([1.0, 2.0, 3.0])
    f = cholesky(np.outer(v, v))
    assert f.jitter > 0
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_gaussian_validation():
    with pytest.raises(ValidationError) as e:
        GaussianDist([0, 0], [[1.0, 0.5], [0.0, 1.0]])
    assert e.value.field == "cov"
    with pytest.raises(ValidationError) as e:
        GaussianDist([0, 0], [[1.0, 0.0], [0.0, -1.0]])
    assert e.value.field == "cov"
    with pytest.raises(ValidationError) as e:
        GaussianDist([0, math.nan], np.eye(2))
    assert e.value.field == "mean"
    # asymmetry at rounding level is symmetrized away
    g = GaussianDist([0, 0], [[1.0, 0.5 + 1e-14], [0.5, 1.0]])
    assert np.array_equal(g.cov, g.cov.T)


def test_gaussian_immutable():
    g = GaussianDist.standard(2)
    with pytest.raises(AttributeError):
        g.mean = np.zeros(2)
    with pytest.raises(ValueError):
        g.cov[0, 0] = 5.0


def test_box_constraint_normalizes():
    c = BoxConstraint.create([3.0, 4.0], -5.0, 10.0)
    assert abs(np.linalg.norm(c.direction) - 1) < 1e-15
    assert (c.lower, c.upper) == (-1.0, 2.0)
    c = BoxConstraint.create([-2.0, 0.0], 0.0, math.inf)
    assert c.upper == math.inf and c.lower == 0.0
    with pytest.raises(ValidationError):
        BoxConstraint.create([1.0, 0.0], 1.0, 1.0)
    with pytest.raises(ValidationError):
        BoxConstraint.create([1.0, 0.0], -math.inf, math.inf)
    with pytest.raises(ValidationError):
        BoxConstraint.create([0.0, 0.0], 0.0, 1.0)


def test_region_shapes():
    r = PolyhedralRegion.box([-1, -2], [1, 2])
    assert (r.m, r.n) == (2, 2)
    assert r.is_axis_aligned() and r.is_rectangular()
    r2 = PolyhedralRegion.from_arrays(np.tile(np.eye(2), (3, 1)), -1.0, 1.0)
    assert r2.m == 6 and not r2.is_rectangular()
    with pytest.raises(ValidationError):
        PolyhedralRegion([])
    assert np.array_equal(r.contains(np.array([[0.0, 0.0], [2.0, 0.0]])), [True, False])


def test_whiten_white_problem_is_identity():
    rng = np.random.default_rng(0)
    C = rng.standard_normal((4, 3))
    r = PolyhedralRegion.from_arrays(C, -np.ones(4), np.ones(4))
    d, w = whiten(GaussianDist.standard(3), r)
    assert np.allclose(w.directions, r.directions, atol=1e-12, rtol=0)
    assert np.allclose(w.lower, r.lower, atol=1e-12, rtol=0)
    assert np.allclose(w.upper, r.upper, atol=1e-12, rtol=0)
    assert np.array_equal(d.cov, np.eye(3))


def test_whiten_scaling_example():
    d, w = whiten(GaussianDist([0, 0], np.diag([4.0, 1.0])), PolyhedralRegion.box([0.0, -math.inf], [math.inf, 1.0]))
    assert np.allclose(w.directions, np.eye(2))
    assert w.lower[0] == 0.0 and w.upper[0] == math.inf


def test_whiten_preserves_probability():
    rng = np.random.default_rng(11)
    prior = GaussianDist(rng.normal(0, 1, 3), random_spd(3, rng))
    C = rng.standard_normal((4, 3))
    cm = C @ prior.mean
    sd = np.sqrt(np.einsum("ij,jk,ik->i", C, prior.cov, C))
    region = PolyhedralRegion.from_arrays(C, cm - 1.2 * sd, cm + 0.8 * sd)
    white, wregion = whiten(prior, region)
    a = mc_rejection(prior, region, 400_000, seed=1)
    b = mc_rejection(white, wregion, 400_000, seed=2)
    assert abs(a.value - b.value) < 3 * math.hypot(a.stderr, b.stderr)


def test_singular_values_match_lapack():
    rng = np.random.default_rng(5)
    for shape in [(3, 3), (5, 2), (2, 7), (10, 10)]:
        a = rng.standard_normal(shape)
        assert np.allclose(singular_values(a), np.linalg.svd(a, compute_uv=False), rtol=1e-12)


def test_metrics_examples():
    m = region_metrics(GaussianDist.standard(2), PolyhedralRegion.box([-1, -1], [1, 1]))
    assert abs(m.cond_k - 1) < 1e-14 and abs(m.cond_cprime - 1) < 1e-14
    dup = PolyhedralRegion.from_arrays(np.array([[1.0, 0.0], [1.0, 0.0]]), [-1, -2], [1, 2])
    assert region_metrics(GaussianDist.standard(2), dup).cond_cprime == math.inf


@pytest.mark.parametrize("n", [2, 5, 10])
def test_rectangular_cond_cprime_is_sqrt_cond_k(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(100):
        K = random_spd(n, rng, log_cond=4.0)
        d = GaussianDist(np.zeros(n), K)
        m = region_metrics(d, PolyhedralRegion.box(-np.ones(n), np.ones(n)))
        assert abs(m.cond_cprime**2 / m.cond_k - 1) < 1e-8
        ev = np.linalg.eigvalsh(K)
        assert abs(m.cond_k / (ev[-1] / ev[0]) - 1) < 1e-8


def test_gram_norms():
    rng = np.random.default_rng(2)
    K = random_spd(3, rng)
    C = rng.standard_normal((5, 3))
    d = GaussianDist(np.zeros(3), K)
    r = PolyhedralRegion.from_arrays(C, -np.ones(5), np.ones(5))
    m = region_metrics(d, r)
    Cp = d.chol.lower.T @ r.directions.T
    G = Cp.T @ Cp / 3
    assert abs(m.gram_fro - np.linalg.norm(G, "fro")) < 1e-12
    assert abs(m.gram_l1 - np.abs(G).sum()) < 1e-12
