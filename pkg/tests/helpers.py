import numpy as np

from epmgp.gaussian import GaussianDist, PolyhedralRegion


def random_spd(n, rng, log_cond=2.0):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    lam = 10.0 ** rng.uniform(-log_cond / 2, log_cond / 2, n)
    k = (q * lam) @ q.T
    return 0.5 * (k + k.T)


def random_problem(n, m, rng, width=1.5):
    """Random Gaussian and slabs bracketing a point drawn from it."""
    prior = GaussianDist(rng.normal(0, 1, n), random_spd(n, rng))
    x0 = prior.mean + prior.chol.lower @ rng.standard_normal(n)
    C = rng.standard_normal((m, n))
    C /= np.linalg.norm(C, axis=1, keepdims=True)
    sd = np.sqrt(np.einsum("ij,jk,ik->i", C, prior.cov, C))
    center = C @ x0
    lower = center - width * sd * rng.uniform(0.2, 1.0, m)
    upper = center + width * sd * rng.uniform(0.2, 1.0, m)
    return prior, PolyhedralRegion.from_arrays(C, lower, upper)
