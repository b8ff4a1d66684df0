"""Gaussian probabilities of hyperrectangles and polyhedra by expectation propagation."""

__version__ = "0.1.0"

from .errors import (
    EPMGPError,
    NegativeCavityVariance,
    NonFinite,
    NotConverged,
    NotPositiveDefinite,
    NotReducible,
    TailUnderflow,
    Unsupported,
    ValidationError,
)
from .gaussian import (
    BoxConstraint,
    CholeskyFactor,
    GaussianDist,
    PolyhedralRegion,
    RegionMetrics,
    cholesky,
    region_metrics,
    whiten,
)
from .special import erf, erfc, erfcx, log_normal_cdf, normal_cdf
from .truncated import TruncatedMoments, truncated_moments
from .ep import (
    EPConfig,
    EPState,
    SiteFactor,
    cavity,
    log_partition,
    log_partition_classic,
    run_epmgp,
    run_power_ep,
    site_update,
    update_posterior,
)
from .oracles import OracleEstimate, genz_qmc, genz_qmc_linear, mc_rejection, orthant_analytic, univariate_exact

__all__ = [
    "__version__",
    "EPMGPError",
    "ValidationError",
    "NotPositiveDefinite",
    "TailUnderflow",
    "NegativeCavityVariance",
    "NonFinite",
    "NotConverged",
    "NotReducible",
    "Unsupported",
    "BoxConstraint",
    "CholeskyFactor",
    "GaussianDist",
    "PolyhedralRegion",
    "RegionMetrics",
    "cholesky",
    "region_metrics",
    "whiten",
    "erf",
    "erfc",
    "erfcx",
    "normal_cdf",
    "log_normal_cdf",
    "TruncatedMoments",
    "truncated_moments",
    "EPConfig",
    "EPState",
    "SiteFactor",
    "cavity",
    "site_update",
    "update_posterior",
    "log_partition",
    "log_partition_classic",
    "run_epmgp",
    "run_power_ep",
    "OracleEstimate",
    "mc_rejection",
    "genz_qmc",
    "genz_qmc_linear",
    "orthant_analytic",
    "univariate_exact",
]
