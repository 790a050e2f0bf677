"""Numerical laboratory for two-term trace asymptotics of truncated Fermi projections."""
from .model import Domain, ModelConfig, ModelError, Potential, make_domain, make_potential, scale_domain
from .testfn import TestFunction, check_membership, from_name, identity, poly_basis, renyi
from .widom import AsymptoticPrediction, n0, predict_trace, sigma0, widom_functional

__version__ = "0.1.0"

__all__ = [
    "AsymptoticPrediction", "Domain", "ModelConfig", "ModelError", "Potential", "TestFunction",
    "check_membership", "from_name", "identity", "make_domain", "make_potential", "n0", "poly_basis",
    "predict_trace", "renyi", "scale_domain", "sigma0", "widom_functional", "__version__",
]
