"""Dependency networks: learning, pseudo-Gibbs sampling and exact analysis."""

__version__ = "0.1.0"

from .estimator import DependencyNetworkEstimator  # noqa: E402

__all__ = ["DependencyNetworkEstimator", "__version__"]
