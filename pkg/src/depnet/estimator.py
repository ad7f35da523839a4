"""scikit-learn style front end."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import exact, geometry, sampler
from .errors import DomainError
from .learning import LearnConfig, learn_network
from .state_space import Dataset, VariableSpace, empirical_distribution


class DependencyNetworkEstimator(DensityMixin, BaseEstimator):
    """Learn a dependency network from integer-coded categorical data.

    Parameters
    ----------
    penalty : {"mdl", "none"} or callable, default="mdl"
        Complexity penalty ``R(k, N)`` added to each node's cost.
    sampling_smoothing : float or None, default=None
        Additive count for the sampler-facing tables; ``None`` uses ``1/N``.
    merge_candidate_cap : int or None, default=None
        Maximum merge candidates per iteration; 0 learns split-only trees.
    cardinalities : sequence of int or None, default=None
        Number of values per column; inferred from the data when omitted.
    n_jobs : int or None, default=None
        Nodes learned in parallel (joblib semantics).

    Attributes
    ----------
    network_ : DependencyNetwork
    space_ : VariableSpace
    n_features_in_ : int
    """

    def __init__(
        self,
        penalty="mdl",
        sampling_smoothing=None,
        merge_candidate_cap=None,
        cardinalities=None,
        n_jobs=None,
    ):
        self.penalty = penalty
        self.sampling_smoothing = sampling_smoothing
        self.merge_candidate_cap = merge_candidate_cap
        self.cardinalities = cardinalities
        self.n_jobs = n_jobs

    def _validate(self, X, reset: bool) -> np.ndarray:
        X = check_array(X, dtype=None, ensure_min_features=1 if not reset else 2)
        if not np.issubdtype(X.dtype, np.integer):
            if not np.all(np.equal(np.mod(X, 1), 0)):
                raise ValueError("DependencyNetworkEstimator expects integer-coded data")
            X = X.astype(np.int64)
        if not reset and X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but the estimator was fitted with "
                f"{self.n_features_in_}"
            )
        return X

    def fit(self, X, y=None):
        names = tuple(str(c) for c in getattr(X, "columns", ()))
        X = self._validate(X, reset=True)
        if self.cardinalities is not None:
            cards = tuple(int(c) for c in self.cardinalities)
        else:
            cards = tuple(max(int(v) + 1, 2) for v in X.max(axis=0))
        self.space_ = VariableSpace(cards, names)
        self.n_features_in_ = X.shape[1]
        data = Dataset(self.space_, X)
        config = LearnConfig(self.penalty, self.sampling_smoothing, self.merge_candidate_cap)
        self.network_ = learn_network(data, config, n_jobs=self.n_jobs)
        return self

    def _dataset(self, X) -> Dataset:
        check_is_fitted(self, "network_")
        return Dataset(self.space_, self._validate(X, reset=False))

    def predict_proba(self, X, target: int) -> np.ndarray:
        """``theta_target(x_target | y(x))`` for every value, one row per sample."""
        data = self._dataset(X)
        node = self.network_.nodes[target]
        return node.table.rows[node.source.leaf_map(data.samples)]

    def predict(self, X, target: int) -> np.ndarray:
        """Most probable value of column ``target`` given the other columns."""
        return np.argmax(self.predict_proba(X, target), axis=1)

    def score_samples(self, X) -> np.ndarray:
        """Per-sample pseudo-log-likelihood ``sum_i c_i log theta_i(x_i | y_i)``."""
        data = self._dataset(X)
        out = np.zeros(data.N)
        for i, node in enumerate(self.network_.nodes):
            theta = node.table.rows[node.source.leaf_map(data.samples), data.samples[:, i]]
            with np.errstate(divide="ignore"):
                out += self.network_.weights[i] * np.log(theta)
        return out

    def score(self, X, y=None) -> float:
        return float(np.mean(self.score_samples(X)))

    def sample(self, n_samples=1, random_state=0, clamp=None, scan="random", burn_in=0, thin=1):
        """Draw pseudo-Gibbs samples, optionally with ``{column: value}`` clamped."""
        check_is_fitted(self, "network_")
        if thin < 1 or burn_in < 0:
            raise DomainError("burn_in must be >= 0 and thin >= 1")
        if scan not in ("random", "sequential"):
            raise DomainError(f"scan must be 'random' or 'sequential', got {scan!r}")
        policy = sampler.RandomScan() if scan == "random" else sampler.SequentialScan()
        run = sampler.conditional_pseudo_gibbs(
            self.network_, clamp or {}, policy, burn_in + n_samples * thin, int(random_state)
        )
        return np.array(run.states[burn_in::thin])

    def stationary_distribution(self, method="auto"):
        check_is_fitted(self, "network_")
        return exact.stationary_random_scan(self.network_, method=method)

    def fc_report(self, X) -> exact.FCLimitReport:
        """FC divergence of the data's empirical distribution against the model."""
        return exact.verify_fc_limit(empirical_distribution(self._dataset(X)), self.network_)

    def fc_limit(self, X) -> float:
        return geometry.fc_limit(empirical_distribution(self._dataset(X)), self.network_)
