"""scikit-learn style wrappers around the sampler and DP-Lloyd code."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .kmeans import (
    DEFAULT_RHO,
    LloydConfig,
    assign_clusters,
    full_data_epsilon,
    init_centers,
    kmeans_cost,
    lloyd_profile,
    weighted_dp_lloyd,
)
from .sampling import WeightedDataset, data_stats, draw, make_coreset, make_full, make_optimal, make_uniform

__all__ = ["WeightedDPKMeans", "PoissonImportanceSampler"]


class WeightedDPKMeans(ClusterMixin, BaseEstimator):
    """Differentially private Lloyd k-means on weighted data.

    Noise scales come either from ``budget`` (split between counts and sums
    by the default allocation) or directly from ``beta_sum``/``beta_count``.

    Parameters
    ----------
    n_clusters : int
    n_iter : int
        Number of Lloyd iterations ``T``.
    budget : float, optional
        Allocation constant ``B``; ignored when both betas are given.
    beta_sum, beta_count : float, optional
        Laplace scales of the coordinate sums and the counts.
    radius : float, optional
        Public l1 radius of the domain. Defaults to the largest l1 norm seen in
        ``fit``, which is not itself private.
    random_state : int
    add_noise : bool
        ``False`` runs plain weighted Lloyd (no privacy).

    Attributes
    ----------
    cluster_centers_ : ndarray of shape (n_clusters, n_features)
    labels_ : ndarray of shape (n_samples,)
    epsilon_ : float
        Guarantee for one unit-weight point on the data passed to ``fit``.
    config_ : LloydConfig
    """

    def __init__(self, n_clusters=8, n_iter=10, budget=1.0, beta_sum=None, beta_count=None, radius=None,
                 random_state=0, add_noise=True):
        self.n_clusters = n_clusters
        self.n_iter = n_iter
        self.budget = budget
        self.beta_sum = beta_sum
        self.beta_count = beta_count
        self.radius = radius
        self.random_state = random_state
        self.add_noise = add_noise

    def _config(self, X):
        r = self.radius if self.radius is not None else float(np.abs(X).sum(axis=1).max())
        if r <= 0:
            raise ValueError("all points are zero; pass a positive radius")
        if self.beta_sum is not None and self.beta_count is not None:
            return LloydConfig(self.n_clusters, self.n_iter, self.beta_sum, self.beta_count, r, DEFAULT_RHO)
        return LloydConfig.from_budget(self.budget, self.n_iter, r, X.shape[1], self.n_clusters)

    def fit(self, X, y=None, sample_weight=None):
        X = check_array(X, dtype=float)
        w = np.ones(len(X)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        self.config_ = self._config(X)
        seed = 0 if self.random_state is None else int(self.random_state)
        init = init_centers(X, self.n_clusters, seed)
        self.cluster_centers_ = weighted_dp_lloyd(WeightedDataset(w, X), init, self.config_, seed=seed,
                                                  add_noise=self.add_noise)
        self.labels_ = assign_clusters(X, self.cluster_centers_)
        self.epsilon_ = full_data_epsilon(self.config_) if self.add_noise else float("inf")
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=float)
        return assign_clusters(X, self.cluster_centers_)

    def score(self, X, y=None):
        """Negative k-means cost, so that larger is better."""
        check_is_fitted(self, "cluster_centers_")
        return -kmeans_cost(check_array(X, dtype=float), self.cluster_centers_)


class PoissonImportanceSampler(BaseEstimator):
    """Fit a Poisson importance sampler and draw weighted subsamples.

    Parameters
    ----------
    family : {"full", "uniform", "coreset", "optimal"}
    n_samples : int
        Target expected sample size ``m`` (unused by ``full`` and ``optimal``).
    lam : float
        Uniform share of the coreset mixture.
    n_clusters, n_iter, budget : int, int, float
        DP-Lloyd settings that define the privacy profile for ``optimal``;
        the target is the unsampled guarantee.
    random_state : int

    Attributes
    ----------
    sampler_ : SamplerSpec
    probabilities_ : ndarray of shape (n_samples_fit,)
    expected_size_ : float
    """

    def __init__(self, family="uniform", n_samples=100, lam=0.5, n_clusters=8, n_iter=10, budget=1.0,
                 random_state=0):
        self.family = family
        self.n_samples = n_samples
        self.lam = lam
        self.n_clusters = n_clusters
        self.n_iter = n_iter
        self.budget = budget
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        stats = data_stats(X)
        if self.family == "full":
            spec = make_full(stats.n)
        elif self.family == "uniform":
            spec = make_uniform(stats.n, self.n_samples)
        elif self.family == "coreset":
            spec = make_coreset(stats, self.n_samples, self.lam)
        elif self.family == "optimal":
            cfg = LloydConfig.from_budget(self.budget, self.n_iter, stats.radius, stats.d, self.n_clusters)
            spec = make_optimal(lloyd_profile(cfg), X, full_data_epsilon(cfg))
        else:
            raise ValueError(f"unknown family {self.family!r}")
        self.sampler_ = spec
        self.probabilities_ = spec.probabilities(X)
        self.expected_size_ = float(self.probabilities_.sum())
        self.n_features_in_ = X.shape[1]
        return self

    def sample(self, X, seed=None):
        """Return ``(X_sub, weights, indices)`` for one Poisson draw."""
        check_is_fitted(self, "sampler_")
        X = check_array(X, dtype=float)
        seed = self.random_state if seed is None else seed
        out = draw(self.sampler_, X, 0 if seed is None else int(seed))
        return out.items.points, out.items.weights, out.indices

    def fit_resample(self, X, y=None):
        X_sub, weights, _ = self.fit(X).sample(X)
        return X_sub, weights
