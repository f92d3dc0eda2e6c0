"""Weighted DP-Lloyd k-means and its privacy accounting.

Each iteration assigns points to their nearest center (squared Euclidean
distance, lowest index on ties) and then releases, per cluster, a weighted
count perturbed by ``Laplace(beta_count)`` noise and a weighted coordinate sum
perturbed by entrywise ``Laplace(beta_sum)`` noise. The new center is their
ratio.

Adding a point ``x`` with weight ``w`` changes one count by ``w`` and one sum
by ``w x``, so over ``T`` iterations the mechanism has weighted profile
``(1/beta_count + |x|_1/beta_sum) T w``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .privacy import WeightedProfile, amplify
from .sampling import WeightedDataset

__all__ = [
    "DEFAULT_RHO",
    "LloydConfig",
    "allocate_noise",
    "laplace_from_uniform",
    "assign_clusters",
    "init_centers",
    "weighted_dp_lloyd",
    "lloyd_profile",
    "lloyd_strong_convexity",
    "full_data_epsilon",
    "core_sampler_epsilon",
    "kmeans_cost",
]

DEFAULT_RHO = 0.225

# noisy denominators at or below this leave the center where it was
_MIN_DENOMINATOR = 1e-12


@dataclass(frozen=True)
class LloydConfig:
    k: int
    T: int
    beta_sum: float
    beta_count: float
    r: float
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        for name in ("k", "T", "beta_sum", "beta_count", "r", "rho"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value}")

    @classmethod
    def from_budget(cls, B: float, T: int, r: float, d: int, k: int, rho: float = DEFAULT_RHO) -> "LloydConfig":
        beta_sum, beta_count = allocate_noise(B, T, r, d, rho)
        return cls(k=k, T=T, beta_sum=beta_sum, beta_count=beta_count, r=r, rho=rho)

    def per_point_rate(self, l1_norm):
        """``(1/beta_count + |x|_1/beta_sum) T``, the loss per unit weight."""
        return (1.0 / self.beta_count + l1_norm / self.beta_sum) * self.T


def allocate_noise(B: float, T: int, r: float, d: int, rho: float = DEFAULT_RHO) -> tuple[float, float]:
    """Laplace scales ``(beta_sum, beta_count)`` for budget constant ``B``.

    ``beta_sum = sqrt(T r / B) (d / (2 rho))^(1/3)`` and
    ``beta_count = (4 d rho^2)^(1/3) beta_sum``.
    """
    for name, value in (("B", B), ("T", T), ("r", r), ("d", d), ("rho", rho)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    beta_sum = math.sqrt(T * r / B) * (d / (2.0 * rho)) ** (1.0 / 3.0)
    beta_count = (4.0 * d * rho * rho) ** (1.0 / 3.0) * beta_sum
    return beta_sum, beta_count


def laplace_from_uniform(u, scale: float):
    """Inverse-CDF Laplace transform of uniforms ``u`` in ``[0, 1)``.

    ``x = -scale * sign(u - 1/2) * log(1 - 2 |u - 1/2|)``; ``u = 0`` is
    nudged to ``2**-54`` so the result stays finite.
    """
    u = np.where(np.asarray(u, dtype=float) == 0.0, 2.0**-54, u)
    c = u - 0.5
    return -scale * np.sign(c) * np.log1p(-2.0 * np.abs(c))


def _sq_distances(X, C, chunk=4096):
    for start in range(0, len(X), chunk):
        block = X[start : start + chunk]
        yield ((block[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def assign_clusters(X, centers) -> np.ndarray:
    """Index of the nearest center for every row (ties go to the lowest index)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if len(X) == 0:
        return np.empty(0, dtype=int)
    return np.concatenate([np.argmin(d2, axis=1) for d2 in _sq_distances(X, C)])


def init_centers(points, k: int, seed: int) -> np.ndarray:
    """``k`` distinct rows of ``points`` chosen uniformly at random."""
    points = np.asarray(points, dtype=float)
    if len(points) < k:
        raise ValueError(f"cannot initialize {k} centers from {len(points)} points")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0,)))
    idx = rng.choice(len(points), size=k, replace=False)
    return points[np.sort(idx)].copy()


def _noise(seed, t, j, d, cfg):
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1, t, j)))
    u = rng.random(d + 1)
    return (
        float(laplace_from_uniform(u[0], cfg.beta_count)),
        laplace_from_uniform(u[1:], cfg.beta_sum),
    )


def weighted_dp_lloyd(
    data: WeightedDataset,
    init,
    cfg: LloydConfig,
    seed: int = 0,
    add_noise: bool = True,
) -> np.ndarray:
    """Run ``cfg.T`` iterations of weighted DP-Lloyd from ``init``.

    Noise for cluster ``j`` in iteration ``t`` comes from its own substream
    keyed by ``(seed, t, j)``. ``add_noise=False`` gives plain weighted Lloyd
    and carries no privacy guarantee.

    Returns
    -------
    centers : ndarray of shape (k, d)
    """
    if len(data) == 0:
        raise ValueError("weighted_dp_lloyd needs at least one point")
    centers = np.array(init, dtype=float)
    if centers.ndim != 2 or centers.shape[1] != data.dimension:
        raise ValueError(f"init has shape {centers.shape}, data has dimension {data.dimension}")
    if centers.shape[0] != cfg.k:
        raise ValueError(f"init has {centers.shape[0]} centers, config asks for k={cfg.k}")
    if np.any(np.abs(data.points).sum(axis=1) > cfg.r * (1.0 + 1e-9)):
        raise ValueError(f"points must lie in the l1 ball of radius {cfg.r}")
    X, w = data.points, data.weights
    d = data.dimension
    for t in range(cfg.T):
        labels = assign_clusters(X, centers)
        for j in range(cfg.k):
            mask = labels == j
            count = w[mask].sum()
            total = (w[mask, None] * X[mask]).sum(axis=0)
            if add_noise:
                xi, zeta = _noise(seed, t, j, d, cfg)
                count = xi + count
                total = zeta + total
            if count <= _MIN_DENOMINATOR:
                continue
            centers[j] = total / count
    return centers


def lloyd_profile(cfg: LloydConfig) -> WeightedProfile:
    """Weighted profile ``(1/beta_count + |x|_1/beta_sum) T w`` of DP-Lloyd."""

    def norm(x):
        return float(np.abs(np.asarray(x, dtype=float)).sum())

    return WeightedProfile(
        eval=lambda w, x: cfg.per_point_rate(norm(x)) * w,
        deriv=lambda w, x: cfg.per_point_rate(norm(x)),
        strong_convexity=lambda x: lloyd_strong_convexity(cfg, x),
        name="dp-lloyd",
    )


def lloyd_strong_convexity(cfg: LloydConfig, x) -> float:
    """Minimum over ``w >= 1`` of ``d^2/dw^2 exp(eps(w, x))``.

    With ``c = (1/beta_count + |x|_1/beta_sum) T`` the second derivative is
    ``c^2 exp(c w)``, smallest at ``w = 1``.
    """
    c = cfg.per_point_rate(float(np.abs(np.asarray(x, dtype=float)).sum()))
    return c * c * math.exp(c)


def full_data_epsilon(cfg: LloydConfig) -> float:
    """DP guarantee of DP-Lloyd on the unsampled data: ``(r/beta_sum + 1/beta_count) T``."""
    return (cfg.r / cfg.beta_sum + 1.0 / cfg.beta_count) * cfg.T


def core_sampler_epsilon(cfg: LloydConfig, n: int, m: float, lam: float, mean_norm: float) -> float:
    """Epsilon of DP-Lloyd behind the coreset-style Poisson sampler.

    The amplified loss is convex in ``|x|_1`` after exponentiation, so its
    supremum over the l1 ball sits at ``|x|_1 = r`` or ``|x|_1 = 0``. Both
    candidates are ``log(1 + (exp(u/v) - 1) v)`` with ``u`` the unsampled loss
    and ``v`` the inclusion probability at that norm.

    For ``lam = 0`` the inclusion probability vanishes as ``|x|_1 -> 0`` while
    the weighted loss grows like its reciprocal, so the supremum is infinite
    and ``inf`` is returned.
    """
    r = cfg.r
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam}")
    if lam < 1.0 and m > n * mean_norm / r * (1.0 + 1e-12):
        raise ValueError(f"m = {m} exceeds n * mean_norm / r = {n * mean_norm / r:g}")
    a1 = (1.0 / cfg.beta_count + r / cfg.beta_sum) * cfg.T
    a1_zero = cfg.T / cfg.beta_count
    a2 = m / n * (lam + (1.0 - lam) * r / mean_norm) if lam < 1.0 else m / n
    a2_zero = lam * m / n
    if a2_zero == 0.0:
        return math.inf
    # guard q = 1 + ulp at the boundary point
    a2 = min(a2, 1.0)
    return float(max(amplify(a1 / a2, a2), amplify(a1_zero / a2_zero, a2_zero)))


def kmeans_cost(data, centers) -> float:
    """Sum over points of the squared distance to the nearest center."""
    X = np.atleast_2d(np.asarray(data, dtype=float))
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if X.shape[1] != C.shape[1]:
        raise ValueError(f"data dimension {X.shape[1]} != center dimension {C.shape[1]}")
    return float(sum(d2.min(axis=1).sum() for d2 in _sq_distances(X, C)))
