"""Poisson importance sampling and the sampler families used for k-means.

A sampler is a public function ``q: X -> [0, 1]``. Drawing keeps point ``i``
independently with probability ``q(x_i)`` and attaches the weight
``1 / q(x_i)``, which makes weighted sums unbiased estimates of full-data sums.

Randomness is counter-based: the uniform variate deciding point ``i`` is word
``i`` of a Philox stream keyed by the draw seed, so a decision depends only on
``(seed, i)`` and any slice of the data can be drawn independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .privacy import WeightedProfile
from .weights import SolverConfig, WeightSolution, solve_dataset

__all__ = [
    "FAMILIES",
    "DataStats",
    "WeightedDataset",
    "SamplerSpec",
    "SampleDraw",
    "data_stats",
    "point_uniforms",
    "draw",
    "make_full",
    "make_uniform",
    "make_coreset",
    "make_optimal",
    "estimate_objective",
]

FAMILIES = ("full", "uniform", "coreset", "optimal")

# |sum x_i|_1 / n below this fraction of the mean l1 norm counts as centered
CENTERING_RTOL = 1e-9


@dataclass(frozen=True)
class DataStats:
    """Summary statistics a sampler is bound to.

    ``mean_norm`` is the average l1 norm, ``radius`` the largest one, and
    ``centroid_norm`` the l1 norm of the data mean (zero for centered data).
    """

    n: int
    d: int
    radius: float
    mean_norm: float
    centroid_norm: float = 0.0

    @property
    def is_centered(self) -> bool:
        return self.centroid_norm <= CENTERING_RTOL * self.mean_norm


def data_stats(data) -> DataStats:
    X = np.atleast_2d(np.asarray(data, dtype=float))
    norms = np.abs(X).sum(axis=1)
    return DataStats(
        n=X.shape[0],
        d=X.shape[1],
        radius=float(norms.max()) if len(norms) else 0.0,
        mean_norm=float(norms.mean()) if len(norms) else 0.0,
        centroid_norm=float(np.abs(X.mean(axis=0)).sum()) if len(norms) else 0.0,
    )


@dataclass(frozen=True)
class WeightedDataset:
    """Weighted points ``(w_i, x_i)`` with ``w_i >= 1``."""

    weights: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        X = np.asarray(self.points, dtype=float)
        if X.ndim != 2:
            raise ValueError("points must be a 2-d array")
        if len(w) != len(X):
            raise ValueError(f"{len(w)} weights for {len(X)} points")
        if np.any(w < 1.0):
            raise ValueError("weights must be >= 1 (reciprocals of probabilities)")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", X)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)

    def __iter__(self) -> Iterator[tuple[float, np.ndarray]]:
        return zip(self.weights.tolist(), self.points)


@dataclass(frozen=True)
class SamplerSpec:
    """An inclusion-probability function plus bookkeeping.

    ``prob`` maps an ``(n, d)`` array to ``n`` probabilities. Calling the
    spec on a single point returns its probability as a float.
    """

    family: str
    prob: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    expected_size: float
    m: float
    lam: float = 0.5
    stats: DataStats | None = None
    solution: WeightSolution | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown sampler family {self.family!r}")

    def probabilities(self, data) -> np.ndarray:
        X = np.atleast_2d(np.asarray(data, dtype=float))
        return np.asarray(self.prob(X), dtype=float).reshape(-1)

    def __call__(self, x) -> float:
        return float(self.probabilities(np.asarray(x, dtype=float).reshape(1, -1))[0])


@dataclass(frozen=True)
class SampleDraw:
    items: WeightedDataset
    seed: int
    indices: np.ndarray  # rows of the source data that were kept

    @property
    def realized_size(self) -> int:
        return len(self.items)


def point_uniforms(seed: int, n: int, start: int = 0) -> np.ndarray:
    """Uniform variates for points ``start .. start + n - 1`` of draw ``seed``."""
    bitgen = np.random.Philox(key=int(seed) % 2**128)
    bitgen.advance(start // 4)  # one Philox counter step yields four 64-bit words
    u = np.random.Generator(bitgen).random(n + start % 4)
    return u[start % 4 :]


def draw(spec: SamplerSpec, data, seed: int) -> SampleDraw:
    """One Poisson importance sample of ``data``."""
    X = np.atleast_2d(np.asarray(data, dtype=float))
    q = spec.probabilities(X)
    if np.any(q > 1.0) or np.any(q < 0.0) or np.any(np.isnan(q)):
        bad = int(np.flatnonzero(~((q >= 0.0) & (q <= 1.0)))[0])
        raise ValueError(f"sampler {spec.family!r} produced q = {q[bad]} at row {bad}")
    keep = point_uniforms(seed, len(X)) < q  # q = 0 rows are never kept
    idx = np.flatnonzero(keep)
    items = WeightedDataset(1.0 / q[idx], X[idx])
    return SampleDraw(items=items, seed=int(seed), indices=idx)


def make_full(n: int) -> SamplerSpec:
    return SamplerSpec("full", lambda X: np.ones(len(X)), expected_size=float(n), m=float(n), lam=1.0)


def make_uniform(n: int, m: int) -> SamplerSpec:
    """Constant inclusion probability ``m / n``."""
    if not 1 <= m <= n:
        raise ValueError(f"uniform sampler needs 1 <= m <= n, got m={m}, n={n}")
    p = m / n
    return SamplerSpec("uniform", lambda X: np.full(len(X), p), expected_size=float(m), m=float(m), lam=1.0)


def make_coreset(stats: DataStats, m: int, lam: float = 0.5) -> SamplerSpec:
    """Mixture of uniform and l1-norm-proportional sampling.

    ``q(x) = lam m/n + (1 - lam) m |x|_1 / (n mean_norm)``; requires centered
    data and ``m <= n mean_norm / radius`` so that ``q <= 1`` on the domain.
    With ``lam = 1`` this is the uniform sampler.
    """
    n = stats.n
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam}")
    if not 1 <= m <= n:
        raise ValueError(f"coreset sampler needs 1 <= m <= n, got m={m}, n={n}")
    if lam < 1.0:
        if stats.mean_norm <= 0.0:
            raise ValueError("coreset sampler needs a positive mean l1 norm")
        if not stats.is_centered:
            raise ValueError(
                f"data must be centered: |mean|_1 = {stats.centroid_norm:g} vs "
                f"tolerance {CENTERING_RTOL * stats.mean_norm:g}"
            )
        limit = n * stats.mean_norm / stats.radius
        if m > limit:
            raise ValueError(f"m = {m} exceeds n * mean_norm / radius = {limit:g}; q could exceed 1")
    base = lam * m / n
    slope = (1.0 - lam) * m / (n * stats.mean_norm) if lam < 1.0 else 0.0

    def prob(X):
        q = base + slope * np.abs(X).sum(axis=1)
        # the max-norm point sits at q = 1 when m hits its limit; forgive rounding
        return np.where((q > 1.0) & (q <= 1.0 + 1e-12), 1.0, q)

    return SamplerSpec("coreset", prob, expected_size=float(m), m=float(m), lam=float(lam), stats=stats)


def make_optimal(profile: WeightedProfile, data, eps_star: float, cfg: SolverConfig | None = None) -> SamplerSpec:
    """Privacy-optimal sampler ``q(x) = 1 / w*(x)`` for target ``eps_star``.

    Weights for ``data`` are solved eagerly. The weight function does not
    depend on the dataset, so rows not seen at construction are solved on
    demand.
    """
    cfg = cfg if cfg is not None else SolverConfig(eps_star)
    if cfg.target_epsilon != eps_star:
        cfg = SolverConfig(eps_star, cfg.accuracy, cfg.max_evals_per_point)
    X = np.atleast_2d(np.asarray(data, dtype=float))
    solution = solve_dataset(profile, X, cfg)
    cache = {row.tobytes(): 1.0 / w for row, w in zip(X, solution.weights)}

    def prob(Y):
        out = np.empty(len(Y))
        missing = []
        for i, row in enumerate(Y):
            q = cache.get(row.tobytes())
            if q is None:
                missing.append(i)
            else:
                out[i] = q
        if missing:
            extra = solve_dataset(profile, Y[missing], cfg)
            for i, row, w in zip(missing, Y[missing], extra.weights):
                out[i] = cache[row.tobytes()] = 1.0 / w
        return out

    spec = SamplerSpec(
        "optimal",
        prob,
        expected_size=solution.expected_size,
        m=solution.expected_size,
        lam=float("nan"),
        stats=data_stats(X) if len(X) else None,
        solution=solution,
    )
    return spec


def estimate_objective(sample: SampleDraw | WeightedDataset, loss: Callable, vectorized: bool = False) -> float:
    """Inverse-probability weighted total ``sum_S w loss(x)``.

    With ``vectorized=True`` the loss is called once on the ``(m, d)`` array of
    sampled points and must return ``m`` values.
    """
    items = sample.items if isinstance(sample, SampleDraw) else sample
    if len(items) == 0:
        return 0.0
    if vectorized:
        return float(np.dot(items.weights, np.asarray(loss(items.points), dtype=float)))
    return float(sum(w * loss(x) for w, x in items))
