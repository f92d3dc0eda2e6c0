"""Desk-scale oracles for the privacy and estimation claims.

Every audit returns an :class:`AuditReport` and is deterministic given its
arguments. :func:`run_suite` bundles the standard checks together with
negative controls (deliberately violated bounds that must fail).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .kmeans import LloydConfig, lloyd_profile, full_data_epsilon
from .privacy import amplify
from .sampling import SamplerSpec, data_stats, draw, make_coreset, make_full, make_optimal, make_uniform

__all__ = [
    "AuditReport",
    "laplace_log_ratio",
    "audit_density_ratio",
    "randomized_response_laws",
    "audit_amplification_mc",
    "audit_unbiasedness",
    "run_suite",
]


@dataclass(frozen=True)
class AuditReport:
    name: str
    passed: bool
    observed: float
    bound: float
    tolerance: float
    samples: int
    expect_pass: bool = True

    @classmethod
    def judge(cls, name, observed, bound, tolerance, samples, expect_pass=True):
        observed, bound = float(observed), float(bound)
        return cls(name, bool(observed <= bound + tolerance), observed, bound, float(tolerance), int(samples), expect_pass)

    @property
    def ok(self) -> bool:
        """Whether the outcome matches expectation (controls must fail)."""
        return self.passed == self.expect_pass

    def to_dict(self) -> dict:
        return asdict(self)


def laplace_log_ratio(y, loc_a, loc_b, beta: float) -> np.ndarray:
    """``log f_a(y) - log f_b(y)`` for product Laplace densities of scale ``beta``.

    ``y`` has shape ``(g, d)``; the normalizing constants cancel.
    """
    y = np.atleast_2d(y)
    return (np.abs(y - loc_b).sum(axis=1) - np.abs(y - loc_a).sum(axis=1)) / beta


def audit_density_ratio(beta: float, w: float, x, grid: int = 10_000, shift_multiplier: float = 1.0,
                        base=None) -> AuditReport:
    """Noisy weighted sum with and without the point ``(w, x)``.

    The outputs are Laplace centered at ``base`` and ``base + w x``. The
    absolute log density ratio is evaluated along two diagonals of the box
    reaching ``10 beta`` beyond both centers and compared with
    ``w |x|_1 / beta``. ``shift_multiplier`` scales the actual shift without
    touching the bound, which turns the audit into a negative control.
    """
    if grid < 100:
        raise ValueError("grid must have at least 100 points")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    base = np.zeros_like(x) if base is None else np.asarray(base, dtype=float)
    shifted = base + shift_multiplier * w * x
    lower = np.minimum(base, shifted) - 10.0 * beta
    upper = np.maximum(base, shifted) + 10.0 * beta
    t = np.linspace(0.0, 1.0, grid)[:, None]
    forward = lower + t * (upper - lower)
    # second path walks against the shift in coordinates where it is negative,
    # so both corners that maximize the ratio are on the grid
    flip = (shifted - base) < 0
    aligned = np.where(flip, upper - t * (upper - lower), forward)
    ys = np.vstack([forward, aligned])
    ratio = laplace_log_ratio(ys, shifted, base, beta)
    observed = float(np.max(np.abs(ratio)))
    bound = w * float(np.abs(x).sum()) / beta
    return AuditReport.judge(
        f"density_ratio(beta={beta:g}, w={w:g}, |x|={np.abs(x).sum():g}, shift x{shift_multiplier:g})",
        observed, bound, 1e-9, len(ys), expect_pass=shift_multiplier <= 1.0,
    )


def randomized_response_laws(eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Output laws of a two-outcome mechanism with loss exactly ``eps``.

    Returns ``(present, absent)``: the distribution of the reported bit when
    the target point is in the input and when it is not.
    """
    p = 1.0 / (1.0 + math.exp(-eps))
    return np.array([1.0 - p, p]), np.array([p, 1.0 - p])


def audit_amplification_mc(q: float, eps_true: float, trials: int = 2) -> AuditReport:
    """Exact likelihood-ratio audit of subsampled randomized response.

    The point is included with probability ``q``, so the output law on the
    larger dataset is the mixture ``q present + (1 - q) absent``. The largest
    log ratio in either direction over both outcomes is compared with
    ``log(1 + q (e^eps - 1))``. No sampling is involved; ``trials`` only
    records the outcome-grid size.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    present, absent = randomized_response_laws(eps_true)
    mixture = q * present + (1.0 - q) * absent
    observed = float(max(np.max(np.log(mixture / absent)), np.max(np.log(absent / mixture))))
    bound = float(amplify(eps_true, q)) if q > 0 else 0.0
    return AuditReport.judge(f"amplification(q={q:g}, eps={eps_true:g})", observed, bound, 1e-12, max(trials, 2))


def audit_unbiasedness(spec: SamplerSpec, data, loss, trials: int = 100_000, seed: int = 0,
                       vectorized: bool = True) -> AuditReport:
    """Monte-Carlo check that the weighted estimate of ``sum loss`` is unbiased.

    Passes when ``|mean estimate - truth| <= 3 * standard error``.
    """
    if trials < 10_000:
        raise ValueError("use at least 10^4 trials")
    X = np.atleast_2d(np.asarray(data, dtype=float))
    values = np.asarray(loss(X), dtype=float) if vectorized else np.array([loss(x) for x in X])
    truth = float(values.sum())
    seeds = np.random.SeedSequence(seed).generate_state(trials, dtype=np.uint64)
    estimates = np.empty(trials)
    for t, s in enumerate(seeds):
        sample = draw(spec, X, int(s))
        estimates[t] = float(np.dot(sample.items.weights, values[sample.indices]))
    mean = float(estimates.mean())
    se = float(estimates.std(ddof=1) / math.sqrt(trials))
    return AuditReport.judge(
        f"unbiasedness({spec.family}, n={len(X)})",
        abs(mean - truth), 3.0 * se, 1e-9 * max(1.0, abs(truth)), trials,
    )


def _suite_data(n=100, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    X -= X.mean(axis=0)
    return X


def run_suite(seed: int = 0, quick: bool = False) -> list[AuditReport]:
    """Standard audit battery plus negative controls."""
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(5 if quick else 50):
        beta = float(rng.uniform(0.1, 10.0))
        w = float(rng.uniform(1.0, 20.0))
        x = rng.normal(size=int(rng.integers(1, 6)))
        reports.append(audit_density_ratio(beta, w, x))
    reports.append(audit_density_ratio(1.0, 2.0, np.array([0.5]), shift_multiplier=2.0))
    for q in (0.1, 0.5, 0.9, 1.0):
        for eps in (0.5, 1.0, 2.0):
            reports.append(audit_amplification_mc(q, eps))
    # control: claiming the unamplified loss shrinks below the true mixture ratio
    rr = audit_amplification_mc(0.5, 1.0)
    reports.append(AuditReport.judge("amplification control (bound halved)", rr.observed, rr.bound / 2, 1e-12,
                                     rr.samples, expect_pass=False))

    X = _suite_data(seed=seed)
    stats = data_stats(X)
    trials = 10_000 if quick else 100_000
    cfg = LloydConfig.from_budget(1.0, 10, stats.radius, stats.d, k=3)
    opt = make_optimal(lloyd_profile(cfg), X, full_data_epsilon(cfg))
    m_core = min(30, int(stats.n * stats.mean_norm / stats.radius))
    for spec in (make_full(len(X)), make_uniform(len(X), 50), make_coreset(stats, m_core, 0.5), opt):
        reports.append(audit_unbiasedness(spec, X, lambda Y: (Y ** 2).sum(axis=1), trials=trials, seed=seed))
    return reports
