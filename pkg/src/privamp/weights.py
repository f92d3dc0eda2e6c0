"""Privacy-optimal importance weights.

For a weighted profile ``eps(w, x)`` and a target loss ``eps_star`` we want the
largest weight ``w >= 1`` (smallest inclusion probability ``1/w``) such that
the amplified loss stays within budget::

    log(1 + (exp(eps(w, x)) - 1) / w) <= eps_star

The problem separates over points. When ``exp(eps(., x))`` is
``mu_x``-strongly convex, the feasible set is an interval ``[1, w*]`` and
``w*`` is the root of

    g(w) = (exp(eps(w, x)) - 1) / w - (exp(eps_star) - 1)

inside a bracket derived from the strong-convexity lower bound. We bisect it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .privacy import WeightedProfile

__all__ = [
    "SolverConfig",
    "PointSolution",
    "WeightSolution",
    "InfeasiblePointError",
    "EvaluationBudgetError",
    "WeightSolveError",
    "check_feasible",
    "bracket_upper",
    "evaluation_bound",
    "constraint_gap",
    "binding_tolerance",
    "solve_point",
    "solve_dataset",
]

# relative slack when comparing eps(1, x) with eps_star; the two are often the
# same quantity computed through different float paths
_FEASIBILITY_RTOL = 1e-12


class InfeasiblePointError(ValueError):
    """The point's unsampled loss already exceeds the target."""


class EvaluationBudgetError(RuntimeError):
    """Bisection did not converge within ``max_evals_per_point``."""


class WeightSolveError(ValueError):
    """One or more points of a dataset failed to solve.

    ``failures`` holds ``(index, exception)`` pairs in input order.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        head = ", ".join(f"#{i}: {e}" for i, e in self.failures[:5])
        more = "" if len(self.failures) <= 5 else f" (+{len(self.failures) - 5} more)"
        super().__init__(f"{len(self.failures)} point(s) failed: {head}{more}")


@dataclass(frozen=True)
class SolverConfig:
    target_epsilon: float
    accuracy: float = 1e-9
    max_evals_per_point: int = 200

    def __post_init__(self):
        if not self.target_epsilon > 0:
            raise ValueError("target_epsilon must be > 0")
        if not self.accuracy > 0:
            raise ValueError("accuracy must be > 0")
        if self.max_evals_per_point < 1:
            raise ValueError("max_evals_per_point must be positive")


class PointSolution(NamedTuple):
    weight: float
    evals: int  # bisection evaluations of eps(w, x)
    setup_evals: int  # eps(1, x) and eps'(1, x)
    binding: bool


@dataclass
class WeightSolution:
    weights: np.ndarray
    eval_counts: np.ndarray
    setup_counts: np.ndarray
    binding: np.ndarray = field(repr=False)

    @property
    def probabilities(self) -> np.ndarray:
        return 1.0 / self.weights

    @property
    def expected_size(self) -> float:
        return float(np.sum(1.0 / self.weights))

    def __len__(self):
        return len(self.weights)


def check_feasible(profile: WeightedProfile, x, eps_star: float, rtol: float = 0.0) -> bool:
    """Whether weight one already meets the target: ``eps(1, x) <= eps_star``."""
    return float(profile.eval(1.0, x)) <= eps_star * (1.0 + rtol)


def _vbar(e1: float, d1: float, mu: float) -> float:
    return min(math.exp(e1) + 0.5 * mu, d1 * math.exp(e1) + 1.0)


def bracket_upper(profile: WeightedProfile, x, eps_star: float) -> float:
    """Upper end ``b`` of the bisection bracket; ``g(w) > 0`` for all ``w >= b``.

    ``b = 2 (exp(eps_star) - vbar) / mu + 2`` with
    ``vbar = min(exp(eps(1,x)) + mu/2, eps'(1,x) exp(eps(1,x)) + 1)``.
    Values below one are clamped to one, meaning no weight above one is
    feasible.
    """
    mu = _mu(profile, x)
    e1 = float(profile.eval(1.0, x))
    d1 = float(profile.deriv(1.0, x))
    return _bracket(e1, d1, mu, eps_star)


def _bracket(e1, d1, mu, eps_star):
    b = 2.0 * (math.exp(eps_star) - _vbar(e1, d1, mu)) / mu + 2.0
    return max(b, 1.0)


def _mu(profile, x):
    if profile.strong_convexity is None:
        raise ValueError(f"profile {profile.name!r} declares no strong-convexity constant")
    mu = float(profile.strong_convexity(x))
    if not mu > 0:
        raise ValueError(
            f"profile {profile.name!r} has non-positive strong-convexity constant {mu}; "
            "exp(eps) must be strongly convex in w"
        )
    return mu


def evaluation_bound(profile: WeightedProfile, x, eps_star: float, accuracy: float) -> int:
    """``ceil(log2(ceil((exp(eps_star) - vbar) / (accuracy * mu))))``.

    The advertised number of bisection evaluations of ``eps(w, x)`` for one
    point, not counting the evaluations of ``eps(1, x)`` and ``eps'(1, x)``.
    Arguments at or below one give 0.
    """
    mu = _mu(profile, x)
    e1 = float(profile.eval(1.0, x))
    d1 = float(profile.deriv(1.0, x))
    ratio = (math.exp(eps_star) - _vbar(e1, d1, mu)) / (accuracy * mu)
    if ratio <= 1.0:
        return 0
    return math.ceil(math.log2(math.ceil(ratio)))


def constraint_gap(profile: WeightedProfile, x, eps_star: float, w: float) -> float:
    """``g(w) = (exp(eps(w, x)) - 1)/w - (exp(eps_star) - 1)``; ``<= 0`` is feasible."""
    e = float(profile.eval(w, x))
    with np.errstate(over="ignore"):
        return float(np.expm1(e) / w - np.expm1(eps_star))


def _gap_derivative(profile, x, w):
    e = float(profile.eval(w, x))
    d = float(profile.deriv(w, x))
    with np.errstate(over="ignore"):
        return float((d * np.exp(e) * w - np.expm1(e)) / (w * w))


def binding_tolerance(profile: WeightedProfile, x, eps_star: float, w: float, accuracy: float) -> float:
    """Tolerance on ``|g(w)|`` implied by a bisection accuracy in ``w``.

    Uses the local slope of ``g`` over ``[w, w + accuracy]`` plus the
    rounding floor of evaluating ``g`` itself.
    """
    slope = max(abs(_gap_derivative(profile, x, w)), abs(_gap_derivative(profile, x, w + accuracy)))
    e = float(profile.eval(w + accuracy, x))
    rounding = 64 * np.finfo(float).eps * (math.exp(min(e, 700.0)) / w + math.exp(eps_star))
    return 2.0 * accuracy * slope + rounding


def _positive(profile, x, target_slope, w):
    # sign of g(w) in log space: exp(eps) - 1 > w (e^eps* - 1)
    return float(profile.eval(w, x)) > math.log1p(w * target_slope)


def solve_point(profile: WeightedProfile, x, cfg: SolverConfig) -> PointSolution:
    """Largest feasible weight for one point.

    Returns the lower end of the final bracket (width <= ``cfg.accuracy``), so
    the reported weight never overshoots the feasible region.
    """
    eps_star = cfg.target_epsilon
    e1 = float(profile.eval(1.0, x))
    d1 = float(profile.deriv(1.0, x))
    setup = 2
    if e1 > eps_star * (1.0 + _FEASIBILITY_RTOL):
        raise InfeasiblePointError(f"eps(1, x) = {e1} exceeds target {eps_star}")
    mu = _mu(profile, x)
    b = _bracket(e1, d1, mu, eps_star)
    at_target = e1 >= eps_star * (1.0 - _FEASIBILITY_RTOL)
    if b <= 1.0:
        return PointSolution(1.0, 0, setup, at_target)
    if at_target:
        if not d1 < -math.expm1(-e1):
            # g(1) = 0 and g > 0 on (1, inf): weight one is the unique solution
            return PointSolution(1.0, 0, setup, True)
        # w = 1 is a spurious root; open the bracket just above it
        lo = 1.0 + min(cfg.accuracy, 0.25 * (b - 1.0))
    else:
        lo = 1.0
    hi = b

    slope = math.expm1(eps_star)
    evals = 0
    while hi - lo > cfg.accuracy:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # float resolution reached before the requested accuracy
        if evals >= cfg.max_evals_per_point:
            raise EvaluationBudgetError(
                f"no convergence after {evals} evaluations on [{lo}, {hi}]; "
                f"exp(eps) may not be strongly convex as declared"
            )
        evals += 1
        if _positive(profile, x, slope, mid):
            hi = mid
        else:
            lo = mid
    return PointSolution(lo, evals, setup, True)


def solve_dataset(profile: WeightedProfile, data, cfg: SolverConfig, n_jobs: int = 1) -> WeightSolution:
    """Solve every row of ``data`` independently; results keep input order."""
    data = np.atleast_2d(np.asarray(data, dtype=float)) if len(data) else np.empty((0, 0))
    n = data.shape[0]
    results: list[PointSolution | None] = [None] * n
    failures = []

    def run(i):
        try:
            return i, solve_point(profile, data[i], cfg), None
        except (ValueError, RuntimeError) as exc:
            return i, None, exc

    if n_jobs == 1 or n < 2:
        outcomes = map(run, range(n))
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(run, range(n)))
    for i, sol, exc in outcomes:
        if exc is not None:
            failures.append((i, exc))
        else:
            results[i] = sol
    if failures:
        raise WeightSolveError(sorted(failures, key=lambda t: t[0]))
    return WeightSolution(
        weights=np.array([s.weight for s in results], dtype=float),
        eval_counts=np.array([s.evals for s in results], dtype=int),
        setup_counts=np.array([s.setup_evals for s in results], dtype=int),
        binding=np.array([s.binding for s in results], dtype=bool),
    )
