"""Privacy types and the amplification calculus for Poisson importance sampling.

A mechanism that runs on weighted data is described by a *weighted
distinguishability profile* ``eps(w, x)``: adding the weighted point ``(w, x)``
to any weighted dataset changes the output distribution by at most
``eps(w, x)`` (pure epsilon-indistinguishability). Running that mechanism on a
Poisson importance sample that keeps ``x`` with probability ``q(x)`` and
weight ``1/q(x)`` yields the per-point profile::

    psi(x) = log(1 + q(x) * (exp(eps(1/q(x), x)) - 1))

All functions here are pure and operate on plain floats / numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "PrivacyBudget",
    "WeightedProfile",
    "Profile",
    "amplify",
    "subsample_amplify",
    "amplified_profile",
    "improvement_possible",
    "improvement_impossible",
    "constant_profile",
    "power_profile",
    "verify_profile",
]


@dataclass(frozen=True)
class PrivacyBudget:
    """An ``(epsilon, delta)`` pair; epsilon is in nats."""

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon >= 0):  # also rejects NaN
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not (0.0 <= self.delta <= 1.0):
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")

    @property
    def is_pure(self) -> bool:
        return self.delta == 0.0


@dataclass(frozen=True)
class WeightedProfile:
    """Weighted distinguishability profile with its w-derivative.

    Parameters
    ----------
    eval : callable ``(w, x) -> float``
        Privacy loss of adding the point ``x`` with weight ``w >= 1``.
    deriv : callable ``(w, x) -> float``
        Partial derivative of ``eval`` with respect to ``w``.
    strong_convexity : callable ``x -> float``
        A constant ``mu_x > 0`` with ``d^2/dw^2 exp(eval(w, x)) >= mu_x`` for
        all ``w >= 1``. Only needed by the privacy-optimal weight solver.
    name : str
        Free-form label used in reports.
    """

    eval: Callable[[float, np.ndarray], float]
    deriv: Callable[[float, np.ndarray], float]
    strong_convexity: Callable[[np.ndarray], float] | None = None
    name: str = "profile"

    def __call__(self, w, x):
        return self.eval(w, x)


@dataclass(frozen=True)
class Profile:
    """Unweighted distinguishability profile ``x -> psi(x)``."""

    eval: Callable[[np.ndarray], float]
    name: str = "profile"

    def __call__(self, x):
        return self.eval(x)

    def max_over(self, points) -> float:
        """Largest profile value over the rows of ``points``; a valid DP epsilon
        when ``points`` covers the domain."""
        return max(float(self.eval(x)) for x in np.atleast_2d(points))


def amplify(epsilon, q):
    """``log(1 + q (e^epsilon - 1))`` evaluated without overflow.

    Works elementwise on arrays. Large ``epsilon`` goes through ``logaddexp`` so
    that ``epsilon`` in the thousands still gives a finite, accurate result.
    """
    epsilon = np.asarray(epsilon, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        small = np.log1p(q * np.expm1(epsilon))
        large = np.logaddexp(np.log(q) + epsilon, np.log1p(-q))
    out = np.where(epsilon < 1.0, small, large)
    out = np.where(q == 0.0, 0.0, out)
    return out[()] if out.ndim == 0 else out


def subsample_amplify(budget: PrivacyBudget, p: float) -> PrivacyBudget:
    """Privacy of an ``(epsilon, delta)``-DP mechanism run on a uniform
    Poisson subsample with inclusion probability ``p``."""
    if not (0.0 < p <= 1.0):
        raise ValueError(f"sampling probability must lie in (0, 1], got {p}")
    eps = float(amplify(budget.epsilon, p))
    # rounding must never report a loss above the unsampled one
    eps = min(max(eps, 0.0), budget.epsilon)
    return PrivacyBudget(eps, p * budget.delta)


def _check_probability(qx: float) -> float:
    qx = float(qx)
    if qx == 0.0:
        raise ValueError("q(x) = 0: importance weight 1/q(x) is undefined")
    if not (0.0 < qx <= 1.0):
        raise ValueError(f"invalid sampler: q(x) = {qx} is not a probability in (0, 1]")
    return qx


def amplified_profile(profile: WeightedProfile, q: Callable[[np.ndarray], float]) -> Profile:
    """Profile of ``M o S_q`` for a mechanism with weighted profile ``profile``.

    ``q`` is any callable mapping a point to its inclusion probability (a
    :class:`privamp.sampling.SamplerSpec` works, since it is callable on single
    points). The returned profile raises ``ValueError`` at points where
    ``q(x)`` is 0 or exceeds 1.
    """

    def psi(x):
        qx = _check_probability(q(x))
        return float(amplify(profile.eval(1.0 / qx, x), qx))

    return Profile(psi, name=f"amplified({profile.name})")


def improvement_possible(profile: WeightedProfile, x) -> bool:
    """True iff ``eps'(1, x) < 1 - exp(-eps(1, x))``.

    When this holds, some inclusion probability below one makes ``psi(x)``
    strictly smaller than the unsampled loss ``eps(1, x)``.
    """
    e1 = float(profile.eval(1.0, x))
    d1 = float(profile.deriv(1.0, x))
    return d1 < -math.expm1(-e1)


def improvement_impossible(profile: WeightedProfile, x, w_grid: Sequence[float]) -> bool:
    """Sampled certificate that no Poisson importance sampler helps at ``x``.

    Checks ``eps(w, x) <= w * eps'(w, x)`` at every grid weight. The underlying
    guarantee quantifies over all ``w >= 1``; a grid can only refute it, so a
    ``True`` here is evidence, not proof.
    """
    w_grid = np.asarray(w_grid, dtype=float)
    if w_grid.size == 0:
        raise ValueError("w_grid must be non-empty")
    if np.any(w_grid < 1.0):
        raise ValueError("all grid weights must be >= 1")
    for w in w_grid:
        e = float(profile.eval(w, x))
        d = float(profile.deriv(w, x))
        # relative slack absorbs rounding in the equality case eps = w eps'
        if e > w * d + 1e-12 * max(abs(e), 1.0):
            return False
    return True


def constant_profile(c: float) -> WeightedProfile:
    """Profile of a mechanism that ignores weights: ``eps(w, x) = c``."""
    c = float(c)
    return WeightedProfile(
        eval=lambda w, x: c,
        deriv=lambda w, x: 0.0,
        strong_convexity=lambda x: 0.0,
        name=f"constant({c:g})",
    )


def power_profile(f: Callable[[np.ndarray], float], p: float = 1.0) -> WeightedProfile:
    """``eps(w, x) = f(x) * w**p`` with ``f >= 0``.

    For ``p >= 1`` these satisfy ``eps <= w eps'`` everywhere. The
    strong-convexity constant is the exact minimum over ``w >= 1`` of the
    second derivative of ``exp(f w^p)``, which for ``p >= 1`` is attained at
    ``w = 1``: ``(p(p-1) f + p^2 f^2) e^f``.
    """
    p = float(p)

    def mu(x):
        fx = float(f(x))
        if p < 1.0:
            return 0.0
        return (p * (p - 1.0) * fx + p * p * fx * fx) * math.exp(fx)

    return WeightedProfile(
        eval=lambda w, x: float(f(x)) * w**p,
        deriv=lambda w, x: p * float(f(x)) * w ** (p - 1.0),
        strong_convexity=mu,
        name=f"power(p={p:g})",
    )


def verify_profile(profile: WeightedProfile, points, w_grid, rtol: float = 1e-5) -> list[str]:
    """Numerically check a profile's declared structure.

    Returns a list of human-readable violations (empty when all checks pass):
    non-negativity, derivative vs. central differences, and the declared
    strong-convexity constant vs. a second difference of ``exp(eps)``.
    """
    problems = []
    for x in np.atleast_2d(points):
        mu = profile.strong_convexity(x) if profile.strong_convexity is not None else None
        for w in np.asarray(w_grid, dtype=float):
            e = float(profile.eval(w, x))
            if e < 0:
                problems.append(f"eval({w}, x) = {e} < 0")
            h = 1e-6 * max(1.0, w)
            lo = max(1.0, w - h)
            fd = (profile.eval(w + h, x) - profile.eval(lo, x)) / (w + h - lo)
            d = float(profile.deriv(w, x))
            if abs(fd - d) > rtol * max(abs(d), abs(fd), 1e-12):
                problems.append(f"deriv({w}, x) = {d} but finite difference gives {fd}")
            if mu is not None and e < 700:
                h2 = 1e-3 * max(1.0, w)
                lo2 = max(1.0, w - h2)
                mid = lo2 + h2
                f = [math.exp(profile.eval(v, x)) for v in (lo2, mid, mid + h2)]
                second = (f[0] - 2.0 * f[1] + f[2]) / (h2 * h2)
                if second < mu - 1e-8 * max(1.0, abs(mu)):
                    problems.append(f"second difference {second} at w={w} below mu={mu}")
    return problems
