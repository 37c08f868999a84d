"""Regret-bound calculators (natural logs, constants passed in explicitly).

Values are only meaningful up to the unspecified constants ``c`` and ``c_prime``;
use them for shapes and monotonicity, not as numeric predictions.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.optimize import bisect

from .scheduler import lemma1_bound, lp_end_time, observation_end_time  # noqa: F401  (re-exported)


def _check(alphas: Sequence[int], num_arms: int, num_agents: int, horizon: int) -> np.ndarray:
    a = np.asarray(alphas, dtype=float)
    if len(a) != num_agents:
        raise ValueError(f"got {len(a)} alphas for M={num_agents}")
    if num_arms < 1 or num_agents < 1 or horizon < 2:
        raise ValueError("need K >= 1, M >= 1 and T >= 2")
    if (a < 0).any():
        raise ValueError("alphas must be non-negative")
    return a


def theorem1_bound(gaps: Sequence[float], alphas: Sequence[int], num_arms: int, num_agents: int,
                   horizon: int, c: float = 1.0) -> float:
    """Gap-dependent bound.

    c * [ sum_{gap>0} ( L/gap + M log(MT) / sum_m 1/(alpha_m + L/gap) )
          + sum_m alpha_m log(MT) + log(MT) ],  L = log(KMT).
    """
    a = _check(alphas, num_arms, num_agents, horizon)
    g = np.asarray(gaps, dtype=float)
    if (g < 0).any():
        raise ValueError("gaps must be non-negative")
    if c <= 0:
        raise ValueError("c must be positive")
    L = math.log(num_arms * num_agents * horizon)
    lmt = math.log(num_agents * horizon)
    total = 0.0
    for d in g[g > 0]:
        total += L / d + num_agents * lmt / float(np.sum(1.0 / (a + L / d)))
    return c * (total + float(a.sum()) * lmt + lmt)


def delta_star_residual(delta: float, alphas: Sequence[int], num_arms: int, num_agents: int,
                        horizon: int, c_prime: float = 1.0) -> float:
    """delta - c' K log(MT) / (T sum_m 1/(alpha_m + L/delta)); increasing in delta."""
    a = np.asarray(alphas, dtype=float)
    L = math.log(num_arms * num_agents * horizon)
    lmt = math.log(num_agents * horizon)
    s = float(np.sum(delta / (a * delta + L)))
    return delta - c_prime * num_arms * lmt / (horizon * s)


def delta_star(alphas: Sequence[int], num_arms: int, num_agents: int, horizon: int,
               c_prime: float = 1.0) -> float:
    """Fixed point balancing the small-gap and large-gap terms, by bisection."""
    _check(alphas, num_arms, num_agents, horizon)
    if c_prime <= 0:
        raise ValueError("c_prime must be positive")

    def f(d):
        return delta_star_residual(d, alphas, num_arms, num_agents, horizon, c_prime)

    lo, hi = 1e-300, 1.0
    while f(hi) <= 0:
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError("could not bracket the fixed point")
    while f(lo) >= 0:
        lo = math.sqrt(lo * hi) if lo > 0 else hi / 2
        if lo >= hi:
            raise ArithmeticError("could not bracket the fixed point")
    return float(bisect(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000))


def delta_star_closed_form(num_arms: int, num_agents: int, horizon: int, c_prime: float = 1.0) -> float:
    """Fixed point when every alpha is zero."""
    L = math.log(num_arms * num_agents * horizon)
    lmt = math.log(num_agents * horizon)
    return math.sqrt(c_prime * num_arms * lmt * L / (horizon * num_agents))


def theorem2_bound(alphas: Sequence[int], num_arms: int, num_agents: int, horizon: int,
                   c: float = 1.0, c_prime: float = 1.0) -> float:
    """Gap-free bound c * [ M sqrt(K T log(MT) / sum_m 1/(alpha_m D + L)) + L sum_m alpha_m ]."""
    a = _check(alphas, num_arms, num_agents, horizon)
    if c <= 0:
        raise ValueError("c must be positive")
    d = delta_star(alphas, num_arms, num_agents, horizon, c_prime)
    L = math.log(num_arms * num_agents * horizon)
    lmt = math.log(num_agents * horizon)
    s = float(np.sum(1.0 / (a * d + L)))
    return c * (num_agents * math.sqrt(num_arms * horizon * lmt / s) + float(a.sum()) * L)
