import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erasurebandit.bounds import (delta_star, delta_star_closed_form, delta_star_residual,
                                  theorem1_bound, theorem2_bound)


def test_theorem1_two_arm_example():
    K, M, T = 2, 2, 10**4
    L, lmt = math.log(K * M * T), math.log(M * T)
    # L/gap + M log(MT) / (M / (L/gap)) + log(MT)
    expected = L / 0.2 + lmt * L / 0.2 + lmt
    assert theorem1_bound([0, 0.2], [0, 0], K, M, T) == pytest.approx(expected)
    assert expected == pytest.approx(587.6, abs=0.1)


def test_theorem1_single_agent_collapse():
    K, T, d = 5, 1000, 0.3
    L, lmt = math.log(K * T), math.log(T)
    assert theorem1_bound([0, d], [0], K, 1, T) == pytest.approx(L / d + lmt * L / d + lmt)


@given(st.lists(st.integers(0, 500), min_size=1, max_size=5), st.integers(0, 4), st.integers(1, 200))
def test_theorem1_monotone_in_alpha(alphas, which, bump):
    gaps = [0.0, 0.1, 0.5, 0.9]
    K, M, T = 4, len(alphas), 5000
    raised = list(alphas)
    raised[which % M] += bump
    assert theorem1_bound(gaps, alphas, K, M, T) <= theorem1_bound(gaps, raised, K, M, T)


def test_theorem1_scales_with_c_and_ignores_zero_gaps():
    a = [3, 7]
    assert theorem1_bound([0, 0.4], a, 2, 2, 900, c=3) == pytest.approx(3 * theorem1_bound([0, 0.4], a, 2, 2, 900))
    assert theorem1_bound([0, 0, 0.4], a, 3, 2, 900) > 0
    with pytest.raises(ValueError):
        theorem1_bound([-0.1, 0], a, 2, 2, 900)


def test_delta_star_closed_form_example():
    assert delta_star_closed_form(10, 4, 10**4) == pytest.approx(
        math.sqrt(10 * math.log(4e4) * math.log(4e5) / 4e4))
    assert delta_star_closed_form(10, 4, 10**4) == pytest.approx(0.1849, abs=1e-4)
    assert delta_star([0] * 4, 10, 4, 10**4) == pytest.approx(0.1849, abs=1e-4)


def test_delta_star_against_high_precision_root():
    alphas, K, M, T = [0, 26, 121, 4306], 10, 4, 50_000
    mpmath.mp.dps = 40
    L, lmt = mpmath.log(K * M * T), mpmath.log(M * T)

    def f(d):
        return d - K * lmt / (T * sum(1 / (a + L / d) for a in alphas))

    root = mpmath.findroot(f, (mpmath.mpf("1e-6"), mpmath.mpf(1)), solver="anderson")
    assert delta_star(alphas, K, M, T) == pytest.approx(float(root), rel=1e-12)


def test_delta_star_scaling():
    d1 = delta_star([0] * 3, 8, 3, 10**4)
    d4 = delta_star([0] * 3, 8, 3, 4 * 10**4)
    # the log factors shift slightly with T; the sqrt(1/T) part halves the value
    ratio = d4 / d1
    logs = math.sqrt(math.log(3 * 4e4) * math.log(24 * 4e4) / (math.log(3e4) * math.log(24e4)))
    assert ratio == pytest.approx(0.5 * logs, rel=1e-9)


def test_delta_star_increases_with_alpha():
    values = [delta_star([a, a, 2 * a], 6, 3, 20_000) for a in (0, 1, 10, 100, 1000, 10**5)]
    assert all(x < y for x, y in zip(values, values[1:]))


@settings(max_examples=60)
@given(st.lists(st.integers(0, 10**4), min_size=1, max_size=8), st.integers(2, 50),
       st.integers(2, 10**7), st.floats(0.1, 10))
def test_delta_star_residual(alphas, K, T, cp):
    M = len(alphas)
    d = delta_star(alphas, K, M, T, cp)
    assert abs(delta_star_residual(d, alphas, K, M, T, cp)) <= 1e-9 * d


def test_theorem2_zero_alpha_example():
    expected = 4 * math.sqrt(10 * 1e4 * math.log(4e4) * math.log(4e5) / 4)
    assert theorem2_bound([0] * 4, 10, 4, 10**4) == pytest.approx(expected)
    assert theorem2_bound([0] * 4, 10, 4, 10**4) == pytest.approx(7395, abs=1)


def test_theorem2_single_agent_shape():
    K, T, a = 10, 10**5, 50
    d = delta_star([a], K, 1, T)
    L, lmt = math.log(K * T), math.log(T)
    assert theorem2_bound([a], K, 1, T) == pytest.approx(math.sqrt(K * T * lmt * (a * d + L)) + a * L)


@settings(max_examples=40)
@given(st.lists(st.integers(0, 3000), min_size=1, max_size=6), st.integers(2, 30),
       st.integers(10, 10**6), st.integers(0, 5), st.integers(1, 500))
def test_theorem2_monotone(alphas, K, T, which, bump):
    M = len(alphas)
    base = theorem2_bound(alphas, K, M, T)
    raised = list(alphas)
    raised[which % M] += bump
    assert theorem2_bound(raised, K, M, T) >= base * (1 - 1e-12)
    assert theorem2_bound(alphas, K + 1, M, T) >= base * (1 - 1e-12)
    assert theorem2_bound(alphas, K, M, T + 1) >= base * (1 - 1e-12)


def test_theorem2_small_alpha_costs_a_constant_factor():
    # rewards live in [0, 1], so alphas of order log-factor / max-gap stay below ~20 here
    for K in (2, 10, 50):
        for M in (1, 4, 20, 40):
            for T in (10**4, 10**5, 10**6):
                zero = theorem2_bound([0] * M, K, M, T)
                for scale in (1, 5, 20):
                    assert theorem2_bound([scale] * M, K, M, T) / zero <= 2.0


def test_bad_inputs():
    with pytest.raises(ValueError):
        delta_star([0, 0], 3, 3, 100)
    with pytest.raises(ValueError):
        delta_star([0], 3, 1, 1)
    with pytest.raises(ValueError):
        delta_star([0], 3, 1, 100, c_prime=0)
