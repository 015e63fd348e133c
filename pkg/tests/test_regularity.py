from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parallel_refractor.errors import DomainError
from parallel_refractor.regularity import (
    G_hessian_closed_form,
    G_hessian_numeric,
    aw_condition_numeric,
    classify_graph_target,
    ellipsoid_union_inclusion_check,
    holder_exponent,
    holder_exponent_exact,
    min_condition_check,
    tube_measure_check,
)
from parallel_refractor.targets import GraphSurface


def quad(n, a, c0=4.0, w=3.0):
    return GraphSurface.quadratic(c0, np.zeros(n), a * np.eye(n), [-w] * n, [w] * n)


REG2, PLANE2 = quad(2, 0.5), quad(2, 0.0)


@pytest.mark.parametrize("n", [1, 2])
def test_classify_margins(n):
    assert classify_graph_target(quad(n, 0.5), 0.5).margin == pytest.approx(1.0)
    r = classify_graph_target(quad(n, 0.0), 0.5)
    assert r.verdict == "not_regular" and r.margin == pytest.approx(-1.0)
    assert r.witness is not None
    # the reversed orientation flips both verdicts
    assert classify_graph_target(quad(n, 0.0), 0.5, "below").verdict == "regular"
    assert classify_graph_target(quad(n, 0.5), 0.5, "below").verdict == "not_regular"


def test_classify_rejects_bad_input():
    with pytest.raises(DomainError):
        classify_graph_target(quad(1, 0.5, c0=-1.0), 0.5)
    asym = GraphSurface(lambda y: 4.0 + 0 * y[..., 0], lambda y: np.zeros(2),
                        lambda y: np.array([[1.0, 0.0], [0.5, 1.0]]), (-1, -1), (1, 1))
    with pytest.raises(DomainError):
        classify_graph_target(asym, 0.5)


@pytest.mark.parametrize("n", [1, 2])
def test_G_closed_form(n):
    assert np.allclose(G_hessian_closed_form(quad(n, 0.5), 0.5), -0.125 * np.eye(n))
    assert np.allclose(G_hessian_closed_form(quad(n, 0.0), 0.5), 0.125 * np.eye(n))
    # borderline: psi D^2 psi = kappa/(1-kappa) gives the zero matrix
    assert np.allclose(G_hessian_closed_form(quad(n, 0.25), 0.5), 0.0)


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("a", [0.5, 0.0])
def test_G_numeric_matches_closed_form(n, a):
    T = quad(n, a)
    an = G_hessian_closed_form(T, 0.5)
    num = G_hessian_numeric(T, np.zeros(n + 1), 0.5)
    assert np.linalg.norm(num - an) / np.linalg.norm(an) <= 1e-4


def test_aw_verdicts():
    X = np.zeros(3)
    assert aw_condition_numeric(REG2, X, 0.5).verdict == "regular"
    assert aw_condition_numeric(PLANE2, X, 0.5).verdict == "not_regular"
    # a horizontal target 2 below the mirror: K = (1+|v|^2)/s is strictly concave
    r = aw_condition_numeric(PLANE2, np.array([0.0, 0.0, 6.0]), 0.5, mode="reflector")
    assert r.verdict == "regular" and r.margin < -0.1


def test_min_condition():
    X = np.zeros(3)
    reg = min_condition_check(REG2, X, REG2.point(np.array([-0.5, 0.0])),
                              REG2.point(np.array([0.5, 0.0])), 0.5)
    assert reg.verdict == "regular" and reg.margin > 0
    pl = min_condition_check(PLANE2, X, PLANE2.point(np.array([0.0, -1.0])),
                             PLANE2.point(np.array([0.0, 1.0])), 0.5)
    assert pl.verdict == "not_regular" and pl.witness is not None
    same = min_condition_check(REG2, X, REG2.point(np.zeros(2)), REG2.point(np.zeros(2)), 0.5)
    assert same.verdict == "inconclusive"


def test_inclusion_at_lambda_zero_is_trivial():
    Yb, Yh = REG2.point(np.array([-0.5, 0.0])), REG2.point(np.array([0.5, 0.0]))
    r = ellipsoid_union_inclusion_check(np.zeros(3), Yb, Yh, 0.0, REG2, 0.5, 2000)
    assert r.verdict == "regular" and r.details["violations"] == 0


def test_inclusion_regular_graph():
    Yb, Yh = REG2.point(np.array([-0.5, 0.0])), REG2.point(np.array([0.5, 0.0]))
    rng = np.random.default_rng(1)
    for lam in (0.25, 0.5, 0.75):
        r = ellipsoid_union_inclusion_check(np.zeros(3), Yb, Yh, lam, REG2, 0.5, 5000, rng)
        assert r.verdict == "regular" and r.details["concavity_ok"]


def test_holder_values():
    assert holder_exponent_exact(2, 1) == Fraction(1, 7)
    assert holder_exponent_exact(1, 1) == Fraction(1, 3)
    assert holder_exponent(2, Fraction(3, 2) - Fraction(1, 10)) > 0
    assert holder_exponent(2, 1.0) == pytest.approx(1 / 7)


@pytest.mark.parametrize("n,q", [(2, 2), (2, 0.5), (3, Fraction(3, 2)), (0, 1), (1.5, 1)])
def test_holder_domain(n, q):
    with pytest.raises(DomainError):
        holder_exponent_exact(n, q)


@settings(max_examples=50)
@given(st.integers(1, 5), st.fractions(0, 1), st.fractions(0, 1))
def test_holder_decreasing(n, s, t):
    top = Fraction(n, n - 1) if n > 1 else Fraction(4)
    q1, q2 = 1 + (top - 1) * s * Fraction(99, 100), 1 + (top - 1) * t * Fraction(99, 100)
    if q1 == q2:
        return
    lo, hi = min(q1, q2), max(q1, q2)
    assert holder_exponent_exact(n, lo) > holder_exponent_exact(n, hi)
    assert 0 < holder_exponent_exact(n, hi) < 1


def test_tube_measure():
    T = PLANE2
    Yb, Yh = T.point(np.array([-0.5, 0.0])), T.point(np.array([0.5, 0.0]))
    X = np.zeros(3)
    _, r1 = tube_measure_check(T, X, Yb, Yh, 0.02, 0.5)
    _, r2 = tube_measure_check(T, X, Yb, Yh, 0.01, 0.5)
    assert 0 < r2 <= r1 and r1 / r2 < 2.0
    m, r = tube_measure_check(T, X, Yb, Yb, 0.02, 0.5)
    assert m > 0 and np.isnan(r)


def test_invariants_agree():
    """Closed-form, second-difference and synthetic checks give the same verdict."""
    for T in (REG2, PLANE2):
        X = np.zeros(3)
        a = classify_graph_target(T, 0.5).verdict
        b = aw_condition_numeric(T, X, 0.5).verdict
        c = min_condition_check(T, X, T.point(np.array([0.0, -1.0])),
                                T.point(np.array([0.0, 1.0])), 0.5).verdict
        assert a == b == c
