import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from parallel_refractor.errors import DomainError, OutOfDomainError
from parallel_refractor.optics import (
    Cylinder,
    EllipsoidPiece,
    OpticalConfig,
    ParaboloidPiece,
    admissible_region_check,
    ellipsoid_derivatives,
    ellipsoid_gradient,
    ellipsoid_height,
    ellipsoid_heights_masked,
    focal_parameter,
    paraboloid_height,
    paraboloid_height_and_derivatives,
    paraboloid_parameter,
    reflection_direction,
    refraction_direction,
)

# values frozen from a 30-digit mpmath evaluation
Q_V1 = 0.290276231128990230930624788719
LAM_V1 = (-0.290276231128990230930624788719, 0.956942897795656897597291455386)
FIG3_C1 = 0.0999992456886971552707446914508
FIG3_C3 = 1.76514666666666666666666666667
PARAB_B = 0.099019513592784830028224109023

P = np.array([0.0, 4.70456])
Y1 = np.array([0.03, 5.0])
Y3 = np.array([0.0, 10.0])

vec = lambda n, bound: arrays(float, n, elements=st.floats(-bound, bound))


def test_config_validation():
    assert OpticalConfig().beta == pytest.approx(np.sqrt(1 - 0.81))
    for bad in ({"kappa": 1.0}, {"kappa": 0.0}, {"delta": 1.2}, {"beta_reflector": 0.0}):
        with pytest.raises(DomainError):
            OpticalConfig(**bad)


def test_cylinder_basics():
    c = Cylinder((-0.5, -0.5), (0.5, 0.5), 1.0)
    assert c.dim == 2 and c.volume == pytest.approx(1.0)
    assert len(c.corners()) == 4
    assert c.max_distance(np.zeros(2)) == pytest.approx(np.sqrt(0.5))
    ball = Cylinder((-1.0, -1.0), (1.0, 1.0), 1.0, ball=True)
    assert ball.volume == pytest.approx(np.pi)
    assert ball.contains(ball.sample(np.random.default_rng(0), 50)).all()
    with pytest.raises(DomainError):
        Cylinder((0.0,), (0.0,), 1.0)


def test_refraction_direction_examples():
    Lam, Q = refraction_direction(np.zeros(1), 2 / 3)
    assert Q == pytest.approx(1 / 3) and np.allclose(Lam, [0, 1])
    Lam, Q = refraction_direction(np.array([1.0]), 2 / 3)
    assert Q == pytest.approx(Q_V1, abs=1e-15)
    assert np.allclose(Lam, LAM_V1, atol=1e-15)
    assert abs(np.linalg.norm(Lam) - 1) <= 1e-12


@given(vec(2, 10.0), st.floats(0.01, 0.99))
def test_refraction_direction_unit(v, kappa):
    Lam, Q = refraction_direction(v, kappa)
    assert Q > 0
    assert abs(np.linalg.norm(Lam) - 1) <= 1e-12
    assert abs(Q**2 * v @ v + (Q + kappa) ** 2 - 1) <= 1e-12


def test_reflection_direction_examples():
    assert np.allclose(reflection_direction(np.zeros(1)), [0, -1])
    assert np.allclose(reflection_direction(np.array([1.0])), [1, 0])
    assert np.allclose(reflection_direction(np.array([2.0])), [0.8, 0.6])


@given(vec(2, 50.0))
def test_reflection_direction_unit(v):
    assert abs(np.linalg.norm(reflection_direction(v)) - 1) <= 1e-12


def test_focal_parameter_examples():
    assert focal_parameter([0.0, 0.0], [0.0, 5.0], 2 / 3) == pytest.approx(5 / 3)
    assert focal_parameter(P, Y1, 2 / 3) == pytest.approx(FIG3_C1, abs=1e-14)
    assert abs(focal_parameter(P, Y1, 2 / 3) - 0.1) < 1e-4
    with pytest.raises(DomainError):
        focal_parameter(P, P, 0.5)


@given(vec(3, 5.0), vec(3, 5.0), st.floats(0.01, 0.99))
def test_focal_parameter_two_sided(X, Y, kappa):
    d = np.linalg.norm(X - Y)
    if d < 1e-6:
        return
    c = focal_parameter(X, Y, kappa)
    assert (1 - kappa) * d - 1e-12 <= c <= (1 + kappa) * d + 1e-12


def test_ellipsoid_height_examples():
    k = 2 / 3
    # vertex y_{n+1} - b/(1 - kappa)
    assert ellipsoid_height(np.array([0.0]), EllipsoidPiece([0.0, 5.0], 5 / 3), k) == pytest.approx(0.0, abs=1e-12)
    assert ellipsoid_height(np.array([0.03]), EllipsoidPiece(Y1, 0.1), k) == pytest.approx(4.7, abs=1e-12)
    big = EllipsoidPiece(Y3, focal_parameter(P, Y3, k))
    assert big.b == pytest.approx(FIG3_C3, abs=1e-13)
    assert ellipsoid_height(np.array([0.0]), big, k) == pytest.approx(4.70456, abs=1e-5)


def test_ellipsoid_out_of_domain():
    piece = EllipsoidPiece([0.0, 5.0], 1.0)
    r = piece.domain_radius(0.5)
    with pytest.raises(OutOfDomainError):
        ellipsoid_height(np.array([r]), piece, 0.5)
    assert np.isnan(ellipsoid_heights_masked(np.array([[r + 1]]), piece, 0.5)[0])


@settings(max_examples=200)
@given(vec(2, 1.0), vec(2, 0.5), st.floats(3.0, 6.0), st.floats(0.0, 1.0), st.floats(0.05, 0.95))
def test_ellipsoid_membership_and_convexity(x, y, yh, h0, kappa):
    Y = np.r_[y, yh]
    piece = EllipsoidPiece.through(np.r_[np.zeros(2), h0], Y, kappa)
    if np.linalg.norm(x - y) >= 0.99 * piece.domain_radius(kappa):
        return
    h = ellipsoid_height(x, piece, kappa)
    X = np.r_[x, h]
    # lower half of the ellipsoid through the base point
    assert Y[-1] - h - kappa * np.linalg.norm(X - Y) >= -1e-9
    assert focal_parameter(X, Y, kappa) == pytest.approx(piece.b, rel=1e-9)
    d = ellipsoid_derivatives(x, piece, kappa)
    assert np.allclose(d.hess_xx, d.hess_xx.T)
    assert np.linalg.eigvalsh(d.hess_xx).min() >= 0
    # both closed forms of the gradient agree
    alt = (x - y) / (Y[-1] - h - kappa * np.linalg.norm(X - Y))
    assert np.allclose(d.grad_x, alt, rtol=1e-10, atol=1e-12)


def test_gradient_closed_forms_agree_on_random_configurations():
    rng = np.random.default_rng(1)
    k = 0.5
    worst = 0.0
    for _ in range(100):
        Y = np.r_[rng.uniform(-0.5, 0.5, 2), rng.uniform(4, 6)]
        piece = EllipsoidPiece.through(np.r_[rng.uniform(-0.5, 0.5, 2), rng.uniform(0, 1)], Y, k)
        x = rng.uniform(-0.5, 0.5, 2)
        h = ellipsoid_height(x, piece, k)
        X = np.r_[x, h]
        g1 = ellipsoid_gradient(x, piece, k)
        g2 = (x - Y[:-1]) / (Y[-1] - h - k * np.linalg.norm(X - Y))
        worst = max(worst, np.linalg.norm(g1 - g2) / max(np.linalg.norm(g1), 1e-300))
    assert worst <= 1e-10


def test_vertex_gradient_zero():
    piece = EllipsoidPiece([0.2, 5.0], 2.0)
    assert np.allclose(ellipsoid_gradient(np.array([0.2]), piece, 0.5), 0)
    par = ParaboloidPiece([0.2, 5.0], 2.0)
    assert np.allclose(paraboloid_height_and_derivatives(np.array([0.2]), par).grad_x, 0)


def test_paraboloid_examples():
    b = paraboloid_parameter([1.0, 0.0], [0.0, 5.0])
    assert b == pytest.approx(PARAB_B, abs=1e-15)
    par = ParaboloidPiece([0.0, 5.0], b)
    assert paraboloid_height(np.array([1.0]), par) == pytest.approx(0.0, abs=1e-9)
    assert paraboloid_height(np.array([0.0]), par) == pytest.approx(5.0 + b / 2)
    d = paraboloid_height_and_derivatives(np.array([0.3, -0.2]), ParaboloidPiece([0, 0, 5.0], 2.0))
    assert np.array_equal(d.hess_xx, -np.eye(2) / 2.0)
    with pytest.raises(DomainError):
        paraboloid_parameter([0.0, 0.0], [0.0, 5.0])
    with pytest.raises(DomainError):
        ParaboloidPiece([0.0, 5.0], 0.0)


@given(vec(2, 2.0), vec(2, 1.0), st.floats(0.1, 5.0))
def test_paraboloid_focal_identity(x, y, b):
    par = ParaboloidPiece(np.r_[y, 5.0], b)
    X = np.r_[x, paraboloid_height(x, par)]
    assert np.linalg.norm(X - par.focus) + X[-1] - 5.0 == pytest.approx(b, rel=1e-9, abs=1e-9)


@given(vec(1, 1.5), st.floats(0.5, 6.0), st.floats(0.1, 0.9))
def test_round_trip_gradient(v, s, kappa):
    # a ray leaving X in direction Lambda(v) reaches Y; the ellipsoid through X focused at Y has slope v
    X = np.array([0.1, 0.3])
    Lam, _ = refraction_direction(v, kappa)
    Y = X + s * Lam
    piece = EllipsoidPiece.through(X, Y, kappa)
    g = ellipsoid_derivatives(X[:-1], piece, kappa).grad_x
    assert np.allclose(g, v, atol=1e-9 * max(1.0, abs(v[0])))


def test_admissible_region_examples():
    cyl = Cylinder((-0.5,), (0.5,), 1.0)
    cfg = OpticalConfig(kappa=0.5, delta=0.9)
    rep = admissible_region_check([0.0, 100.0], cyl, cfg)
    assert rep.admissible and rep.margin > 0 and rep.beta_margin > 0
    assert not admissible_region_check([0.0, 0.5], cyl, cfg).admissible
    rcfg = OpticalConfig(beta_reflector=0.5)
    assert not admissible_region_check([0.0, 5.0], cyl, rcfg, mode="reflector").admissible
    assert admissible_region_check([3.0, 5.0], cyl, rcfg, mode="reflector").admissible
