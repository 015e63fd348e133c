"""
Central finite differences and the analytic-vs-numeric derivative table.
"""

import numpy as np

from .optics import (
    EllipsoidPiece,
    ParaboloidPiece,
    ellipsoid_derivatives,
    ellipsoid_gradient,
    ellipsoid_height,
    focal_parameter,
    paraboloid_gradient,
    paraboloid_height,
    paraboloid_height_and_derivatives,
    paraboloid_parameter,
)


def central_gradient(f, x, step=1e-5):
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty(x.shape)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = step
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def central_jacobian(F, x, step=1e-5):
    """Central-difference Jacobian ``J[i, j] = dF_i / dx_j``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e.flat[j] = step
        cols.append((np.asarray(F(x + e)) - np.asarray(F(x - e))) / (2 * step))
    return np.stack(cols, axis=-1)


def relative_error(analytic, numeric, floor=1e-8):
    """``|a - f| / max(|a|, floor)`` in the Frobenius norm."""
    a = np.asarray(analytic, dtype=float)
    d = np.linalg.norm(a - np.asarray(numeric, dtype=float))
    return float(d / max(np.linalg.norm(a), floor))


def random_configuration(rng, n, kind="ellipsoid", kappa=0.5):
    """A random admissible (x, Y, X0) with x inside the piece domain.

    The focus sits 4 to 6 units above a base point of height in [0, 1];
    x is within 0.4 of the base point horizontally.  Paraboloid foci are
    spread wider and kept at parameter ``b >= 0.1``, the margin of the
    reflector region.
    """
    while True:
        spread = 2.0 if kind == "paraboloid" else 0.5
        Y = np.r_[rng.uniform(-spread, spread, n), rng.uniform(4.0, 6.0)]
        X0 = np.r_[rng.uniform(-0.5, 0.5, n), rng.uniform(0.0, 1.0)]
        x = X0[:-1] + rng.uniform(-0.4, 0.4, n)
        if kind == "paraboloid":
            if paraboloid_parameter(X0, Y) >= 0.1:
                return x, Y, X0
            continue
        b = focal_parameter(X0, Y, kappa)
        # stay well inside the projection ball
        if np.linalg.norm(x - Y[:-1]) < 0.8 * b / np.sqrt(1 - kappa**2):
            return x, Y, X0


def derivative_rows(rng, n, kind="ellipsoid", kappa=0.5, count=100, step=1e-5):
    """Compare analytic derivatives with central differences.

    Returns rows ``(kind, n, sample, quantity, rel_err)`` for the quantities
    ``grad``, ``hess``, ``mixed`` and ``base``.  The gradient is checked
    against differences of the height, the Hessian against differences of
    the gradient, the mixed block against differences of the gradient in
    the focus with the base point held, and the base derivative against
    differences of the height in the base height.
    """
    rows = []
    for k in range(count):
        x, Y, X0 = random_configuration(rng, n, kind, kappa)
        if kind == "ellipsoid":
            piece = EllipsoidPiece.through(X0, Y, kappa)
            an = ellipsoid_derivatives(x, piece, kappa, base=X0)
            h = lambda z: ellipsoid_height(z, piece, kappa)
            g = lambda z: ellipsoid_gradient(z, piece, kappa)

            def g_of_Y(Z):
                return ellipsoid_gradient(x, EllipsoidPiece.through(X0, Z, kappa), kappa)

            def h_of_base(t):
                B = np.r_[X0[:-1], t[0]]
                return ellipsoid_height(x, EllipsoidPiece.through(B, Y, kappa), kappa)
        else:
            piece = ParaboloidPiece.through(X0, Y)
            an = paraboloid_height_and_derivatives(x, piece, base=X0)
            h = lambda z: paraboloid_height(z, piece)
            g = lambda z: paraboloid_gradient(z, piece)

            def g_of_Y(Z):
                return paraboloid_gradient(x, ParaboloidPiece(Z, float(paraboloid_parameter(X0, Z))))

            def h_of_base(t):
                B = np.r_[X0[:-1], t[0]]
                return paraboloid_height(x, ParaboloidPiece.through(B, Y))

        checks = {
            "grad": (an.grad_x, central_gradient(h, x, step)),
            "hess": (an.hess_xx, central_jacobian(g, x, step)),
            "mixed": (an.mixed_xY, central_jacobian(g_of_Y, Y, step)),
            "base": (an.d_base_height, central_gradient(h_of_base, np.array([X0[-1]]), step)[0]),
        }
        for name, (a, f) in checks.items():
            rows.append((kind, n, k, name, relative_error(a, f)))
    return rows
