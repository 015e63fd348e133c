"""
Targets, ray-target intersection and the wedge curves between target points.

A target is either a finite set of weighted atoms or the graph of a C^2
function ``psi`` over a box.  Rays leave a point X of the cylinder in a unit
direction Lambda and are followed until they meet the target; the distance
travelled is ``s_X(Lambda)``.
"""

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import (
    AmbiguousIntersectionError,
    ConvergenceError,
    DomainError,
    PartialCurveError,
    RayMissError,
)
from .optics import (
    paraboloid_grad,
    phi_gradient,
    reflection_direction,
    refraction_direction,
)

ANGLE_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteAtoms:
    """Finitely many target points ``points[i]`` carrying mass ``weights[i]``."""

    points: np.ndarray
    weights: np.ndarray
    orientation_note: str = ""

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(w) != len(pts):
            raise DomainError("one weight per atom is required")
        if np.any(w <= 0):
            raise DomainError("atom weights must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.points.shape[1] - 1

    def __len__(self):
        return len(self.points)

    def normalized(self, total):
        """Copy with weights rescaled to sum to ``total``."""
        return DiscreteAtoms(self.points, self.weights * total / self.weights.sum(),
                             self.orientation_note)


class QuadraticPsi:
    """psi(y) = c0 + g.y + y.A.y / 2 with exact gradient and Hessian."""

    def __init__(self, c0, g, A):
        self.c0 = float(c0)
        self.g = np.atleast_1d(np.asarray(g, dtype=float))
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        n = len(self.g)
        if self.A.shape != (n, n):
            raise DomainError("A must be an n x n matrix")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.c0 + y @ self.g + 0.5 * np.einsum("...i,ij,...j->...", y, self.A, y)

    def grad(self, y):
        return self.g + np.asarray(y, dtype=float) @ self.A.T

    def hess(self, y):
        return self.A.copy()

    def to_dict(self):
        return {"kind": "quadratic", "c0": self.c0, "g": self.g.tolist(), "A": self.A.tolist()}


@dataclass(frozen=True)
class GraphSurface:
    """Graph y_{n+1} = psi(y) over the box ``[lower, upper]`` (or all of R^n).

    Parameters
    ----------
    psi : callable
        Height function, vectorized over leading axes.
    grad, hess : callable
        Gradient and Hessian of ``psi``.
    lower, upper : array_like, optional
        The box Omega*.  ``None`` means no restriction.
    density : callable, optional
        Mass density with respect to dy on Omega*; defaults to 1.
    """

    psi: Callable
    grad: Callable
    hess: Callable
    lower: Optional[tuple] = None
    upper: Optional[tuple] = None
    density: Optional[Callable] = None
    orientation_note: str = ""

    @classmethod
    def quadratic(cls, c0, g, A, lower=None, upper=None, density=None, note=""):
        q = QuadraticPsi(c0, g, A)
        lo = None if lower is None else tuple(np.atleast_1d(lower).astype(float))
        hi = None if upper is None else tuple(np.atleast_1d(upper).astype(float))
        return cls(q, q.grad, q.hess, lo, hi, density, note)

    @property
    def dim(self):
        if self.lower is not None:
            return len(self.lower)
        return len(np.atleast_1d(self.grad(np.zeros(1))))

    def in_domain(self, y, slack=0.0):
        if self.lower is None:
            return np.ones(np.shape(y)[:-1], dtype=bool)
        y = np.asarray(y, dtype=float)
        return np.all((y >= np.array(self.lower) - slack) & (y <= np.array(self.upper) + slack), axis=-1)

    def point(self, y):
        """Lift horizontal ``y`` onto the graph."""
        y = np.asarray(y, dtype=float)
        return np.concatenate([y, np.asarray(self.psi(y))[..., None]], axis=-1)

    def density_at(self, y):
        if self.density is None:
            return np.ones(np.shape(y)[:-1])
        return np.asarray(self.density(y), dtype=float)


def _direction_for(v, kappa, mode):
    if mode == "refractor":
        return refraction_direction(v, kappa)[0]
    if mode == "reflector":
        return reflection_direction(v)
    raise ValueError(f"unknown mode {mode!r}")


def _atom_hit(X, Lam, target, angle_tol):
    d = target.points - X
    dist = np.linalg.norm(d, axis=1)
    u = d / dist[:, None]
    # angle between unit vectors, accurate near zero
    ang = 2.0 * np.arctan2(np.linalg.norm(u - Lam, axis=1), np.linalg.norm(u + Lam, axis=1))
    hits = np.flatnonzero(ang <= angle_tol)
    if len(hits) == 0:
        raise RayMissError("ray misses every atom")
    if len(hits) > 1:
        raise AmbiguousIntersectionError(f"ray passes through atoms {hits.tolist()}")
    i = int(hits[0])
    return float(dist[i]), target.points[i].copy(), i


def _graph_s_range(X, Lam, target, s_max):
    """Largest s keeping the horizontal point inside Omega*."""
    if target.lower is None:
        return s_max
    x, lh = X[:-1], Lam[:-1]
    lo, hi = np.array(target.lower), np.array(target.upper)
    s_end = s_max
    # a subnormal direction component overflows to inf, which min() absorbs
    with np.errstate(over="ignore"):
        for k in range(len(x)):
            if lh[k] > 0:
                s_end = min(s_end, (hi[k] - x[k]) / lh[k])
            elif lh[k] < 0:
                s_end = min(s_end, (lo[k] - x[k]) / lh[k])
    return s_end


def _graph_hit(X, Lam, target, s_max, n_scan, tol, max_iter):
    x, xh = X[:-1], X[-1]
    lh, lv = Lam[:-1], Lam[-1]

    def g(s):
        return xh + s * lv - target.psi(x + s * lh)

    def dg(s):
        return lv - np.dot(target.grad(x + s * lh), lh)

    s_end = _graph_s_range(X, Lam, target, s_max)
    if s_end <= 0:
        raise RayMissError("ray leaves the target domain immediately")
    ss = np.linspace(0.0, s_end, n_scan)
    gs = xh + ss * lv - target.psi(x[None, :] + ss[:, None] * lh[None, :])
    sgn = np.sign(gs)
    changes = np.flatnonzero(sgn[:-1] * sgn[1:] <= 0)
    # a node exactly on the graph shows up in two consecutive intervals
    if len(changes) > 1:
        changes = changes[np.concatenate([[True], np.diff(changes) > 1])]
    if len(changes) == 0:
        raise RayMissError("ray does not meet the graph inside its domain")
    if len(changes) > 1:
        raise AmbiguousIntersectionError(
            f"ray meets the graph {len(changes)} times; visibility violated"
        )
    a, b = ss[changes[0]], ss[changes[0] + 1]
    ga = gs[changes[0]]
    if ga == 0.0:
        return float(a)
    s = 0.5 * (a + b)
    for _ in range(max_iter):
        gv = g(s)
        if abs(gv) <= tol:
            return float(s)
        if np.sign(gv) == np.sign(ga):
            a, ga = s, gv
        else:
            b = s
        d = dg(s)
        step = s - gv / d if d != 0 else np.nan
        # Newton step if it stays inside the bracket, bisection otherwise
        s = step if a < step < b else 0.5 * (a + b)
        if b - a <= 1e-15 * max(1.0, b):
            break
    gv = g(s)
    if abs(gv) <= 1e3 * tol:
        return float(s)
    raise ConvergenceError("ray-graph intersection did not converge", residual=float(abs(gv)))


def ray_target_intersection(X, Lam, target, mode="refractor", s_max=1e3, n_scan=2001,
                            tol=1e-12, max_iter=100, angle_tol=ANGLE_TOL):
    """Follow the ray ``X + s Lam`` (s > 0) to the target.

    Parameters
    ----------
    X : array_like, shape (n + 1,)
        Start point.
    Lam : array_like, shape (n + 1,)
        Unit direction.
    target : DiscreteAtoms or GraphSurface
    mode : {"refractor", "reflector"}
        Kept for symmetry with the other entry points; the intersection
        itself does not depend on it.
    s_max : float
        Search range for graph targets without a bounded domain.

    Returns
    -------
    s : float
    Y : ndarray
        Hit point ``X + s Lam``; for atoms the atom itself.

    Raises
    ------
    RayMissError
        No hit within the search range.
    AmbiguousIntersectionError
        Several hits (two atoms on the ray, or several graph crossings).
    """
    if mode not in ("refractor", "reflector"):
        raise ValueError(f"unknown mode {mode!r}")
    X = np.asarray(X, dtype=float)
    Lam = np.asarray(Lam, dtype=float)
    if isinstance(target, DiscreteAtoms):
        s, Y, _ = _atom_hit(X, Lam, target, angle_tol)
        return s, Y
    s = _graph_hit(X, Lam, target, s_max, n_scan, tol, max_iter)
    Y = X + s * Lam
    # put the hit exactly on the graph in the vertical coordinate
    Y[-1] = float(target.psi(Y[:-1]))
    return s, Y


def atom_index(X, Lam, target, angle_tol=ANGLE_TOL):
    """Index of the atom hit by the ray from X in direction Lam."""
    return _atom_hit(np.asarray(X, float), np.asarray(Lam, float), target, angle_tol)[2]


def stretch_H(v, X, target, kappa, **kw):
    """H(v, X) = s_X(Lambda(v)) Q(v) and G = 1 / H."""
    Lam, Q = refraction_direction(v, kappa)
    s, _ = ray_target_intersection(X, Lam, target, "refractor", **kw)
    H = s * float(Q)
    return H, 1.0 / H


def implicit_H_solve(v, X, target, kappa, max_iter=200, tol=1e-12):
    """Solve ``x_{n+1} + H (Q + kappa) / Q = psi(x - H v)`` for H > 0.

    The root is bracketed by expanding from the geometric lower bound
    H = 0 (where the left side is below the graph) and polished by Brent's
    method, independently of :func:`ray_target_intersection`.
    """
    X = np.asarray(X, dtype=float)
    v = np.asarray(v, dtype=float)
    _, Q = refraction_direction(v, kappa)
    Q = float(Q)
    x, xh = X[:-1], X[-1]
    r = (Q + kappa) / Q

    def F(H):
        return xh + H * r - float(target.psi(x - H * v))

    f0 = F(0.0)
    if f0 >= 0:
        raise DomainError("base point is not below the target graph")
    # first step: a horizontal plane at psi(x) would be hit at this H
    hi = max(-f0 / r, 1e-12)
    it = 0
    lo = 0.0
    while F(hi) < 0:
        lo, hi = hi, 2.0 * hi
        it += 1
        if it > max_iter:
            raise ConvergenceError("could not bracket H", residual=abs(F(hi)))
    H, res = brentq(F, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                    maxiter=max_iter, full_output=True, disp=False)
    resid = abs(F(H))
    if not res.converged or resid > tol * max(1.0, abs(xh) + abs(H * r)):
        raise ConvergenceError("implicit equation for H did not converge", residual=resid)
    return float(H)


@dataclass
class WedgeCurve:
    base: np.ndarray
    v_bar: np.ndarray
    v_hat: np.ndarray
    lambdas: np.ndarray
    points: np.ndarray
    s: np.ndarray = field(default=None)

    def v(self, lam):
        return (1.0 - lam) * self.v_bar + lam * self.v_hat


def surface_gradient(x0, Y, X0, kappa, mode="refractor"):
    """Gradient at x0 of the piece with focus Y through X0 (ellipsoid or paraboloid)."""
    if mode == "refractor":
        return phi_gradient(x0, Y, X0, kappa)
    return paraboloid_grad(x0, Y, X0)


def wedge_curve(X0, Y_bar, Y_hat, target, kappa, lambda_grid=None, mode="refractor", **kw):
    """Sample the curve ``[Y_bar, Y_hat]_{X0}`` on the target.

    The gradients ``v_bar, v_hat`` of the pieces through X0 focused at the
    two endpoints are interpolated linearly and each interpolated direction
    is traced from X0.

    Raises
    ------
    PartialCurveError
        If some lambda gives a ray that misses the target.
    """
    X0 = np.asarray(X0, dtype=float)
    lams = np.linspace(0.0, 1.0, 65) if lambda_grid is None else np.atleast_1d(
        np.asarray(lambda_grid, dtype=float))
    x0 = X0[:-1]
    vb = surface_gradient(x0, Y_bar, X0, kappa, mode)
    vh = surface_gradient(x0, Y_hat, X0, kappa, mode)
    pts, ss, bad = [], [], []
    for lam in lams:
        v = (1.0 - lam) * vb + lam * vh
        try:
            s, Y = ray_target_intersection(X0, _direction_for(v, kappa, mode), target, mode, **kw)
        except (RayMissError, AmbiguousIntersectionError, ConvergenceError):
            bad.append(float(lam))
            continue
        pts.append(Y)
        ss.append(s)
    if bad:
        raise PartialCurveError(f"{len(bad)} wedge samples missed the target", bad)
    return WedgeCurve(X0, vb, vh, lams, np.array(pts), np.array(ss))


def tip_curve_nonplanarity(v_bar, v_hat, kappa, lambdas=None, mode="refractor"):
    """Max distance of the directions Lambda(v(lambda)) to span{Lambda(v_bar), Lambda(v_hat)}."""
    lams = np.linspace(0.0, 1.0, 201) if lambdas is None else np.asarray(lambdas)
    vb, vh = np.asarray(v_bar, float), np.asarray(v_hat, float)
    a = _direction_for(vb, kappa, mode)
    b = _direction_for(vh, kappa, mode)
    basis, _ = np.linalg.qr(np.stack([a, b], axis=1))
    vs = (1.0 - lams)[:, None] * vb + lams[:, None] * vh
    L = _direction_for(vs, kappa, mode)
    resid = L - (L @ basis) @ basis.T
    return float(np.max(np.linalg.norm(resid, axis=1)))


class BilipschitzBounds(NamedTuple):
    c_low: float
    c_high: float
    n_used: int


def v_Y_bilipschitz_check(X0, target, kappa, sample_pairs, mode="refractor"):
    """Empirical extremes of ``|v_bar - v_hat| / |Y_bar - Y_hat|`` over pairs.

    Pairs with coincident points are skipped; if nothing is left the bounds
    are NaN and ``n_used`` is 0.
    """
    X0 = np.asarray(X0, dtype=float)
    x0 = X0[:-1]
    ratios = []
    for Yb, Yh in sample_pairs:
        Yb, Yh = np.asarray(Yb, float), np.asarray(Yh, float)
        dY = np.linalg.norm(Yb - Yh)
        if dY == 0.0:
            continue
        vb = surface_gradient(x0, Yb, X0, kappa, mode)
        vh = surface_gradient(x0, Yh, X0, kappa, mode)
        ratios.append(np.linalg.norm(vb - vh) / dY)
    if not ratios:
        return BilipschitzBounds(float("nan"), float("nan"), 0)
    r = np.array(ratios)
    return BilipschitzBounds(float(r.min()), float(r.max()), len(r))


def sample_graph_points(target, rng, size):
    """Uniform samples of the graph over its box domain."""
    if target.lower is None:
        raise DomainError("sampling needs a bounded target domain")
    y = rng.uniform(target.lower, target.upper, size=(size, len(target.lower)))
    return target.point(y)
