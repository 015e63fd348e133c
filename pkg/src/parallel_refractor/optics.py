"""
Geometry of vertical ray bundles hitting ellipsoids and paraboloids.

Points of R^{n+1} are plain numpy arrays whose last entry is the height;
``x`` always denotes a horizontal position in R^n.  Refraction happens from
a medium of index n1 (below) into a denser medium n2 (above), with
``kappa = n1 / n2`` in (0, 1).  Lower halves of the ellipsoids

    |X - Y| + kappa (x_{n+1} - y_{n+1}) = b

focus a vertical bundle at ``Y``; downward paraboloids

    |X - Y| + x_{n+1} - y_{n+1} = b

reflect a vertical bundle into ``Y``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, OutOfDomainError

EPS_DOM = 1e-14


def split(X):
    """Return ``(x, x_{n+1})`` for a point (or stack of points) of R^{n+1}."""
    X = np.asarray(X, dtype=float)
    return X[..., :-1], X[..., -1]


def lift(x, height):
    """Join horizontal coordinates and heights into points of R^{n+1}."""
    x = np.asarray(x, dtype=float)
    height = np.broadcast_to(np.asarray(height, dtype=float), x.shape[:-1])
    return np.concatenate([x, height[..., None]], axis=-1)


@dataclass(frozen=True)
class OpticalConfig:
    """Global constants of the geometry.

    Parameters
    ----------
    kappa : float
        Ratio n1/n2 of refractive indices, in (0, 1).
    delta : float
        Aperture parameter of the refractor admissible region, in (0, 1).
    beta_reflector : float
        Margin of the reflector admissible region, positive.
    """

    kappa: float = 0.5
    delta: float = 0.9
    beta_reflector: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise DomainError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.beta_reflector > 0.0:
            raise DomainError("beta_reflector must be positive")

    @property
    def beta(self):
        """Lower bound sqrt(1 - delta^2) for the ellipsoid slack."""
        return float(np.sqrt(1.0 - self.delta**2))


@dataclass(frozen=True)
class Cylinder:
    """The set Omega x (0, M) of admissible surface points.

    Omega is the box ``[lower, upper]``; with ``ball=True`` it is the ball
    inscribed in that box (the box must then be a cube).
    """

    lower: tuple
    upper: tuple
    height: float
    ball: bool = False

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DomainError("lower and upper must be vectors of equal length")
        if np.any(hi <= lo):
            raise DomainError("Omega must be nonempty")
        if not self.height > 0:
            raise DomainError("cylinder height must be positive")
        if self.ball and not np.allclose(hi - lo, hi[0] - lo[0]):
            raise DomainError("a ball domain needs a cubic bounding box")
        object.__setattr__(self, "lower", tuple(lo))
        object.__setattr__(self, "upper", tuple(hi))

    @property
    def dim(self):
        return len(self.lower)

    @property
    def center(self):
        return 0.5 * (np.array(self.lower) + np.array(self.upper))

    @property
    def radius(self):
        return 0.5 * (self.upper[0] - self.lower[0])

    @property
    def volume(self):
        if self.ball:
            from scipy.special import gamma

            n = self.dim
            return np.pi ** (n / 2) / gamma(n / 2 + 1) * self.radius**n
        return float(np.prod(np.array(self.upper) - np.array(self.lower)))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.ball:
            return np.linalg.norm(x - self.center, axis=-1) <= self.radius
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def corners(self):
        """Extreme points of the closure of Omega, shape (k, n)."""
        lo, hi = np.array(self.lower), np.array(self.upper)
        if self.ball:
            eye = np.eye(self.dim) * self.radius
            return np.concatenate([self.center + eye, self.center - eye])
        mesh = np.meshgrid(*[(a, b) for a, b in zip(lo, hi)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def grid(self, per_axis=32):
        """Points of the closed domain: tensor grid plus the corners."""
        lo, hi = np.array(self.lower), np.array(self.upper)
        axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        if self.ball:
            pts = pts[self.contains(pts)]
        return np.concatenate([pts, self.corners()])

    def max_distance(self, y):
        """sup over Omega of |x - y|."""
        y = np.asarray(y, dtype=float)
        if self.ball:
            return float(np.linalg.norm(self.center - y) + self.radius)
        return float(np.max(np.linalg.norm(self.corners() - y, axis=-1)))

    def sample(self, rng, size):
        lo, hi = np.array(self.lower), np.array(self.upper)
        if not self.ball:
            return rng.uniform(lo, hi, size=(size, self.dim))
        out = []
        while sum(len(o) for o in out) < size:
            pts = rng.uniform(lo, hi, size=(2 * size, self.dim))
            out.append(pts[self.contains(pts)])
        return np.concatenate(out)[:size]


@dataclass(frozen=True)
class EllipsoidPiece:
    """Ellipsoid E(Y, b) with upper focus ``focus`` and parameter ``b``."""

    focus: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "focus", np.asarray(self.focus, dtype=float))
        if not self.b > 0:
            raise DomainError(f"ellipsoid parameter must be positive, got {self.b}")

    @classmethod
    def through(cls, X, Y, kappa):
        """The unique ellipsoid with upper focus Y passing through X."""
        return cls(Y, float(focal_parameter(X, Y, kappa)))

    def domain_radius(self, kappa):
        return self.b / np.sqrt(1.0 - kappa**2)


@dataclass(frozen=True)
class ParaboloidPiece:
    """Downward paraboloid with focus ``focus`` and parameter ``b``."""

    focus: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "focus", np.asarray(self.focus, dtype=float))
        if not self.b > 0:
            raise DomainError(f"paraboloid parameter must be positive, got {self.b}")

    @classmethod
    def through(cls, X, Y):
        return cls(Y, float(paraboloid_parameter(X, Y)))


def refraction_direction(v, kappa):
    """Unit direction of a vertical ray refracted by a plane of slope ``v``.

    Parameters
    ----------
    v : array_like, shape (..., n)
        Gradient of the refracting surface.
    kappa : float
        n1 / n2, in (0, 1).

    Returns
    -------
    Lambda : ndarray, shape (..., n + 1)
        ``(-Q v, Q + kappa)``, a unit vector.
    Q : ndarray, shape (...)
        ``(sqrt(1 + (1 - kappa^2)|v|^2) - kappa) / (1 + |v|^2)``, positive.
    """
    v = np.asarray(v, dtype=float)
    vv = np.sum(v * v, axis=-1)
    Q = (np.sqrt(1.0 + (1.0 - kappa**2) * vv) - kappa) / (1.0 + vv)
    Lam = np.concatenate([-Q[..., None] * v, (Q + kappa)[..., None]], axis=-1)
    return Lam, Q


def reflection_direction(v):
    """Unit direction ``(2v, |v|^2 - 1) / (1 + |v|^2)`` of a reflected vertical ray."""
    v = np.asarray(v, dtype=float)
    vv = np.sum(v * v, axis=-1)[..., None]
    return np.concatenate([2.0 * v, vv - 1.0], axis=-1) / (1.0 + vv)


def focal_parameter(X, Y, kappa):
    """c(X, Y) = |X - Y| + kappa (x_{n+1} - y_{n+1}).

    This is the parameter b of the ellipsoid with upper focus Y through X.
    Broadcasts over leading axes.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    d = np.linalg.norm(X - Y, axis=-1)
    if np.any(d == 0.0):
        raise DomainError("focal parameter undefined for coincident points")
    return d + kappa * (X[..., -1] - Y[..., -1])


def paraboloid_parameter(X, Y):
    """b = |X - Y| + x_{n+1} - y_{n+1} for the paraboloid with focus Y through X."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    b = np.linalg.norm(X - Y, axis=-1) + X[..., -1] - Y[..., -1]
    if np.any(b <= 0.0):
        raise DomainError("base point lies on the vertical ray below the focus")
    return b


def _radicand(x, piece, kappa):
    x = np.asarray(x, dtype=float)
    y = piece.focus[:-1]
    k2 = 1.0 - kappa**2
    r2 = np.sum((x - y) ** 2, axis=-1)
    return piece.b**2 / k2**2 - r2 / k2


def ellipsoid_height(x, piece, kappa):
    """Height of the lower half of ``piece`` above the horizontal point(s) ``x``.

    Raises
    ------
    OutOfDomainError
        If some ``x`` is not strictly inside the projection ball of radius
        ``b / sqrt(1 - kappa^2)``.
    """
    rad = _radicand(x, piece, kappa)
    if np.any(rad < EPS_DOM):
        raise OutOfDomainError("point outside the projection of the ellipsoid")
    return piece.focus[-1] - kappa * piece.b / (1.0 - kappa**2) - np.sqrt(rad)


def ellipsoid_heights_masked(x, piece, kappa):
    """Like :func:`ellipsoid_height` but returns NaN outside the domain."""
    rad = _radicand(x, piece, kappa)
    with np.errstate(invalid="ignore"):
        h = piece.focus[-1] - kappa * piece.b / (1.0 - kappa**2) - np.sqrt(rad)
    return np.where(rad >= EPS_DOM, h, np.nan)


def ellipsoid_gradient(x, piece, kappa):
    """D_x phi, vectorized over leading axes of ``x``."""
    rad = _radicand(x, piece, kappa)
    if np.any(rad < EPS_DOM):
        raise OutOfDomainError("point outside the projection of the ellipsoid")
    R = np.sqrt(rad)
    return (np.asarray(x, dtype=float) - piece.focus[:-1]) / ((1.0 - kappa**2) * R)[..., None]


@dataclass
class EllipsoidDerivatives:
    height: float
    grad_x: np.ndarray
    hess_xx: np.ndarray
    mixed_xY: Optional[np.ndarray] = None
    d_base_height: Optional[float] = None


def ellipsoid_derivatives(x, piece, kappa, base=None):
    """Analytic derivatives of the lower ellipsoid at one point ``x``.

    ``grad_x`` and ``hess_xx`` hold ``b`` fixed.  When ``base`` (a point X0
    with ``c(X0, Y) = b``) is given, the ellipsoid is regarded as the one
    through X0, so that ``b = c(X0, Y)`` moves with Y and X0; then
    ``mixed_xY[i, j]`` is d^2 phi / dx_i dy_j (j over all n+1 coordinates of
    the focus) and ``d_base_height`` is d phi / d x0_{n+1}.
    """
    x = np.asarray(x, dtype=float)
    Y = piece.focus
    y = Y[:-1]
    k2 = 1.0 - kappa**2
    rad = _radicand(x, piece, kappa)
    if rad < EPS_DOM:
        raise OutOfDomainError("point outside the projection of the ellipsoid")
    R = np.sqrt(rad)
    d = x - y
    n = x.shape[-1]
    height = Y[-1] - kappa * piece.b / k2 - R
    grad = d / (k2 * R)
    hess = np.eye(n) / (k2 * R) + np.outer(d, d) / (k2**2 * R**3)
    out = EllipsoidDerivatives(float(height), grad, hess)
    if base is None:
        return out

    X0 = np.asarray(base, dtype=float)
    b = piece.b
    c0 = focal_parameter(X0, Y, kappa)
    if abs(c0 - b) > 1e-9 * max(1.0, b):
        raise DomainError("base point does not lie on the ellipsoid")
    dist0 = np.linalg.norm(X0 - Y)
    # db/dY_j and db/dx0_{n+1}
    db_dY = -(X0 - Y) / dist0
    db_dY[-1] -= kappa
    db_dh0 = (X0[-1] - Y[-1]) / dist0 + kappa
    # dR/dY_j: the |x - y|^2 term only moves with horizontal j
    dR_dY = (b * db_dY / k2**2) / R
    dR_dY[:-1] += (d / k2) / R
    mixed = np.zeros((n, n + 1))
    mixed[:, :-1] -= np.eye(n) * R
    mixed -= np.outer(d, dR_dY)
    mixed /= k2 * R**2
    out.mixed_xY = mixed
    out.d_base_height = float(-db_dh0 * (kappa / k2 + b / (k2**2 * R)))
    return out


@dataclass
class ParaboloidDerivatives:
    height: float
    grad_x: np.ndarray
    hess_xx: np.ndarray
    mixed_xY: Optional[np.ndarray] = None
    d_base_height: Optional[float] = None


def paraboloid_height(x, piece):
    """p(x) = y_{n+1} + (b^2 - |x - y|^2) / (2b), vectorized."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum((x - piece.focus[:-1]) ** 2, axis=-1)
    return piece.focus[-1] + (piece.b**2 - r2) / (2.0 * piece.b)


def paraboloid_gradient(x, piece):
    return -(np.asarray(x, dtype=float) - piece.focus[:-1]) / piece.b


def paraboloid_height_and_derivatives(x, piece, base=None):
    """Height, gradient and Hessian (``-I/b``) of the paraboloid at ``x``.

    With ``base`` given, also the mixed x-Y derivatives and the derivative
    in the base height, with ``b`` tied to the base as for ellipsoids.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    Y = piece.focus
    b = piece.b
    d = x - Y[:-1]
    out = ParaboloidDerivatives(
        float(paraboloid_height(x, piece)), -d / b, -np.eye(n) / b
    )
    if base is None:
        return out
    X0 = np.asarray(base, dtype=float)
    if abs(paraboloid_parameter(X0, Y) - b) > 1e-9 * max(1.0, b):
        raise DomainError("base point does not lie on the paraboloid")
    dist0 = np.linalg.norm(X0 - Y)
    db_dY = -(X0 - Y) / dist0
    db_dY[-1] -= 1.0
    db_dh0 = (X0[-1] - Y[-1]) / dist0 + 1.0
    mixed = np.outer(d, db_dY) / b**2
    mixed[:, :-1] += np.eye(n) / b
    out.mixed_xY = mixed
    dp_db = 0.5 + np.dot(d, d) / (2.0 * b**2)
    out.d_base_height = float(dp_db * db_dh0)
    return out


@dataclass
class AdmissibilityReport:
    admissible: bool
    margin: float
    worst_point: np.ndarray
    beta_margin: Optional[float] = None
    distance: float = float("nan")


def admissible_region_check(Y, cyl, cfg, mode="refractor", resolution=32):
    """Check that a target point lies in the admissible region.

    The conditions are tested on a grid over the closed cylinder, corners
    included; ``margin`` is the worst slack (negative means violated).

    For ``mode="refractor"`` every X0 of the cylinder must sit on the lower
    half of E(Y, c(X0, Y)), and Omega must fit in the ball of radius
    ``delta c(X0, Y) / sqrt(1 - kappa^2)`` about y.  ``beta_margin`` reports
    the worst value of ``y_{n+1} - x_{n+1} - kappa|X - Y| - beta c(X, Y)``.

    For ``mode="reflector"`` the condition is
    ``|X - Y| + x_{n+1} - y_{n+1} >= beta_reflector``.
    """
    Y = np.asarray(Y, dtype=float)
    kappa = cfg.kappa
    xs = cyl.grid(resolution)
    hs = np.linspace(0.0, cyl.height, resolution)
    X = lift(np.repeat(xs, len(hs), axis=0), np.tile(hs, len(xs)))
    dist = np.linalg.norm(X - Y, axis=-1)

    if mode == "reflector":
        slack = dist + X[:, -1] - Y[-1] - cfg.beta_reflector
        i = int(np.argmin(slack))
        return AdmissibilityReport(
            bool(slack[i] >= 0), float(slack[i]), X[i], distance=float(dist.min())
        )
    if mode != "refractor":
        raise ValueError(f"unknown mode {mode!r}")

    c = dist + kappa * (X[:, -1] - Y[-1])
    lower = Y[-1] - X[:, -1] - kappa * dist
    ball = cfg.delta * c / np.sqrt(1.0 - kappa**2) - cyl.max_distance(Y[:-1])
    slack = np.minimum(lower, ball)
    i = int(np.argmin(slack))
    beta_margin = float(np.min(lower - cfg.beta * c))
    return AdmissibilityReport(
        bool(slack[i] > 0), float(slack[i]), X[i], beta_margin, float(dist.min())
    )


def phi(x, Y, X0, kappa):
    """Height at ``x`` of the lower ellipsoid with focus Y passing through X0."""
    return ellipsoid_height(x, EllipsoidPiece.through(X0, Y, kappa), kappa)


def phi_gradient(x, Y, X0, kappa):
    """D_x phi(x, Y, X0)."""
    return ellipsoid_gradient(x, EllipsoidPiece.through(X0, Y, kappa), kappa)


def paraboloid(x, Y, X0):
    """Height at ``x`` of the paraboloid with focus Y passing through X0."""
    return paraboloid_height(x, ParaboloidPiece.through(X0, Y))


def paraboloid_grad(x, Y, X0):
    return paraboloid_gradient(x, ParaboloidPiece.through(X0, Y))
