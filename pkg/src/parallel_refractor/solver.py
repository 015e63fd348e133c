"""
Semi-discrete refractors and reflectors.

A surface is the min or max of finitely many ellipsoid (refractor) or
paraboloid (reflector) pieces, one per target atom.  The solver adjusts the
focal parameters one atom at a time by bisection until the source mass
collected by every piece matches the atom weight.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConvergenceError, DomainError, InfeasibleAtomError, OutOfDomainError
from .optics import (
    EllipsoidPiece,
    ParaboloidPiece,
    focal_parameter,
    lift,
    paraboloid_parameter,
)

log = logging.getLogger(__name__)

MODES = ("RefractorAbove", "RefractorBelow", "ReflectorBelow", "ReflectorAbove")
TIE_EPS = 1e-12

# sign of d(mass_j)/d(b_j) for each composition
_GAIN = {"RefractorAbove": 1, "RefractorBelow": -1, "ReflectorBelow": 1, "ReflectorAbove": -1}


def _is_min(mode):
    return mode in ("RefractorAbove", "ReflectorAbove")


def _is_refractor(mode):
    return mode.startswith("Refractor")


@dataclass(frozen=True)
class PiecewiseSurface:
    """Min or max composition of ellipsoids or paraboloids.

    Parameters
    ----------
    mode : str
        One of ``RefractorAbove`` (min of ellipsoids), ``RefractorBelow``
        (max of ellipsoids), ``ReflectorBelow`` (max of paraboloids) and
        ``ReflectorAbove`` (min of paraboloids).
    foci : array_like, shape (N, n + 1)
    b : array_like, shape (N,)
    kappa : float
        Ignored for reflectors.
    cylinder : Cylinder, optional
    strict : bool
        If True, evaluating an ellipsoid outside its domain raises; if False
        the piece is skipped there (it counts as +inf in a min and -inf in
        a max).
    """

    mode: str
    foci: np.ndarray
    b: np.ndarray
    kappa: float = 0.5
    cylinder: object = None
    strict: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown mode {self.mode!r}")
        foci = np.atleast_2d(np.asarray(self.foci, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if len(b) != len(foci):
            raise DomainError("one parameter per focus is required")
        if np.any(b <= 0):
            raise DomainError("piece parameters must be positive")
        object.__setattr__(self, "foci", foci)
        object.__setattr__(self, "b", b)

    @property
    def n_pieces(self):
        return len(self.b)

    @property
    def dim(self):
        return self.foci.shape[1] - 1

    def with_b(self, b):
        return PiecewiseSurface(self.mode, self.foci, np.asarray(b, float), self.kappa,
                                self.cylinder, self.strict)

    def piece(self, i):
        if _is_refractor(self.mode):
            return EllipsoidPiece(self.foci[i], self.b[i])
        return ParaboloidPiece(self.foci[i], self.b[i])

    def _heights_raw(self, xs, foci, b):
        """Heights (m, k) with NaN outside ellipsoid domains."""
        xs = np.atleast_2d(xs)
        r2 = np.sum((xs[:, None, :] - foci[None, :, :-1]) ** 2, axis=-1)
        if not _is_refractor(self.mode):
            return foci[None, :, -1] + (b[None, :] ** 2 - r2) / (2.0 * b[None, :])
        k2 = 1.0 - self.kappa**2
        rad = b[None, :] ** 2 / k2**2 - r2 / k2
        with np.errstate(invalid="ignore"):
            h = foci[None, :, -1] - self.kappa * b[None, :] / k2 - np.sqrt(rad)
        return np.where(rad >= 1e-14, h, np.nan)

    def piece_heights(self, xs, idx=None):
        """Heights of all (or the selected) pieces at points ``xs``, shape (m, k)."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        sel = slice(None) if idx is None else idx
        h = self._heights_raw(xs, self.foci[sel], self.b[sel])
        if self.strict and np.isnan(h).any():
            raise OutOfDomainError("surface not admissible on Omega: a piece is undefined")
        return h

    def piece_height(self, i, x):
        return float(self.piece_heights(np.atleast_1d(x)[None, :], [i])[0, 0])

    def _compose(self, H):
        fill = np.inf if _is_min(self.mode) else -np.inf
        Hf = np.where(np.isnan(H), fill, H)
        if _is_min(self.mode):
            idx = np.argmin(Hf, axis=1)
        else:
            idx = np.argmax(Hf, axis=1)
        val = Hf[np.arange(len(Hf)), idx]
        if np.any(~np.isfinite(val)):
            raise OutOfDomainError("no piece is defined at some point")
        gap = np.abs(Hf - val[:, None])
        gap[np.arange(len(Hf)), idx] = np.inf
        near = np.min(gap, axis=1) <= TIE_EPS if H.shape[1] > 1 else np.zeros(len(Hf), bool)
        return val, idx, near

    def evaluate_many(self, xs):
        """Vectorized :meth:`evaluate`: (heights, active indices, near-tie flags)."""
        return self._compose(self.piece_heights(xs))

    def evaluate(self, x):
        """Height, active piece (lowest index on ties) and near-tie flag at ``x``."""
        v, i, t = self.evaluate_many(np.atleast_1d(np.asarray(x, float))[None, :])
        return float(v[0]), int(i[0]), bool(t[0])

    def heights(self, xs):
        return self.evaluate_many(xs)[0]

    def height(self, x):
        return self.evaluate(x)[0]

    def defined(self, xs):
        """Mask of points where at least one piece is defined."""
        H = self._heights_raw(np.atleast_2d(xs), self.foci, self.b)
        return ~np.all(np.isnan(H), axis=1)

    def piece_gradient(self, i, x):
        x = np.asarray(x, dtype=float)
        y = self.foci[i, :-1]
        if not _is_refractor(self.mode):
            return -(x - y) / self.b[i]
        k2 = 1.0 - self.kappa**2
        R = np.sqrt(self.b[i] ** 2 / k2**2 - np.sum((x - y) ** 2) / k2)
        return (x - y) / (k2 * R)

    def piece_hessian_norm(self, i, x):
        """Spectral norm of the Hessian of piece i at x."""
        x = np.asarray(x, dtype=float)
        if not _is_refractor(self.mode):
            return 1.0 / self.b[i]
        k2 = 1.0 - self.kappa**2
        r2 = np.sum((x - self.foci[i, :-1]) ** 2, axis=-1)
        R = np.sqrt(self.b[i] ** 2 / k2**2 - r2 / k2)
        # eigenvalues 1/(k2 R) and 1/(k2 R) + r^2/(k2^2 R^3)
        return 1.0 / (k2 * R) + r2 / (k2**2 * R**3)


@dataclass
class SourceDensity:
    """Source measure f dx on Omega with midpoint quadrature on a tensor grid.

    Parameters
    ----------
    cylinder : Cylinder
    grid : int
        Cells per axis.
    f : callable, optional
        Density, vectorized over points of shape (m, n).  Uniform if None.
    values : array_like, optional
        Tabulated density at the cell centers (shape ``(grid,) * n``);
        overrides ``f``.
    """

    cylinder: object
    grid: int = 2000
    f: Optional[Callable] = None
    values: Optional[np.ndarray] = None
    points: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)
    cell: np.ndarray = field(init=False)

    def __post_init__(self):
        cyl = self.cylinder
        lo, hi = np.array(cyl.lower), np.array(cyl.upper)
        h = (hi - lo) / self.grid
        axes = [lo[k] + h[k] * (np.arange(self.grid) + 0.5) for k in range(cyl.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        if self.values is not None:
            dens = np.asarray(self.values, dtype=float).reshape(-1)
            if len(dens) != len(pts):
                raise DomainError("tabulated density has the wrong size")
        elif self.f is not None:
            dens = np.asarray(self.f(pts), dtype=float).reshape(-1)
        else:
            dens = np.ones(len(pts))
        if np.any(dens < 0):
            raise DomainError("source density must be nonnegative")
        keep = cyl.contains(pts) if cyl.ball else np.ones(len(pts), bool)
        self.points = pts[keep]
        self.density = dens[keep]
        self.weights = dens[keep] * float(np.prod(h))
        self.cell = h
        full = np.full(len(pts), -1)
        full[keep] = np.arange(int(keep.sum()))
        self.full_index = full.reshape((self.grid,) * cyl.dim)

    @property
    def total(self):
        return float(self.weights.sum())


def tracing_measure(surface, source):
    """Source mass collected by each piece: mu(T_u(Y_i)).

    Each quadrature cell goes wholly to the piece active at its center,
    ties going to the lowest index.
    """
    _, idx, _ = surface.evaluate_many(source.points)
    return np.bincount(idx, weights=source.weights, minlength=surface.n_pieces)


def refractor_map(surface, x, target=None, angle_tol=None):
    """Indices of the pieces attaining the composition at ``x`` within the tie tolerance."""
    H = surface.piece_heights(np.atleast_1d(np.asarray(x, float))[None, :])[0]
    val, i, _ = surface._compose(H[None, :])
    Hf = np.where(np.isnan(H), np.inf if _is_min(surface.mode) else -np.inf, H)
    hits = set(np.flatnonzero(np.abs(Hf - val[0]) <= TIE_EPS).tolist())
    hits.add(int(i[0]))
    return hits


def gradient(surface, x):
    """Gradient of the active piece at ``x`` and the near-tie flag."""
    _, i, tie = surface.evaluate(x)
    return surface.piece_gradient(i, np.atleast_1d(np.asarray(x, float))), tie


@dataclass
class SolverConfig:
    tol_mass: float = 1e-3
    grid: int = 2000
    max_outer: int = 10_000
    mode: str = "RefractorAbove"
    anchor_height: Optional[float] = None
    max_bisect: int = 60
    method: str = "bisection"
    max_newton: int = 100


@dataclass
class SolveReport:
    b: list
    residuals: list
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    heights_in_range: bool = True

    def to_dict(self):
        return {
            "b": list(map(float, self.b)),
            "residuals": list(map(float, self.residuals)),
            "iterations": self.iterations,
            "converged": self.converged,
            "max_residual_history": [float(r) for r in self.history],
            "heights_in_range": self.heights_in_range,
        }


def _param_through(X, Y, kappa, mode):
    if _is_refractor(mode):
        return float(focal_parameter(X, Y, kappa))
    return float(paraboloid_parameter(X, Y))


class _PieceSolver:
    """Mass of one piece as a function of its parameter, others frozen."""

    def __init__(self, surface, source, j):
        self.s = surface
        self.src = source
        self.j = j
        others = [k for k in range(surface.n_pieces) if k != j]
        H = surface.piece_heights(source.points)
        self.is_min = _is_min(surface.mode)
        fill = np.inf if self.is_min else -np.inf
        red = np.min if self.is_min else np.max
        lo = [k for k in others if k < j]
        hi = [k for k in others if k > j]
        self.best_lo = red(H[:, lo], axis=1) if lo else np.full(len(H), fill)
        self.best_hi = red(H[:, hi], axis=1) if hi else np.full(len(H), fill)

    def heights(self, b):
        s = self.s
        return s._heights_raw(self.src.points, s.foci[[self.j]], np.array([b]))[:, 0]

    def mass(self, b):
        h = self.heights(b)
        if np.isnan(h).any():
            raise OutOfDomainError("piece undefined on Omega")
        if self.is_min:
            win = (h < self.best_lo) & (h <= self.best_hi)
        else:
            win = (h > self.best_lo) & (h >= self.best_hi)
        return float(self.src.weights[win].sum())


def _b_min(surface, j, cyl):
    """Smallest parameter keeping piece j defined on Omega."""
    if not _is_refractor(surface.mode):
        return 1e-12
    rmax = cyl.max_distance(surface.foci[j, :-1])
    return np.sqrt(1.0 - surface.kappa**2) * rmax * (1.0 + 1e-9) + 1e-300


def _solve_piece(surface, source, j, sigma_j, cfg, ztol):
    """Move b_j so that piece j's mass is as close as possible to sigma_j."""
    ps = _PieceSolver(surface, source, j)
    gain = _GAIN[surface.mode]
    b0 = float(surface.b[j])
    bmin = _b_min(surface, j, surface.cylinder)

    def res(b):
        return ps.mass(b) - sigma_j

    r0 = res(b0)
    if abs(r0) <= ztol:
        return b0
    # direction in b that raises the mass
    up = gain if r0 < 0 else -gain
    a, ra = b0, r0
    step = max(0.05 * b0, 1e-6)
    for _ in range(200):
        if up > 0:
            c = a + step
            step *= 2.0
        else:
            c = bmin + 0.5 * (a - bmin)
            if c - bmin <= 1e-14 * bmin:
                raise InfeasibleAtomError(
                    f"atom {j} cannot reach its mass inside the domain", atom=j)
        rc = res(c)
        if np.sign(rc) != np.sign(ra) or abs(rc) <= ztol:
            break
        a, ra = c, rc
    else:
        raise InfeasibleAtomError(f"atom {j} cannot reach its mass", atom=j)
    # bracket [a, c] with res changing sign (or c a zero)
    if abs(rc) <= ztol:
        mid = c
        # find a point past the plateau on the far side
        for _ in range(200):
            c = c + (c - a) if c > a else bmin + 0.5 * (c - bmin)
            if abs(res(c)) > ztol or (c < a and c - bmin <= 1e-14 * bmin):
                break
    else:
        mid = None
        for _ in range(cfg.max_bisect):
            m = 0.5 * (a + c)
            rm = res(m)
            if abs(rm) <= ztol:
                mid = m
                break
            if np.sign(rm) == np.sign(ra):
                a, ra = m, rm
            else:
                c, rc = m, rm
        if mid is None:
            return a if abs(ra) <= abs(rc) else c
    # a zero plateau: return its midpoint
    left = _plateau_edge(res, a, mid, ztol, cfg.max_bisect)
    right = _plateau_edge(res, c, mid, ztol, cfg.max_bisect)
    return 0.5 * (left + right)


def _plateau_edge(res, outside, inside, ztol, steps):
    """Edge of the set {|res| <= ztol} between a nonzero and a zero point."""
    if abs(res(outside)) <= ztol:
        return outside
    for _ in range(steps):
        m = 0.5 * (outside + inside)
        if abs(res(m)) <= ztol:
            inside = m
        else:
            outside = m
    return inside


def _d_height_d_b(surface, xs, k):
    """Derivative of piece k's height in its parameter at points xs."""
    y = surface.foci[k, :-1]
    b = surface.b[k]
    r2 = np.sum((xs - y) ** 2, axis=-1)
    if not _is_refractor(surface.mode):
        return 0.5 + r2 / (2.0 * b**2)
    k2 = 1.0 - surface.kappa**2
    R = np.sqrt(b**2 / k2**2 - r2 / k2)
    return -surface.kappa / k2 - b / (k2**2 * R)


def mass_jacobian(surface, source):
    """Derivative of the collected masses in the parameters, from interface fluxes.

    Neighbouring grid cells owned by different pieces j, k straddle the
    interface.  Raising b_k moves the interface by the height change of
    piece k divided by the jump of gradients; each such pair contributes
    the swept volume ``h^{n-1} f |nu_a| / |grad(phi_j - phi_k)|`` per unit
    height change, weighted by the normal component along the pair axis so
    that the sum over axes is the interface integral.
    """
    N = surface.n_pieces
    n = surface.dim
    _, idx, _ = surface.evaluate_many(source.points)
    full = source.full_index
    J = np.zeros((N, N))
    sgn = -1.0 if _is_min(surface.mode) else 1.0
    for a in range(n):
        c0 = np.take(full, np.arange(source.grid - 1), axis=a).ravel()
        c1 = np.take(full, np.arange(1, source.grid), axis=a).ravel()
        ok = (c0 >= 0) & (c1 >= 0)
        c0, c1 = c0[ok], c1[ok]
        diff = idx[c0] != idx[c1]
        c0, c1 = c0[diff], c1[diff]
        if len(c0) == 0:
            continue
        xm = 0.5 * (source.points[c0] + source.points[c1])
        fm = 0.5 * (source.density[c0] + source.density[c1])
        area = float(np.prod(source.cell)) / source.cell[a]
        pj, pk = idx[c0], idx[c1]
        for t in range(len(c0)):
            j, k = int(pj[t]), int(pk[t])
            g = surface.piece_gradient(j, xm[t]) - surface.piece_gradient(k, xm[t])
            gn = np.linalg.norm(g)
            if gn == 0:
                continue
            w = area * fm[t] * abs(g[a]) / gn**2
            for p, q in ((j, k), (k, j)):
                sp = sgn * float(_d_height_d_b(surface, xm[t], p))
                J[p, p] += w * sp
                J[q, p] -= w * sp
    return J


def _repair_empty(surface, source, sigma, cfg, ztol, fixed=0, rounds=20):
    """Give every piece without mass its weight, repeating while some stay empty."""
    for _ in range(rounds):
        m = tracing_measure(surface, source)
        empty = [j for j in range(surface.n_pieces) if j != fixed and m[j] == 0.0]
        if not empty:
            break
        for j in empty:
            b = surface.b.copy()
            b[j] = _solve_piece(surface, source, j, sigma[j], cfg, ztol)
            surface = surface.with_b(b)
    return surface


def _newton_phase(surface, source, sigma, cfg, tol, fixed=0):
    """Damped Newton on the free parameters; returns the improved surface.

    Pieces without mass have no Jacobian row, so they are first given mass
    by single-atom bisection.  A step is accepted when it keeps every piece
    nonempty and reduces the largest residual by the usual damping factor.
    """
    ztol = 1e-12 * float(source.total)
    surface = _repair_empty(surface, source, sigma, cfg, ztol, fixed)
    N = surface.n_pieces
    free = np.array([k for k in range(N) if k != fixed])
    bmins = np.array([_b_min(surface, k, source.cylinder) for k in range(N)])
    r = tracing_measure(surface, source) - sigma
    floor = 0.25 * float(np.min(sigma))
    for _ in range(cfg.max_newton):
        err = float(np.max(np.abs(r)))
        if err <= tol:
            break
        J = mass_jacobian(surface, source)
        step = np.zeros(N)
        step[free] = np.linalg.lstsq(J[np.ix_(free, free)], -r[free], rcond=None)[0]
        tau, accepted = 1.0, False
        for _ in range(30):
            b = surface.b + tau * step
            if np.all(b > bmins):
                cand = surface.with_b(b)
                m = tracing_measure(cand, source)
                rc = m - sigma
                if np.min(m) >= min(floor, float(np.min(tracing_measure(surface, source)))) \
                        and np.max(np.abs(rc)) <= (1 - tau / 2) * err:
                    surface, r, accepted = cand, rc, True
                    break
            tau *= 0.5
        if not accepted:
            break
        if np.any(tracing_measure(surface, source) == 0):
            surface = _repair_empty(surface, source, sigma, cfg, ztol, fixed)
            r = tracing_measure(surface, source) - sigma
    return surface


def _coarsen(target):
    """Every other atom, carrying the weights of the atoms nearest to it."""
    from .targets import DiscreteAtoms

    keep = target.points[::2]
    d = np.linalg.norm(target.points[:, None, :] - keep[None, :, :], axis=-1)
    w = np.bincount(np.argmin(d, axis=1), weights=target.weights, minlength=len(keep))
    return DiscreteAtoms(keep, w)


def _supporting_parameters(surface, source, Ys, kappa):
    """Parameters of the pieces with foci Ys that support ``surface`` on the grid."""
    X = lift(source.points, surface.heights(source.points))
    red = np.min if _GAIN[surface.mode] > 0 else np.max
    out = []
    for Y in Ys:
        if _is_refractor(surface.mode):
            out.append(red(focal_parameter(X, Y, kappa)))
        else:
            out.append(red(paraboloid_parameter(X, Y)))
    return np.array(out, dtype=float)


def solve_semidiscrete(source, target, mode=None, cfg=None, kappa=0.5):
    """Find focal parameters so that every atom receives its weight.

    Parameters
    ----------
    source : SourceDensity
    target : DiscreteAtoms
        Weights are rescaled to the source mass if they do not match.
    mode : str, optional
        Composition; defaults to ``cfg.mode``.
    cfg : SolverConfig, optional
    kappa : float
        Index ratio (refractors only).

    Returns
    -------
    surface : PiecewiseSurface
    report : SolveReport

    Raises
    ------
    InfeasibleAtomError
        Some atom cannot collect its weight with its piece defined on Omega.
    """
    cfg = SolverConfig() if cfg is None else cfg
    mode = cfg.mode if mode is None else mode
    cyl = source.cylinder
    total = source.total
    sigma = target.weights * total / target.weights.sum()
    Ys = target.points
    N = len(sigma)
    if len({tuple(p) for p in Ys}) != N:
        raise DomainError("atoms must be pairwise distinct")
    anchor_h = cyl.height / 2 if cfg.anchor_height is None else cfg.anchor_height
    anchor = np.r_[cyl.center, anchor_h]
    b = np.array([_param_through(anchor, Y, kappa, mode) for Y in Ys])
    for j in range(N):
        b[j] = max(b[j], _b_min(PiecewiseSurface(mode, Ys, np.ones(N), kappa), j, cyl))
    surface = PiecewiseSurface(mode, Ys, b, kappa, cyl)
    tol = cfg.tol_mass * total
    ztol = 1e-12 * total
    history = []
    it = 0
    if N > 1 and cfg.method == "newton":
        if N > 8:
            coarse_surface, _ = solve_semidiscrete(source, _coarsen(target), mode, cfg, kappa)
            b = _supporting_parameters(coarse_surface, source, Ys, kappa)
            b = np.maximum(b, [_b_min(surface, j, cyl) for j in range(N)])
            surface = surface.with_b(b)
        surface = _newton_phase(surface, source, sigma, cfg, tol)
    if N > 1:
        # first release any surplus held by pieces other than the anchor
        for _ in range(cfg.max_outer):
            r = tracing_measure(surface, source) - sigma
            over = [k for k in range(1, N) if r[k] > tol]
            if not over:
                break
            j = max(over, key=lambda k: r[k])
            b = surface.b.copy()
            b[j] = _solve_piece(surface, source, j, sigma[j], cfg, ztol)
            surface = surface.with_b(b)
            it += 1
        while it < cfg.max_outer:
            r = tracing_measure(surface, source) - sigma
            history.append(float(np.max(np.abs(r))))
            if history[-1] <= tol:
                break
            rest = r[1:]
            if np.min(rest) < -tol:
                j = 1 + int(np.argmin(rest))
            else:
                j = 1 + int(np.argmax(np.abs(rest)))
            b = surface.b.copy()
            bj = _solve_piece(surface, source, j, sigma[j], cfg, ztol)
            if bj == b[j] and abs(r[j]) <= tol:
                # no single-atom move can improve further
                break
            b[j] = bj
            surface = surface.with_b(b)
            it += 1
    r = tracing_measure(surface, source) - sigma
    converged = bool(np.max(np.abs(r)) <= tol)
    h = surface.heights(source.points)
    in_range = bool(np.all((h > 0) & (h < cyl.height)))
    report = SolveReport(surface.b.tolist(), r.tolist(), it, converged, history, in_range)
    if not converged:
        log.warning("solver stopped with max residual %.3g", np.max(np.abs(r)))
    return surface, report


def semiconvexity_check(surface, triples, hess_points=None):
    """Fit the semiconvexity constant of a min-composed surface.

    Parameters
    ----------
    triples : iterable of (x_bar, x_hat, s)
    hess_points : array_like, optional
        Points where the piece Hessians are measured; defaults to all the
        triple points.

    Returns
    -------
    C_fit : float
        max of ``((1-s) u(x_bar) + s u(x_hat) - u(x_s)) / (s (1-s) |x_bar - x_hat|^2)``.
    worst : tuple
        The triple attaining ``C_fit``.
    sup_hess : float
        Largest Hessian norm of any piece over the points where it is defined.
    """
    trip = [(np.atleast_1d(np.asarray(a, float)), np.atleast_1d(np.asarray(c, float)), float(s))
            for a, c, s in triples]
    trip = [t for t in trip if 0.0 < t[2] < 1.0 and np.any(t[0] != t[1])]
    if not trip:
        return 0.0, None, 0.0
    xb = np.array([t[0] for t in trip])
    xh = np.array([t[1] for t in trip])
    s = np.array([t[2] for t in trip])
    xs = (1 - s)[:, None] * xb + s[:, None] * xh
    ub, uh, us = surface.heights(xb), surface.heights(xh), surface.heights(xs)
    ratio = ((1 - s) * ub + s * uh - us) / (s * (1 - s) * np.sum((xb - xh) ** 2, axis=1))
    k = int(np.argmax(ratio))
    pts = np.concatenate([xb, xh, xs]) if hess_points is None else np.atleast_2d(hess_points)
    H = surface._heights_raw(pts, surface.foci, surface.b)
    sup = 0.0
    for i in range(surface.n_pieces):
        ok = ~np.isnan(H[:, i])
        if ok.any():
            sup = max(sup, float(np.max(surface.piece_hessian_norm(i, pts[ok]))))
    return float(ratio[k]), trip[k], sup


def dual_potential(target_points, surface, kappa, grid_points):
    """u*(y) = min over X = (x, u(x)) on the surface grid of c(X, (y, psi(y))).

    ``target_points`` are points of the target (full coordinates).
    """
    X = lift(grid_points, surface.heights(grid_points))
    Y = np.atleast_2d(np.asarray(target_points, float))
    out = np.empty(len(Y))
    for k in range(len(Y)):
        out[k] = np.min(focal_parameter(X, Y[k], kappa))
    return out


def lipschitz_constant(points, values, rng=None, n_pairs=1000):
    """Largest difference quotient over random pairs."""
    rng = np.random.default_rng(0) if rng is None else rng
    P = np.atleast_2d(points)
    i = rng.integers(0, len(P), n_pairs)
    j = rng.integers(0, len(P), n_pairs)
    d = np.linalg.norm(P[i] - P[j], axis=1)
    ok = d > 0
    return float(np.max(np.abs(values[i] - values[j])[ok] / d[ok]))


def singular_set_estimate(surface, source):
    """Fraction of source mass in cells that meet more than one piece.

    A cell counts when the active piece at one of its corners differs from
    the one at its center.
    """
    pts = source.points
    n = pts.shape[1]
    _, idx, _ = surface.evaluate_many(pts)
    mixed = np.zeros(len(pts), bool)
    half = 0.5 * source.cell
    for signs in np.array(np.meshgrid(*([[-1.0, 1.0]] * n), indexing="ij")).reshape(n, -1).T:
        _, ic, _ = surface.evaluate_many(pts + signs * half)
        mixed |= ic != idx
    return float(source.weights[mixed].sum() / source.total)


@dataclass
class SupportReport:
    holds: bool
    checked: int
    witness: Optional[dict] = None


def global_support_check(surface, grid_points, target_points, local_radius=0.01, tol=1e-12):
    """Check that local support by a target piece implies global support.

    For every grid point x and every target point Y the piece through
    X = (x, u(x)) with focus Y is compared with u: first on the grid points
    within ``local_radius`` of x, then on the whole grid.  A piece that
    supports locally but not globally is returned as the witness.
    """
    xs = np.atleast_2d(np.asarray(grid_points, float))
    keep = surface.defined(xs)
    xs = xs[keep]
    u = surface.heights(xs)
    Ys = np.atleast_2d(np.asarray(target_points, float))
    above = _is_min(surface.mode)
    probe = PiecewiseSurface(surface.mode, Ys[:1], [1.0], surface.kappa, strict=False)
    checked = 0
    for k, x in enumerate(xs):
        X = np.r_[x, u[k]]
        near = np.linalg.norm(xs - x, axis=1) <= local_radius
        for Y in Ys:
            try:
                bY = _param_through(X, Y, surface.kappa, surface.mode)
            except DomainError:
                continue
            h = probe._heights_raw(xs, Y[None, :], np.array([bY]))[:, 0]
            # a support from above must be defined on the whole window
            diff = (h - u) if above else (u - h)
            local = np.all(np.nan_to_num(diff[near], nan=-np.inf) >= -tol)
            if not local:
                continue
            checked += 1
            bad = np.nan_to_num(diff, nan=np.inf) < -tol
            if bad.any():
                z = int(np.argmin(np.nan_to_num(diff, nan=np.inf)))
                return SupportReport(False, checked, {
                    "x": x.tolist(), "Y": Y.tolist(), "z": xs[z].tolist(),
                    "gap": float(-diff[z])})
    return SupportReport(True, checked)


def max_gradient_jump(surface, source):
    """Largest gradient jump across interfaces between adjacent cells (n = 1).

    Each interface between neighbouring grid cells with different active
    pieces is located by bisection and the two piece gradients compared
    there.
    """
    pts = source.points
    if pts.shape[1] != 1:
        raise DomainError("gradient jumps are measured in one dimension")
    _, idx, _ = surface.evaluate_many(pts)
    jumps = []
    for k in np.flatnonzero(idx[1:] != idx[:-1]):
        i, j = int(idx[k]), int(idx[k + 1])
        a, c = pts[k, 0], pts[k + 1, 0]
        fa = surface.piece_height(i, [a]) - surface.piece_height(j, [a])
        for _ in range(60):
            m = 0.5 * (a + c)
            fm = surface.piece_height(i, [m]) - surface.piece_height(j, [m])
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                c = m
        x = np.array([0.5 * (a + c)])
        jumps.append(float(np.linalg.norm(surface.piece_gradient(i, x) - surface.piece_gradient(j, x))))
    return max(jumps) if jumps else 0.0


def assignment_rows(surface, source):
    """Rows ``(x..., u, active_index, near_tie)`` for every quadrature cell."""
    u, idx, tie = surface.evaluate_many(source.points)
    return [list(map(float, p)) + [float(h), int(i), bool(t)]
            for p, h, i, t in zip(source.points, u, idx, tie)]


def ensure_converged(report):
    if not report.converged:
        raise ConvergenceError("semi-discrete solve did not converge",
                               residual=max(map(abs, report.residuals)))
