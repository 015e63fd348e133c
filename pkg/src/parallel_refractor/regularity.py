"""
Regularity conditions on targets and structural experiments.

Differential conditions are evaluated in closed form where one exists and by
finite differences of the stretch function otherwise; the synthetic min/max
conditions are sampled.  Every negative verdict carries a witness so that
counterexamples can be replayed.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize

from .errors import (
    AmbiguousIntersectionError,
    ConvergenceError,
    DomainError,
    PartialCurveError,
    RayMissError,
)
from .optics import (
    focal_parameter,
    paraboloid,
    phi,
    refraction_direction,
    reflection_direction,
)
from .targets import (
    DiscreteAtoms,
    implicit_H_solve,
    ray_target_intersection,
    stretch_H,
    wedge_curve,
)

REFRACTOR_MODES = ("RefractorAbove", "RefractorBelow")
REFLECTOR_MODES = ("ReflectorBelow", "ReflectorAbove")


@dataclass
class RegularityReport:
    """Outcome of a regularity check.

    ``margin`` is signed so that negative values favour ``regular`` for the
    differential checks and positive values favour it for the fitted
    constants; see each function for its convention.
    """

    verdict: str
    margin: float
    witness: Optional[dict] = None
    method: str = "sampling"
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "margin": self.margin,
            "witness": self.witness,
            "method": self.method,
            "details": self.details,
        }


def _check_symmetric(Hs):
    if not np.allclose(Hs, Hs.T, rtol=1e-12, atol=1e-12):
        raise DomainError("Hessian evaluator returned a non-symmetric matrix")


def classify_graph_target(target, kappa, orientation="above", at=None):
    """Quantitative test ``kappa/(1-kappa) < psi <D^2 psi xi, xi>`` at ``at``.

    The frame has the source point at height 0 directly below ``at``.  With
    ellipsoids above the surface the target is regular when the smallest
    eigenvalue of ``psi D^2 psi`` exceeds ``kappa/(1-kappa)``; with
    ellipsoids below the inequality is reversed.

    Returns
    -------
    RegularityReport
        ``margin > 0`` iff regular.
    """
    n = target.dim
    y0 = np.zeros(n) if at is None else np.atleast_1d(np.asarray(at, dtype=float))
    p0 = float(target.psi(y0))
    if p0 <= 0:
        raise DomainError("psi must be positive at the evaluation point")
    Hs = np.atleast_2d(target.hess(y0))
    _check_symmetric(Hs)
    w, V = np.linalg.eigh(p0 * Hs)
    k = kappa / (1.0 - kappa)
    if orientation == "above":
        margin = float(w[0] - k)
        xi = V[:, 0]
    elif orientation == "below":
        margin = float(k - w[-1])
        xi = V[:, -1]
    else:
        raise ValueError("orientation must be 'above' or 'below'")
    verdict = "regular" if margin > 0 else "not_regular"
    witness = None
    if verdict == "not_regular":
        witness = {"y": y0.tolist(), "xi": xi.tolist(), "value": float(p0 * xi @ Hs @ xi)}
    return RegularityReport(verdict, margin, witness, "closed_form",
                            {"threshold": k, "eigenvalues": w.tolist()})


def G_hessian_closed_form(target, kappa):
    """D^2_v G(0, 0) for G = 1/H, source at the origin, graph target.

    ``(1 - kappa)/psi(0) * (kappa/(1 - kappa) I - psi(0) D^2 psi(0))``.
    """
    n = target.dim
    y0 = np.zeros(n)
    p0 = float(target.psi(y0))
    if p0 <= 0:
        raise DomainError("psi(0) must be positive")
    Hs = np.atleast_2d(target.hess(y0))
    _check_symmetric(Hs)
    return (1.0 - kappa) / p0 * (kappa / (1.0 - kappa) * np.eye(n) - p0 * Hs)


def _G_implicit(v, X, target, kappa):
    return 1.0 / implicit_H_solve(v, X, target, kappa)


def G_hessian_numeric(target, X, kappa, v0=None, step=1e-3):
    """Central-difference Hessian of G(v, X) = 1/H(v, X) in v via the implicit equation."""
    X = np.asarray(X, dtype=float)
    n = len(X) - 1
    v0 = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float)
    h = step
    E = np.eye(n) * h
    f0 = _G_implicit(v0, X, target, kappa)
    D = np.empty((n, n))
    for i in range(n):
        fp = _G_implicit(v0 + E[i], X, target, kappa)
        fm = _G_implicit(v0 - E[i], X, target, kappa)
        D[i, i] = (fp - 2 * f0 + fm) / h**2
        for j in range(i):
            fpp = _G_implicit(v0 + E[i] + E[j], X, target, kappa)
            fpm = _G_implicit(v0 + E[i] - E[j], X, target, kappa)
            fmp = _G_implicit(v0 - E[i] + E[j], X, target, kappa)
            fmm = _G_implicit(v0 - E[i] - E[j], X, target, kappa)
            D[i, j] = D[j, i] = (fpp - fpm - fmp + fmm) / (4 * h**2)
    return D


def _aw_function(v, X, target, kappa, mode):
    if mode == "refractor":
        return stretch_H(v, X, target, kappa)[1]
    Lam = reflection_direction(v)
    s, _ = ray_target_intersection(X, Lam, target, "reflector")
    return (1.0 + float(np.dot(v, v))) / s


def aw_condition_numeric(target, X, kappa, mode="refractor", v_grid=None, xi_grid=None,
                         step=1e-3, orientation=None, noise=1e-5):
    """Directional second differences of the AW function over a grid.

    For refractors the function is G = 1/H and the condition (ellipsoids
    above) is concavity of G.  For reflectors it is K = (1 + |v|^2)/s, with
    paraboloids below requiring K to be uniformly concave.  The reversed
    orientations (ellipsoids below, enclosing paraboloids) flip the sign.

    Each value is ``<D^2 F xi, xi>`` from a 5-point stencil; ``margin`` is
    the largest value after the orientation sign is applied, so AW holds
    (verdict ``regular``) when ``margin < -noise``.

    Returns
    -------
    RegularityReport
    """
    X = np.asarray(X, dtype=float)
    n = len(X) - 1
    if orientation is None:
        orientation = "above" if mode == "refractor" else "below"
    default = "above" if mode == "refractor" else "below"
    sign = 1.0 if orientation == default else -1.0
    vs = [np.zeros(n)] if v_grid is None else [np.atleast_1d(np.asarray(v, float)) for v in v_grid]
    if xi_grid is None:
        xis = list(np.eye(n))
        if n > 1:
            ang = np.linspace(0, np.pi, 9)[1:-1]
            xis += [np.r_[np.cos(a), np.sin(a), np.zeros(n - 2)] for a in ang]
    else:
        xis = [np.atleast_1d(np.asarray(x, float)) for x in xi_grid]
    xis = [x / np.linalg.norm(x) for x in xis]
    h = step
    worst, wit, values, misses = -np.inf, None, [], []
    for v in vs:
        for xi in xis:
            try:
                f = [_aw_function(v + t * h * xi, X, target, kappa, mode) for t in (-2, -1, 0, 1, 2)]
            except (RayMissError, AmbiguousIntersectionError, ConvergenceError) as exc:
                misses.append({"v": v.tolist(), "xi": xi.tolist(), "error": str(exc)})
                continue
            d2 = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h**2)
            val = sign * d2
            values.append(d2)
            if val > worst:
                worst, wit = val, {"v": v.tolist(), "xi": xi.tolist(), "value": float(d2)}
    details = {"step": h, "noise": noise, "n_values": len(values), "orientation": orientation}
    if misses:
        details["missed_nodes"] = misses
        return RegularityReport("inconclusive", float(worst), wit, "finite_difference", details)
    if worst < -noise:
        verdict = "regular"
    elif worst > noise:
        verdict = "not_regular"
    else:
        verdict = "inconclusive"
    return RegularityReport(verdict, float(worst), wit if verdict != "regular" else None,
                            "finite_difference", details)


def _piece_height(x, Y, Z, kappa, mode):
    if mode in REFRACTOR_MODES:
        return phi(x, Y, Z, kappa)
    return paraboloid(x, Y, Z)


def min_condition_check(target, Z, Y_bar, Y_hat, kappa, mode="RefractorAbove", x_samples=None,
                        lambdas=None, C2=None):
    """Sample the synthetic condition and fit its constant C1.

    For each lambda the wedge point Y(lambda) from Z is computed and the gap
    between the piece focused at Y(lambda) and the min (or max) of the two
    end pieces is divided by ``|Y_bar - Y_hat|^2 |x - z|^2``:

    ===============  ==========================================
    RefractorAbove   phi_lambda - min(phi_bar, phi_hat)
    RefractorBelow   max(phi_bar, phi_hat) - phi_lambda
    ReflectorBelow   max(p_bar, p_hat) - p_lambda
    ReflectorAbove   p_lambda - min(p_bar, p_hat)
    ===============  ==========================================

    ``C1_fit`` (the ``margin``) is the smallest ratio; regular iff positive.
    """
    Z = np.asarray(Z, dtype=float)
    Yb, Yh = np.asarray(Y_bar, float), np.asarray(Y_hat, float)
    z = Z[:-1]
    dY = float(np.linalg.norm(Yb - Yh))
    if dY == 0.0:
        return RegularityReport("inconclusive", 0.0, None, "sampling", {"skipped": "Y_bar == Y_hat"})
    lams = np.linspace(0.25, 0.75, 17) if lambdas is None else np.atleast_1d(lambdas)
    if x_samples is None:
        r = 0.1 if C2 is None else C2
        n = len(z)
        t = np.linspace(-r, r, 21)
        if n == 1:
            x_samples = z + t[:, None]
        else:
            g = np.stack(np.meshgrid(*([t] * n), indexing="ij"), -1).reshape(-1, n)
            x_samples = z + g[np.linalg.norm(g, axis=1) <= r]
    xs = np.atleast_2d(np.asarray(x_samples, dtype=float))
    dx2 = np.sum((xs - z) ** 2, axis=1)
    keep = dx2 > 0
    xs, dx2 = xs[keep], dx2[keep]
    geo = "refractor" if mode in REFRACTOR_MODES else "reflector"
    wc = wedge_curve(Z, Yb, Yh, target, kappa, lams, mode=geo)
    fb = _piece_height(xs, Yb, Z, kappa, mode)
    fh = _piece_height(xs, Yh, Z, kappa, mode)
    best = np.inf
    wit = None
    for lam, Yl in zip(wc.lambdas, wc.points):
        fl = _piece_height(xs, Yl, Z, kappa, mode)
        if mode == "RefractorAbove":
            gap = fl - np.minimum(fb, fh)
        elif mode == "RefractorBelow":
            gap = np.maximum(fb, fh) - fl
        elif mode == "ReflectorBelow":
            gap = np.maximum(fb, fh) - fl
        elif mode == "ReflectorAbove":
            gap = fl - np.minimum(fb, fh)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        ratio = gap / (dY**2 * dx2)
        i = int(np.argmin(ratio))
        if ratio[i] < best:
            best = float(ratio[i])
            wit = {"x": xs[i].tolist(), "Y": Yl.tolist(), "lambda": float(lam), "value": float(gap[i])}
    verdict = "regular" if best > 0 else "not_regular"
    return RegularityReport(verdict, best, wit if verdict == "not_regular" else None, "sampling",
                            {"C1_fit": best, "n_x": len(xs), "n_lambda": len(lams),
                             "best_sample": wit})


def _sphere(rng, m, dim):
    u = rng.standard_normal((m, dim))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def ellipsoid_union_inclusion_check(X0, Y_bar, Y_hat, lam, target, kappa, n_samples=10_000,
                                    rng=None, lambda_grid=None, tol=1e-9):
    """Check ``E(Y_lambda) in E(Y_bar) union E(Y_hat)`` and concavity of 1/H.

    All ellipsoids pass through X0.  Boundary points of E(Y_lambda) are
    ``Y_lambda + r u`` with ``r = b / (1 + kappa u_{n+1})`` over uniform unit
    vectors u; each must satisfy ``c(X, Y_bar) <= c(X0, Y_bar)`` or the same
    for Y_hat, within ``tol``.  The 1/H inequality is tested on
    ``lambda_grid`` (65 points) for graph targets and at ``lam`` for atoms.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    X0 = np.asarray(X0, dtype=float)
    Yb, Yh = np.asarray(Y_bar, float), np.asarray(Y_hat, float)
    atoms = isinstance(target, DiscreteAtoms)
    if lambda_grid is None:
        lambda_grid = [lam] if atoms else np.linspace(0.0, 1.0, 65)
    lam_all = np.unique(np.r_[0.0, 1.0, lam, np.asarray(lambda_grid, float)])
    wc = wedge_curve(X0, Yb, Yh, target, kappa, lam_all)
    Q = refraction_direction(np.stack([wc.v(l) for l in wc.lambdas]), kappa)[1]
    G = 1.0 / (wc.s * Q)
    G0, G1 = G[0], G[-1]
    conc = G - ((1 - wc.lambdas) * G0 + wc.lambdas * G1)
    conc_worst = int(np.argmin(conc))
    conc_ok = bool(conc[conc_worst] >= -1e-12 * max(1.0, abs(G0), abs(G1)))

    Yl = wc.points[int(np.flatnonzero(np.isclose(wc.lambdas, lam))[0])]
    b = float(focal_parameter(X0, Yl, kappa))
    u = _sphere(rng, n_samples, len(X0))
    r = b / (1.0 + kappa * u[:, -1])
    pts = Yl + r[:, None] * u
    cb = focal_parameter(pts, Yb, kappa) - focal_parameter(X0, Yb, kappa)
    ch = focal_parameter(pts, Yh, kappa) - focal_parameter(X0, Yh, kappa)
    slack = np.minimum(cb, ch)
    bad = slack > tol * max(1.0, b)
    witness = None
    if bad.any():
        i = int(np.argmax(slack))
        witness = {"X": pts[i].tolist(), "lambda": float(lam), "value": float(slack[i])}
    elif not conc_ok:
        witness = {"lambda": float(wc.lambdas[conc_worst]), "value": float(conc[conc_worst])}
    verdict = "regular" if (not bad.any() and conc_ok) else "not_regular"
    return RegularityReport(
        verdict, float(slack.max()), witness, "sampling",
        {"violations": int(bad.sum()), "n_samples": n_samples, "concavity_ok": conc_ok,
         "concavity_margin": float(conc[conc_worst]), "Y_lambda": Yl.tolist(),
         "n_lambda": len(wc.lambdas)},
    )


def _segment_distance(P, A, B):
    """Distance from points P (m, d) to the polyline through A -> B segments (k, d)."""
    out = np.full(len(P), np.inf)
    for a, b in zip(A, B):
        ab = b - a
        L2 = float(ab @ ab)
        if L2 == 0:
            d = np.linalg.norm(P - a, axis=1)
        else:
            t = np.clip((P - a) @ ab / L2, 0.0, 1.0)
            d = np.linalg.norm(P - (a + t[:, None] * ab), axis=1)
        out = np.minimum(out, d)
    return out


def _tube_grid(target, pts, mu, per_mu):
    """Horizontal grid covering the wedge points enlarged by mu; returns (ys, cell volume)."""
    n = pts.shape[1] - 1
    lo = pts[:, :-1].min(axis=0) - mu
    hi = pts[:, :-1].max(axis=0) + mu
    if target.lower is not None:
        lo = np.maximum(lo, target.lower)
        hi = np.minimum(hi, target.upper)
    h = mu / per_mu
    axes = [lo[k] + h * (np.arange(max(1, int(np.ceil((hi[k] - lo[k]) / h)))) + 0.5)
            for k in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    ys = np.stack([m.ravel() for m in mesh], axis=-1)
    return ys, h**n


def tube_points(target, curve_points, mu, per_mu=16):
    """Horizontal grid points whose graph point is within ``mu`` of the curve polyline."""
    ys, vol = _tube_grid(target, curve_points, mu, per_mu)
    P = target.point(ys)
    d = _segment_distance(P, curve_points[:-1], curve_points[1:]) if len(curve_points) > 1 \
        else np.linalg.norm(P - curve_points[0], axis=1)
    inside = d < mu
    return ys[inside], vol


def tube_measure_check(target, Z, Y_bar, Y_hat, mu_radius, kappa, lambdas=None, per_mu=None):
    """Mass of the graph inside the mu-tube around the wedge, lambda in [1/4, 3/4].

    The density of the target is taken with respect to dy on its domain and
    integrated by the midpoint rule on a grid of spacing ``mu / per_mu``.

    Returns
    -------
    measured : float
    bound_ratio : float
        ``measured / (mu^{n-1} |Y_bar - Y_hat|)``; NaN when the two points
        coincide.
    """
    Z = np.asarray(Z, dtype=float)
    n = len(Z) - 1
    lams = np.linspace(0.25, 0.75, 129) if lambdas is None else lambdas
    if per_mu is None:
        per_mu = 64 if n == 1 else 16
    dY = float(np.linalg.norm(np.asarray(Y_bar, float) - np.asarray(Y_hat, float)))
    if dY == 0.0:
        pts = np.asarray(Y_bar, float)[None, :]
    else:
        pts = wedge_curve(Z, Y_bar, Y_hat, target, kappa, lams).points
    ys, vol = tube_points(target, pts, mu_radius, per_mu)
    measured = float(np.sum(target.density_at(ys)) * vol) if len(ys) else 0.0
    if dY == 0.0:
        return measured, float("nan")
    return measured, measured / (mu_radius ** (n - 1) * dY)


def tube_constant_scan(target, Z, Y_bar, Y_hat, mus, kappa):
    """Empirical tube constant: min of the bound ratio over ``mus``."""
    ratios = [tube_measure_check(target, Z, Y_bar, Y_hat, m, kappa)[1] for m in mus]
    return float(np.nanmin(ratios)), ratios


def holder_exponent_exact(n, q):
    """Exponent of the gradient Hoelder estimate as a Fraction.

    ``alpha = (n/(2q) - (n-1)/2) / (1 + 3(n-1)/2 + n/(2q))`` for
    ``1 <= q < n/(n-1)`` (any ``q >= 1`` when n = 1).
    """
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    n = int(n)
    q = Fraction(q)
    if q < 1 or (n > 1 and q >= Fraction(n, n - 1)):
        raise DomainError(f"q={q} outside [1, n/(n-1)) for n={n}")
    a = Fraction(n) / (2 * q)
    return (a - Fraction(n - 1, 2)) / (1 + Fraction(3, 2) * (n - 1) + a)


def holder_exponent(n, q):
    """Float version of :func:`holder_exponent_exact`."""
    if isinstance(q, float):
        if int(n) != n or n < 1:
            raise DomainError("n must be a positive integer")
        if not np.isfinite(q) or q < 1 or (n > 1 and q >= n / (n - 1)):
            raise DomainError(f"q={q} outside [1, n/(n-1)) for n={n}")
        a = n / (2 * q)
        return (a - (n - 1) / 2) / (1 + 1.5 * (n - 1) + a)
    return float(holder_exponent_exact(n, q))


# --- tube inclusion -------------------------------------------------------

def _crossing_point(surface, i, j, x_bar, x_hat):
    """Point on [x_bar, x_hat] where pieces i and j have equal height."""
    def f(t):
        x = (1 - t) * x_bar + t * x_hat
        return surface.piece_height(i, x) - surface.piece_height(j, x)

    f0, f1 = f(0.0), f(1.0)
    if f0 * f1 > 0:
        raise DomainError("the two pieces do not cross on the segment")
    t = brentq(f, 0.0, 1.0, xtol=1e-15)
    return (1 - t) * x_bar + t * x_hat


def supported_point(surface, Y, kappa, omega_grid, u_grid=None):
    """Argmin over Omega of c((x, u(x)), Y): where Y is supported by u."""
    if u_grid is None:
        u_grid = surface.heights(omega_grid)
    c = focal_parameter(np.concatenate([omega_grid, u_grid[:, None]], 1), Y, kappa)
    x_init = omega_grid[int(np.argmin(c))]
    lo, hi = surface.cylinder.lower, surface.cylinder.upper

    def obj(x):
        x = np.clip(x, lo, hi)
        return float(focal_parameter(np.r_[x, surface.height(x)], Y, kappa))

    res = minimize(obj, x_init, method="Nelder-Mead",
                   options={"xatol": 1e-11, "fatol": 1e-15, "maxiter": 4000})
    x = np.clip(res.x, lo, hi)
    on_boundary = bool(np.any(np.isclose(x, lo, atol=1e-9) | np.isclose(x, hi, atol=1e-9)))
    return x, on_boundary


def tube_inclusion_experiment(surface, x_bar, x_hat, target, kappa, M_cal=None,
                              ratio_threshold=1.0, per_mu=6, n_lambda=65, grid=101):
    """Check that graph points near the wedge are supported close to x0.

    Y_bar and Y_hat are the foci of the pieces active at x_bar and x_hat;
    x0 is where those two pieces cross on the segment, and the wedge is
    traced on the graph ``target`` from ``(x0, u(x0))`` for lambda in
    [1/4, 3/4].  Every graph point within ``mu = D^{3/2} d^{1/2}`` of the
    wedge (D = |Y_bar - Y_hat|, d = |x_bar - x_hat|) is mapped back to the
    point of Omega where it is supported; ``eta_needed`` is the largest
    distance to x0 and ``M_needed = eta_needed sqrt(D / d)`` the smallest
    calibration for which the inclusion holds.

    Returns
    -------
    RegularityReport
        verdict ``regular`` when the inclusion holds for ``M_cal`` (or for
        a finite calibration when ``M_cal`` is None).
    """
    x_bar = np.atleast_1d(np.asarray(x_bar, float))
    x_hat = np.atleast_1d(np.asarray(x_hat, float))
    d = float(np.linalg.norm(x_bar - x_hat))
    if d == 0.0:
        raise DomainError("x_bar and x_hat must differ")
    i = surface.evaluate(x_bar)[1]
    j = surface.evaluate(x_hat)[1]
    Yb, Yh = surface.foci[i], surface.foci[j]
    D = float(np.linalg.norm(Yb - Yh))
    details = {"d": d, "D": D, "ratio": D / d if d else np.inf}
    if D == 0.0 or D / d < ratio_threshold:
        return RegularityReport("inconclusive", float("nan"), None, "sampling",
                                dict(details, reason="ratio condition unmet"))
    x0 = _crossing_point(surface, i, j, x_bar, x_hat)
    X0 = np.r_[x0, surface.height(x0)]
    mu = D**1.5 * d**0.5
    lams = np.linspace(0.25, 0.75, n_lambda)
    wc = wedge_curve(X0, Yb, Yh, target, kappa, lams)
    ys, _ = tube_points(target, wc.points, mu, per_mu)
    P = target.point(ys)
    omega = surface.cylinder.grid(grid)
    u_grid = surface.heights(omega)
    dist = np.empty(len(P))
    boundary = 0
    for k, Y in enumerate(P):
        xs, on_b = supported_point(surface, Y, kappa, omega, u_grid)
        dist[k] = np.linalg.norm(xs - x0)
        boundary += on_b
    eta_needed = float(dist.max())
    M_needed = eta_needed * np.sqrt(D / d)
    details.update({"x0": x0.tolist(), "mu": mu, "n_tube": len(P), "eta_needed": eta_needed,
                    "M_needed": M_needed, "supported_on_boundary": int(boundary)})
    if M_cal is None:
        holds = bool(np.isfinite(M_needed) and boundary == 0)
    else:
        details["M_cal"] = M_cal
        holds = bool(eta_needed < M_cal * np.sqrt(d / D))
    witness = None
    if not holds:
        k = int(np.argmax(dist))
        witness = {"Y": P[k].tolist(), "distance": float(dist[k])}
    return RegularityReport("regular" if holds else "not_regular", M_needed, witness,
                            "sampling", details)
