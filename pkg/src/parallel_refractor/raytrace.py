"""
Physical ray tracing against computed surfaces, and the two numerical
counterexamples.

Exit directions here come from the surface normal through Snell's law or
the mirror law, never from the focus of a piece, so that they give an
independent check of the focusing geometry.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .optics import EllipsoidPiece, ellipsoid_heights_masked, focal_parameter


def _vertical(dim):
    e = np.zeros(dim)
    e[-1] = 1.0
    return e


def snell_refract(normal, kappa):
    """Refract the upward vertical ray at a surface with upper unit normal ``normal``.

    ``Lambda = kappa e + delta N`` with
    ``delta = -kappa e.N + sqrt(1 + kappa^2 ((e.N)^2 - 1))``.
    """
    N = np.asarray(normal, dtype=float)
    if not 0.0 < kappa < 1.0:
        raise DomainError("kappa must lie in (0, 1)")
    e = _vertical(N.shape[-1])
    eN = N[..., -1]
    delta = -kappa * eN + np.sqrt(1.0 + kappa**2 * (eN**2 - 1.0))
    return kappa * e + delta[..., None] * N


def mirror_reflect(normal):
    """Reflect the upward vertical ray: ``e - 2 (e.N) N``."""
    N = np.asarray(normal, dtype=float)
    e = _vertical(N.shape[-1])
    return e - 2.0 * N[..., -1][..., None] * N


def upper_normal(grad):
    """Unit upper normal ``(-Du, 1)/sqrt(1 + |Du|^2)`` of a graph."""
    g = np.asarray(grad, dtype=float)
    v = np.concatenate([-g, np.ones(g.shape[:-1] + (1,))], axis=-1)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def line_point_distance(X, direction, Y):
    """Distance from Y to the full line through X with unit ``direction``."""
    d = np.asarray(Y, float) - np.asarray(X, float)
    along = np.sum(d * direction, axis=-1, keepdims=True)
    return np.linalg.norm(d - along * direction, axis=-1)


@dataclass
class TraceResult:
    origin: np.ndarray
    hit: np.ndarray
    exit: np.ndarray
    distance: float
    atom: int
    tie: bool = False

    def row(self):
        return (list(map(float, self.origin)) + list(map(float, self.hit))
                + list(map(float, self.exit)) + [float(self.distance), int(self.atom), bool(self.tie)])


def trace_bundle(surface, rays, target=None):
    """Trace vertical rays starting below the points ``rays`` of Omega.

    Parameters
    ----------
    surface : PiecewiseSurface
    rays : array_like, shape (m, n)
    target : DiscreteAtoms, optional
        If given, the assigned focus is ``target.points[atom]``; otherwise
        the focus of the active piece.

    Returns
    -------
    results : list of TraceResult
    summary : dict
        ``max_distance`` and ``mean_distance`` over rays away from ties,
        the number of tie rays and the fraction of rays per atom.
    """
    xs = np.atleast_2d(np.asarray(rays, dtype=float))
    u, idx, tie = surface.evaluate_many(xs)
    grads = np.array([surface.piece_gradient(i, x) for i, x in zip(idx, xs)])
    N = upper_normal(grads)
    refractor = surface.mode.startswith("Refractor")
    exits = snell_refract(N, surface.kappa) if refractor else mirror_reflect(N)
    hits = np.concatenate([xs, u[:, None]], axis=1)
    foci = surface.foci if target is None else target.points
    dist = line_point_distance(hits, exits, foci[idx])
    results = [TraceResult(xs[k], hits[k], exits[k], float(dist[k]), int(idx[k]), bool(tie[k]))
               for k in range(len(xs))]
    ok = ~tie
    counts = np.bincount(idx, minlength=surface.n_pieces)
    summary = {
        "n_rays": int(len(xs)),
        "n_ties": int(tie.sum()),
        "max_distance": float(dist[ok].max()) if ok.any() else float("nan"),
        "mean_distance": float(dist[ok].mean()) if ok.any() else float("nan"),
        "fractions": (counts / len(xs)).tolist(),
    }
    return results, summary


# Data of the local-but-not-global support example
FIG3_KAPPA = 2.0 / 3.0
FIG3_Y1 = np.array([0.03, 5.0])
FIG3_Y2 = np.array([-0.03, 5.0])
FIG3_Y3 = np.array([0.0, 10.0])
FIG3_P = np.array([0.0, 4.70456])


def fig3_pieces():
    """The three ellipsoids through P with foci Y1, Y2, Y3."""
    k = FIG3_KAPPA
    return [EllipsoidPiece.through(FIG3_P, Y, k) for Y in (FIG3_Y1, FIG3_Y2, FIG3_Y3)]


def fig3_profiles(xs):
    """R = min(phi_1, phi_2) (NaN where neither is defined) and phi_3 at ``xs``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))[:, None]
    p1, p2, p3 = fig3_pieces()
    h1 = ellipsoid_heights_masked(xs, p1, FIG3_KAPPA)
    h2 = ellipsoid_heights_masked(xs, p2, FIG3_KAPPA)
    R = np.fmin(h1, h2)
    return R, ellipsoid_heights_masked(xs, p3, FIG3_KAPPA), h1, h2


def counterexample_fig3(probe_x=0.15, local_radius=0.01, scan=(-0.2, 0.2), step=1e-3, tol=1e-12):
    """Two small ellipsoids whose min is supported locally, not globally, by a third.

    Returns
    -------
    dict
        ``c_P_Y1``, ``c_P_Y2``; ``local_min_gap`` = min of phi_3 - R on
        ``|x| <= local_radius``; the witness ``x_star = probe_x`` with
        ``gap = R - phi_3`` there; the largest gap on the scan and the
        smallest ``|x|`` with a positive gap; ``passed`` when local support
        holds and the witness gap is positive.  Gaps within ``tol`` of zero
        (the touching point P) count as zero.
    """
    k = FIG3_KAPPA
    c1 = float(focal_parameter(FIG3_P, FIG3_Y1, k))
    c2 = float(focal_parameter(FIG3_P, FIG3_Y2, k))
    n_loc = int(round(2 * local_radius / step * 10)) + 1
    xl = np.linspace(-local_radius, local_radius, n_loc)
    Rl, p3l, _, _ = fig3_profiles(xl)
    local_gap = float(np.min(p3l - Rl))
    Rw, p3w, h1w, h2w = fig3_profiles([probe_x])
    gap = float(Rw[0] - p3w[0])
    xs = np.arange(scan[0], scan[1] + step / 2, step)
    Rs, p3s, _, _ = fig3_profiles(xs)
    g = Rs - p3s
    ok = np.isfinite(g)
    pos = ok & (g > tol)
    imax = int(np.nanargmax(np.where(ok, g, -np.inf)))
    first = float(np.min(np.abs(xs[pos]))) if pos.any() else float("nan")
    return {
        "kappa": k,
        "c_P_Y1": c1,
        "c_P_Y2": c2,
        "c_P_Y3": float(focal_parameter(FIG3_P, FIG3_Y3, k)),
        "local_radius": local_radius,
        "local_min_gap": local_gap,
        "local_support": bool(local_gap >= -tol),
        "x_star": float(probe_x),
        "phi1_x_star": float(h1w[0]),
        "phi3_x_star": float(p3w[0]),
        "gap": gap,
        "scan_max_gap": float(g[imax]),
        "scan_argmax": float(xs[imax]),
        "first_violation_abs_x": first,
        "defined_interval": [float(xs[ok].min()), float(xs[ok].max())],
        "passed": bool(local_gap >= -tol and gap > tol),
    }


def remark71_check(kappa, b, step=1e-3):
    """Horizontal-plane target in R^3: the midpoint ellipsoid dips below the ends.

    Foci (0, -1, 0) and (0, 1, 0) with parameter b; the wedge midpoint is
    the origin, whose ellipsoid through the same base point has parameter
    ``b0 = (kappa b + sqrt(b^2 - (1 - kappa^2))) / (1 + kappa)``.  With
    ``g(x) = phi_0(x, 0)`` and ``h(x) = phi_bar(x, 0)`` the first and second
    central differences of g - h at 0 are returned, with analytic values.

    Raises
    ------
    DomainError
        If ``b^2 <= 1 - kappa^2``.
    """
    k2 = 1.0 - kappa**2
    if b * b <= k2:
        raise DomainError("b^2 must exceed 1 - kappa^2")
    Yb = np.array([0.0, -1.0, 0.0])
    Y0 = np.zeros(3)
    b0 = (kappa * b + np.sqrt(b * b - k2)) / (1.0 + kappa)
    bar = EllipsoidPiece(Yb, b)
    mid = EllipsoidPiece(Y0, b0)

    def gh(x):
        pts = np.array([[x, 0.0]])
        return (ellipsoid_heights_masked(pts, mid, kappa)[0]
                - ellipsoid_heights_masked(pts, bar, kappa)[0])

    base_bar = ellipsoid_heights_masked(np.zeros((1, 2)), bar, kappa)[0]
    base_mid = ellipsoid_heights_masked(np.zeros((1, 2)), mid, kappa)[0]
    X0 = np.array([0.0, 0.0, base_bar])
    f0, fp, fm = gh(0.0), gh(step), gh(-step)
    d1 = (fp - fm) / (2 * step)
    d2 = (fp - 2 * f0 + fm) / step**2
    exact2 = 1.0 / b0 - 1.0 / np.sqrt(b * b - k2)
    return {
        "kappa": kappa,
        "b": b,
        "b0": float(b0),
        "X0": X0.tolist(),
        "base_mismatch": float(abs(base_mid - base_bar)),
        "b0_matches_focal_parameter": float(abs(focal_parameter(X0, Y0, kappa) - b0)),
        "d1": float(d1),
        "d2": float(d2),
        "d2_exact": float(exact2),
        "passed": bool(abs(base_mid - base_bar) <= 1e-10 and abs(d1) <= 1e-8 and d2 < 0),
    }
