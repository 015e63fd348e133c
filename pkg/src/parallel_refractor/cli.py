"""
Command line entry point.

Exit status: 0 when every assertion of the subcommand passes, 1 for invalid
input (bad scene, bad arguments), 2 for a failed assertion or a solve that
did not converge.  Details always go to the report files.
"""

import argparse
import logging
import os
import sys
from fractions import Fraction

import numpy as np

from . import experiments
from .errors import ConvergenceError, DomainError, InfeasibleAtomError
from .fdiff import derivative_rows
from .optics import admissible_region_check
from .raytrace import counterexample_fig3, remark71_check, trace_bundle
from .regularity import (
    aw_condition_numeric,
    classify_graph_target,
    G_hessian_closed_form,
    holder_exponent_exact,
    min_condition_check,
)
from .scene import SceneError, load_scene, write_csv, write_json
from .solver import assignment_rows, solve_semidiscrete, tracing_measure
from .targets import GraphSurface

log = logging.getLogger(__name__)

OK, INVALID, FAILED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(INVALID, f"{self.prog}: error: {message}\n")


def _common(p, scene_required=False):
    p.add_argument("--scene", required=scene_required, help="scene JSON file")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, help="override the quadrature grid")
    p.add_argument("--tol", type=float, help="override the mass tolerance")


def build_parser():
    ap = _Parser(prog="parallel-refractor",
                 description="Semi-discrete parallel refractors and reflectors.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, required=True)
    _common(sub.add_parser("solve", help="solve the measure equation"), True)
    _common(sub.add_parser("check-target", help="regularity verdicts for the target"), True)
    _common(sub.add_parser("trace", help="ray trace a solved surface"), True)
    p = sub.add_parser("counterexample", help="reproduce a counterexample")
    p.add_argument("which", choices=["fig3", "remark71"])
    p.add_argument("--kappa", type=float, action="append")
    p.add_argument("--b", type=float, default=10.0)
    _common(p)
    _common(sub.add_parser("derivatives-check", help="analytic vs finite differences"))
    p = sub.add_parser("alpha", help="Hoelder exponent")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--q", type=str, required=True, help="e.g. 1, 1.5 or 3/2")
    p = sub.add_parser("experiment", help="structural experiments")
    p.add_argument("which", choices=["tube", "inclusion", "refinement", "structural"])
    _common(p)
    return ap


def _settings(args, scene=None):
    cfg = {"seed": args.seed}
    if scene is not None:
        s = scene.solver
        if args.grid is not None:
            s.grid = args.grid
        if args.tol is not None:
            s.tol_mass = args.tol
        cfg.update(tol_mass=s.tol_mass, grid=s.grid, mode=s.mode, method=s.method)
    return cfg


def _envelope(scene, args, body):
    return {"scene_sha256": None if scene is None else scene.sha256,
            "tolerances": _settings(args, scene), **body}


def _check_admissible(scene, atoms):
    mode = "refractor" if scene.solver.mode.startswith("Refractor") else "reflector"
    bad = []
    for i, Y in enumerate(atoms.points):
        rep = admissible_region_check(Y, scene.cylinder, scene.optics, mode)
        if not rep.admissible:
            bad.append({"atom": i, "margin": rep.margin, "worst_point": rep.worst_point.tolist()})
    if bad:
        raise SceneError(f"atoms outside the admissible region: {bad}")


def _solve(scene):
    atoms = scene.atoms()
    _check_admissible(scene, atoms)
    src = scene.source()
    surf, rep = solve_semidiscrete(src, atoms, cfg=scene.solver, kappa=scene.kappa)
    return surf, rep, src, atoms


def cmd_solve(args):
    scene = load_scene(args.scene)
    _settings(args, scene)
    surf, rep, src, _ = _solve(scene)
    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, "surface.json"), {
        "mode": surf.mode, "kappa": surf.kappa, "foci": surf.foci, "b": surf.b})
    n = surf.dim
    header = [f"x{k + 1}" for k in range(n)] + ["u", "active_index", "near_tie"]
    write_csv(os.path.join(args.out, "assignment.csv"), header, assignment_rows(surf, src))
    write_json(os.path.join(args.out, "report.json"), _envelope(scene, args, rep.to_dict()))
    return OK if rep.converged else FAILED


def cmd_check_target(args):
    scene = load_scene(args.scene)
    T = scene.target
    if not isinstance(T, GraphSurface):
        raise SceneError("check-target needs a graph target")
    n, k = scene.dim, scene.kappa
    chk = scene.raw.get("check", {})
    X = np.asarray(chk.get("X", [0.0] * (n + 1)), dtype=float)
    if X.shape != (n + 1,):
        raise SceneError("check.X has the wrong dimension")
    refr = scene.solver.mode.startswith("Refractor")
    below = scene.solver.mode in ("RefractorBelow", "ReflectorAbove")
    out = {}
    consistent = True
    if refr:
        orient = chk.get("orientation", "below" if below else "above")
        crit = classify_graph_target(T, k, orient, at=X[:-1])
        out["criterion"] = crit.to_dict()
        if np.allclose(X, 0):
            w = np.linalg.eigvalsh(G_hessian_closed_form(T, k))
            out["G_hessian_eigenvalues"] = w.tolist()
            sign_G = w[-1] < 0 if orient == "above" else w[0] > 0
            consistent &= bool(sign_G == (crit.verdict == "regular"))
        aw = aw_condition_numeric(T, X, k, "refractor", orientation=orient)
        consistent &= aw.verdict == "inconclusive" or (aw.verdict == crit.verdict)
    else:
        aw = aw_condition_numeric(T, X, k, "reflector",
                                  orientation="above" if below else "below")
    out["aw_numeric"] = aw.to_dict()
    yb = np.asarray(chk.get("y_bar", X[:-1] - np.eye(n)[0] * 0.5))
    yh = np.asarray(chk.get("y_hat", X[:-1] + np.eye(n)[0] * 0.5))
    mc = min_condition_check(T, X, T.point(yb), T.point(yh), k, scene.solver.mode)
    out["min_condition"] = mc.to_dict()
    out["consistent"] = bool(consistent)
    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, "report.json"), _envelope(scene, args, out))
    return OK if consistent else FAILED


def cmd_trace(args):
    scene = load_scene(args.scene)
    _settings(args, scene)
    surf, rep, src, atoms = _solve(scene)
    rng = np.random.default_rng(args.seed)
    m = scene.raw.get("trace", {}).get("n_rays", 1000)
    rays = scene.cylinder.sample(rng, m)
    results, summary = trace_bundle(surf, rays, atoms)
    os.makedirs(args.out, exist_ok=True)
    n = surf.dim
    header = ([f"x{k + 1}" for k in range(n)] + [f"X{k + 1}" for k in range(n + 1)]
              + [f"exit{k + 1}" for k in range(n + 1)] + ["distance", "atom", "tie"])
    write_csv(os.path.join(args.out, "trace.csv"), header, [r.row() for r in results])
    summary["mass_fractions"] = (tracing_measure(surf, src) / src.total).tolist()
    summary["converged"] = rep.converged
    summary["passed"] = bool(rep.converged and summary["max_distance"] <= 1e-8)
    write_json(os.path.join(args.out, "summary.json"), _envelope(scene, args, summary))
    return OK if summary["passed"] else FAILED


def cmd_counterexample(args):
    if args.which == "fig3":
        body = counterexample_fig3()
        passed = body["passed"]
    else:
        kappas = args.kappa or [0.5, 2.0 / 3.0]
        runs = [remark71_check(k, args.b) for k in kappas]
        passed = all(r["passed"] for r in runs)
        body = {"runs": runs, "passed": passed}
    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, "report.json"), _envelope(None, args, body))
    return OK if passed else FAILED


def cmd_derivatives(args):
    rng = np.random.default_rng(args.seed)
    rows = []
    for kind in ("ellipsoid", "paraboloid"):
        for n in (1, 2):
            rows += derivative_rows(rng, n, kind)
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "table.csv"), ["kind", "n", "sample", "quantity", "rel_err"],
              rows)
    worst = max(r[4] for r in rows)
    print(f"max relative error {worst:.3e} over {len(rows)} comparisons")
    return OK if worst <= 1e-6 else FAILED


def cmd_alpha(args):
    try:
        q = Fraction(args.q)
    except ValueError as exc:
        raise SceneError(f"bad q: {args.q}") from exc
    a = holder_exponent_exact(args.n, q)
    print(f"{float(a):.12f}")
    return OK


def cmd_experiment(args):
    scene = load_scene(args.scene) if args.scene else None
    params = scene.experiment(args.which) if scene else {}
    runner = {"tube": experiments.tube_experiment,
              "inclusion": experiments.inclusion_experiment,
              "refinement": experiments.refinement_experiment,
              "structural": experiments.structural_experiment}[args.which]
    if args.which in ("inclusion", "structural"):
        params.setdefault("seed", args.seed)
    if args.grid is not None and args.which != "inclusion":
        params["grid" if args.which != "structural" else "grids"] = (
            args.grid if args.which != "structural" else (args.grid, 2 * args.grid))
    try:
        body = runner(**params)
    except TypeError as exc:
        raise SceneError(f"bad experiment parameters: {exc}") from exc
    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, f"{args.which}.json"), _envelope(scene, args, body))
    return OK if body["passed"] else FAILED


COMMANDS = {"solve": cmd_solve, "check-target": cmd_check_target, "trace": cmd_trace,
            "counterexample": cmd_counterexample, "derivatives-check": cmd_derivatives,
            "alpha": cmd_alpha, "experiment": cmd_experiment}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (SceneError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INVALID
    except (ConvergenceError, InfeasibleAtomError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
