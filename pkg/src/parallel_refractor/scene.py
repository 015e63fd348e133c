"""
Scene files and deterministic report output.

Scenes are JSON documents validated against ``data/scene.schema.json``.
Reports are written with every float at 17 significant digits so that the
same scene and seed give byte-identical files.
"""

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from .errors import DomainError
from .optics import Cylinder, OpticalConfig
from .solver import SolverConfig, SourceDensity
from .targets import DiscreteAtoms, GraphSurface


class SceneError(ValueError):
    """Invalid or unreadable scene file."""


def load_schema():
    text = resources.files(__package__).joinpath("data/scene.schema.json").read_text()
    return json.loads(text)


# --- output -------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, float):
        if math.isnan(obj):
            return "NaN"
        if math.isinf(obj):
            return "Infinity" if obj > 0 else "-Infinity"
        return format(obj, ".17g")
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    return json.dumps(obj)


def dumps(obj, indent=2):
    """JSON text with floats printed as ``format(x, '.17g')``."""
    return _encode(_plain(obj), indent, 0) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def write_csv(path, header, rows):
    """Comma-separated, header row, UTF-8, LF line endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])


# --- input --------------------------------------------------------------

@dataclass
class Scene:
    raw: dict
    sha256: str
    optics: OpticalConfig
    cylinder: Cylinder
    target: object
    solver: SolverConfig

    @property
    def dim(self):
        return self.cylinder.dim

    @property
    def kappa(self):
        return self.optics.kappa

    def source(self, grid=None):
        desc = self.raw.get("source", {"type": "uniform"})
        g = self.solver.grid if grid is None else grid
        if desc["type"] == "tabulated":
            vals = np.asarray(desc.get("values", []), dtype=float)
            if vals.size != g**self.dim:
                raise SceneError(f"tabulated source needs {g}^{self.dim} values, got {vals.size}")
            return SourceDensity(self.cylinder, grid=g, values=vals)
        return SourceDensity(self.cylinder, grid=g)

    def atoms(self):
        """Discrete target used by the solver.

        Graph targets must list horizontal ``atoms``; their weights are the
        surface density at those points.
        """
        if isinstance(self.target, DiscreteAtoms):
            return self.target
        ys = self.raw["target"].get("atoms")
        if not ys:
            raise SceneError("a graph target needs 'atoms' to be solved for")
        ys = np.asarray(ys, dtype=float)
        return DiscreteAtoms(self.target.point(ys), self.target.density_at(ys))

    def experiment(self, name):
        for e in self.raw.get("experiments", []):
            if e["name"] == name:
                return e.get("params", {})
        return {}


def _build_target(desc, n):
    if desc["type"] == "atoms":
        pts = np.asarray(desc["points"], dtype=float)
        w = np.asarray(desc["weights"], dtype=float)
        if pts.shape[1] != n + 1:
            raise SceneError(f"atoms must have {n + 1} coordinates")
        if len(w) != len(pts):
            raise SceneError("one weight per atom is required")
        return DiscreteAtoms(pts, w, desc.get("note", ""))
    psi = desc["psi"]
    g = np.asarray(psi.get("g", [0.0] * n), dtype=float)
    A = np.asarray(psi.get("A", np.zeros((n, n))), dtype=float)
    if g.shape != (n,) or A.shape != (n, n):
        raise SceneError("psi coefficients do not match the dimension")
    return GraphSurface.quadratic(psi["c0"], g, A, desc["lower"], desc["upper"],
                                  note=desc.get("note", ""))


def parse_scene(text, sha=None):
    """Validate scene text and build the model objects."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise SceneError(f"schema violation at {where}: {exc.message}") from exc
    sha = hashlib.sha256(text.encode("utf-8")).hexdigest() if sha is None else sha
    try:
        optics = OpticalConfig(**raw["optics"])
        c = raw["cylinder"]
        cyl = Cylinder(tuple(c["lower"]), tuple(c["upper"]), c["height"], c.get("ball", False))
        target = _build_target(raw["target"], cyl.dim)
        solver = SolverConfig(**raw.get("solver", {}))
    except DomainError as exc:
        raise SceneError(str(exc)) from exc
    return Scene(raw, sha, optics, cyl, target, solver)


def load_scene(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise SceneError(f"cannot read scene: {exc}") from exc
    return parse_scene(data.decode("utf-8"), hashlib.sha256(data).hexdigest())
