"""Scenario files: YAML with a ``schema: 1`` field and named blocks.

Lengths inside the 3D void block may be written as expressions in the
plate height, e.g. ``radius: h^2`` or ``center: [0.5, 0.5, h/2]``.
"""

from __future__ import annotations

import ast
import operator
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import yaml

from .forms import ElasticDensity
from .geometry2d import FlatIsometry
from .geometry3d import Ball, Box, HalfSpace, Union3, VoidSet3, vertical_cylinder
from .norms import Norm3
from .planar import ConvexOffset, Disk, HalfPlane, PlanarSet, Polygon, Union

SCHEMA = 1


class ScenarioError(ValueError):
    """Malformed scenario; the message names the field and its line."""


# --------------------------------------------------------------------------
# number and expression parsing

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.Pow: operator.pow, ast.BitXor: operator.pow}


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id in env:
        return float(env[node.id])
    if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
        return _OPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    raise ValueError("unsupported expression")


def expr(value, h: float | None = None) -> float:
    """Number, fraction string like "1/8" or an arithmetic expression in h."""
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"expected a number, got {value!r}")
    env = {} if h is None else {"h": h}
    try:
        return _eval(ast.parse(value.strip(), mode="eval"), env)
    except (SyntaxError, ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"cannot evaluate {value!r}") from exc


def parse_h_list(text) -> list[float]:
    """'1/8,1/16' or a list of numbers and fractions."""
    items = text.split(",") if isinstance(text, str) else list(text)
    out = []
    for it in items:
        it = it.strip() if isinstance(it, str) else it
        out.append(float(Fraction(it)) if isinstance(it, str) and "/" in it else expr(it))
    return out


# --------------------------------------------------------------------------
# YAML with line numbers


def _compose(text: str, name: str):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ScenarioError(f"{name}: parse error{where}: {getattr(exc, 'problem', exc)}") from exc
    if node is None:
        raise ScenarioError(f"{name}: empty scenario")
    lines: dict[str, int] = {}

    def walk(n, path):
        lines[path] = n.start_mark.line + 1
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                walk(v, f"{path}.{k.value}" if path else str(k.value))
        elif isinstance(n, yaml.SequenceNode):
            for i, v in enumerate(n.value):
                walk(v, f"{path}[{i}]")

    walk(node, "")
    data = yaml.SafeLoader(text).get_single_data()
    return data, lines


@dataclass(frozen=True, eq=False)
class Scenario:
    id: str
    omega: PlanarSet
    material: ElasticDensity
    norm: Norm3
    immersion: FlatIsometry
    void2d: PlanarSet | None
    void3d_spec: dict | None
    harness: dict
    outputs: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def h_list(self) -> list[float]:
        return parse_h_list(self.harness.get("h_list", ["1/8", "1/16", "1/32"]))

    def void3d(self, h: float) -> VoidSet3 | None:
        """The unrescaled 3D void at height h (lengths may depend on h)."""
        if self.void3d_spec is None:
            return None
        return _build_void3d(self.void3d_spec, h)

    def jump_segments(self):
        return self.immersion.segments


class _Reader:
    def __init__(self, name: str, lines: dict):
        self.name, self.lines = name, lines

    def fail(self, path: str, msg: str):
        line = self.lines.get(path)
        where = f" (line {line})" if line else ""
        raise ScenarioError(f"{self.name}: field '{path}'{where}: {msg}")

    def block(self, data, key, path, required=True):
        if not isinstance(data, dict) or key not in data or data[key] is None:
            if required:
                self.fail(path or key, "missing")
            return None
        return data[key]


def _omega(spec, rd: _Reader, path: str) -> PlanarSet:
    if spec is None:
        return Polygon.rectangle((0, 0), (1, 1))
    if "rectangle" in spec:
        lo, hi = spec["rectangle"]
        return Polygon.rectangle(lo, hi)
    if "polygon" in spec:
        return Polygon(spec["polygon"])
    rd.fail(path, "expected 'rectangle' or 'polygon'")


def _material(spec, rd, path) -> ElasticDensity:
    fam = spec.get("family")
    if fam == "squared_distance":
        return ElasticDensity.squared_distance()
    if fam == "isotropic":
        try:
            return ElasticDensity.isotropic(float(spec["mu"]), float(spec.get("lambda", spec.get("lam"))))
        except (KeyError, TypeError):
            rd.fail(path, "isotropic material needs mu and lambda")
    rd.fail(path + ".family", f"unknown material family {fam!r}")


def _norm(spec, rd, path) -> Norm3:
    if spec is None:
        return Norm3.euclidean()
    try:
        return Norm3.from_dict(spec)
    except (KeyError, ValueError) as exc:
        rd.fail(path, str(exc))


def _immersion(spec, omega, rd, path) -> FlatIsometry:
    kind = (spec or {}).get("kind", "identity")
    if kind == "identity":
        return FlatIsometry.identity(omega)
    if kind == "cylinder":
        return FlatIsometry.cylinder(omega, float(spec.get("kappa", 1.0)), float(spec.get("alpha", 0.0)))
    if kind == "two_pieces":
        return FlatIsometry.two_pieces(omega, float(spec.get("split", 0.5)),
                                       tuple(spec.get("offset", (0.0, 0.0, 0.25))))
    rd.fail(path + ".kind", f"unknown immersion kind {kind!r}")


def _void2d_one(spec, rd, path) -> PlanarSet:
    kind = spec.get("kind")
    if kind == "disk":
        return Disk(spec["center"], float(spec["radius"]))
    if kind == "polygon":
        return Polygon(spec["vertices"])
    if kind == "rectangle":
        return Polygon.rectangle(spec["lo"], spec["hi"])
    if kind == "stadium":
        return ConvexOffset(spec["points"], float(spec["radius"]))
    if kind == "half_plane":
        return HalfPlane(spec["normal"], float(spec["offset"]))
    rd.fail(path + ".kind", f"unknown planar void kind {kind!r}")


def _void2d(spec, rd, path):
    if spec is None:
        return None
    if isinstance(spec, list):
        parts = [_void2d_one(s, rd, f"{path}[{i}]") for i, s in enumerate(spec)]
        return parts[0] if len(parts) == 1 else Union(parts)
    return _void2d_one(spec, rd, path)


def _build_void3d(spec, h: float) -> VoidSet3:
    if isinstance(spec, list):
        parts = [_build_void3d(s, h) for s in spec]
        return parts[0] if len(parts) == 1 else Union3(parts)
    kind = spec.get("kind")
    vec = lambda v: [expr(a, h) for a in v]
    if kind == "ball":
        return Ball(vec(spec["center"]), expr(spec["radius"], h))
    if kind == "box":
        return Box(vec(spec["lo"]), vec(spec["hi"]))
    if kind == "vertical_cylinder":
        return vertical_cylinder(vec(spec["center"]), expr(spec["radius"], h), expr(spec.get("z0", 0), h),
                                 expr(spec.get("z1", "h"), h))
    if kind == "half_space":
        return HalfSpace(vec(spec["normal"]), expr(spec["offset"], h))
    raise ValueError(f"unknown 3D void kind {kind!r}")


def scenario_from_dict(data: dict, name: str = "<scenario>", lines: dict | None = None) -> Scenario:
    rd = _Reader(name, lines or {})
    if not isinstance(data, dict):
        raise ScenarioError(f"{name}: top level must be a mapping")
    if data.get("schema") != SCHEMA:
        rd.fail("schema", f"expected schema {SCHEMA}, got {data.get('schema')!r}")
    sid = data.get("id")
    if not isinstance(sid, str) or not sid:
        rd.fail("id", "missing scenario id")
    omega = _omega(data.get("omega"), rd, "omega")
    material = _material(rd.block(data, "material", "material"), rd, "material")
    norm = _norm(data.get("norm"), rd, "norm")
    immersion = _immersion(data.get("immersion"), omega, rd, "immersion")
    try:
        void2d = _void2d(data.get("void2d"), rd, "void2d")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        rd.fail("void2d", str(exc))
    v3 = data.get("void3d")
    if v3 is not None:
        try:
            _build_void3d(v3, 0.125)
        except (KeyError, TypeError, ValueError) as exc:
            rd.fail("void3d", str(exc))
    harness = dict(data.get("harness") or {})
    if "h_list" in harness:
        try:
            hl = parse_h_list(harness["h_list"])
        except (ValueError, ZeroDivisionError) as exc:
            rd.fail("harness.h_list", str(exc))
        if any(not 0 < h < 1 for h in hl) or any(b >= a for a, b in zip(hl, hl[1:])):
            rd.fail("harness.h_list", "must be strictly decreasing in (0, 1)")
    return Scenario(sid, omega, material, norm, immersion, void2d, v3, harness, dict(data.get("outputs") or {}), data)


def load_scenario(path) -> Scenario:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    data, lines = _compose(text, str(path))
    return scenario_from_dict(data, str(path), lines)


def loads_scenario(text: str, name: str = "<string>") -> Scenario:
    data, lines = _compose(text, name)
    return scenario_from_dict(data, name, lines)
