from pathlib import Path

import numpy as np
import pytest

from bzkplate.config import ScenarioError, expr, load_scenario, loads_scenario, parse_h_list
from bzkplate.geometry3d import Ball
from bzkplate.planar import Disk

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

MINIMAL = """\
schema: 1
id: mini
material: {family: isotropic, mu: 1, lambda: 1}
"""


def test_expressions():
    assert expr("h^2", 0.25) == pytest.approx(1 / 16)
    assert expr("h/2 + 1", 0.5) == 1.25
    assert expr("-3") == -3.0
    assert expr(2) == 2.0
    with pytest.raises(ValueError):
        expr("h", None)
    with pytest.raises(ValueError):
        expr("__import__('os')", 0.1)


def test_h_lists():
    assert parse_h_list("1/8,1/16") == [0.125, 0.0625]
    assert parse_h_list(["1/4", 0.1]) == [0.25, 0.1]


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    scn = load_scenario(path)
    assert scn.id == path.stem
    assert all(0 < h < 1 for h in scn.h_list)


def test_defaults():
    scn = loads_scenario(MINIMAL)
    assert scn.void2d is None and scn.void3d(0.1) is None
    assert scn.h_list == [1 / 8, 1 / 16, 1 / 32]
    assert scn.norm.family == "euclidean"


def test_void_depends_on_h():
    scn = load_scenario(SCENARIOS / "droplet_small_ball.yaml")
    A = scn.void3d(0.25)
    assert isinstance(A, Ball)
    assert A.radius == pytest.approx(1 / 16)
    assert np.allclose(A.center, [0.5, 0.5, 0.125])


def test_planar_void():
    scn = load_scenario(SCENARIOS / "void_disk.yaml")
    assert isinstance(scn.void2d, Disk) and scn.void2d.radius == 0.25


@pytest.mark.parametrize(
    "text, field, line",
    [
        ("schema: 2\nid: x\nmaterial: {family: isotropic, mu: 1, lambda: 1}\n", "schema", 1),
        ("schema: 1\nmaterial: {family: isotropic, mu: 1, lambda: 1}\n", "id", None),
        ("schema: 1\nid: x\n", "material", None),
        (MINIMAL.replace("isotropic", "rubber"), "material.family", 3),
        (MINIMAL + "norm: {family: weighted_l1, w: [1, -1, 1]}\n", "norm", 4),
        (MINIMAL + "immersion: {kind: helix}\n", "immersion.kind", 4),
        (MINIMAL + "void2d: {kind: blob}\n", "void2d.kind", 4),
        (MINIMAL + "void3d: {kind: torus}\n", "void3d", 4),
        (MINIMAL + "harness:\n  h_list: [1/16, 1/8]\n", "harness.h_list", 5),
        (MINIMAL + "harness:\n  h_list: [2]\n", "harness.h_list", 5),
    ],
)
def test_errors_name_field_and_line(text, field, line):
    with pytest.raises(ScenarioError) as exc:
        loads_scenario(text, "s.yaml")
    msg = str(exc.value)
    assert msg.startswith("s.yaml") and f"'{field}'" in msg
    if line is not None:
        assert f"line {line}" in msg


def test_yaml_syntax_error():
    with pytest.raises(ScenarioError, match="parse error at line"):
        loads_scenario("schema: 1\nid: [unclosed\n")


def test_empty_document():
    with pytest.raises(ScenarioError, match="empty"):
        loads_scenario("")
