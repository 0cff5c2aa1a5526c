import numpy as np
import pytest
from conftest import random_rotation
from scipy.spatial.transform import Rotation

from bzkplate.forms import ElasticDensity
from bzkplate.geometry2d import FlatIsometry
from bzkplate.geometry3d import Ball, Extrusion, Union3
from bzkplate.planar import Disk, Polygon
from bzkplate.recovery import RecoveryParams, build_w_h
from bzkplate.rigidity import (
    BAD_BOUNDARY,
    BAD_INTERIOR,
    GOOD_ELASTIC,
    GOOD_VOID,
    CubeGrid,
    CubeRow,
    DegenerateCubeError,
    RotationField,
    classify_cubes,
    cube_study,
    exact_distance,
    fit_rotation,
    fit_rotations,
    interpolate_fields,
    select_sigma_h,
)
from bzkplate.thinfilm import Deformation3

SQ = Polygon.rectangle((0, 0), (1, 1))
Q3 = ElasticDensity.isotropic(1, 1).linearized()


def cylinder_w(h):
    return build_w_h(FlatIsometry.cylinder(), RecoveryParams(), h, Q3)


def fixed_cylinder(h):
    return Extrusion(Disk((0.5, 0.5), 0.2), 0.0, h)


# ---------------------------------------------------------------- sigma_h


def test_sigma_empty_void():
    sel = select_sigma_h(None, 1 / 8, 0.25)
    assert sel.admissible and sel.perimeter == 0
    assert 0 < sel.sigma_h < 1 / 8


def test_sigma_ball_matches_steiner_perimeter():
    h, s = 1 / 16, 0.25
    A = Ball((0.5, 0.5, h / 2), h / 4)
    sel = select_sigma_h(A, h, s)
    P = 4 * np.pi * (h / 4 + np.array(sel.levels)) ** 2
    # central differences of the cubic tube volume carry an O(step^2) error
    assert np.allclose(sel.perimeters, P, rtol=1e-4)
    # the sphere perimeter grows with the level, so the least admissible one is the lowest level
    assert sel.level == pytest.approx(sel.levels[0])
    assert sel.sigma_h == pytest.approx(sel.level / 3)
    assert sel.perimeter <= sel.bound


def test_sigma_rejects_s():
    with pytest.raises(ValueError):
        select_sigma_h(None, 1 / 8, 0.4)


def test_sigma_two_close_balls_prefer_merged_level():
    h, s = 1 / 8, 0.3
    r = 0.2 * h
    gap = 0.5 * s * s * h
    A = Union3([Ball((0.5 - r - gap / 2, 0.5, h / 2), r), Ball((0.5 + r + gap / 2, 0.5, h / 2), r)])
    sel = select_sigma_h(A, h, s, grid=96)
    P = np.array(sel.perimeters)
    # once the tubes merge the perimeter lies below the sum of two separate spheres
    apart = 2 * 4 * np.pi * (r + np.array(sel.levels)) ** 2
    assert np.all(P < apart)
    assert sel.perimeter == pytest.approx(P.min())


# ---------------------------------------------------------------- classification


def test_empty_void_classification():
    g = classify_cubes(None, 1 / 8, 1 / 32, SQ)
    c = g.counts()
    assert c[GOOD_ELASTIC] == 36 and c[BAD_BOUNDARY] == 28
    assert c[GOOD_VOID] == c[BAD_INTERIOR] == 0
    assert sum(c.values()) == 64


def test_ball_classification_against_exact_distance():
    h = 1 / 16
    A = Ball((0.5, 0.5, h / 2), 2 * h)
    sigma = h / 8
    g = classify_cubes(A, h, sigma, SQ)
    c = g.counts()
    assert c[GOOD_VOID] >= 4 and c[BAD_INTERIOR] > 0
    # dense sampling of every cube re-derives the labels
    t = np.linspace(0, 1, 9)
    T = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3) * h
    for i, j in np.ndindex(*g.shape):
        lab = g.classes[i, j]
        if lab == BAD_BOUNDARY:
            continue
        d = exact_distance(A, np.array([*g.base_point(i, j), 0.0]) + T)
        if lab == GOOD_ELASTIC:
            assert d.min() > sigma
        elif lab == GOOD_VOID:
            assert d.max() < sigma
        else:
            assert d.min() <= sigma + 1e-12 <= d.max() + 2e-12 or (d.min() - sigma) < 0.05 * h


def test_classification_monotone_under_union():
    h = 1 / 16
    A = Ball((0.3, 0.5, h / 2), 2 * h)
    B = Union3([A, Ball((0.7, 0.4, h / 2), 1.5 * h)])
    ga = classify_cubes(A, h, h / 8, SQ)
    gb = classify_cubes(B, h, h / 8, SQ)
    bad = lambda g: np.isin(g.classes, [BAD_INTERIOR, BAD_BOUNDARY])
    assert np.all(bad(gb)[bad(ga)])
    assert bad(gb).sum() > bad(ga).sum()


def test_rejects_sigma():
    with pytest.raises(ValueError, match="sigma_h"):
        classify_cubes(None, 1 / 8, 1 / 8, SQ)


def test_bad_cube_law_fixed_cylinder():
    bh = []
    for h in (1 / 8, 1 / 16, 1 / 32, 1 / 64):
        A = fixed_cylinder(h)
        g = classify_cubes(A, h, select_sigma_h(A, h, 0.25, omega=SQ).sigma_h, SQ)
        bh.append(h * g.n_bad)
    assert max(bh) / min(bh) <= 2


# ---------------------------------------------------------------- rotation fits


def test_fit_rotation_rigid(rng):
    h = 1 / 8
    R0 = random_rotation(rng)
    fit = fit_rotation(Deformation3.rigid(R0, [1.0, -2.0, 0.5], h), (0.25, 0.5), h)
    assert np.abs(fit.R - R0).max() < 1e-12
    assert np.allclose(fit.c, [1.0, -2.0, 0.5], atol=1e-12)
    assert fit.defect_lhs < 1e-12 and fit.defect_rhs < 1e-12


def test_fit_rotation_stretch(rng):
    h = 1 / 8
    R0 = random_rotation(rng)
    for delta in (1e-2, 1e-3):
        M = R0 @ np.diag([1 + delta, 1.0, h])
        y = Deformation3(lambda x, M=M: x @ M.T, lambda x, M=M: np.broadcast_to(M, (len(x), 3, 3)).copy())
        fit = fit_rotation(y, (0.5, 0.5), h)
        vol = h * h
        assert fit.defect_rhs == pytest.approx(delta**2 * vol, rel=1e-10)
        assert fit.defect_lhs / fit.defect_rhs == pytest.approx(1.0, abs=1e-9)
        assert np.abs(fit.R - R0).max() < 1e-12


def test_fit_rotation_cylinder_scaling():
    lhs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        fit = fit_rotation(cylinder_w(h), (0.5, 0.5), h)
        assert np.isfinite(fit.defect_lhs / fit.defect_rhs)
        lhs.append(fit.defect_lhs / (h**2 * h**2))
    # lhs = O(h^2 . cube volume)
    assert max(lhs) / min(lhs) < 2


def test_fit_rotation_degenerate():
    M = np.diag([1.0, 0.0, 1.0])
    y = Deformation3(lambda x: x @ M.T, lambda x: np.broadcast_to(M, (len(x), 3, 3)).copy())
    with pytest.raises(DegenerateCubeError, match="degenerate cube"):
        fit_rotation(y, (0.5, 0.5), 1 / 8)


def test_fitted_rotations_are_proper():
    h = 1 / 16
    rot = fit_rotations(cylinder_w(h), classify_cubes(None, h, h / 4, SQ))
    R = rot.R.reshape(-1, 3, 3)
    assert np.abs(np.einsum("nji,njk->nik", R, R) - np.eye(3)).max() < 1e-12
    assert np.abs(np.linalg.det(R) - 1).max() < 1e-12


def test_C_emp_stable_under_refinement():
    h = 1 / 16
    grid = classify_cubes(None, h, h / 4, SQ)
    y = cylinder_w(h)
    a, b = fit_rotations(y, grid, order=4).C_emp, fit_rotations(y, grid, order=6).C_emp
    assert a > 0 and abs(a - b) <= 0.1 * b


# ---------------------------------------------------------------- interpolation


def test_interpolation_of_one_rigid_motion(rng):
    h = 1 / 8
    R0 = random_rotation(rng)
    c0 = np.array([0.3, 0.1, -0.2])
    grid = classify_cubes(None, h, h / 4, SQ)
    rot = fit_rotations(Deformation3.rigid(R0, c0, h), grid)
    fields, _, rep = interpolate_fields(grid, rot)
    assert rep.R_L2_err < 1e-12 and rep.r_L2_err < 1e-12 and rep.gradR_L2 < 1e-12
    assert rep.partition_err <= 1e-12
    x = rng.uniform(0.3, 0.7, (200, 2))
    R, dR, r, dr, m = fields.evaluate(x)
    assert m.all()
    assert np.abs(R - R0).max() < 1e-12
    assert np.abs(r - (np.column_stack([x, np.zeros(len(x))]) @ R0.T + c0)).max() < 1e-12
    # outside omega_h: Id and (x', 0)
    R, _, r, _, m = fields.evaluate([[0.05, 0.5]])
    assert not m[0] and np.allclose(R[0], np.eye(3)) and np.allclose(r[0], [0.05, 0.5, 0])


def test_partition_of_unity_and_gradient_bound(rng):
    h = 1 / 16
    grid = classify_cubes(None, h, h / 4, SQ)
    fields, _, rep = interpolate_fields(grid, fit_rotations(Deformation3.rest(h), grid))
    tot, gmax = fields.partition(rng.random((5000, 2)))
    assert np.abs(tot - 1).max() <= 1e-12
    assert (gmax * h).max() <= 10 and rep.max_bump_grad_h <= 10


def test_rejects_eta():
    grid = classify_cubes(None, 1 / 8, 1 / 32, SQ)
    with pytest.raises(ValueError):
        interpolate_fields(grid, fit_rotations(Deformation3.rest(1 / 8), grid), eta_fraction=1.0)


def test_cylinder_interpolation_error_is_order_h():
    C = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        grid = classify_cubes(None, h, h / 4, SQ)
        _, _, rep = interpolate_fields(grid, fit_rotations(cylinder_w(h), grid))
        C.append(rep.R_L2_err**2 / rep.omega_h_area / h**2)
        assert rep.jump_bound == pytest.approx(h * grid.n_bad)
    assert max(C) / min(C) <= 2


def test_checkerboard_gradient_energy_is_quadratic_in_the_jump():
    h = 1 / 8
    n = 8
    labels = np.full((n, n), GOOD_ELASTIC, dtype=object)
    grid = CubeGrid(h, np.zeros(2), (n, n), labels, h / 4, SQ)
    odd = (np.add.outer(np.arange(n), np.arange(n)) % 2).astype(bool)
    out = []
    for theta in (0.2, 0.05):
        R1 = Rotation.from_rotvec([0, 0, theta]).as_matrix()
        R = np.broadcast_to(np.eye(3), (n, n, 3, 3)).copy()
        R[odd] = R1
        rot = RotationField(grid, R, np.zeros((n, n, 3)), np.zeros((n, n)), np.zeros((n, n)))
        _, _, rep = interpolate_fields(grid, rot)
        out.append(rep.gradR_L2**2 / np.sum((R1 - np.eye(3)) ** 2))
    assert out[0] == pytest.approx(out[1], rel=1e-10)


# ---------------------------------------------------------------- study


def test_cube_study_rows():
    rows = cube_study(cylinder_w, fixed_cylinder, SQ, [1 / 8, 1 / 16])
    assert len(rows) == 2
    assert CubeRow.CSV_HEADER[-1] == "omega_h_area"
    for row in rows:
        assert len(row.csv_row()) == len(CubeRow.CSV_HEADER)
        assert row.good_void > 0 and row.bad_interior > 0
        assert row.C_emp > 0
