import numpy as np
import pytest

from bzkplate.forms import QuadraticForm3
from bzkplate.geometry2d import (
    FlatIsometry,
    JumpSetError,
    jump_measure,
    limit_energy,
    minkowski_condition_check,
    minkowski_content_estimate,
    monte_carlo_tube_area,
    second_fundamental_form,
    second_fundamental_form_fd,
    tube_area,
)
from bzkplate.norms import Norm2, Norm3
from bzkplate.planar import Disk, HalfPlane, Polygon

from conftest import random_rotation

EUC = Norm3.euclidean()
Q_UNIT = QuadraticForm3.isotropic(1, 1)


def test_identity_has_zero_curvature():
    r = FlatIsometry.identity()
    assert np.allclose(second_fundamental_form(r, [0.3, 0.6]), 0)


def test_cylinder_parameterization_and_curvature():
    r = FlatIsometry.cylinder(kappa=1.0)
    x = np.array([[0.2, 0.7], [0.9, 0.1]])
    expect = np.column_stack([np.sin(x[:, 0]), 1 - np.cos(x[:, 0]), x[:, 1]])
    assert np.allclose(r(x), expect, atol=1e-12)
    II = second_fundamental_form(r, [0.4, 0.5])
    assert np.allclose(II, np.diag([1.0, 0.0]), atol=1e-12)
    assert np.allclose(second_fundamental_form_fd(r, np.array([0.4, 0.5])), II, atol=1e-4)


def test_rotated_ruling():
    r = FlatIsometry.cylinder(kappa=1.0, alpha=np.pi / 2)
    assert np.allclose(second_fundamental_form(r, [0.4, 0.5]), np.diag([0.0, 1.0]), atol=1e-12)


def test_second_fundamental_form_rejects_jump_set():
    r = FlatIsometry.two_pieces()
    with pytest.raises(JumpSetError, match="on jump set"):
        second_fundamental_form(r, [0.5, 0.3])


@pytest.mark.parametrize("r", [FlatIsometry.cylinder(kappa=2.0, alpha=0.3), FlatIsometry.two_pieces()])
def test_immersion_validates(r):
    rep = r.validate(samples=100)
    assert rep["isometry_error"] < 1e-12
    assert rep["rank_defect"] < 1e-10
    assert rep["trace_mismatches"] == []


def test_jump_measure_examples():
    r = FlatIsometry.two_pieces()
    assert jump_measure(r, None, EUC) == pytest.approx(2.0)
    assert jump_measure(r, Polygon.rectangle((0.25, -0.1), (0.75, 1.1)), EUC) == pytest.approx(0.0)
    assert jump_measure(r, Polygon.rectangle((0, 0), (1, 0.5)), EUC) == pytest.approx(1.0, abs=1e-9)
    assert jump_measure(r, Polygon.rectangle((0, 0), (1, 1)), EUC) == pytest.approx(0.0, abs=1e-9)


def test_limit_energy_examples():
    e = limit_energy(FlatIsometry.identity(), None, Q_UNIT, EUC)
    assert (e.bulk, e.crack_surface, e.void_surface, e.total) == (0, 0, 0, 0)
    e = limit_energy(FlatIsometry.cylinder(), None, Q_UNIT, EUC)
    assert e.bulk == pytest.approx(1 / 9, rel=1e-10)
    e = limit_energy(FlatIsometry.identity(), Disk((0.5, 0.5), 0.25), Q_UNIT, EUC)
    assert e.bulk == 0 and e.void_surface == pytest.approx(np.pi / 2, rel=1e-9)
    assert e.total == e.bulk + e.crack_surface + e.void_surface


def test_cylinder_with_void_removes_bulk():
    e = limit_energy(FlatIsometry.cylinder(), Disk((0.5, 0.5), 0.25), Q_UNIT, EUC)
    assert e.bulk == pytest.approx((1 - np.pi / 16) / 9, rel=1e-8)


def test_limit_energy_rigid_invariance(rng):
    r = FlatIsometry.cylinder(kappa=1.5, alpha=0.4)
    D = Disk((0.3, 0.6), 0.2)
    a = limit_energy(r, D, Q_UNIT, EUC)
    b = limit_energy(r.with_rigid_motion(random_rotation(rng), rng.normal(size=3)), D, Q_UNIT, EUC)
    assert a.bulk == pytest.approx(b.bulk, rel=1e-12)
    assert a.void_surface == b.void_surface and a.crack_surface == b.crack_surface


def test_limit_energy_curvature_scaling():
    r = FlatIsometry.cylinder(kappa=1.0, alpha=0.2)
    psi = Norm3.weighted_l1([1.0, 2.0, 1.0])
    a = limit_energy(r, Disk((0.5, 0.5), 0.2), Q_UNIT, psi)
    b = limit_energy(r.with_scaled_curvature(3.0), Disk((0.5, 0.5), 0.2), Q_UNIT, psi)
    assert b.bulk == pytest.approx(9 * a.bulk, rel=1e-10)
    assert b.void_surface == a.void_surface


def test_minkowski_segment_and_disk():
    N = Norm2("euclidean")
    q = minkowski_content_estimate([((0.5, 0.25), (0.5, 0.75))], None, N, [1e-3])[0]
    # stadium of half-length 1/2: t^-1 (2 L t + pi t^2)
    assert q == pytest.approx(2 * 0.5 + np.pi * 1e-3, rel=1e-6)
    q = minkowski_content_estimate([], Disk((0.5, 0.5), 0.25), N, [1e-3])[0]
    assert q == pytest.approx(2 * np.pi * 0.25 + np.pi * 1e-3, rel=1e-4)


def test_minkowski_against_monte_carlo():
    N = Norm2("euclidean")
    omega = Polygon.rectangle((0, 0), (1, 1))
    segs = [((0.5, 0.1), (0.5, 0.9))]
    D = HalfPlane((0.0, 1.0), 0.5)
    t = 0.02
    a = tube_area(segs, D, N, t, omega)
    mc, se = monte_carlo_tube_area(segs, D, N, t, omega, samples=2 * 10**6)
    assert abs(a - mc) <= 3 * se + 1e-12


def test_minkowski_condition_report():
    rep = minkowski_condition_check(FlatIsometry.two_pieces(), None, EUC, [1e-1, 1e-2, 1e-3])
    assert rep.holds and rep.lhs == pytest.approx(2.0)
    rep = minkowski_condition_check(FlatIsometry.identity(), Disk((0.5, 0.5), 0.25), EUC, [1e-1, 1e-2, 1e-3])
    assert rep.holds and rep.lhs == pytest.approx(np.pi / 2, rel=1e-9)
    with pytest.raises(ValueError):
        minkowski_condition_check(FlatIsometry.identity(), None, EUC, [1e-2, 5e-3])
