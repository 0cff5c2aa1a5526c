import numpy as np
import pytest

from bzkplate.distance import Grid
from bzkplate.forms import ElasticDensity
from bzkplate.geometry2d import FlatIsometry
from bzkplate.geometry3d import Ball, Extrusion
from bzkplate.norms import Norm3
from bzkplate.planar import Disk, Polygon
from bzkplate.quadrature import QuadratureError
from bzkplate.recovery import RecoveryParams, build_w_h, strain_decomposition
from bzkplate.thinfilm import (
    Deformation3,
    FilmScene,
    adaptive_volume_integral,
    film_energy,
    rescaled_gradient,
    unrescaled_energy,
    unrescaled_scene,
)

from conftest import random_rotation

SQ = Polygon.rectangle((0, 0), (1, 1))
EUC = Norm3.euclidean()
W = ElasticDensity.isotropic(1, 1)


@pytest.mark.parametrize("h", [0.5, 1 / 8, 1 / 64])
def test_rescaled_gradient_rest_and_rigid(h, rng):
    x = rng.random((20, 3))
    assert np.allclose(rescaled_gradient(Deformation3.rest(h), x, h), np.eye(3))
    R = random_rotation(rng)
    assert np.allclose(rescaled_gradient(Deformation3.rigid(R, [1, 2, 3], h), x, h), R)


def test_rescaled_gradient_of_recovery_map(rng):
    h = 1 / 16
    r = FlatIsometry.cylinder()
    w = build_w_h(r, RecoveryParams(), h, W.linearized())
    x = rng.uniform([0.05, 0.05, 0.0], [0.95, 0.95, 1.0], (200, 3))
    sd = strain_decomposition(r, w.phi, w.d, x, h)
    expect = np.einsum("nij,njk->nik", sd.R, np.eye(3) + h * sd.s[:, None, None] * sd.G_h)
    F = w.fd_gradient(x, 1e-6)
    F[:, :, 2] /= h
    assert np.abs(F - expect).max() < 1e-8
    assert w.check_gradient() < 1e-6


def test_grid_deformation_uses_differences():
    g = Grid((0, 0, 0), (0.1, 0.1, 0.1), (11, 11, 11))
    y = Deformation3.from_grid(g, g.centers() * [1.0, 2.0, 0.5])
    assert not y.has_analytic_gradient
    assert np.allclose(y.gradient([[0.5, 0.5, 0.5]])[0], np.diag([1.0, 2.0, 0.5]), atol=1e-12)


def test_rest_state_energy_vanishes():
    e = film_energy(FilmScene(SQ, 1 / 8, Deformation3.rest(1 / 8), None, W, EUC))
    assert e.total == 0


def test_rest_state_with_cylindrical_void():
    h = 1 / 8
    D = Extrusion(Disk((0.5, 0.5), 0.25), 0, 1)
    e = film_energy(FilmScene(SQ, h, Deformation3.rest(h), D, W, EUC))
    assert e.bulk == 0
    # the caps lie on the plate faces and are not part of the open plate
    assert e.void_surface == pytest.approx(np.pi / 2, rel=1e-8)


def test_cylinder_film_energy_near_limit():
    h = 1 / 32
    w = build_w_h(FlatIsometry.cylinder(), RecoveryParams(), h, W.linearized())
    e = film_energy(FilmScene(SQ, h, w, None, W, EUC))
    assert e.bulk == pytest.approx(1 / 9, abs=1e-3)


def test_unrescaled_examples():
    h = 1 / 8
    assert unrescaled_energy(Deformation3.rest(1.0), None, h, W, EUC) == 0
    A = Ball((0.5, 0.5, h / 2), h / 4)
    J = unrescaled_energy(Deformation3.rest(1.0), A, h, W, EUC)
    assert J == pytest.approx(h * h * 4 * np.pi * (h / 4) ** 2, rel=1e-8)


@pytest.mark.parametrize("void", [None, Ball((0.5, 0.5, 0.5), 0.25), Extrusion(Disk((0.4, 0.6), 0.2), 0, 1)])
def test_rescaling_identity(void):
    h = 1 / 8
    w = build_w_h(FlatIsometry.cylinder(kappa=0.7, alpha=0.3), RecoveryParams(), h, W.linearized())
    sc = FilmScene(SQ, h, w, void, W, Norm3.weighted_l1([1.0, 1.0, 2.0]))
    E = film_energy(sc).total
    v, A = unrescaled_scene(sc)
    J = unrescaled_energy(v, A, h, W, sc.norm, SQ)
    assert J / h**3 == pytest.approx(E, rel=1e-6)


def test_frame_invariance_of_bulk(rng):
    h = 1 / 8
    w = build_w_h(FlatIsometry.cylinder(), RecoveryParams(), h, W.linearized())
    a = film_energy(FilmScene(SQ, h, w, None, W, EUC)).bulk
    b = film_energy(FilmScene(SQ, h, w.rotated(random_rotation(rng)), None, W, EUC)).bulk
    assert b == pytest.approx(a, rel=1e-10)


def test_perturbed_rest_state_has_positive_bulk():
    h = 1 / 8
    base = Deformation3.rest(h)
    bump = Deformation3(lambda x: base(x) + 0.01 * np.sin(3 * x[:, :1]) * [0, 0, 1])
    e = film_energy(FilmScene(SQ, h, bump, None, W, EUC))
    assert e.bulk > 0


def test_volume_cubature_of_smooth_function():
    v = adaptive_volume_integral(lambda x: np.exp(x[:, 0] + x[:, 1] * x[:, 2]), lambda x: np.ones(len(x), bool),
                                 [0, 0, 0], [1, 1, 1], tol=1e-10)
    from scipy.integrate import tplquad
    ref = tplquad(lambda z, y, x: np.exp(x + y * z), 0, 1, 0, 1, 0, 1)[0]
    assert v == pytest.approx(ref, rel=1e-9)


def test_undefined_integrand_reported():
    with pytest.raises(QuadratureError, match="undefined"):
        adaptive_volume_integral(lambda x: np.full(len(x), np.nan), lambda x: np.ones(len(x), bool),
                                 [0, 0, 0], [1, 1, 1])


def test_scene_rejects_bad_h():
    with pytest.raises(ValueError):
        FilmScene(SQ, 1.5, Deformation3.rest(1.5), None, W, EUC)
