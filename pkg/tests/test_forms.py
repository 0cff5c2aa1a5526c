import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bzkplate.forms import (
    ElasticDensity,
    FormError,
    QuadraticForm3,
    complete_matrix,
    dist2_SO3,
    hessian_at_identity,
    mandel,
    mandel_basis,
    nearest_rotation,
    q2_relax,
    q2_relax_bruteforce,
)

from conftest import random_psd_gram, random_rotation

matrices2 = arrays(np.float64, (2, 2), elements=st.floats(-3, 3))


def test_mandel_basis_is_orthonormal():
    B = mandel_basis()
    G = np.einsum("aij,bij->ab", B, B)
    assert np.allclose(G, np.eye(6), atol=1e-15)
    X = np.random.default_rng(0).normal(size=(3, 3))
    S = 0.5 * (X + X.T)
    assert np.isclose(np.linalg.norm(mandel(X)), np.linalg.norm(S))


@pytest.mark.parametrize("W", [ElasticDensity.squared_distance(), ElasticDensity.isotropic(1.0, 2.0)])
def test_density_vanishes_at_identity_and_is_frame_indifferent(W, rng):
    assert W(np.eye(3)) == 0.0
    for _ in range(50):
        X = rng.normal(size=(3, 3))
        R = random_rotation(rng)
        assert abs(W(R @ X) - W(X)) <= 1e-12 * max(1.0, W(X))


@pytest.mark.parametrize("W", [ElasticDensity.squared_distance(), ElasticDensity.isotropic(0.7, 1.3)])
def test_growth_bounds(W, rng):
    c, C = W.growth_constants()
    X = rng.normal(scale=2.0, size=(500, 3, 3))
    w = W(X)
    assert np.all(c * dist2_SO3(X) <= w + 1e-12)
    assert np.all(w <= C * (1 + np.sum(X**2, axis=(1, 2))))


def test_nearest_rotation_is_special_orthogonal(rng):
    X = rng.normal(size=(100, 3, 3))
    R = nearest_rotation(X)
    assert np.allclose(R @ np.swapaxes(R, 1, 2), np.eye(3), atol=1e-12)
    assert np.allclose(np.linalg.det(R), 1.0)


def test_hessian_examples():
    Q = hessian_at_identity(ElasticDensity.isotropic(1, 1))
    E11 = np.zeros((3, 3))
    E11[0, 0] = 1
    assert Q(E11) == pytest.approx(3.0, abs=1e-6)
    skew = np.zeros((3, 3))
    skew[0, 1], skew[1, 0] = 1, -1
    assert abs(Q(skew)) < 1e-6
    Qd = hessian_at_identity(ElasticDensity.squared_distance())
    assert Qd(np.eye(3)) == pytest.approx(6.0, abs=1e-6)


def test_hessian_matches_closed_form_gram():
    W = ElasticDensity.isotropic(0.8, 1.7)
    assert np.allclose(hessian_at_identity(W).gram, W.linearized().gram, atol=1e-6)


def test_hessian_reports_bad_direction():
    W = ElasticDensity("callback", {"func": lambda X: np.where(X[..., 2, 1] > 0, np.nan, 0.0)})
    with pytest.raises(FormError, match="direction"):
        hessian_at_identity(W)


def test_quadratic_form_rejects_indefinite():
    G = np.eye(6)
    G[0, 0] = -1
    with pytest.raises(FormError, match="not PSD"):
        QuadraticForm3(G)


def test_q2_examples():
    Q = QuadraticForm3.isotropic(1, 1)
    r = q2_relax(Q, np.eye(2))
    assert r.value == pytest.approx(20 / 3, abs=1e-12)
    assert np.allclose(r.argmin_c, [0, 0, -2 / 3])
    r = q2_relax(Q, np.diag([1.0, 0.0]))
    assert r.value == pytest.approx(8 / 3, abs=1e-12)
    assert np.allclose(r.argmin_c, [0, 0, -1 / 3])
    r = q2_relax(Q, np.zeros((2, 2)))
    assert r.value == 0 and np.allclose(r.argmin_c, 0)


def test_bruteforce_examples():
    Q = QuadraticForm3.isotropic(1, 1)
    assert q2_relax_bruteforce(Q, np.eye(2), 2.0, 1e-3) == pytest.approx(20 / 3, abs=1e-5)
    assert q2_relax_bruteforce(Q, np.zeros((2, 2)), 2.0, 1e-3) == 0.0
    assert q2_relax_bruteforce(QuadraticForm3.isotropic(2, 0), np.eye(2), 2.0, 1e-3) == pytest.approx(8.0, abs=1e-9)


def test_bruteforce_monotone_under_refinement(rng):
    Q = QuadraticForm3(random_psd_gram(rng))
    X = rng.normal(size=(2, 2))
    vals = [q2_relax_bruteforce(Q, X, 5.0, s) for s in (1e-1, 1e-2, 1e-3)]
    assert vals[0] >= vals[1] >= vals[2]


def test_q2_result_recomputes(rng):
    for _ in range(20):
        Q = QuadraticForm3(random_psd_gram(rng))
        X = rng.normal(size=(2, 2))
        r = q2_relax(Q, X)
        assert Q(complete_matrix(X, r.argmin_c)) == pytest.approx(r.value, rel=1e-12, abs=1e-14)


def test_q2_displays_agree(rng):
    Q = QuadraticForm3(random_psd_gram(rng))
    X = rng.normal(size=(2, 2))
    X = X + X.T
    c = q2_relax(Q, X).argmin_c
    a = Q(complete_matrix(X, c))
    b = Q(complete_matrix(X, np.array([c[0] / 2, c[1] / 2, c[2]]), symmetric_row=True))
    assert a == pytest.approx(b, rel=1e-12)


def test_q2_rank_deficient_uses_minimum_norm():
    Q = QuadraticForm3.isotropic(1.0, 0.0)
    Gram = Q.gram.copy()
    Gram[2, :] = Gram[:, 2] = 0.0
    r = q2_relax(QuadraticForm3(Gram), np.eye(2))
    assert r.argmin_c[2] == 0.0


def test_isotropic_closed_form(rng):
    mu, lam = 1.3, 0.6
    Q = QuadraticForm3.isotropic(mu, lam)
    R2 = Q.relaxed()
    for _ in range(100):
        X = rng.normal(size=(2, 2))
        S = 0.5 * (X + X.T)
        expect = 2 * mu * np.sum(S * S) + 2 * mu * lam / (2 * mu + lam) * np.trace(X) ** 2
        assert R2(X) == pytest.approx(expect, rel=1e-10)
        assert q2_relax(Q, X).value == pytest.approx(expect, rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(matrices2, st.floats(-4, 4))
def test_q2_bounded_by_padding_and_homogeneous(X, t):
    Q = QuadraticForm3.isotropic(1.0, 2.0)
    v = q2_relax(Q, X).value
    assert v <= Q(complete_matrix(X, np.zeros(3))) + 1e-12
    assert q2_relax(Q, t * X).value == pytest.approx(t * t * v, rel=1e-12, abs=1e-12)


def test_skew_part_is_invisible(rng):
    Q = QuadraticForm3(random_psd_gram(rng))
    X = rng.normal(size=(3, 3))
    A = rng.normal(size=(3, 3))
    A = A - A.T
    assert Q(X + A) == pytest.approx(Q(X), rel=1e-12)
