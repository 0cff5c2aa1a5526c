"""Stored energy densities, the linearized form Q3 and its planar relaxation Q2.

Q3 lives on symmetric 3x3 matrices and is stored as a 6x6 Gram matrix in the
Mandel basis ordered (11, 22, 33, 23, 13, 12): off-diagonal coordinates carry
a factor sqrt(2) so that the Euclidean norm of the coordinate vector equals
the Frobenius norm of the matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

SQRT2 = np.sqrt(2.0)
_MANDEL_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


class FormError(ValueError):
    """Raised for indefinite forms or failed derivative evaluations."""


def mandel(X: np.ndarray) -> np.ndarray:
    """Mandel coordinates of sym(X); accepts (..., 3, 3)."""
    X = np.asarray(X, dtype=float)
    S = 0.5 * (X + np.swapaxes(X, -1, -2))
    return np.stack(
        [
            S[..., 0, 0],
            S[..., 1, 1],
            S[..., 2, 2],
            SQRT2 * S[..., 1, 2],
            SQRT2 * S[..., 0, 2],
            SQRT2 * S[..., 0, 1],
        ],
        axis=-1,
    )


def mandel_basis() -> np.ndarray:
    """The six orthonormal symmetric basis matrices, shape (6, 3, 3)."""
    B = np.zeros((6, 3, 3))
    for k, (i, j) in enumerate(_MANDEL_PAIRS):
        if i == j:
            B[k, i, i] = 1.0
        else:
            B[k, i, j] = B[k, j, i] = 1.0 / SQRT2
    return B


def signed_singular_values(X: np.ndarray) -> np.ndarray:
    """Singular values with the smallest one negated where det X < 0.

    These are the eigenvalues of R^T X for R the nearest rotation.
    """
    X = np.asarray(X, dtype=float)
    sv = np.linalg.svd(X, compute_uv=False)
    neg = np.linalg.det(X) < 0
    sv = sv.copy()
    sv[..., -1] = np.where(neg, -sv[..., -1], sv[..., -1])
    return sv


def nearest_rotation(X: np.ndarray) -> np.ndarray:
    """Orthogonal polar factor with determinant correction (batched)."""
    U, _, Vt = np.linalg.svd(np.asarray(X, dtype=float))
    D = np.ones(U.shape[:-1])
    D[..., -1] = np.sign(np.linalg.det(U @ Vt))
    D[..., -1] = np.where(D[..., -1] == 0, 1.0, D[..., -1])
    return (U * D[..., None, :]) @ Vt


def dist2_SO3(X: np.ndarray) -> np.ndarray:
    sv = signed_singular_values(X)
    return np.sum((sv - 1.0) ** 2, axis=-1)


@dataclass(frozen=True)
class QuadraticForm3:
    """PSD quadratic form on 3x3 matrices that only sees the symmetric part."""

    gram: np.ndarray
    validate: bool = field(default=True, compare=False)

    def __post_init__(self):
        G = np.asarray(self.gram, dtype=float)
        if G.shape != (6, 6):
            raise ValueError(f"Gram matrix must be 6x6, got {G.shape}")
        G = 0.5 * (G + G.T)
        G.setflags(write=False)
        object.__setattr__(self, "gram", G)
        if self.validate:
            lo = np.linalg.eigvalsh(G).min()
            if lo < -1e-10 * max(1.0, np.abs(G).max()):
                raise FormError(f"form not PSD (smallest eigenvalue {lo:.3e})")

    @classmethod
    def isotropic(cls, mu: float, lam: float) -> "QuadraticForm3":
        """2 mu |sym X|^2 + lam (tr X)^2."""
        e = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
        return cls(2.0 * mu * np.eye(6) + lam * np.outer(e, e))

    def __call__(self, X: np.ndarray) -> np.ndarray | float:
        v = mandel(X)
        out = np.einsum("...i,ij,...j->...", v, self.gram, v)
        return float(out) if np.ndim(out) == 0 else out

    # ------------------------------------------------------------------ Q2
    def _relax_blocks(self):
        # w = (X11, X22, sqrt2*sym(X)12) for the planar block, c for the column.
        P = np.zeros((6, 3))
        P[0, 0] = P[1, 1] = P[5, 2] = 1.0
        L = np.zeros((6, 3))
        L[4, 0] = L[3, 1] = 1.0 / SQRT2
        L[2, 2] = 1.0
        return P, L

    def relaxed(self) -> "RelaxedForm2":
        """Schur-complement form of Q2 for fast batched evaluation."""
        P, L = self._relax_blocks()
        G = self.gram
        K = L.T @ G @ L
        _check_curvature(K)
        Kp = np.linalg.pinv(K, rcond=1e-12)
        B = L.T @ G @ P
        gram2 = P.T @ G @ P - B.T @ Kp @ B
        return RelaxedForm2(gram=0.5 * (gram2 + gram2.T), argmin_map=-Kp @ B)


def _check_curvature(K: np.ndarray) -> None:
    lo = np.linalg.eigvalsh(0.5 * (K + K.T)).min()
    if lo < -1e-12 * max(1.0, np.abs(K).max()):
        raise FormError(f"form not PSD (negative curvature {lo:.3e} in the free column)")


def _planar_coords(X2: np.ndarray) -> np.ndarray:
    X2 = np.asarray(X2, dtype=float)
    off = 0.5 * (X2[..., 0, 1] + X2[..., 1, 0])
    return np.stack([X2[..., 0, 0], X2[..., 1, 1], SQRT2 * off], axis=-1)


def complete_matrix(X2: np.ndarray, c: np.ndarray, symmetric_row: bool = False) -> np.ndarray:
    """3x3 matrix with upper-left block X2, last column c; bottom row 0 or (c')^T."""
    X2 = np.asarray(X2, dtype=float)
    c = np.asarray(c, dtype=float)
    M = np.zeros(np.broadcast_shapes(X2.shape[:-2], c.shape[:-1]) + (3, 3))
    M[..., :2, :2] = X2
    M[..., :2, 2] = c[..., :2]
    M[..., 2, 2] = c[..., 2]
    if symmetric_row:
        M[..., 2, :2] = c[..., :2]
    return M


@dataclass(frozen=True)
class RelaxedForm2:
    """Q2 as a Gram matrix in coordinates (X11, X22, sqrt2*X12) plus the argmin map."""

    gram: np.ndarray
    argmin_map: np.ndarray

    def __call__(self, X2: np.ndarray):
        w = _planar_coords(X2)
        out = np.einsum("...i,ij,...j->...", w, self.gram, w)
        return float(out) if np.ndim(out) == 0 else out

    def argmin(self, X2: np.ndarray) -> np.ndarray:
        """Minimizing column c for the bottom-row-zero completion."""
        return _planar_coords(X2) @ self.argmin_map.T


@dataclass(frozen=True)
class Q2Result:
    value: float
    argmin_c: np.ndarray


def q2_relax(Q3: QuadraticForm3, X: np.ndarray) -> Q2Result:
    """min over c in R^3 of Q3 applied to [[X, c'], [0, c3]].

    The stationarity system is solved by a pseudo-inverse (cutoff
    1e-12 * sigma_max), so rank-deficient cases return the minimum-norm c.
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (2, 2):
        raise ValueError("X must be 2x2")
    P, L = Q3._relax_blocks()
    G = Q3.gram
    K = L.T @ G @ L
    _check_curvature(K)
    v0 = P @ _planar_coords(X)
    c = -np.linalg.pinv(K, rcond=1e-12) @ (L.T @ G @ v0)
    value = Q3(complete_matrix(X, c))
    return Q2Result(value=float(value), argmin_c=c)


def q2_relax_bruteforce(
    Q3: QuadraticForm3,
    X: np.ndarray,
    grid_radius: float,
    grid_step: float,
    center=(0.0, 0.0, 0.0),
    points_per_side: int = 10,
) -> float:
    """Grid minimization of Q3 over the free column, independent of the linear solve.

    Starts with a grid of spacing grid_radius/points_per_side on the cube of
    half-width grid_radius around `center`, then repeatedly refines by a
    factor 10 around the incumbent (re-centring while the incumbent sits on a
    window edge) down to `grid_step`. Every level contains the previous
    incumbent, so the result is nonincreasing under refinement.
    """
    if grid_radius <= 0 or grid_step <= 0:
        raise ValueError("grid_radius and grid_step must be positive")
    X = np.asarray(X, dtype=float)
    lo = np.asarray(center, float) - grid_radius
    hi = np.asarray(center, float) + grid_radius
    m = points_per_side
    offs = np.arange(-m, m + 1)
    best_c = np.asarray(center, float).copy()
    best = Q3(complete_matrix(X, best_c))
    step = grid_radius / m
    while True:
        step = max(step, grid_step)
        for _ in range(200):
            axes = [np.clip(best_c[k] + offs * step, lo[k], hi[k]) for k in range(3)]
            C = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
            vals = Q3(complete_matrix(X[None], C))
            i = int(np.argmin(vals))
            idx = np.unravel_index(i, (2 * m + 1,) * 3)
            if vals[i] < best:
                best, best_c = float(vals[i]), C[i].copy()
            on_edge = any(
                (j in (0, 2 * m)) and lo[k] < axes[k][j] < hi[k] for k, j in enumerate(idx)
            )
            if not on_edge:
                break
        if step <= grid_step:
            return best
        step /= 10.0


@dataclass(frozen=True)
class ElasticDensity:
    """Frame-indifferent single-well density W with W(Id) = 0.

    family: "squared_distance" (dist^2 to SO(3)), "isotropic" (Lamé moduli
    mu, lam acting on the Biot strain R^T X - I) or "callback" (params
    must hold a vectorized callable under key "func"; its growth constants
    are unknown and reported as NaN).
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in ("squared_distance", "isotropic", "callback"):
            raise ValueError(f"unknown density family {self.family!r}")
        if self.family == "isotropic":
            for key in ("mu", "lam"):
                if key not in self.params:
                    raise ValueError(f"isotropic density needs parameter {key!r}")
        if self.family == "callback" and not callable(self.params.get("func")):
            raise ValueError("callback density needs a callable under 'func'")

    @classmethod
    def squared_distance(cls) -> "ElasticDensity":
        return cls("squared_distance")

    @classmethod
    def isotropic(cls, mu: float, lam: float) -> "ElasticDensity":
        return cls("isotropic", {"mu": float(mu), "lam": float(lam)})

    @property
    def moduli(self) -> tuple[float, float]:
        if self.family == "squared_distance":
            return 1.0, 0.0
        if self.family == "isotropic":
            return self.params["mu"], self.params["lam"]
        raise AttributeError("callback densities have no Lamé moduli")

    def __call__(self, X: np.ndarray):
        X = np.asarray(X, dtype=float)
        if self.family == "callback":
            return self.params["func"](X)
        mu, lam = self.moduli
        sv = signed_singular_values(X)
        out = mu * np.sum((sv - 1.0) ** 2, axis=-1)
        if lam:
            out = out + 0.5 * lam * (np.sum(sv, axis=-1) - 3.0) ** 2
        return float(out) if np.ndim(out) == 0 else out

    def growth_constants(self) -> tuple[float, float]:
        """(c, C) with c dist^2(X, SO(3)) <= W(X) <= C (1 + |X|^2)."""
        if self.family == "callback":
            return float("nan"), float("nan")
        mu, lam = self.moduli
        # |S - I|^2 <= 2|X|^2 + 6 and (tr(S - I))^2 <= 3 |S - I|^2
        return mu, 6.0 * (mu + 1.5 * lam)

    def linearized(self) -> QuadraticForm3:
        """Q3 = D^2 W(Id): closed form for builtins, finite differences otherwise."""
        if self.family == "callback":
            return hessian_at_identity(self)
        return QuadraticForm3.isotropic(*self.moduli)


def _second_differences(W: Callable, eta: float) -> np.ndarray:
    E = np.zeros((9, 3, 3))
    for a in range(9):
        E[a].flat[a] = 1.0
    I = np.eye(3)
    pp = I + eta * (E[:, None] + E[None, :])
    pm = I + eta * (E[:, None] - E[None, :])
    vals_pp = np.asarray(W(pp), dtype=float)
    vals_pm = np.asarray(W(pm), dtype=float)
    vals_mp = np.asarray(W(I - eta * (E[:, None] - E[None, :])), dtype=float)
    vals_mm = np.asarray(W(I - eta * (E[:, None] + E[None, :])), dtype=float)
    H = (vals_pp - vals_pm - vals_mp + vals_mm) / (4.0 * eta**2)
    return H


def hessian_at_identity(W: ElasticDensity | Callable, eta: float = 1e-4) -> QuadraticForm3:
    """Q3 by central second differences at Id along the 9 matrix directions.

    One Richardson step combines steps eta and eta/2; the 9x9 Hessian is
    symmetrized and projected onto the Mandel basis.
    """
    H1 = _second_differences(W, eta)
    H2 = _second_differences(W, eta / 2.0)
    H = (4.0 * H2 - H1) / 3.0
    bad = ~np.isfinite(H)
    if bad.any():
        a, b = np.argwhere(bad)[0]
        raise FormError(
            f"non-finite difference quotient along directions e{a // 3 + 1}{a % 3 + 1}, "
            f"e{b // 3 + 1}{b % 3 + 1}"
        )
    H = 0.5 * (H + H.T)
    M = mandel_basis().reshape(6, 9).T
    return QuadraticForm3(M.T @ H @ M, validate=False)
