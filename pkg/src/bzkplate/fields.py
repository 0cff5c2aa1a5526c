"""Planar vector fields on the plate domain and the per-slice shear map.

Every field exposes ``value(x)`` with shape (n, k) and ``grad(x)`` with
shape (n, k, 2) (last axis = derivative direction) plus a sup bound for the
gradient used by invertibility checks.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.interpolate import BSpline


class ShearError(ValueError):
    pass


class PlanarField:
    dim: int = 2

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def sup_bounds(self, omega=None, samples: int = 129) -> tuple[float, float]:
        """(sup |f|, sup |grad f|) estimated on a dense grid over omega's box."""
        lo, hi = (np.zeros(2), np.ones(2)) if omega is None else omega.bbox()
        g = np.stack(np.meshgrid(np.linspace(lo[0], hi[0], samples), np.linspace(lo[1], hi[1], samples)), -1)
        g = g.reshape(-1, 2)
        v = np.linalg.norm(self.value(g), axis=-1).max()
        d = np.linalg.norm(self.grad(g), ord=2, axis=(-2, -1)).max()
        return float(v), float(d)

    def __add__(self, other: "PlanarField") -> "PlanarField":
        return SumField([self, other])

    def scaled(self, a: float) -> "PlanarField":
        return ScaledField(self, a)


class ZeroField(PlanarField):
    def __init__(self, dim: int = 2):
        self.dim = dim

    def value(self, x):
        return np.zeros((len(np.atleast_2d(x)), self.dim))

    def grad(self, x):
        return np.zeros((len(np.atleast_2d(x)), self.dim, 2))

    def sup_bounds(self, omega=None, samples=0):
        return 0.0, 0.0


class ConstantField(PlanarField):
    def __init__(self, c):
        self.c = np.asarray(c, float)
        self.dim = len(self.c)

    def value(self, x):
        return np.broadcast_to(self.c, (len(np.atleast_2d(x)), self.dim)).copy()

    def grad(self, x):
        return np.zeros((len(np.atleast_2d(x)), self.dim, 2))

    def sup_bounds(self, omega=None, samples=0):
        return float(np.linalg.norm(self.c)), 0.0


class SumField(PlanarField):
    def __init__(self, parts: Sequence[PlanarField]):
        self.parts = list(parts)
        self.dim = self.parts[0].dim

    def value(self, x):
        return sum(p.value(x) for p in self.parts)

    def grad(self, x):
        return sum(p.grad(x) for p in self.parts)


class ScaledField(PlanarField):
    def __init__(self, base: PlanarField, a: float):
        self.base, self.a, self.dim = base, float(a), base.dim

    def value(self, x):
        return self.a * self.base.value(x)

    def grad(self, x):
        return self.a * self.base.grad(x)


class SplineField(PlanarField):
    """Tensor-product B-spline field with uniform clamped knots on a box."""

    def __init__(self, lo, hi, coeffs, degree: int = 3):
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        c = np.asarray(coeffs, float)
        if c.ndim == 2:
            c = c[..., None]
        self.coeffs = c
        self.dim = c.shape[2]
        self.degree = degree
        self._knots = []
        for ax in range(2):
            n = c.shape[ax]
            inner = np.linspace(self.lo[ax], self.hi[ax], n - degree + 1)
            self._knots.append(np.concatenate([[inner[0]] * degree, inner, [inner[-1]] * degree]))
        eye = [np.eye(c.shape[ax]) for ax in range(2)]
        self._basis = [BSpline(self._knots[ax], eye[ax], degree, extrapolate=False) for ax in range(2)]
        self._dbasis = [b.derivative() for b in self._basis]

    @property
    def knot_spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / (np.array(self.coeffs.shape[:2]) - self.degree)

    @classmethod
    def random(cls, lo, hi, n: int = 10, amplitude: float = 1.0, seed: int = 0, margin: int = 4,
               dim: int = 2, degree: int = 3) -> "SplineField":
        """Random coefficients, zero on ``margin`` outer rings (compact support)."""
        rng = np.random.default_rng(seed)
        c = rng.uniform(-amplitude, amplitude, (n, n, dim))
        c[:margin] = c[-margin:] = 0.0
        c[:, :margin] = c[:, -margin:] = 0.0
        return cls(lo, hi, c, degree)

    def _eval(self, x, bx, by):
        x = np.atleast_2d(np.asarray(x, float))
        xc = np.clip(x, self.lo, self.hi)
        Bx = np.nan_to_num(bx(xc[:, 0]))
        By = np.nan_to_num(by(xc[:, 1]))
        inside = np.all((x >= self.lo) & (x <= self.hi), axis=1)
        out = np.einsum("ni,ijk,nj->nk", Bx, self.coeffs, By)
        return np.where(inside[:, None], out, 0.0)

    def value(self, x):
        return self._eval(x, self._basis[0], self._basis[1])

    def grad(self, x):
        gx = self._eval(x, self._dbasis[0], self._basis[1])
        gy = self._eval(x, self._basis[0], self._dbasis[1])
        return np.stack([gx, gy], axis=-1)


def smoothstep5(t):
    """C^2 quintic step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6 * t - 15) + 10)


def smoothstep5_deriv(t):
    inside = (t > 0) & (t < 1)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30 * t * t * (t - 1) ** 2, 0.0)


class PlateauField(PlanarField):
    """c * chi(dist(x, [a, b])) with chi = 1 up to ``inner`` and 0 beyond ``outer``."""

    def __init__(self, a, b, c, inner: float, outer: float):
        if not 0 <= inner < outer:
            raise ValueError("plateau widths must satisfy 0 <= inner < outer")
        self.a = np.asarray(a, float)
        self.b = np.asarray(b, float)
        self.c = np.asarray(c, float)
        self.dim = len(self.c)
        self.inner, self.outer = float(inner), float(outer)

    def _dist(self, x):
        x = np.atleast_2d(np.asarray(x, float))
        d = self.b - self.a
        L2 = d @ d
        lam = np.clip(((x - self.a) @ d) / L2, 0, 1) if L2 > 0 else np.zeros(len(x))
        diff = x - self.a - lam[:, None] * d
        r = np.linalg.norm(diff, axis=1)
        return r, diff

    def value(self, x):
        r, _ = self._dist(x)
        chi = 1.0 - smoothstep5((r - self.inner) / (self.outer - self.inner))
        return chi[:, None] * self.c

    def grad(self, x):
        r, diff = self._dist(x)
        w = self.outer - self.inner
        dchi = -smoothstep5_deriv((r - self.inner) / w) / w
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[:, None] > 0, diff / r[:, None], 0.0)
        return self.c[None, :, None] * (dchi[:, None] * unit)[:, None, :]

    def sup_bounds(self, omega=None, samples=0):
        return float(np.linalg.norm(self.c)), float(np.linalg.norm(self.c) * 1.875 / (self.outer - self.inner))


# --------------------------------------------------------------------------
# shear map x' -> x' - h (x3 - 1/2) phi(x')


def check_invertible(phi: PlanarField, h: float, omega=None) -> float:
    """Return the contraction factor h sup|grad phi| / 2, raising if it is >= 1."""
    L = phi.sup_bounds(omega)[1]
    q = 0.5 * h * L
    if q >= 1.0:
        raise ShearError("f_h not invertible at this h")
    return q


def map_f_h(x, phi: PlanarField, h: float) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, float))
    s = x[:, 2] - 0.5
    out = x.copy()
    out[:, :2] = x[:, :2] - h * s[:, None] * phi.value(x[:, :2])
    return out


def map_f_h_inverse(y, phi: PlanarField, h: float, tol: float = 1e-13, max_iter: int = 500,
                    contraction: float | None = None) -> np.ndarray:
    """Solve x' - h s phi(x') = y' per slice by fixed-point iteration."""
    y = np.atleast_2d(np.asarray(y, float))
    if contraction is None:
        contraction = check_invertible(phi, h)
    s = y[:, 2] - 0.5
    yp = y[:, :2]
    xp = yp.copy()
    for _ in range(max_iter):
        nxt = yp + h * s[:, None] * phi.value(xp)
        step = np.abs(nxt - xp).max() if len(xp) else 0.0
        xp = nxt
        if step * (1 + 1 / max(1e-300, 1 - contraction)) <= tol:
            break
    else:
        raise ShearError("f_h inverse iteration did not converge")
    out = y.copy()
    out[:, :2] = xp
    return out
