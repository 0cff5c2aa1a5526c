"""Void sets in the plate as analytic CSG, their anisotropic surface energy,
psi°-tube volumes (closed form or voxel), the minimal-droplet checker and
the Steiner-type tube bound.

Coordinates are whatever the caller uses; the unrescaled plate is
omega x (0, h) and the rescaled one omega x (0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .distance import Grid, distance_transform
from .fields import PlanarField, map_f_h, map_f_h_inverse, check_invertible
from .norms import Norm3
from .planar import ConvexOffset, Disk, HalfPlane, Intersection, PlanarSet, Polygon
from .planar import Union as PlanarUnion
from .quadrature import QuadratureError, gauss_legendre


class SurfaceDegeneracyError(ValueError):
    pass


class NotContainedError(ValueError):
    pass


# --------------------------------------------------------------------------
# regions


class PlateRegion:
    """Open set {x' in omega, level_omega(x') < -inset, z0 < x3 < z1}."""

    def __init__(self, omega: PlanarSet, z0: float, z1: float, inset: float = 0.0):
        self.omega = omega
        self.z0, self.z1 = float(z0), float(z1)
        self.inset = float(inset)

    @classmethod
    def box(cls, lo, hi) -> "PlateRegion":
        return cls(Polygon.rectangle(lo[:2], hi[:2]), lo[2], hi[2])

    def level(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.maximum.reduce([self.omega.level(x[:, :2]) + self.inset, self.z0 - x[:, 2], x[:, 2] - self.z1])

    def contains_open(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return (self.omega.level(x[:, :2]) < -self.inset) & (x[:, 2] > self.z0) & (x[:, 2] < self.z1)

    def bbox(self):
        lo, hi = self.omega.bbox()
        return (np.array([lo[0] + self.inset, lo[1] + self.inset, self.z0]),
                np.array([hi[0] - self.inset, hi[1] - self.inset, self.z1]))

    def dilated(self, r: float) -> "PlateRegion":
        return PlateRegion(self.omega, self.z0 - r, self.z1 + r, self.inset - r)


def plate(omega: PlanarSet, h: float) -> PlateRegion:
    """Omega_h = omega x (0, h)."""
    return PlateRegion(omega, 0.0, h)


def plate_interior(omega: PlanarSet, h: float) -> PlateRegion:
    """Omega_h^- : points with Euclidean dist(x', boundary of omega) > h."""
    return PlateRegion(omega, 0.0, h, inset=h)


# --------------------------------------------------------------------------
# surface patches


@dataclass(frozen=True, eq=False)
class Patch:
    """X(u, v) on a parameter rectangle; ``eval`` returns (X, X_u, X_v) with
    X_u x X_v pointing out of the owning primitive."""

    eval: Callable
    u0: float
    u1: float
    v0: float
    v1: float


def _frame(n):
    n = n / np.linalg.norm(n)
    a = np.cross(n, [1.0, 0.0, 0.0] if abs(n[0]) < 0.9 else [0.0, 1.0, 0.0])
    a /= np.linalg.norm(a)
    return a, np.cross(n, a)


class VoidSet3:
    smooth = False
    solid = True

    def level(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x) -> np.ndarray:
        return self.level(np.atleast_2d(x)) <= 0.0

    def contains_open(self, x) -> np.ndarray:
        return self.level(np.atleast_2d(x)) < 0.0

    def leaves(self) -> list["VoidSet3"]:
        return [self]

    def bbox(self):
        raise NotImplementedError

    def patches(self, clip=None) -> list[Patch]:
        return []

    def boundary_samples(self, spacing: float, clip=None) -> np.ndarray:
        """Points of the primitive surface at roughly ``spacing`` apart."""
        out = []
        for p in self.patches(clip):
            uu = np.linspace(p.u0, p.u1, 9)
            vv = np.linspace(p.v0, p.v1, 9)
            U, V = np.meshgrid(uu, vv, indexing="ij")
            _, Xu, Xv = p.eval(U.ravel(), V.ravel())
            lu = np.linalg.norm(Xu, axis=1).max() * (p.u1 - p.u0)
            lv = np.linalg.norm(Xv, axis=1).max() * (p.v1 - p.v0)
            nu = int(min(max(np.ceil(lu / spacing), 1), 4000)) + 1
            nv = int(min(max(np.ceil(lv / spacing), 1), 4000)) + 1
            U, V = np.meshgrid(np.linspace(p.u0, p.u1, nu), np.linspace(p.v0, p.v1, nv), indexing="ij")
            X, _, _ = p.eval(U.ravel(), V.ravel())
            out.append(X)
        if not out:
            return np.zeros((0, 3))
        X = np.vstack(out)
        # patch windows (caps, CSG children) reach beyond the actual boundary
        return X[np.abs(self.level(X)) <= 1e-9 * self.scale()]

    def max_curvature(self) -> float:
        raise ValueError("no principal curvatures for a non-smooth primitive")

    def scale(self) -> float:
        lo, hi = self.bbox()
        ext = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
        return float(max(np.max(ext), 1e-300))

    def __or__(self, other):
        return Union3([self, other])

    def __and__(self, other):
        return Intersection3([self, other])

    def __sub__(self, other):
        return Difference3(self, other)


class Ball(VoidSet3):
    smooth = True

    def __init__(self, center, radius: float):
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        self.center = np.asarray(center, float)
        self.radius = float(radius)

    def level(self, x):
        return np.linalg.norm(np.atleast_2d(x) - self.center, axis=1) - self.radius

    def bbox(self):
        return self.center - self.radius, self.center + self.radius

    def patches(self, clip=None):
        c, rho = self.center, self.radius

        def ev(th, ph):
            st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
            X = c + rho * np.column_stack([st * cp, st * sp, ct])
            Xu = rho * np.column_stack([ct * cp, ct * sp, -st])
            Xv = rho * np.column_stack([-st * sp, st * cp, np.zeros_like(th)])
            return X, Xu, Xv

        return [Patch(ev, 0.0, np.pi, 0.0, 2 * np.pi)]

    def max_curvature(self) -> float:
        return 1.0 / self.radius


class Box(VoidSet3):
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        if np.any(self.hi <= self.lo):
            raise ValueError("box needs lo < hi")

    def level(self, x):
        x = np.atleast_2d(x)
        c = 0.5 * (self.lo + self.hi)
        half = 0.5 * (self.hi - self.lo)
        q = np.abs(x - c) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def bbox(self):
        return self.lo.copy(), self.hi.copy()

    def patches(self, clip=None):
        out = []
        lo, hi = self.lo, self.hi
        for ax in range(3):
            for side, val in ((-1, lo[ax]), (1, hi[ax])):
                # e_i x e_j = side * e_ax
                i, j = (ax + 1) % 3, (ax + 2) % 3
                if side < 0:
                    i, j = j, i

                def ev(u, v, ax=ax, i=i, j=j, val=val):
                    n = len(u)
                    X = np.zeros((n, 3))
                    X[:, ax] = val
                    X[:, i], X[:, j] = u, v
                    Xu = np.zeros((n, 3))
                    Xv = np.zeros((n, 3))
                    Xu[:, i] = 1.0
                    Xv[:, j] = 1.0
                    return X, Xu, Xv

                out.append(Patch(ev, lo[i], hi[i], lo[j], hi[j]))
        return out

    def steiner_volume(self, r: float) -> float:
        a, b, c = self.hi - self.lo
        return 2 * (a * b + b * c + c * a) * r + np.pi * (a + b + c) * r * r + 4 * np.pi / 3 * r**3


class HalfSpace(VoidSet3):
    """{x : <n, x> <= offset}."""

    smooth = True

    def __init__(self, normal, offset: float):
        n = np.asarray(normal, float)
        self.normal = n / np.linalg.norm(n)
        self.offset = float(offset)

    def level(self, x):
        return np.atleast_2d(x) @ self.normal - self.offset

    def bbox(self):
        lo = np.full(3, -np.inf)
        hi = np.full(3, np.inf)
        for k in range(3):
            if np.allclose(np.abs(self.normal[k]), 1.0):
                if self.normal[k] > 0:
                    hi[k] = self.offset
                else:
                    lo[k] = -self.offset
        return lo, hi

    def patches(self, clip=None):
        if clip is None:
            lo, hi = -10.0 * np.ones(3), 10.0 * np.ones(3)
        else:
            lo, hi = clip
        W = float(np.linalg.norm(hi - lo)) + 1.0
        cen = 0.5 * (lo + hi)
        p0 = cen - (cen @ self.normal - self.offset) * self.normal
        a, b = _frame(self.normal)
        # a x b = n

        def ev(u, v):
            X = p0 + u[:, None] * a + v[:, None] * b
            return X, np.broadcast_to(a, X.shape).copy(), np.broadcast_to(b, X.shape).copy()

        return [Patch(ev, -W, W, -W, W)]

    def max_curvature(self) -> float:
        return 0.0


class Extrusion(VoidSet3):
    """F x [z0, z1] for a planar CSG set F."""

    def __init__(self, planar: PlanarSet, z0: float, z1: float):
        if z1 <= z0:
            raise ValueError("extrusion needs z0 < z1")
        self.planar = planar
        self.z0, self.z1 = float(z0), float(z1)

    def level(self, x):
        x = np.atleast_2d(x)
        return np.maximum.reduce([self.planar.level(x[:, :2]), self.z0 - x[:, 2], x[:, 2] - self.z1])

    def bbox(self):
        lo, hi = self.planar.bbox()
        return np.array([lo[0], lo[1], self.z0]), np.array([hi[0], hi[1], self.z1])

    def patches(self, clip=None):
        out = []
        z0, z1 = self.z0, self.z1
        for piece in self.planar.boundary():
            def ev(t, z, piece=piece):
                P = piece.points(t)
                V = piece.velocity(t)
                X = np.column_stack([P, z])
                Xu = np.column_stack([V, np.zeros_like(t)])
                Xv = np.zeros_like(X)
                Xv[:, 2] = 1.0
                return X, Xu, Xv
            out.append(Patch(ev, piece.t0, piece.t1, z0, z1))
        lo, hi = self.planar.bbox()
        for z, sgn in ((z1, 1.0), (z0, -1.0)):
            def cap(u, v, z=z, sgn=sgn):
                X = np.column_stack([u, v, np.full_like(u, z)])
                Xu = np.zeros_like(X)
                Xv = np.zeros_like(X)
                Xu[:, 0] = sgn
                Xv[:, 1] = 1.0
                return X, Xu, Xv
            if sgn > 0:
                out.append(Patch(cap, lo[0], hi[0], lo[1], hi[1]))
            else:
                out.append(Patch(lambda u, v, cap=cap: _flip_u(cap, u, v), -hi[0], -lo[0], lo[1], hi[1]))
        return out

    def max_curvature(self) -> float:
        if isinstance(self.planar, Disk):
            return 1.0 / self.planar.radius
        raise ValueError("no principal curvatures for a non-smooth primitive")


def _flip_u(f, u, v):
    X, Xu, Xv = f(-u, v)
    return X, Xu, Xv


def vertical_cylinder(center, radius: float, z0: float, z1: float) -> Extrusion:
    return Extrusion(Disk(center, radius), z0, z1)


class Scaled(VoidSet3):
    """Image of a set under diag(scale)."""

    def __init__(self, base: VoidSet3, scale):
        self.base = base
        self.S = np.asarray(scale, float)
        if np.any(self.S <= 0):
            raise ValueError("scale factors must be positive")

    def level(self, x):
        return self.base.level(np.atleast_2d(x) / self.S) * float(self.S.min())

    def bbox(self):
        lo, hi = self.base.bbox()
        return lo * self.S, hi * self.S

    def patches(self, clip=None):
        bclip = None if clip is None else (clip[0] / self.S, clip[1] / self.S)
        out = []
        for p in self.base.patches(bclip):
            def ev(u, v, p=p):
                X, Xu, Xv = p.eval(u, v)
                return X * self.S, Xu * self.S, Xv * self.S
            out.append(Patch(ev, p.u0, p.u1, p.v0, p.v1))
        return out

    def max_curvature(self) -> float:
        if np.allclose(self.S, self.S[0]):
            return self.base.max_curvature() / self.S[0]
        raise ValueError("no principal curvatures for a non-smooth primitive")


class ShearImage(VoidSet3):
    """f_h^{-1}(F x (0, 1)) with f_h(x) = (x' - h (x3 - 1/2) phi(x'), x3)."""

    def __init__(self, planar: PlanarSet, phi: PlanarField, h: float, omega: PlanarSet | None = None):
        self.planar = planar
        self.phi = phi
        self.h = float(h)
        self.q = check_invertible(phi, h, omega)
        self._shift = 0.5 * self.h * phi.sup_bounds(omega)[0]

    def level(self, x):
        x = np.atleast_2d(x)
        y = map_f_h(x, self.phi, self.h)
        lv = self.planar.level(y[:, :2]) / (1 + self.q)
        return np.maximum.reduce([lv, -x[:, 2], x[:, 2] - 1.0])

    def bbox(self):
        lo, hi = self.planar.bbox()
        d = self._shift
        return np.array([lo[0] - d, lo[1] - d, 0.0]), np.array([hi[0] + d, hi[1] + d, 1.0])

    def _pull(self, yp, z):
        y = np.column_stack([yp, z])
        x = map_f_h_inverse(y, self.phi, self.h, contraction=self.q)
        s = z - 0.5
        Jf = np.eye(2)[None] - self.h * s[:, None, None] * self.phi.grad(x[:, :2])
        return x, np.linalg.inv(Jf)

    def patches(self, clip=None):
        out = []
        h = self.h
        for piece in self.planar.boundary():
            def ev(t, z, piece=piece):
                x, Ji = self._pull(piece.points(t), z)
                Xu = np.zeros_like(x)
                Xu[:, :2] = np.einsum("nij,nj->ni", Ji, piece.velocity(t))
                Xv = np.zeros_like(x)
                Xv[:, :2] = np.einsum("nij,nj->ni", Ji, h * self.phi.value(x[:, :2]))
                Xv[:, 2] = 1.0
                return x, Xu, Xv
            out.append(Patch(ev, piece.t0, piece.t1, 0.0, 1.0))
        lo, hi = self.planar.bbox()
        for z, sgn in ((1.0, 1.0), (0.0, -1.0)):
            def cap(u, v, z=z, sgn=sgn):
                x, Ji = self._pull(np.column_stack([u, v]), np.full_like(u, z))
                Xu = np.zeros_like(x)
                Xv = np.zeros_like(x)
                Xu[:, :2] = sgn * Ji[:, :, 0]
                Xv[:, :2] = Ji[:, :, 1]
                return x, Xu, Xv
            if sgn > 0:
                out.append(Patch(cap, lo[0], hi[0], lo[1], hi[1]))
            else:
                out.append(Patch(lambda u, v, cap=cap: _flip_u(cap, u, v), -hi[0], -lo[0], lo[1], hi[1]))
        return out


class Segment3(VoidSet3):
    """Closed straight segment (a set of zero volume and zero area)."""

    solid = False

    def __init__(self, a, b):
        self.a = np.asarray(a, float)
        self.b = np.asarray(b, float)

    def level(self, x):
        x = np.atleast_2d(x)
        d = self.b - self.a
        lam = np.clip(((x - self.a) @ d) / (d @ d), 0, 1)
        return np.linalg.norm(x - self.a - lam[:, None] * d, axis=1)

    def contains_open(self, x):
        return np.zeros(len(np.atleast_2d(x)), bool)

    def contains(self, x):
        return self.level(x) <= 1e-15

    def bbox(self):
        return np.minimum(self.a, self.b), np.maximum(self.a, self.b)

    def boundary_samples(self, spacing, clip=None):
        n = int(np.ceil(np.linalg.norm(self.b - self.a) / spacing)) + 1
        t = np.linspace(0, 1, n)
        return self.a + t[:, None] * (self.b - self.a)


class EmptySet3(VoidSet3):
    def level(self, x):
        return np.full(len(np.atleast_2d(x)), np.inf)

    def leaves(self):
        return []

    def bbox(self):
        return np.full(3, np.inf), np.full(3, -np.inf)


EMPTY3 = EmptySet3()


def is_empty3(A) -> bool:
    return A is None or isinstance(A, EmptySet3)


class _Node3(VoidSet3):
    children: list

    @property
    def solid(self) -> bool:
        return any(c.solid for c in self.children)

    def leaves(self):
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def max_curvature(self) -> float:
        return max(c.max_curvature() for c in self.children)

    def boundary_samples(self, spacing: float, clip=None) -> np.ndarray:
        parts = [leaf.boundary_samples(spacing, clip) for leaf in self.leaves()]
        X = np.vstack(parts) if parts else np.zeros((0, 3))
        return X[np.abs(self.level(X)) <= 1e-9 * self.scale()]


class Union3(_Node3):
    def __init__(self, children):
        self.children = [c for c in children if not is_empty3(c)]

    def level(self, x):
        if not self.children:
            return np.full(len(np.atleast_2d(x)), np.inf)
        return np.minimum.reduce([c.level(x) for c in self.children])

    def bbox(self):
        bbs = [c.bbox() for c in self.children]
        return np.min([b[0] for b in bbs], axis=0), np.max([b[1] for b in bbs], axis=0)


class Intersection3(_Node3):
    def __init__(self, children):
        self.children = list(children)

    def level(self, x):
        return np.maximum.reduce([c.level(x) for c in self.children])

    def bbox(self):
        bbs = [c.bbox() for c in self.children]
        return np.max([b[0] for b in bbs], axis=0), np.min([b[1] for b in bbs], axis=0)


class Difference3(_Node3):
    def __init__(self, a: VoidSet3, b: VoidSet3):
        self.children = [a, b]

    def level(self, x):
        return np.maximum(self.children[0].level(x), -self.children[1].level(x))

    def bbox(self):
        return self.children[0].bbox()


# --------------------------------------------------------------------------
# surface energy


def _line_integrals(f, ind, u0, u1, vs, samples=65, order=8, panels=4, bisect=52):
    """For each v: int over {u : ind(u, v)} of f(u, v) du, via exact crossings."""
    nv = len(vs)
    us = np.linspace(u0, u1, samples)
    U = np.broadcast_to(us[None, :], (nv, samples))
    V = np.broadcast_to(vs[:, None], (nv, samples))
    b = ind(U.ravel(), V.ravel()).reshape(nv, samples)
    # intervals [a, c] on which ind holds, split at sample cells
    starts, ends, rows = [], [], []
    same = b[:, 1:] == b[:, :-1]
    rr, cc = np.nonzero(same & b[:, :-1])
    starts.append(us[cc])
    ends.append(us[cc + 1])
    rows.append(rr)
    rr, cc = np.nonzero(~same)
    if len(rr):
        lo = us[cc].copy()
        hi = us[cc + 1].copy()
        va = b[rr, cc]
        vv = vs[rr]
        for _ in range(bisect):
            m = 0.5 * (lo + hi)
            vm = ind(m, vv)
            keep = vm == va
            lo = np.where(keep, m, lo)
            hi = np.where(keep, hi, m)
        xc = 0.5 * (lo + hi)
        starts.append(np.where(va, us[cc], xc))
        ends.append(np.where(va, xc, us[cc + 1]))
        rows.append(rr)
    a = np.concatenate(starts)
    c = np.concatenate(ends)
    r = np.concatenate(rows)
    out = np.zeros(nv)
    if len(a) == 0:
        return out
    x, w = gauss_legendre(order)
    k = panels
    t = (np.arange(k)[:, None] + x[None, :]).ravel() / k
    ww = np.tile(w, k) / k
    L = (c - a)
    UU = a[:, None] + L[:, None] * t[None, :]
    VV = np.broadcast_to(vs[r][:, None], UU.shape)
    vals = f(UU.ravel(), VV.ravel()).reshape(UU.shape)
    np.add.at(out, r, (vals * ww[None, :]).sum(axis=1) * L)
    return out


def _clipped_patch_integral(patch: Patch, f, ind, rtol=1e-9, atol=1e-15, order=8, max_intervals=200000):
    """Adaptive bisection in v of the exactly clipped u-line integrals.

    Intervals whose two-level difference is within their share of the
    tolerance are accepted; intervals straddling a jump of the line integral
    shrink until their contribution is negligible in absolute terms.
    """
    x, w = gauss_legendre(order)
    V = patch.v1 - patch.v0
    edges = np.linspace(patch.v0, patch.v1, 17)
    a, b = edges[:-1], edges[1:]

    def rule(a, b):
        vs = (a[:, None] + (b - a)[:, None] * x[None, :]).ravel()
        vals = _line_integrals(f, ind, patch.u0, patch.u1, vs).reshape(len(a), order)
        return (vals * w[None, :]).sum(axis=1) * (b - a)

    coarse = rule(a, b)
    tol = max(rtol * abs(float(coarse.sum())), atol)
    total = 0.0
    count = 0
    while len(a):
        m = 0.5 * (a + b)
        left, right = rule(a, m), rule(m, b)
        fine = left + right
        err = np.abs(fine - coarse)
        ok = (err <= tol * (b - a) / V) | (err <= 1e-3 * tol) | ((b - a) <= 1e-14 * V)
        total += float(fine[ok].sum())
        bad = ~ok
        a, b, m = a[bad], b[bad], m[bad]
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
        coarse = np.concatenate([left[bad], right[bad]])
        count += len(a)
        if count > max_intervals:
            raise QuadratureError("surface patch quadrature did not converge")
    return total


def surface_energy(A: VoidSet3 | None, psi: Norm3, region=None, rescale_h: float | None = None,
                   rtol: float = 1e-9, overlap_tol: float = 1e-8) -> float:
    """int over the reduced boundary of A (inside the open region) of psi(nu).

    With rescale_h = h the integrand is psi(nu', nu3 / h) for the unit normal
    nu of A itself. Each primitive patch counts where the whole CSG set
    changes membership across it; patches shared by two primitives are
    counted once and their area must stay below ``overlap_tol``.
    """
    if is_empty3(A):
        return 0.0
    leaves = A.leaves()
    eps = 1e-9 * A.scale() if np.isfinite(A.scale()) else 1e-9
    on_tol = 1e-10 * A.scale()
    clip = None if region is None else region.bbox()
    total = 0.0
    for li, leaf in enumerate(leaves):
        others = leaves[:li]
        for patch in leaf.patches(clip):
            def geom(u, v, patch=patch):
                X, Xu, Xv = patch.eval(u, v)
                N = np.cross(Xu, Xv)
                return X, N

            def counted(u, v, patch=patch, strict=True):
                X, N = geom(u, v)
                nn = np.linalg.norm(N, axis=1, keepdims=True)
                n = np.divide(N, nn, out=np.zeros_like(N), where=nn > 0)
                ok = A.contains(X - eps * n) != A.contains(X + eps * n)
                if region is not None:
                    ok &= region.contains_open(X)
                if strict:
                    for o in others:
                        ok &= np.abs(o.level(X)) > on_tol
                return ok

            def integrand(u, v):
                X, N = geom(u, v)
                if rescale_h is not None:
                    N = N.copy()
                    N[:, 2] /= rescale_h
                return psi(N)

            total += _clipped_patch_integral(patch, integrand, counted, rtol)
            if others:
                dropped = lambda u, v, patch=patch: counted(u, v, patch, strict=False) & ~counted(u, v, patch)
                area = lambda u, v, patch=patch: np.linalg.norm(geom(u, v)[1], axis=1)
                ov = _clipped_patch_integral(patch, area, dropped, 1e-6, atol=1e-12)
                if ov > overlap_tol:
                    raise SurfaceDegeneracyError("CSG surface degeneracy")
    return float(total)


def check_orientation(A: VoidSet3, samples: int = 200, seed: int = 0) -> float:
    """Fraction of sampled primitive-surface points whose normal points outward."""
    rng = np.random.default_rng(seed)
    good = total = 0
    for leaf in A.leaves():
        for p in leaf.patches():
            u = rng.uniform(p.u0, p.u1, samples)
            v = rng.uniform(p.v0, p.v1, samples)
            X, Xu, Xv = p.eval(u, v)
            N = np.cross(Xu, Xv)
            nn = np.linalg.norm(N, axis=1)
            keep = nn > 0
            n = N[keep] / nn[keep, None]
            X = X[keep]
            eps = 1e-7 * leaf.scale()
            on = np.abs(leaf.level(X)) < 1e-9 * leaf.scale()
            ok = leaf.contains(X - eps * n) & ~leaf.contains(X + eps * n)
            good += int(np.count_nonzero(ok & on))
            total += int(np.count_nonzero(on))
    return good / total if total else 1.0


# --------------------------------------------------------------------------
# tube volumes


def _slab_ball_volume(R: float, a: float, b: float) -> float:
    """pi int_a^b (R^2 - z^2)_+ dz."""
    a, b = max(a, -R), min(b, R)
    if b <= a:
        return 0.0
    return float(np.pi * ((R * R * b - b**3 / 3) - (R * R * a - a**3 / 3)))


def _strip_disk_area(r: float, a: float, b: float) -> float:
    """Area of the disk of radius r between the lines z = a and z = b."""
    a, b = max(a, -r), min(b, r)
    if b <= a:
        return 0.0
    G = lambda z: z * np.sqrt(max(r * r - z * z, 0.0)) + r * r * np.arcsin(np.clip(z / r, -1, 1))
    return float(G(b) - G(a))


def _sphere_integral(f, n: int = 96) -> float:
    """int over S^2 of f(u) by Gauss in cos(theta) and the trapezoid rule in phi."""
    x, w = np.polynomial.legendre.leggauss(n)
    ph = np.linspace(0, 2 * np.pi, 2 * n, endpoint=False)
    C, P = np.meshgrid(x, ph, indexing="ij")
    S = np.sqrt(1 - C * C)
    U = np.stack([S * np.cos(P), S * np.sin(P), C], axis=-1).reshape(-1, 3)
    W = (w[:, None] * np.full(2 * n, 2 * np.pi / (2 * n))[None, :]).ravel()
    return float(f(U) @ W)


def wulff_ellipsoid_measures(psi: Norm3) -> tuple[float, float, float]:
    """(int_{S^2} psi, area, volume) of the psi°-unit ball for Euclidean or ellipsoidal psi."""
    if psi.family == "euclidean":
        M = np.eye(3)
    elif psi.family == "ellipsoidal":
        M = np.asarray(psi.params["M"])
    else:
        raise ValueError("closed-form Wulff measures need a Euclidean or ellipsoidal norm")
    lam = np.linalg.eigvalsh(M)
    ax = np.sqrt(lam)
    mean = _sphere_integral(psi)
    # area element of T(S^2) with T = diag(ax) is det(T) |T^-1 u|
    area = _sphere_integral(lambda u: np.linalg.norm((u / ax) * np.prod(ax), axis=1))
    vol = 4 * np.pi / 3 * float(np.prod(ax))
    return mean, area, vol


def _in_region_box(lo, hi, region) -> bool:
    if region is None:
        return True
    x = np.array([[a, b, c] for a in (lo[0], hi[0]) for b in (lo[1], hi[1]) for c in (lo[2], hi[2])])
    # regions here are convex in practice: test the corners of the box
    return bool(np.all(region.contains_open(x)))


def tube_volume_analytic(A: VoidSet3, r: float, psi: Norm3, region=None) -> float:
    ext = psi.axis_extent()
    if isinstance(A, Ball):
        c, rho = A.center, A.radius
        if psi.family == "euclidean":
            R = rho + r
            if _in_region_box(c - R, c + R, region):
                return 4 * np.pi / 3 * (R**3 - rho**3)
            if isinstance(region, PlateRegion) and region.omega.level(c[None, :2])[0] + region.inset <= -R:
                a, b = region.z0 - c[2], region.z1 - c[2]
                return _slab_ball_volume(R, a, b) - _slab_ball_volume(rho, a, b)
            raise ValueError("analytic tube volume unavailable for this clipping")
        if psi.family == "ellipsoidal":
            lo = c - rho - r * ext
            hi = c + rho + r * ext
            if _in_region_box(lo, hi, region):
                mean, area, vol = wulff_ellipsoid_measures(psi)
                return rho * rho * r * mean + rho * r * r * area + r**3 * vol
        raise ValueError("analytic tube volume unavailable for this norm or clipping")
    if isinstance(A, Box) and psi.family == "euclidean":
        if _in_region_box(A.lo - r, A.hi + r, region):
            return A.steiner_volume(r)
        raise ValueError("analytic tube volume unavailable for this clipping")
    if isinstance(A, Segment3) and psi.family == "euclidean":
        if abs(A.a[2] - A.b[2]) > 1e-15:
            raise ValueError("analytic capsule volume needs a horizontal segment")
        zc = A.a[2]
        L = float(np.linalg.norm(A.b - A.a))
        lo = np.minimum(A.a, A.b) - r
        hi = np.maximum(A.a, A.b) + r
        if region is None:
            return np.pi * r * r * L + 4 * np.pi / 3 * r**3
        if isinstance(region, PlateRegion):
            inside_lat = np.all(region.omega.level(np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])) + region.inset < 0)
            if inside_lat:
                a, b = region.z0 - zc, region.z1 - zc
                return L * _strip_disk_area(r, a, b) + _slab_ball_volume(r, a, b)
        raise ValueError("analytic tube volume unavailable for this clipping")
    prism = _as_prism(A)
    if prism is not None and psi.family == "euclidean" and isinstance(region, PlateRegion):
        F, z0, z1 = prism
        if z0 <= region.z0 and z1 >= region.z1:
            inner = _inset_planar(region.omega, region.inset)
            grown = _planar_dilation(F, r)
            thick = region.z1 - region.z0
            return thick * (Intersection([grown, inner]).area() - Intersection([F, inner]).area())
        raise ValueError("analytic prism tube needs the prism to span the slab")
    if is_empty3(A):
        return 0.0
    raise ValueError("no analytic tube volume for this set")


def _as_prism(A):
    """(F, z0, z1) when A is a vertical prism F x [z0, z1], possibly rescaled."""
    if isinstance(A, Extrusion):
        return A.planar, A.z0, A.z1
    if isinstance(A, Scaled) and isinstance(A.base, Extrusion) and np.allclose(A.S[:2], 1.0):
        return A.base.planar, A.base.z0 * A.S[2], A.base.z1 * A.S[2]
    return None


def _planar_dilation(F: PlanarSet, r: float) -> PlanarSet:
    """Euclidean r-dilation of disks, rounded hulls and their unions."""
    if isinstance(F, Disk):
        return Disk(F.center, F.radius + r)
    if isinstance(F, ConvexOffset):
        return ConvexOffset(F.points, F.radius + r)
    if isinstance(F, Polygon) and F.is_convex():
        return ConvexOffset(F.vertices, r)
    if isinstance(F, PlanarUnion):
        return PlanarUnion([_planar_dilation(c, r) for c in F.children])
    raise ValueError("analytic dilation unavailable for this planar set")


def _inset_planar(omega: PlanarSet, inset: float) -> PlanarSet:
    """{level_omega < -inset} for a convex polygon."""
    if inset == 0:
        return omega
    if not (isinstance(omega, Polygon) and omega.is_convex()):
        raise ValueError("analytic inset needs a convex polygonal domain")
    V = omega.vertices
    E = np.roll(V, -1, axis=0) - V
    area2 = np.sum(V[:, 0] * np.roll(V[:, 1], -1) - np.roll(V[:, 0], -1) * V[:, 1])
    sign = 1.0 if area2 > 0 else -1.0
    planes = []
    for v, e in zip(V, E):
        n = sign * np.array([e[1], -e[0]]) / np.linalg.norm(e)
        planes.append(HalfPlane(n, float(n @ v) - inset))
    return Intersection(planes)


def _voxel_grid_for(A, r, psi, region, grid, spacing):
    ext = psi.axis_extent()
    lo, hi = A.bbox()
    lo = lo - r * ext
    hi = hi + r * ext
    if region is not None:
        rlo, rhi = region.bbox()
        lo = np.maximum(lo, rlo - r * ext)
        hi = np.minimum(hi, rhi + r * ext)
        clo, chi = np.maximum(lo, rlo), np.minimum(hi, rhi)
    else:
        clo, chi = lo, hi
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("unbounded void needs a bounded region for the voxel path")
    if spacing is None:
        spacing = float(np.max(chi - clo)) / grid
    if spacing > r / 4:
        raise ValueError("grid too coarse for tube width")
    return Grid.covering(lo - spacing, hi + spacing, spacing), spacing


def _trilinear_weights(sub: int):
    """Weights (and d/dx_k weights in unit-cell coordinates) of the 8 corners at sub^3 midpoints."""
    g = (np.arange(sub) + 0.5) / sub
    T = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    corners = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)])
    f = np.where(corners[None, :, :] == 1, T[:, None, :], 1 - T[:, None, :])  # (S, 8, 3)
    W = f.prod(axis=2)
    dW = []
    for ax in range(3):
        sgn = np.where(corners[:, ax] == 1, 1.0, -1.0)
        others = [k for k in range(3) if k != ax]
        dW.append(sgn[None, :] * f[:, :, others[0]] * f[:, :, others[1]])
    return T, W, dW


def tube_volume_voxel(A: VoidSet3, r: float, psi: Norm3, region=None, grid: int = 192,
                      spacing: float | None = None, sub: int = 4) -> float:
    """Voxel estimate of L3((A^(r) \\ A) n region).

    Distances come from the feature-propagating transform at voxel centres.
    Dual cells (corners at centres) whose corners agree are counted whole;
    the others are sub-sampled at sub^3 points with trilinear distances and
    exact set levels, each sub-cell weighted by the linear-ramp fraction of
    g = min(r - d, level_A, -level_region) across its projected width.
    """
    if is_empty3(A):
        return 0.0
    G, _ = _voxel_grid_for(A, r, psi, region, grid, spacing)
    sp = np.asarray(G.spacing)
    dual = psi.dual()
    L = dual.lipschitz_to_euclidean()[1]
    centers = G.centers()
    mask = A.contains(centers.reshape(-1, 3)).reshape(G.dims)
    seeds = A.boundary_samples(0.5 * float(sp.min()), None if region is None else region.bbox())
    if len(seeds) == 0 and not mask.any():
        return 0.0
    cutoff = r + 2 * L * float(sp.max())
    D = distance_transform(dual, mask, G, seeds=seeds if len(seeds) else None, mode="feature", cutoff=cutoff)
    d = np.where(np.isfinite(D.values), D.values, 2 * cutoff + 1.0)
    # corner values of each dual cell
    C = np.stack([d[i:d.shape[0] - 1 + i, j:d.shape[1] - 1 + j, k:d.shape[2] - 1 + k]
                  for i in (0, 1) for j in (0, 1) for k in (0, 1)], axis=-1).reshape(-1, 8)
    lo_corner = centers[:-1, :-1, :-1].reshape(-1, 3)
    mid = lo_corner + 0.5 * sp
    half = 0.5 * float(np.linalg.norm(sp))
    la = A.level(mid) if A.solid else np.full(len(mid), np.inf)
    lr = region.level(mid) if region is not None else np.full(len(mid), -np.inf)
    cmax, cmin = C.max(axis=1), C.min(axis=1)
    full = (cmax <= r) & (la > half) & (lr < -half)
    empty = (cmin > r) | (la < -half) | (lr > half)
    cell = float(np.prod(sp))
    vol = np.count_nonzero(full & ~empty) * cell
    unsure = np.flatnonzero(~full & ~empty)
    if len(unsure):
        vol += _fractional_cells(lo_corner[unsure], C[unsure], sp, sub, r, A, region) * cell
    return float(vol)


def _fractional_cells(lo, C, sp, sub, r, A, region, chunk=8000) -> float:
    T, W, dW = _trilinear_weights(sub)
    ds = sp / sub
    total = 0.0

    def set_level(P):
        g = np.full(len(P), np.inf)
        if A.solid:
            g = A.level(P)
        if region is not None:
            g = np.minimum(g, -region.level(P))
        return g

    for s in range(0, len(lo), chunk):
        Cc = C[s : s + chunk]
        P = (lo[s : s + chunk, None, :] + T[None] * sp).reshape(-1, 3)
        gd = (r - Cc @ W.T).reshape(-1)
        grad_d = np.stack([(Cc @ dW[k].T).reshape(-1) / sp[k] for k in range(3)], axis=-1)
        gs = set_level(P)
        use_d = gd <= gs
        g = np.where(use_d, gd, gs)
        width = np.abs(grad_d) @ ds
        need = ~use_d & np.isfinite(gs)
        if need.any():
            Q = P[need]
            w_s = np.zeros(len(Q))
            for k in range(3):
                e = np.zeros(3)
                e[k] = 0.25 * ds[k]
                w_s += np.abs(set_level(Q + e) - set_level(Q - e)) * 2.0
            width[need] = w_s
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(width > 0, np.clip(0.5 + g / width, 0.0, 1.0), (g >= 0).astype(float))
        total += float(np.nan_to_num(frac).sum())
    return total / sub**3


def tube_volume(A: VoidSet3, r: float, psi: Norm3, region=None, method: str = "analytic", grid: int = 192,
                spacing: float | None = None) -> float:
    """L3((A^(r) \\ A) n region) for the psi°-tube A^(r)."""
    if r <= 0:
        raise ValueError("tube width must be positive")
    if method == "analytic":
        return tube_volume_analytic(A, r, psi, region)
    if method == "voxel":
        return tube_volume_voxel(A, r, psi, region, grid, spacing)
    raise ValueError(f"unknown tube-volume method {method!r}")


# --------------------------------------------------------------------------
# droplet condition


class Zeta:
    """Named increasing modulus zeta with zeta(0+) = 0."""

    def __init__(self, name: str, func: Callable[[float], float], params: dict):
        self.name, self._f, self.params = name, func, params

    def __call__(self, t: float) -> float:
        return float(self._f(float(t)))

    @classmethod
    def linear(cls, K: float) -> "Zeta":
        return cls("linear", lambda t: K * t, {"K": K})

    @classmethod
    def step(cls, C: float) -> "Zeta":
        """(C^2 + 2C) eps_i on (eps_{i+1}, eps_i] with eps_i = 2^(1-i)."""
        a = C * C + 2 * C
        return cls("step", lambda t: a * 2.0 ** math.ceil(math.log2(t)) if t > 0 else 0.0, {"C": C})

    @classmethod
    def steiner(cls, C: float) -> "Zeta":
        a = C * C + 2 * C
        return cls("steiner", lambda t: a * t, {"C": C})

    @classmethod
    def from_spec(cls, spec) -> "Zeta":
        if isinstance(spec, Zeta):
            return spec
        kind = spec.get("family", "linear")
        if kind == "linear":
            return cls.linear(float(spec.get("K", 10.0)))
        if kind == "step":
            return cls.step(float(spec.get("C", 1.0)))
        if kind == "steiner":
            return cls.steiner(float(spec.get("C", 1.0)))
        raise ValueError(f"unknown zeta family {kind!r}")


@dataclass(frozen=True)
class DropletRow:
    h: float
    s: float
    lhs: float
    rhs: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class DropletReport:
    rows: tuple
    worst_margin: float
    failing: tuple
    passed: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "passed", len(self.failing) == 0)

    CSV_HEADER = ("h", "s", "lhs", "rhs", "margin", "pass")

    def csv_rows(self):
        return [(r.h, r.s, r.lhs, r.rhs, r.margin, int(r.passed)) for r in self.rows]


def droplet_check(A: VoidSet3 | None, h: float, s_list, psi: Norm3, zeta, omega: PlanarSet | None = None,
                  method: str = "analytic", grid: int = 192, surface=None) -> DropletReport:
    """lhs = L3((A^(sh) \\ A) n Omega_h^-) against
    rhs = (1 + zeta(h + s)) s h int_{Omega_h n dA} psi + zeta(h + s) s h^2."""
    zeta = Zeta.from_spec(zeta) if not callable(zeta) else zeta
    omega = omega or Polygon.rectangle((0, 0), (1, 1))
    inner = plate_interior(omega, h)
    if surface is None:
        surface = 0.0 if is_empty3(A) else surface_energy(A, psi, plate(omega, h))
    rows = []
    for s in s_list:
        s = float(s)
        if not 0 < s < 1:
            raise ValueError("droplet scale s must lie in (0, 1)")
        lhs = 0.0 if is_empty3(A) else tube_volume(A, s * h, psi, inner, method=method, grid=grid)
        z = zeta(h + s)
        rhs = (1 + z) * s * h * surface + z * s * h * h
        rows.append(DropletRow(h, s, lhs, rhs, rhs - lhs, lhs <= rhs))
    failing = tuple((r.h, r.s) for r in rows if not r.passed)
    worst = min((r.margin for r in rows), default=np.inf)
    return DropletReport(tuple(rows), float(worst), failing)


def interior_rolling_radius(G: VoidSet3) -> float:
    if isinstance(G, Ball):
        return G.radius
    if isinstance(G, HalfSpace):
        return np.inf
    raise ValueError("no interior rolling radius")


def steiner_bound(G: VoidSet3, r: float, psi: Norm3, region=None) -> float:
    """r (1 + r / (gamma1 gamma2))^2 int_{dG n (region)_r} psi(nu)."""
    g2 = interior_rolling_radius(G)
    if psi.family not in ("euclidean", "ellipsoidal"):
        raise ValueError("the tube bound needs a smooth uniformly convex norm")
    g1 = psi.wulff_rolling_factor()
    reg = None if region is None else region.dilated(r * float(np.max(psi.axis_extent())))
    surf = surface_energy(G, psi, reg)
    return float(r * (1 + r / (g1 * g2)) ** 2 * surf)


@dataclass(frozen=True)
class CurvatureReport:
    sup_curvature: float
    threshold: float
    sufficient: bool
    droplet: DropletReport | None


def curvature_droplet_sufficient(A: VoidSet3, h: float, C_target: float, psi: Norm3 | None = None,
                                 omega: PlanarSet | None = None, s_list=(0.1, 0.25, 0.5),
                                 run_droplet: bool = True) -> CurvatureReport:
    """sup |II_dA| <= C_target / h, cross-checked by the droplet test with zeta = (C^2 + 2C) t."""
    omega = omega or Polygon.rectangle((0, 0), (1, 1))
    psi = psi or Norm3.euclidean()
    for leaf in A.leaves():
        lo, hi = leaf.bbox()
        lat = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
        if np.all(np.isfinite(lat)) and np.any(omega.level(lat) >= 0):
            raise NotContainedError("not compactly contained")
    kap = float(A.max_curvature())
    thr = C_target / h
    rep = droplet_check(A, h, s_list, psi, Zeta.steiner(C_target), omega) if run_droplet else None
    return CurvatureReport(kap, thr, kap <= thr * (1 + 1e-12), rep)
