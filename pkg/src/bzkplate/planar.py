"""Planar sets as CSG of analytic primitives with exact boundary extraction.

Every primitive exposes a signed level function that vanishes exactly on
its boundary, and a list of counter-clockwise parametric boundary curves.
The boundary of a CSG tree is obtained by walking the primitive curves and
keeping the stretches where an epsilon probe along the normal sees the set
on exactly one side; transitions are located by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import ConvexHull

from .quadrature import QuadratureError, composite_nodes

_SAMPLES_PER_PIECE = 512
_BISECT = 60


@dataclass(frozen=True, eq=False)
class Piece:
    """Parametric curve stretch t in [t0, t1]; ``sign`` = -1 reverses orientation."""

    func: Callable
    deriv: Callable
    t0: float
    t1: float
    sign: int = 1
    leaf: int = -1

    def points(self, t) -> np.ndarray:
        return self.func(np.asarray(t, float))

    def velocity(self, t) -> np.ndarray:
        """Derivative along the oriented traversal direction."""
        return self.sign * self.deriv(np.asarray(t, float))

    def normals(self, t) -> np.ndarray:
        """Outward unit normals (set to the left of the traversal direction)."""
        v = self.velocity(t)
        n = np.stack([v[..., 1], -v[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def integrate(self, g, rtol=1e-13, atol=1e-16, label="boundary piece") -> float:
        """int g(x(t), x'(t)) dt over the piece with oriented x'."""
        panels, prev = 4, None
        while panels <= 8192:
            t, w = composite_nodes(self.t0, self.t1, panels)
            cur = float(np.dot(g(self.points(t), self.velocity(t)), w))
            if prev is not None and abs(cur - prev) <= rtol * abs(cur) + atol:
                return cur
            prev = cur
            panels *= 2
        raise QuadratureError(f"quadrature did not converge on {label}")


def _rot_out(d: np.ndarray) -> np.ndarray:
    return np.stack([d[..., 1], -d[..., 0]], axis=-1)


class PlanarSet:
    """Base class; subclasses implement level, leaves and bbox."""

    def level(self, p: np.ndarray) -> np.ndarray:
        """Negative inside, positive outside, |level| <= distance to the boundary."""
        raise NotImplementedError

    def contains(self, p) -> np.ndarray:
        return self.level(np.asarray(p, float)) <= 0.0

    def contains_open(self, p) -> np.ndarray:
        return self.level(np.asarray(p, float)) < 0.0

    def leaves(self) -> list["Primitive"]:
        raise NotImplementedError

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def scale(self) -> float:
        lo, hi = self.bbox()
        return float(max(np.linalg.norm(hi - lo), 1e-3))

    # ------------------------------------------------------------- operators
    def __or__(self, other):
        return Union([self, other])

    def __and__(self, other):
        return Intersection([self, other])

    def __sub__(self, other):
        return Difference(self, other)

    # -------------------------------------------------------------- boundary
    def boundary(self) -> list[Piece]:
        """Oriented pieces of the boundary of the CSG set."""
        cached = getattr(self, "_boundary_cache", None)
        if cached is not None:
            return cached
        leaves = self.leaves()
        eps = 1e-11 * self.scale()
        on_tol = 1e-12 * self.scale()
        out: list[Piece] = []
        for i, leaf in enumerate(leaves):
            earlier = leaves[:i]
            for func, deriv, t0, t1 in leaf.pieces():
                out.extend(_select(self, func, deriv, t0, t1, earlier, eps, on_tol, i))
        self._boundary_cache = out
        return out

    def area(self) -> float:
        return float(sum(p.integrate(lambda x, v: 0.5 * (x[:, 0] * v[:, 1] - x[:, 1] * v[:, 0]))
                         for p in self.boundary()))

    def perimeter(self, norm=None, where=None) -> float:
        """int over the boundary of norm(nu) ds (Euclidean length by default).

        ``where`` is an optional point predicate restricting the boundary.
        """
        pieces = self.boundary()
        if where is not None:
            pieces = clip_pieces(pieces, where)
        total = 0.0
        for p in pieces:
            if norm is None:
                total += p.integrate(lambda x, v: np.linalg.norm(v, axis=1))
            else:
                total += p.integrate(lambda x, v: norm(_rot_out(v)))
        return float(total)


def _classify(S: PlanarSet, func, deriv, t, earlier, eps, on_tol) -> np.ndarray:
    x = func(t)
    d = deriv(t)
    n = _rot_out(d)
    n = n / np.linalg.norm(n, axis=1, keepdims=True)
    inside_plus = S.contains(x + eps * n)
    inside_minus = S.contains(x - eps * n)
    cls = np.where(inside_minus & ~inside_plus, 1, np.where(inside_plus & ~inside_minus, -1, 0))
    for leaf in earlier:
        cls = np.where(np.abs(leaf.level(x)) <= on_tol, 0, cls)
    return cls


def _select(S, func, deriv, t0, t1, earlier, eps, on_tol, leaf_id) -> list[Piece]:
    n = _SAMPLES_PER_PIECE
    pad = 1e-12 * (t1 - t0)
    ts = np.linspace(t0 + pad, t1 - pad, n + 1)
    cls = _classify(S, func, deriv, ts, earlier, eps, on_tol)
    change = np.flatnonzero(cls[1:] != cls[:-1])
    cuts = []
    if len(change):
        lo = ts[change].copy()
        hi = ts[change + 1].copy()
        c_lo = cls[change]
        for _ in range(_BISECT):
            mid = 0.5 * (lo + hi)
            cm = _classify(S, func, deriv, mid, earlier, eps, on_tol)
            left = cm == c_lo
            lo = np.where(left, mid, lo)
            hi = np.where(left, hi, mid)
        cuts = list(0.5 * (lo + hi))
    bounds = [t0] + cuts + [t1]
    run_cls = [cls[0]] + list(cls[change + 1])
    out = []
    for a, b, c in zip(bounds[:-1], bounds[1:], run_cls):
        if c != 0 and b - a > 1e-14 * (t1 - t0):
            out.append(Piece(func, deriv, float(a), float(b), int(c), leaf_id))
    return out


def clip_pieces(pieces: Sequence[Piece], predicate) -> list[Piece]:
    """Sub-pieces on which ``predicate(points)`` holds (sampling plus bisection)."""
    out = []
    for p in pieces:
        n = _SAMPLES_PER_PIECE
        pad = 1e-12 * (p.t1 - p.t0)
        ts = np.linspace(p.t0 + pad, p.t1 - pad, n + 1)
        ok = np.asarray(predicate(p.points(ts)), bool)
        change = np.flatnonzero(ok[1:] != ok[:-1])
        cuts = []
        if len(change):
            lo, hi = ts[change].copy(), ts[change + 1].copy()
            v_lo = ok[change]
            for _ in range(_BISECT):
                mid = 0.5 * (lo + hi)
                vm = np.asarray(predicate(p.points(mid)), bool)
                same = vm == v_lo
                lo = np.where(same, mid, lo)
                hi = np.where(same, hi, mid)
            cuts = list(0.5 * (lo + hi))
        bounds = [p.t0] + cuts + [p.t1]
        flags = [ok[0]] + list(ok[change + 1])
        for a, b, f in zip(bounds[:-1], bounds[1:], flags):
            if f and b > a:
                out.append(Piece(p.func, p.deriv, float(a), float(b), p.sign, p.leaf))
    return out


def segment_intervals(a, b, predicate, samples: int = 2048) -> list[tuple[float, float]]:
    """Parameter intervals of [0, 1] on which predicate(a + t (b - a)) holds."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    func = lambda t: a + np.asarray(t)[:, None] * (b - a)
    deriv = lambda t: np.broadcast_to(b - a, (len(t), 2))
    piece = Piece(func, deriv, 0.0, 1.0)
    return [(q.t0, q.t1) for q in clip_pieces([piece], predicate)]


# --------------------------------------------------------------------------
# primitives


class Primitive(PlanarSet):
    def leaves(self):
        return [self]

    def pieces(self):
        """CCW boundary curves as (func, deriv, t0, t1)."""
        raise NotImplementedError


def _seg_dist(p, a, b):
    d = b - a
    L2 = float(d @ d)
    if L2 == 0:
        return np.linalg.norm(p - a, axis=-1)
    t = np.clip(((p - a) @ d) / L2, 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * d), axis=-1)


def _line_piece(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    d = b - a
    return (
        lambda t, a=a, d=d: a + np.asarray(t)[:, None] * d,
        lambda t, d=d: np.broadcast_to(d, (len(np.asarray(t)), 2)).copy(),
        0.0,
        1.0,
    )


def _arc_piece(c, rho, th0, th1):
    c = np.asarray(c, float)
    return (
        lambda t, c=c, r=rho: c + r * np.stack([np.cos(t), np.sin(t)], axis=-1),
        lambda t, r=rho: r * np.stack([-np.sin(t), np.cos(t)], axis=-1),
        float(th0),
        float(th1),
    )


class Polygon(Primitive):
    """Simple polygon; vertices are reordered counter-clockwise."""

    def __init__(self, vertices):
        V = np.asarray(vertices, float)
        if V.ndim != 2 or V.shape[1] != 2 or len(V) < 3:
            raise ValueError("polygon needs at least three 2D vertices")
        area2 = np.sum(V[:, 0] * np.roll(V[:, 1], -1) - np.roll(V[:, 0], -1) * V[:, 1])
        if area2 < 0:
            V = V[::-1]
        self.vertices = V
        lo, hi = V.min(axis=0), V.max(axis=0)
        on_box = np.all((V == lo) | (V == hi), axis=1)
        # axis-aligned rectangles get the closed-form signed distance
        self._box = (lo, hi) if len(V) == 4 and on_box.all() and np.all(hi > lo) else None

    @classmethod
    def rectangle(cls, lo, hi):
        (x0, y0), (x1, y1) = lo, hi
        return cls([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    def level(self, p):
        p = np.asarray(p, float)
        if self._box is not None:
            lo, hi = self._box
            q = np.abs(p - 0.5 * (lo + hi)) - 0.5 * (hi - lo)
            out = np.hypot(np.maximum(q[..., 0], 0.0), np.maximum(q[..., 1], 0.0))
            return out + np.minimum(np.maximum(q[..., 0], q[..., 1]), 0.0)
        V = self.vertices
        W = np.roll(V, -1, axis=0)
        d = np.full(p.shape[:-1], np.inf)
        inside = np.zeros(p.shape[:-1], bool)
        for a, b in zip(V, W):
            d = np.minimum(d, _seg_dist(p, a, b))
            cond = (a[1] > p[..., 1]) != (b[1] > p[..., 1])
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = a[0] + (p[..., 1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            inside ^= cond & (p[..., 0] < xint)
        return np.where(inside, -d, d)

    def pieces(self):
        V = self.vertices
        return [_line_piece(a, b) for a, b in zip(V, np.roll(V, -1, axis=0))]

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def is_convex(self) -> bool:
        V = self.vertices
        e = np.roll(V, -1, axis=0) - V
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        return bool(np.all(cross >= -1e-14))


class Disk(Primitive):
    def __init__(self, center, radius: float):
        if radius <= 0:
            raise ValueError("disk radius must be positive")
        self.center = np.asarray(center, float)
        self.radius = float(radius)

    def level(self, p):
        return np.linalg.norm(np.asarray(p, float) - self.center, axis=-1) - self.radius

    def pieces(self):
        return [_arc_piece(self.center, self.radius, 0.0, 2 * np.pi)]

    def bbox(self):
        return self.center - self.radius, self.center + self.radius


class HalfPlane(Primitive):
    """{x : <n, x> <= offset}; the boundary line is represented inside a window."""

    def __init__(self, normal, offset: float, window: float = 10.0):
        n = np.asarray(normal, float)
        self.normal = n / np.linalg.norm(n)
        self.offset = float(offset)
        self.window = float(window)

    def level(self, p):
        return np.asarray(p, float) @ self.normal - self.offset

    def pieces(self):
        n = self.normal
        d = np.array([-n[1], n[0]])
        base = self.offset * n
        return [_line_piece(base - self.window * d, base + self.window * d)]

    def bbox(self):
        w = self.window
        return np.array([-w, -w]), np.array([w, w])


class ConvexOffset(Primitive):
    """Convex hull of points dilated by a Euclidean disk of radius rho.

    One point gives a disk, two points a stadium (segment tube), three or
    more a rounded convex polygon (a polygon when rho = 0).
    """

    def __init__(self, points, radius: float):
        P = np.atleast_2d(np.asarray(points, float))
        if len(P) >= 3:
            hull = ConvexHull(P)
            P = P[hull.vertices]  # counter-clockwise in 2D
        if radius < 0 or (radius == 0 and len(P) < 3):
            raise ValueError("degenerate convex offset")
        self.points = P
        self.radius = float(radius)

    def hull_distance(self, p):
        p = np.asarray(p, float)
        P = self.points
        if len(P) == 1:
            return np.linalg.norm(p - P[0], axis=-1)
        if len(P) == 2:
            return _seg_dist(p, P[0], P[1])
        d = np.full(p.shape[:-1], np.inf)
        inside = np.ones(p.shape[:-1], bool)
        for a, b in zip(P, np.roll(P, -1, axis=0)):
            d = np.minimum(d, _seg_dist(p, a, b))
            e = b - a
            inside &= (e[0] * (p[..., 1] - a[1]) - e[1] * (p[..., 0] - a[0])) >= 0
        return np.where(inside, -d, d)

    def level(self, p):
        return self.hull_distance(p) - self.radius

    def pieces(self):
        P, rho = self.points, self.radius
        if len(P) == 1:
            return [_arc_piece(P[0], rho, 0.0, 2 * np.pi)]
        nxt = np.roll(P, -1, axis=0)
        if len(P) == 2:
            nxt = P[::-1]
        E = nxt - P
        N = _rot_out(E) / np.linalg.norm(E, axis=1, keepdims=True)
        out = []
        k = len(P)
        for i in range(k):
            a, b, n = P[i], nxt[i], N[i]
            out.append(_line_piece(a + rho * n, b + rho * n))
            if rho > 0:
                n_next = N[(i + 1) % k]
                th0 = np.arctan2(n[1], n[0])
                th1 = np.arctan2(n_next[1], n_next[0])
                while th1 <= th0 + 1e-15:
                    th1 += 2 * np.pi
                out.append(_arc_piece(b, rho, th0, th1))
        return out

    def bbox(self):
        return self.points.min(axis=0) - self.radius, self.points.max(axis=0) + self.radius


class AffineImage(Primitive):
    """T(base) + c for an invertible 2x2 matrix T and a primitive base."""

    def __init__(self, base: Primitive, T, c=(0.0, 0.0)):
        self.base = base
        self.T = np.asarray(T, float)
        self.c = np.asarray(c, float)
        self.Tinv = np.linalg.inv(self.T)
        self.smin = float(np.linalg.svd(self.T, compute_uv=False).min())
        if abs(np.linalg.det(self.T)) < 1e-300:
            raise ValueError("singular affine map")

    def level(self, p):
        q = (np.asarray(p, float) - self.c) @ self.Tinv.T
        return self.smin * self.base.level(q)

    def pieces(self):
        T, c = self.T, self.c
        flip = np.linalg.det(T) < 0
        out = []
        for f, d, t0, t1 in self.base.pieces():
            if flip:
                f2 = lambda t, f=f, t0=t0, t1=t1: f(t0 + t1 - np.asarray(t)) @ T.T + c
                d2 = lambda t, d=d, t0=t0, t1=t1: -(d(t0 + t1 - np.asarray(t)) @ T.T)
            else:
                f2 = lambda t, f=f: f(t) @ T.T + c
                d2 = lambda t, d=d: d(t) @ T.T
            out.append((f2, d2, t0, t1))
        return out

    def bbox(self):
        lo, hi = self.base.bbox()
        C = np.array([[x, y] for x in (lo[0], hi[0]) for y in (lo[1], hi[1])]) @ self.T.T + self.c
        return C.min(axis=0), C.max(axis=0)


# --------------------------------------------------------------------------
# CSG


class _Node(PlanarSet):
    children: list

    def leaves(self):
        out = []
        for c in self.children:
            for leaf in c.leaves():
                if all(leaf is not o for o in out):
                    out.append(leaf)
        return out


class Union(_Node):
    def __init__(self, children):
        self.children = list(children)
        if not self.children:
            raise ValueError("empty union")

    def level(self, p):
        return np.min([c.level(p) for c in self.children], axis=0)

    def bbox(self):
        boxes = [c.bbox() for c in self.children]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)


class Intersection(_Node):
    def __init__(self, children):
        self.children = list(children)
        if not self.children:
            raise ValueError("empty intersection")

    def level(self, p):
        return np.max([c.level(p) for c in self.children], axis=0)

    def bbox(self):
        boxes = [c.bbox() for c in self.children]
        return np.max([b[0] for b in boxes], axis=0), np.min([b[1] for b in boxes], axis=0)


class Difference(_Node):
    def __init__(self, a: PlanarSet, b: PlanarSet):
        self.children = [a, b]

    def level(self, p):
        return np.maximum(self.children[0].level(p), -self.children[1].level(p))

    def bbox(self):
        return self.children[0].bbox()


class EmptySet(PlanarSet):
    def level(self, p):
        return np.full(np.asarray(p).shape[:-1], np.inf)

    def leaves(self):
        return []

    def bbox(self):
        return np.zeros(2), np.zeros(2)

    def boundary(self):
        return []


EMPTY = EmptySet()


def is_empty(S: PlanarSet | None) -> bool:
    return S is None or isinstance(S, EmptySet)
