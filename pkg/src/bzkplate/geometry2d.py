"""Piecewise-developable flat isometries, the plate limit functional and the
outer Minkowski-content estimator.

An immersion is a partition of the plate domain into convex cells. On each
cell it is a generalized cylinder: with ruling frame angle alpha and rotated
coordinates (u, v) the profile curve gamma(u) (arclength, curvature kappa)
is placed in the (e1, e3)-plane, the ruling runs along e2, and a rigid motion
moves the result into position:

    r(x') = R_cell (gamma_1(u), v, gamma_2(u)) + c_cell.

The tangent angle is theta(u) = theta0 - int_0^u kappa, which makes the
second fundamental form II = kappa(u) e_u (x) e_u.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .forms import QuadraticForm3
from .norms import Norm2, Norm3
from .planar import (
    ConvexOffset,
    AffineImage,
    Difference,
    Disk,
    HalfPlane,
    Intersection,
    PlanarSet,
    Polygon,
    Union,
    is_empty,
    segment_intervals,
)
from .quadrature import QuadratureError, gauss_legendre


class JumpSetError(ValueError):
    """Raised when a pointwise quantity is requested on the partition."""


@dataclass(frozen=True)
class EnergyBreakdown:
    bulk: float
    crack_surface: float
    void_surface: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", (self.bulk + self.crack_surface) + self.void_surface)

    def as_dict(self) -> dict:
        return {
            "bulk": self.bulk,
            "crack_surface": self.crack_surface,
            "void_surface": self.void_surface,
            "total": self.total,
        }


# --------------------------------------------------------------------------
# profile curves


class Profile:
    """Arclength curve with piecewise-linear curvature (constant beyond the end knots)."""

    def __init__(self, knots, kappa, theta0: float = 0.0, u_range=(-4.0, 4.0)):
        k = np.atleast_1d(np.asarray(knots, float))
        kap = np.atleast_1d(np.asarray(kappa, float))
        if k.shape != kap.shape:
            raise ValueError("knots and curvatures must have equal length")
        if np.any(np.diff(k) <= 0):
            raise ValueError("profile knots must be strictly increasing")
        self.knots = k
        self.kappa_values = kap
        self.theta0 = float(theta0)
        lo, hi = float(min(u_range[0], k[0])), float(max(u_range[1], k[-1]))
        self.u_range = (lo, hi)
        self._cum = self._cumulative(lambda a, s, d: a * d + 0.5 * s * d * d)
        self._cum2 = self._cumulative(lambda a, s, d: a * a * d + a * s * d * d + s * s * d**3 / 3.0)
        self._build_table()

    @classmethod
    def constant(cls, kappa: float, theta0: float = 0.0, u_range=(-4.0, 4.0)) -> "Profile":
        return cls([0.0], [kappa], theta0, u_range)

    def scaled(self, t: float) -> "Profile":
        return Profile(self.knots, t * self.kappa_values, self.theta0, self.u_range)

    # piecewise polynomial antiderivatives, anchored at u = 0
    def _cumulative(self, seg_int):
        k, kap = self.knots, self.kappa_values
        c = np.zeros(len(k))
        for j in range(len(k) - 1):
            d = k[j + 1] - k[j]
            c[j + 1] = c[j] + seg_int(kap[j], (kap[j + 1] - kap[j]) / d, d)
        return c

    def _antideriv_raw(self, u, cum, seg_int, const_int):
        u = np.asarray(u, float)
        k, kap = self.knots, self.kappa_values
        out = np.empty_like(u)
        below = u < k[0]
        above = u >= k[-1]
        mid = ~(below | above)
        out[below] = const_int(kap[0], u[below] - k[0])
        out[above] = cum[-1] + const_int(kap[-1], u[above] - k[-1])
        if mid.any():
            j = np.clip(np.searchsorted(k, u[mid], side="right") - 1, 0, len(k) - 2)
            d = u[mid] - k[j]
            s = (kap[j + 1] - kap[j]) / (k[j + 1] - k[j])
            out[mid] = cum[j] + seg_int(kap[j], s, d)
        return out

    def K(self, u):
        """int_0^u kappa."""
        f = lambda a, s, d: a * d + 0.5 * s * d * d
        g = lambda a, d: a * d
        return self._antideriv_raw(u, self._cum, f, g) - self._antideriv_raw(np.zeros(1), self._cum, f, g)[0]

    def K2(self, u):
        """int_0^u kappa^2."""
        f = lambda a, s, d: a * a * d + a * s * d * d + s * s * d**3 / 3.0
        g = lambda a, d: a * a * d
        return self._antideriv_raw(u, self._cum2, f, g) - self._antideriv_raw(np.zeros(1), self._cum2, f, g)[0]

    def kappa(self, u):
        return np.interp(np.asarray(u, float), self.knots, self.kappa_values)

    def dkappa(self, u):
        u = np.asarray(u, float)
        k, kap = self.knots, self.kappa_values
        if len(k) == 1:
            return np.zeros_like(u)
        j = np.searchsorted(k, u, side="right") - 1
        inside = (j >= 0) & (j < len(k) - 1)
        jj = np.clip(j, 0, len(k) - 2)
        slope = (kap[jj + 1] - kap[jj]) / (k[jj + 1] - k[jj])
        return np.where(inside, slope, 0.0)

    def theta(self, u):
        return self.theta0 - self.K(u)

    def _build_table(self):
        lo, hi = self.u_range
        n = int(np.ceil((hi - lo) * 16)) + 1
        nodes = np.unique(np.concatenate([np.linspace(lo, hi, n), self.knots, [0.0]]))
        nodes = nodes[(nodes >= lo) & (nodes <= hi)]
        x, w = gauss_legendre(20)
        a, b = nodes[:-1], nodes[1:]
        t = a[:, None] + (b - a)[:, None] * x[None, :]
        th = self.theta(t.ravel()).reshape(t.shape)
        inc = np.stack([(np.cos(th) * w).sum(1), (np.sin(th) * w).sum(1)], axis=-1) * (b - a)[:, None]
        cum = np.vstack([np.zeros(2), np.cumsum(inc, axis=0)])
        i0 = int(np.searchsorted(nodes, 0.0))
        cum = cum - cum[i0]
        self._nodes = nodes
        self._gamma_nodes = cum

    def gamma(self, u) -> np.ndarray:
        u = np.asarray(u, float)
        lo, hi = self.u_range
        if np.any(u < lo - 1e-12) or np.any(u > hi + 1e-12):
            raise ValueError(f"profile evaluated outside its table range {self.u_range}")
        j = np.clip(np.searchsorted(self._nodes, u, side="right") - 1, 0, len(self._nodes) - 2)
        a = self._nodes[j]
        x, w = gauss_legendre(20)
        t = a[..., None] + (u - a)[..., None] * x
        th = self.theta(t.ravel()).reshape(t.shape)
        d = (u - a)[..., None]
        inc = np.stack([(np.cos(th) * w).sum(-1), (np.sin(th) * w).sum(-1)], axis=-1) * d
        return self._gamma_nodes[j] + inc


# --------------------------------------------------------------------------
# cells and immersions


@dataclass(frozen=True, eq=False)
class Cell:
    polygon: Polygon
    alpha: float
    profile: Profile
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    c: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not self.polygon.is_convex():
            raise ValueError("immersion cells must be convex polygons")
        R = np.asarray(self.R, float)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-12) or np.linalg.det(R) < 0:
            raise ValueError("cell rigid motion must be a rotation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "c", np.asarray(self.c, float))

    @property
    def e_u(self) -> np.ndarray:
        return np.array([np.cos(self.alpha), np.sin(self.alpha)])

    @property
    def e_v(self) -> np.ndarray:
        return np.array([-np.sin(self.alpha), np.cos(self.alpha)])

    def uv(self, x):
        x = np.asarray(x, float)
        return x @ self.e_u, x @ self.e_v

    def evaluate(self, x, order: int = 2) -> dict:
        """r, grad r, normal and (order >= 2) second derivatives, plus II and dII."""
        x = np.asarray(x, float)
        u, v = self.uv(x)
        th = self.profile.theta(u)
        kap = self.profile.kappa(u)
        cth, sth = np.cos(th), np.sin(th)
        zero = np.zeros_like(u)
        tan = np.stack([cth, zero, sth], axis=-1)
        n_p = np.stack([-sth, zero, cth], axis=-1)
        R = self.R
        eu, ev = self.e_u, self.e_v
        out = {}
        if order >= 0:
            g = self.profile.gamma(u)
            p = np.stack([g[..., 0], v, g[..., 1]], axis=-1)
            out["r"] = p @ R.T + self.c
        Rt = tan @ R.T
        Re2 = R[:, 1]
        out["F"] = Rt[..., :, None] * eu + Re2[:, None] * ev
        out["n"] = n_p @ R.T
        if order >= 2:
            out["H"] = -(kap[..., None] * out["n"])[..., :, None, None] * np.multiply.outer(eu, eu)
            out["dn"] = (kap[..., None] * Rt)[..., :, None] * eu
            E = np.outer(eu, eu)
            out["II"] = kap[..., None, None] * E
            out["dII"] = self.profile.dkappa(u)[..., None, None, None] * (E[:, :, None] * eu)
            out["kappa"] = kap
        return out


@dataclass(frozen=True)
class JumpSegment:
    a: tuple
    b: tuple
    kind: str = "crack"

    def __post_init__(self):
        if self.kind not in ("crack", "fold"):
            raise ValueError("jump segment kind must be 'crack' or 'fold'")
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))

    @property
    def length(self) -> float:
        return float(np.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1]))

    @property
    def normal(self) -> np.ndarray:
        d = np.subtract(self.b, self.a)
        return np.array([d[1], -d[0]]) / np.linalg.norm(d)


def _cell_rotation_for_cylinder() -> np.ndarray:
    # (g1, v, g2) -> (g1, -g2, v): with theta0 = 0 this gives (sin u, 1 - cos u, v)
    return np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


class FlatIsometry:
    """Piecewise generalized-cylinder immersion of a polygonal plate domain."""

    def __init__(self, omega: Polygon, cells: Sequence[Cell], segments: Sequence[JumpSegment] = ()):
        self.omega = omega
        self.cells = list(cells)
        self.segments = list(segments)
        if not self.cells:
            raise ValueError("an immersion needs at least one cell")
        total = sum(c.polygon.area() for c in self.cells)
        if abs(total - omega.area()) > 1e-9 * omega.area():
            raise ValueError("cells do not partition the domain (area mismatch)")

    # ----------------------------------------------------------- builders
    @classmethod
    def identity(cls, omega: Polygon | None = None) -> "FlatIsometry":
        omega = omega or Polygon.rectangle((0, 0), (1, 1))
        return cls(omega, [Cell(omega, 0.0, Profile.constant(0.0, u_range=_urange(omega)))])

    @classmethod
    def cylinder(cls, omega: Polygon | None = None, kappa: float = 1.0, alpha: float = 0.0) -> "FlatIsometry":
        """(sin u, 1 - cos u, v) for curvature 1 and alpha = 0."""
        omega = omega or Polygon.rectangle((0, 0), (1, 1))
        prof = Profile.constant(kappa, u_range=_urange(omega))
        return cls(omega, [Cell(omega, alpha, prof, _cell_rotation_for_cylinder())])

    @classmethod
    def two_pieces(cls, omega: Polygon | None = None, split: float = 0.5, offset=(0.0, 0.0, 0.25),
                   rotation=None) -> "FlatIsometry":
        """Two flat pieces on either side of x1 = split; the right one is moved rigidly."""
        omega = omega or Polygon.rectangle((0, 0), (1, 1))
        lo, hi = omega.bbox()
        left = Polygon.rectangle((lo[0], lo[1]), (split, hi[1]))
        right = Polygon.rectangle((split, lo[1]), (hi[0], hi[1]))
        R = np.eye(3) if rotation is None else np.asarray(rotation, float)
        flat = Profile.constant(0.0, u_range=_urange(omega))
        cells = [Cell(left, 0.0, flat), Cell(right, 0.0, flat, R, np.asarray(offset, float))]
        seg = JumpSegment((split, lo[1]), (split, hi[1]), "crack")
        return cls(omega, cells, [seg])

    def with_rigid_motion(self, R0, c0) -> "FlatIsometry":
        R0 = np.asarray(R0, float)
        c0 = np.asarray(c0, float)
        cells = [replace(c, R=R0 @ c.R, c=R0 @ c.c + c0) for c in self.cells]
        return FlatIsometry(self.omega, cells, self.segments)

    def with_scaled_curvature(self, t: float) -> "FlatIsometry":
        cells = [replace(c, profile=c.profile.scaled(t)) for c in self.cells]
        return FlatIsometry(self.omega, cells, self.segments)

    # ----------------------------------------------------------- location
    def cell_index(self, x, tol: float = 1e-12) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        idx = np.full(len(x), -1)
        for i, c in enumerate(self.cells):
            hit = (idx < 0) & (c.polygon.level(x) <= tol)
            idx[hit] = i
        return idx

    def partition_distance(self, x) -> np.ndarray:
        """Distance to cell edges lying inside the domain (the partition)."""
        x = np.atleast_2d(np.asarray(x, float))
        d = np.full(len(x), np.inf)
        for c in self.cells:
            inner = np.abs(c.polygon.level(x))
            edge_pts = (c.polygon.vertices + np.roll(c.polygon.vertices, -1, axis=0)) / 2
            if np.all(self.omega.level(edge_pts) > -1e-12):
                continue
            d = np.minimum(d, np.where(self.omega.level(x) < -1e-12, inner, np.inf))
        return d

    def evaluate(self, x, order: int = 2, idx=None) -> dict:
        x = np.atleast_2d(np.asarray(x, float))
        if idx is None:
            idx = self.cell_index(x)
        if np.any(idx < 0):
            raise ValueError("points outside the immersion domain")
        out = None
        for i in np.unique(idx):
            sel = idx == i
            part = self.cells[i].evaluate(x[sel], order)
            if out is None:
                out = {k: np.zeros((len(x),) + v.shape[1:]) for k, v in part.items()}
            for k, v in part.items():
                out[k][sel] = v
        return out

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x, order=0)["r"]

    def sup_norm(self, samples: int = 64) -> float:
        lo, hi = self.omega.bbox()
        g = np.stack(np.meshgrid(np.linspace(lo[0], hi[0], samples), np.linspace(lo[1], hi[1], samples)), -1)
        g = g.reshape(-1, 2)
        g = g[self.omega.contains(g)]
        return float(np.linalg.norm(self(g), axis=1).max())

    # ----------------------------------------------------------- checks
    def validate(self, samples: int = 200, seed: int = 0) -> dict:
        """Isometry, developability and trace-classification diagnostics."""
        rng = np.random.default_rng(seed)
        iso_err = 0.0
        rank_err = 0.0
        for c in self.cells:
            lo, hi = c.polygon.bbox()
            pts = rng.uniform(lo, hi, (samples * 4, 2))
            pts = pts[c.polygon.contains_open(pts)][:samples]
            if len(pts) == 0:
                continue
            ev = c.evaluate(pts)
            M = np.concatenate([ev["F"], ev["n"][..., None]], axis=-1)
            iso_err = max(iso_err, float(np.abs(np.swapaxes(M, 1, 2) @ M - np.eye(3)).max()))
            iso_err = max(iso_err, float(np.abs(np.linalg.det(M) - 1).max()))
            ev2 = np.linalg.eigvalsh(ev["II"])
            rank_err = max(rank_err, float(np.min(np.abs(ev2), axis=1).max()))
        trace_issues = []
        for s in self.segments:
            kind = self._trace_kind(s)
            if kind != s.kind:
                trace_issues.append((s, kind))
        return {"isometry_error": iso_err, "rank_defect": rank_err, "trace_mismatches": trace_issues}

    def _trace_kind(self, s: JumpSegment) -> str:
        t = np.linspace(0.05, 0.95, 7)
        pts = np.asarray(s.a) + t[:, None] * (np.asarray(s.b) - np.asarray(s.a))
        n = s.normal
        eps = 1e-7
        left = self.cell_index(pts - eps * n)
        right = self.cell_index(pts + eps * n)
        if np.any(left < 0) or np.any(right < 0) or np.any(left == right):
            return "none"
        r_jump = grad_jump = 0.0
        for k in range(len(pts)):
            a = self.cells[left[k]].evaluate(pts[k : k + 1], order=1)
            b = self.cells[right[k]].evaluate(pts[k : k + 1], order=1)
            r_jump = max(r_jump, float(np.abs(a["r"] - b["r"]).max()))
            grad_jump = max(grad_jump, float(np.abs(a["F"] - b["F"]).max()))
        if r_jump > 1e-9:
            return "crack"
        if grad_jump > 1e-9:
            return "fold"
        return "none"


def _urange(omega: Polygon, margin: float = 2.0):
    R = np.linalg.norm(np.abs(omega.vertices).max(axis=0))
    return (-R - margin, R + margin)


# --------------------------------------------------------------------------
# pointwise geometry


def second_fundamental_form(r: FlatIsometry, xp) -> np.ndarray:
    """II(x') = -d_ij r . (d_1 r ^ d_2 r) in closed form."""
    xp = np.asarray(xp, float).reshape(1, 2)
    if r.partition_distance(xp)[0] < 1e-12:
        raise JumpSetError("on jump set")
    return r.evaluate(xp)["II"][0]


def second_fundamental_form_fd(r: FlatIsometry, xp, step: float = 1e-5) -> np.ndarray:
    """Central second differences of r, contracted with the normal."""
    xp = np.asarray(xp, float)
    idx = r.cell_index(xp[None])[0]
    cell = r.cells[idx]
    f = lambda q: cell.evaluate(np.atleast_2d(q), order=0)["r"][0]
    n = cell.evaluate(xp[None], order=1)["n"][0]
    H = np.zeros((2, 2))
    E = np.eye(2) * step
    for i in range(2):
        for j in range(2):
            d2 = (f(xp + E[i] + E[j]) - f(xp + E[i] - E[j]) - f(xp - E[i] + E[j]) + f(xp - E[i] - E[j]))
            H[i, j] = -(d2 / (4 * step * step)) @ n
    return H


# --------------------------------------------------------------------------
# limit functional


def _relaxed_norm(psi: Norm3 | Norm2) -> Norm2:
    return psi if isinstance(psi, Norm2) else psi.relaxed()


def jump_measure(r: FlatIsometry, D: PlanarSet | None, psi: Norm3) -> float:
    """2 * int over the jump segments outside the closure of D of psi0(nu)."""
    psi0 = _relaxed_norm(psi)
    total = 0.0
    for s in r.segments:
        if is_empty(D):
            frac = 1.0
        else:
            frac = sum(b - a for a, b in segment_intervals(s.a, s.b, lambda p: ~D.contains(p)))
        total += float(psi0(s.normal)) * s.length * frac
    return 2.0 * total


def void_surface_energy(D: PlanarSet | None, omega: PlanarSet, psi: Norm3) -> float:
    if is_empty(D):
        return 0.0
    return D.perimeter(norm=_relaxed_norm(psi), where=omega.contains_open)


def limit_energy(r: FlatIsometry, D: PlanarSet | None, Q3: QuadraticForm3, psi: Norm3) -> EnergyBreakdown:
    """(1/24) int_{omega \\ D} Q2(II) + crack and void surface terms.

    On a cell Q2(II) = q(alpha) kappa(u)^2 with q = Q2(e_u (x) e_u); the area
    integral is turned into a boundary integral of the exact antiderivative
    of kappa^2 (Green's theorem in the rotated frame).
    """
    relaxed = Q3.relaxed()
    bulk = 0.0
    for k, cell in enumerate(r.cells):
        q = relaxed(np.outer(cell.e_u, cell.e_u))
        if q == 0 or np.all(cell.profile.kappa_values == 0):
            continue
        region: PlanarSet = Intersection([cell.polygon, r.omega])
        if not is_empty(D):
            region = Difference(region, D)
        ev = cell.e_v
        g = lambda x, vel: cell.profile.K2(x @ cell.e_u) * (vel @ ev)
        try:
            val = sum(p.integrate(g, rtol=1e-12, atol=1e-15) for p in region.boundary())
        except QuadratureError as exc:
            raise QuadratureError(f"bulk quadrature failed on cell {k}") from exc
        bulk += q * val / 24.0
    crack = jump_measure(r, D, psi)
    void = void_surface_energy(D, r.omega, psi)
    return EnergyBreakdown(float(bulk), float(crack), float(void))


# --------------------------------------------------------------------------
# tubes and distances in the relaxed dual norm


def segment_tube(a, b, t: float, norm_dual: Norm2) -> PlanarSet:
    """{x : dist_N(x, [a, b]) <= t} for the norm N = norm_dual."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    kind, ball = norm_dual.unit_ball()
    if kind == "ellipse":
        if np.allclose(ball, np.eye(2)):
            return ConvexOffset([a, b], t)
        Tinv = np.linalg.inv(ball)
        return AffineImage(ConvexOffset([Tinv @ a, Tinv @ b], t), ball)
    pts = np.vstack([a + t * ball, b + t * ball])
    return ConvexOffset(pts, 0.0)


def _dist_segment(p, a, b, N: Norm2) -> np.ndarray:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    d = b - a
    kind, ball = N.unit_ball()
    if kind == "ellipse":
        Ti = np.linalg.inv(ball)
        q = p @ Ti.T
        aa, dd = Ti @ a, Ti @ d
        L2 = dd @ dd
        lam = np.clip(((q - aa) @ dd) / L2, 0, 1) if L2 > 0 else np.zeros(len(p))
        return np.linalg.norm(q - aa - lam[:, None] * dd, axis=1)
    z = p - a
    cands = [np.zeros(len(p)), np.ones(len(p))]
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(2):
            if d[i] != 0:
                cands.append(z[:, i] / d[i])
        if N.family == "weighted_linf":
            w = N.params["a"]
            for sgn in (1.0, -1.0):
                den = w[0] * d[0] - sgn * w[1] * d[1]
                if den != 0:
                    cands.append((w[0] * z[:, 0] - sgn * w[1] * z[:, 1]) / den)
    best = np.full(len(p), np.inf)
    for lam in cands:
        lam = np.clip(np.nan_to_num(lam), 0, 1)
        best = np.minimum(best, N(z - lam[:, None] * d))
    return best


def _support(leaf, v):
    nv = np.linalg.norm(v, axis=-1)
    if isinstance(leaf, Disk):
        return v @ leaf.center + leaf.radius * nv
    if isinstance(leaf, ConvexOffset):
        return np.max(v @ leaf.points.T, axis=-1) + leaf.radius * nv
    if isinstance(leaf, Polygon) and leaf.is_convex():
        return np.max(v @ leaf.vertices.T, axis=-1)
    raise ValueError("distance to this void set needs convex primitives")


def _dist_convex(p, leaf, N: Norm2) -> np.ndarray:
    if isinstance(leaf, HalfPlane):
        gap = np.maximum(p @ leaf.normal - leaf.offset, 0.0)
        return gap / float(N.dual()(leaf.normal))
    if N.is_euclidean():
        if isinstance(leaf, (Disk, ConvexOffset)) or (isinstance(leaf, Polygon) and leaf.is_convex()):
            return np.maximum(leaf.level(p), 0.0)
        raise ValueError("distance to this void set needs convex primitives")
    # sup over the dual unit sphere of <v, p> - h_K(v)
    M = N.dual()
    ang = np.linspace(0, 2 * np.pi, 721)[:-1]
    U = np.column_stack([np.cos(ang), np.sin(ang)])
    U = U / M(U)[:, None]
    out = np.empty(len(p))
    for s in range(0, len(p), 4096):
        q = p[s : s + 4096]
        vals = q @ U.T - _support(leaf, U)[None, :]
        j = np.argmax(vals, axis=1)
        lo = ang[j] - 2 * np.pi / 720
        hi = ang[j] + 2 * np.pi / 720

        def f(a):
            v = np.column_stack([np.cos(a), np.sin(a)])
            v = v / M(v)[:, None]
            return np.einsum("ij,ij->i", q, v) - _support(leaf, v)

        g = (np.sqrt(5) - 1) / 2
        for _ in range(60):
            m1 = hi - g * (hi - lo)
            m2 = lo + g * (hi - lo)
            left = f(m1) > f(m2)
            hi = np.where(left, m2, hi)
            lo = np.where(left, lo, m1)
        out[s : s + 4096] = np.maximum(f(0.5 * (lo + hi)), 0.0)
    return out


def _void_leaves(D: PlanarSet):
    if isinstance(D, Union):
        out = []
        for c in D.children:
            out.extend(_void_leaves(c))
        return out
    if isinstance(D, (Disk, ConvexOffset, Polygon, HalfPlane)):
        return [D]
    raise ValueError("distance to this void set needs a union of convex primitives")


def relaxed_distance(p, segments: Sequence, D: PlanarSet | None, N: Norm2) -> np.ndarray:
    """dist_N(p, J u D) for straight segments J and a union of convex primitives D."""
    p = np.atleast_2d(np.asarray(p, float))
    out = np.full(len(p), np.inf)
    for s in segments:
        a, b = (s.a, s.b) if isinstance(s, JumpSegment) else s
        out = np.minimum(out, _dist_segment(p, a, b, N))
    if not is_empty(D):
        for leaf in _void_leaves(D):
            out = np.minimum(out, _dist_convex(p, leaf, N))
    return out


# --------------------------------------------------------------------------
# Minkowski content


def _bbox_of_sources(segments, D):
    pts = []
    for s in segments:
        a, b = (s.a, s.b) if isinstance(s, JumpSegment) else s
        pts += [a, b]
    lo = np.min(pts, axis=0) if pts else np.full(2, np.inf)
    hi = np.max(pts, axis=0) if pts else np.full(2, -np.inf)
    if not is_empty(D):
        dlo, dhi = D.bbox()
        lo, hi = np.minimum(lo, dlo), np.maximum(hi, dhi)
    return lo, hi


def tube_area(segments, D, N: Norm2, t: float, omega: PlanarSet, rows: int = 6, samples: int = 9,
              min_cell_fraction: float = 0.25) -> float:
    """L2(omega n {dist_N(., J u D) <= t} \\ D) by adaptive cells with exact row crossings.

    Cells are classified with Lipschitz bounds on the distance and the level
    functions; mixed cells are refined down to t * min_cell_fraction and then
    integrated by Gauss rows, each row cut exactly at the predicate changes.
    """
    lo, hi = _bbox_of_sources(segments, D)
    if not np.all(np.isfinite(lo)):
        return 0.0
    kind, ball = N.unit_ball()
    ext = np.abs(ball).sum(axis=1) if kind == "ellipse" else np.abs(ball).max(axis=0)
    lo = lo - t * ext - 1e-12
    hi = hi + t * ext + 1e-12
    olo, ohi = omega.bbox()
    lo, hi = np.maximum(lo, olo), np.minimum(hi, ohi)
    if np.any(hi <= lo):
        return 0.0
    Lip = N.lipschitz_to_euclidean()[1]
    Dset = None if is_empty(D) else D

    def pred(p):
        ok = omega.contains_open(p)
        if Dset is not None:
            ok &= ~Dset.contains(p)
        ok &= relaxed_distance(p, segments, Dset, N) <= t
        return ok

    size = float(np.max(hi - lo))
    n0 = max(int(np.ceil(np.max(hi - lo) / max(t, size / 64))), 1)
    h0 = np.max(hi - lo) / n0
    nx = max(int(np.ceil((hi[0] - lo[0]) / h0)), 1)
    ny = max(int(np.ceil((hi[1] - lo[1]) / h0)), 1)
    X, Y = np.meshgrid(lo[0] + h0 * (np.arange(nx) + 0.5), lo[1] + h0 * (np.arange(ny) + 0.5), indexing="ij")
    centers = np.column_stack([X.ravel(), Y.ravel()])
    half = 0.5 * h0
    area = 0.0
    mixed_final = []
    target = t * min_cell_fraction
    while len(centers):
        e = half * np.sqrt(2.0)
        lw = omega.level(centers)
        g = relaxed_distance(centers, segments, Dset, N)
        full = (lw < -e) & (g + Lip * e <= t)
        empty = (lw > e) | (g - Lip * e > t)
        if Dset is not None:
            ld = Dset.level(centers)
            full &= ld > e
            empty |= ld < -e
        area += np.count_nonzero(full & ~empty) * (2 * half) ** 2
        mixed = centers[~full & ~empty]
        if half <= 0.5 * target or len(mixed) == 0:
            mixed_final.append((mixed, half))
            break
        half *= 0.5
        offs = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]]) * half
        centers = (mixed[:, None, :] + offs[None]).reshape(-1, 2)
    for cells, hf in mixed_final:
        if len(cells) == 0:
            continue
        gy, gw = gauss_legendre(rows)
        ys = cells[:, 1, None] - hf + 2 * hf * gy[None, :]  # (C, rows)
        xs = cells[:, 0, None] - hf + 2 * hf * np.linspace(0, 1, samples)[None, :]  # (C, S)
        C = len(cells)
        PX = np.broadcast_to(xs[:, None, :], (C, rows, samples))
        PY = np.broadcast_to(ys[:, :, None], (C, rows, samples))
        vals = pred(np.column_stack([PX.ravel(), PY.ravel()])).reshape(C, rows, samples)
        dx = 2 * hf / (samples - 1)
        same = vals[..., 1:] == vals[..., :-1]
        length = np.sum(np.where(same & vals[..., :-1], dx, 0.0), axis=-1)
        ci, ri, si = np.nonzero(~same)
        if len(ci):
            a = PX[ci, ri, si].copy()
            b = PX[ci, ri, si + 1].copy()
            y = PY[ci, ri, si]
            va = vals[ci, ri, si]
            for _ in range(50):
                m = 0.5 * (a + b)
                vm = pred(np.column_stack([m, y]))
                s_ = vm == va
                a = np.where(s_, m, a)
                b = np.where(s_, b, m)
            xc = 0.5 * (a + b)
            seg = np.where(va, xc - PX[ci, ri, si], PX[ci, ri, si + 1] - xc)
            np.add.at(length, (ci, ri), seg)
        area += float(np.sum(length * gw[None, :]) * 2 * hf)
    return float(area)


def minkowski_content_estimate(segments, D, psi0_dual: Norm2, t_list, omega: PlanarSet | None = None) -> list[float]:
    """t^-1 L2(omega n {dist(., J u D) <= t} \\ D) for each t."""
    t_list = [float(t) for t in t_list]
    if any(t <= 0 for t in t_list):
        raise ValueError("tube widths must be positive")
    omega = omega or Polygon.rectangle((0, 0), (1, 1))
    return [tube_area(segments, D, psi0_dual, t, omega) / t for t in t_list]


def monte_carlo_tube_area(segments, D, N: Norm2, t: float, omega: PlanarSet, samples: int = 10**7,
                          seed: int = 0, chunk: int = 10**6) -> tuple[float, float]:
    """Independent Monte-Carlo estimate (area, standard error) over the source bounding box."""
    lo, hi = _bbox_of_sources(segments, D)
    kind, ball = N.unit_ball()
    ext = np.abs(ball).sum(axis=1) if kind == "ellipse" else np.abs(ball).max(axis=0)
    lo = np.maximum(lo - t * ext, omega.bbox()[0])
    hi = np.minimum(hi + t * ext, omega.bbox()[1])
    box = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    Dset = None if is_empty(D) else D
    while done < samples:
        m = min(chunk, samples - done)
        p = rng.uniform(lo, hi, (m, 2))
        ok = omega.contains_open(p)
        if Dset is not None:
            ok &= ~Dset.contains(p)
        ok &= relaxed_distance(p, segments, Dset, N) <= t
        hits += int(np.count_nonzero(ok))
        done += m
    frac = hits / samples
    return box * frac, box * np.sqrt(frac * (1 - frac) / samples)


@dataclass(frozen=True)
class MinkowskiReport:
    holds: bool
    status: str
    lhs: float
    extrapolated: float
    t_list: tuple
    quotients: tuple


def minkowski_condition_check(r: FlatIsometry, D, psi: Norm3, t_list, tolerance: float = 0.01,
                              noise: float = 1e-7) -> MinkowskiReport:
    """Compare the limit surface terms with the extrapolated Minkowski quotient.

    The quotient sequence is extrapolated linearly in t from the three
    smallest widths. A sequence that is not monotone beyond ``noise``
    (relative) is reported as inconclusive.
    """
    t_sorted = sorted({float(t) for t in t_list}, reverse=True)
    if len(t_sorted) < 2 or t_sorted[0] / t_sorted[-1] < 100:
        raise ValueError("t_list must span at least two decades")
    psi0 = psi.relaxed()
    lhs = jump_measure(r, D, psi) + void_surface_energy(D, r.omega, psi)
    q = minkowski_content_estimate(r.segments, D, psi0.dual(), t_sorted, r.omega)
    t = np.array(t_sorted)
    qa = np.array(q)
    dq = np.diff(qa)
    scale = noise * max(1.0, float(np.abs(qa).max()))
    monotone = bool(np.all(dq <= scale) or np.all(dq >= -scale))
    k = min(3, len(t))
    A = np.column_stack([np.ones(k), t[-k:]])
    coef = np.linalg.lstsq(A, qa[-k:], rcond=None)[0]
    extrap = float(coef[0])
    holds = monotone and abs(extrap - lhs) <= tolerance * (1 + lhs)
    if not monotone:
        status = "inconclusive"
    elif holds:
        status = "holds at resolution"
    else:
        status = "violated at resolution"
    return MinkowskiReport(holds, status, float(lhs), extrap, tuple(t_sorted), tuple(float(v) for v in q))
