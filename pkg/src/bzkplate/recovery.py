"""Recovery sequences for the plate limit: the sheared bending ansatz w_h,
its exact strain decomposition, the optimal third-column correction d, the
choice of phi that relaxes the surface term, the void tubes E_{t,h} and the
convergence harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import (
    PlanarField,
    ZeroField,
    check_invertible,
    map_f_h,
    map_f_h_inverse,
    smoothstep5,
)
from .forms import ElasticDensity, QuadraticForm3
from .geometry2d import (
    FlatIsometry,
    JumpSetError,
    limit_energy,
    relaxed_distance,
    segment_tube,
)
from .geometry3d import (
    Extrusion,
    Scaled,
    ShearImage,
    VoidSet3,
    Zeta,
    droplet_check,
)
from .norms import Norm2, Norm3, psi0
from .planar import ConvexOffset, Intersection, PlanarSet, Union, is_empty
from .thinfilm import Deformation3, FilmScene, film_energy

__all__ = [
    "map_f_h",
    "map_f_h_inverse",
    "RecoveryParams",
    "StrainDecomposition",
    "OptimalD",
    "strain_decomposition",
    "limit_strain_G",
    "optimal_d",
    "build_w_h",
    "choose_phi",
    "PhiChoice",
    "VoidTube",
    "build_void_tube",
    "gamma_study",
    "GammaRow",
    "GammaStudy",
]


def _frame(ev) -> np.ndarray:
    """R = (d1 r, d2 r, n) as (n, 3, 3)."""
    return np.concatenate([ev["F"], ev["n"][..., None]], axis=-1)


def _G_from(II, phi, c):
    """[[II, -II phi + c'], [-phi^T II, phi^T II phi + c3]]."""
    n = len(II)
    G = np.zeros((n, 3, 3))
    IIphi = np.einsum("nij,nj->ni", II, phi)
    G[:, :2, :2] = II
    G[:, :2, 2] = -IIphi + c[:, :2]
    G[:, 2, :2] = -IIphi  # II symmetric
    G[:, 2, 2] = np.einsum("ni,ni->n", phi, IIphi) + c[:, 2]
    return G


# --------------------------------------------------------------------------
# optimal third-column correction


class OptimalD(PlanarField):
    """d(x') = R(x') c*(x') with c* minimizing Q3(G(x', phi, c)) pointwise.

    Held as an analytic closure, so the fit residual is zero.
    """

    dim = 3
    fit_residual = 0.0

    def __init__(self, r: FlatIsometry, Q3: QuadraticForm3, phi: PlanarField):
        self.r, self.Q3, self.phi = r, Q3, phi
        self._relaxed = Q3.relaxed()

    def coefficients(self, x) -> np.ndarray:
        """c*(x') in the frame R(x')."""
        x = np.atleast_2d(x)
        ev = self.r.evaluate(x)
        return self._c_star(ev["II"], self.phi.value(x))

    def _c_star(self, II, phi):
        c0 = self._relaxed.argmin(II)
        IIphi = np.einsum("nij,nj->ni", II, phi)
        out = c0.copy()
        out[:, :2] += 2.0 * IIphi
        out[:, 2] -= np.einsum("ni,ni->n", phi, IIphi)
        return out

    def value(self, x):
        x = np.atleast_2d(x)
        ev = self.r.evaluate(x)
        c = self._c_star(ev["II"], self.phi.value(x))
        return np.einsum("nij,nj->ni", _frame(ev), c)

    def grad(self, x):
        x = np.atleast_2d(x)
        ev = self.r.evaluate(x)
        II, dII = ev["II"], ev["dII"]
        phi, dphi = self.phi.value(x), self.phi.grad(x)
        R = _frame(ev)
        c = self._c_star(II, phi)
        out = np.zeros((len(x), 3, 2))
        for j in range(2):
            dIIj = dII[..., j]
            dphij = dphi[..., j]
            dc = (self._relaxed.argmin(dIIj)).copy()
            dIIphi = np.einsum("nij,nj->ni", dIIj, phi) + np.einsum("nij,nj->ni", II, dphij)
            dc[:, :2] += 2.0 * dIIphi
            dc[:, 2] -= 2.0 * np.einsum("ni,nij,nj->n", dphij, II, phi) + np.einsum("ni,nij,nj->n", phi, dIIj, phi)
            dR = np.concatenate([ev["H"][:, :, :, j], ev["dn"][:, :, j][..., None]], axis=-1)
            out[:, :, j] = np.einsum("nij,nj->ni", dR, c) + np.einsum("nij,nj->ni", R, dc)
        return out


def optimal_d(r: FlatIsometry, Q3: QuadraticForm3, phi: PlanarField | None = None) -> OptimalD:
    return OptimalD(r, Q3, phi or ZeroField(2))


def limit_strain_G(r: FlatIsometry, phi: PlanarField, d: PlanarField, xp) -> np.ndarray:
    xp = np.atleast_2d(np.asarray(xp, float))
    if np.any(r.partition_distance(xp) < 1e-12):
        raise JumpSetError("on jump set")
    ev = r.evaluate(xp)
    c = np.einsum("nji,nj->ni", _frame(ev), d.value(xp))
    G = _G_from(ev["II"], phi.value(xp), c)
    return G[0] if len(G) == 1 else G


# --------------------------------------------------------------------------
# the recovery map


@dataclass(frozen=True, eq=False)
class RecoveryParams:
    phi: PlanarField = field(default_factory=lambda: ZeroField(2))
    d: PlanarField | str = "optimal"
    t: float | None = None
    h_list: tuple = ()


@dataclass(frozen=True)
class StrainDecomposition:
    A_h: np.ndarray
    B_h: np.ndarray
    G_h: np.ndarray
    R: np.ndarray
    s: np.ndarray


def _shadow_and_eval(r: FlatIsometry, x, phi, h):
    x = np.atleast_2d(x)
    xp = x[:, :2]
    s = x[:, 2] - 0.5
    ph = phi.value(xp)
    p = xp - h * s[:, None] * ph
    idx_p = r.cell_index(p)
    idx_x = r.cell_index(xp)
    ok = idx_p >= 0
    if not np.all(ok):
        # p left the domain: evaluate the cell formula of x' (harmless inside voids)
        idx_p = np.where(ok, idx_p, idx_x)
    shadow = (idx_p != idx_x) | ~ok
    ev = r.evaluate(p, idx=idx_p)
    return xp, s, ph, p, ev, shadow


def strain_decomposition(r: FlatIsometry, phi: PlanarField, d: PlanarField, x, h: float) -> StrainDecomposition:
    x = np.atleast_2d(x)
    xp, s, ph, p, ev, _ = _shadow_and_eval(r, x, phi, h)
    R = _frame(ev)
    II = ev["II"]
    c = np.einsum("nji,nj->ni", R, d.value(xp))
    A = _G_from(II, ph, c)
    dphi = phi.grad(xp)
    dd = d.grad(xp)
    B = np.zeros_like(A)
    IIphi = np.einsum("nij,nj->ni", II, ph)
    for i in range(2):
        dpi = dphi[..., i]
        B[:, :2, i] = -np.einsum("nij,nj->ni", II, dpi)
        B[:, 2, i] = np.einsum("ni,ni->n", dpi, IIphi)
        B[:, :, i] += 0.5 * np.einsum("nji,nj->ni", R, dd[..., i])
    G = A + h * s[:, None, None] * B
    return StrainDecomposition(A, B, G, R, s)


class RecoveryMap(Deformation3):
    """w_h = r(p) + h s (n(p) + grad r(p) phi) + h^2 s^2 d / 2 with p = x' - h s phi(x')."""

    def __init__(self, r: FlatIsometry, phi: PlanarField, d: PlanarField, h: float):
        self.r, self.phi, self.d, self.h = r, phi, d, float(h)
        self.contraction = check_invertible(phi, h, r.omega)
        phi_sup, _ = phi.sup_bounds(r.omega)
        d_sup, _ = d.sup_bounds(r.omega) if not isinstance(d, ZeroField) else (0.0, 0.0)
        self.c0 = 0.5 * (1.0 + phi_sup) + 0.125 * h * d_sup
        super().__init__(self._eval, self._grad, name="w_h", sup_norm=r.sup_norm() + self.c0 * h)

    def _eval(self, x):
        h = self.h
        xp, s, ph, p, ev, _ = _shadow_and_eval(self.r, x, self.phi, h)
        Fphi = np.einsum("nij,nj->ni", ev["F"], ph)
        return ev["r"] + h * s[:, None] * (ev["n"] + Fphi) + 0.5 * h * h * (s * s)[:, None] * self.d.value(xp)

    def _grad(self, x):
        sd = strain_decomposition(self.r, self.phi, self.d, x, self.h)
        M = np.eye(3)[None] + self.h * sd.s[:, None, None] * sd.G_h
        F = np.einsum("nij,njk->nik", sd.R, M)
        F[:, :, 2] *= self.h
        return F

    def in_crack_shadow(self, x) -> np.ndarray:
        return _shadow_and_eval(self.r, x, self.phi, self.h)[5]

    def frame_deviation_constant(self, samples: int = 2000, seed: int = 0) -> float:
        """max |grad_h w_h - R(f_h'(x))| / h over random points of Omega."""
        rng = np.random.default_rng(seed)
        lo, hi = self.r.omega.bbox()
        x = rng.uniform([lo[0], lo[1], 0], [hi[0], hi[1], 1], (samples, 3))
        x = x[self.r.omega.contains_open(x[:, :2])]
        sd = strain_decomposition(self.r, self.phi, self.d, x, self.h)
        F = self._grad(x)
        F[:, :, 2] /= self.h
        return float(np.linalg.norm(F - sd.R, axis=(1, 2)).max() / self.h)


def build_w_h(r: FlatIsometry, params: RecoveryParams, h: float, Q3: QuadraticForm3 | None = None) -> RecoveryMap:
    d = params.d
    if isinstance(d, str):
        if d != "optimal":
            raise ValueError(f"unknown d choice {d!r}")
        if Q3 is None:
            raise ValueError("the optimal d needs the quadratic form Q3")
        d = optimal_d(r, Q3, params.phi)
    return RecoveryMap(r, params.phi, d, h)


class CutoffMap(Deformation3):
    """chi(dist(x', J) / (t/2)) w(x) with a cosine taper; it vanishes on the jump set."""

    def __init__(self, w: Deformation3, segments, t: float):
        self.w, self.segs, self.t = w, list(segments), float(t)
        super().__init__(self._eval, self._grad, name="w_h cut-off", sup_norm=w.sup_norm)

    def _chi(self, xp):
        if not self.segs:
            return np.ones(len(xp)), np.zeros((len(xp), 2))
        euc = Norm3.euclidean().relaxed()
        dist = relaxed_distance(xp, self.segs, None, euc)
        a = np.clip(dist / (0.5 * self.t), 0.0, 1.0)
        chi = 0.5 - 0.5 * np.cos(np.pi * a)
        e = 1e-7
        g = np.zeros((len(xp), 2))
        for k in range(2):
            dx = np.zeros(2)
            dx[k] = e
            dp = np.clip(relaxed_distance(xp + dx, self.segs, None, euc) / (0.5 * self.t), 0, 1)
            dm = np.clip(relaxed_distance(xp - dx, self.segs, None, euc) / (0.5 * self.t), 0, 1)
            g[:, k] = (np.cos(np.pi * dm) - np.cos(np.pi * dp)) * 0.5 / (2 * e)
        return chi, g

    def _eval(self, x):
        chi, _ = self._chi(np.atleast_2d(x)[:, :2])
        return chi[:, None] * self.w(x)

    def _grad(self, x):
        chi, g = self._chi(np.atleast_2d(x)[:, :2])
        F = chi[:, None, None] * self.w.gradient(x)
        F[:, :, :2] += np.einsum("ni,nj->nij", self.w(x), g)
        return F


# --------------------------------------------------------------------------
# phi relaxing the surface term


@dataclass(frozen=True, eq=False)
class PhiChoice:
    phi: PlanarField
    defect: float
    width: float
    nu3: tuple


class _SetPlateau(PlanarField):
    """c * chi_in(dist to J u D) * chi_out(dist to the domain boundary)."""

    def __init__(self, c, segments, D, omega, width: float):
        self.c = np.asarray(c, float)
        self.dim = 2
        self.segs, self.D, self.omega, self.w = list(segments), D, omega, float(width)
        self._euc = Norm3.euclidean().relaxed()

    def _theta(self, x):
        x = np.atleast_2d(x)
        dist = relaxed_distance(x, self.segs, self.D, self._euc)
        a = 1.0 - smoothstep5((dist - self.w) / self.w)
        bnd = -self.omega.level(x)
        b = smoothstep5((bnd - 0.5 * self.w) / (0.5 * self.w))
        return a * b

    def value(self, x):
        return self._theta(x)[:, None] * self.c

    def grad(self, x):
        x = np.atleast_2d(x)
        e = 1e-7 * max(1.0, self.w)
        g = np.zeros((len(x), 2))
        for k in range(2):
            d = np.zeros(2)
            d[k] = e
            g[:, k] = (self._theta(x + d) - self._theta(x - d)) / (2 * e)
        return self.c[None, :, None] * g[:, None, :]

    def sup_bounds(self, omega=None, samples=0):
        n = float(np.linalg.norm(self.c))
        return n, n * 1.875 * (1.0 / self.w + 2.0 / self.w)


def _normals_on_sources(segments, D, omega, n_per_unit: int = 400):
    """Quadrature points, weights and unit normals on J and on the void boundary inside omega."""
    pts, wts, nrm = [], [], []
    for s in segments:
        m = max(16, int(s.length * n_per_unit))
        t = (np.arange(m) + 0.5) / m
        pts.append(np.asarray(s.a) + t[:, None] * (np.asarray(s.b) - np.asarray(s.a)))
        wts.append(np.full(m, s.length / m))
        nrm.append(np.broadcast_to(s.normal, (m, 2)))
    if not is_empty(D):
        from .quadrature import composite_nodes

        for piece in D.boundary():
            t, w = composite_nodes(piece.t0, piece.t1, 64)
            P = piece.points(t)
            sp = np.linalg.norm(piece.velocity(t), axis=1)
            keep = omega.contains_open(P)
            pts.append(P[keep])
            wts.append((w * sp)[keep])
            nrm.append(piece.normals(t)[keep])
    if not pts:
        return np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2))
    return np.vstack(pts), np.concatenate(wts), np.vstack(nrm)


def _nu3_bar(psi: Norm3, normals) -> np.ndarray:
    if len(normals) == 0:
        return np.zeros(0)
    _, c = psi0(psi, normals)
    return np.atleast_1d(c)


def choose_phi(r: FlatIsometry, D: PlanarSet | None, psi: Norm3, eps: float, width: float = 0.05,
               max_halvings: int = 20) -> PhiChoice:
    """phi = -theta mu with nu3_bar + phi . nu' ~ 0 on J and the void boundary.

    A single constant direction is fitted to all source normals; theta is a
    plateau around J u D, tapered to vanish near the domain boundary. The
    width halves until the defect int |nu3_bar + phi . nu'| <= eps / 3.
    """
    P, w, N = _normals_on_sources(r.segments, D, r.omega)
    nu3 = _nu3_bar(psi, N)
    if len(P) == 0 or np.all(np.abs(nu3) <= 1e-14):
        return PhiChoice(ZeroField(2), 0.0, 0.0, tuple(nu3))
    mu, *_ = np.linalg.lstsq(N * np.sqrt(w)[:, None], -nu3 * np.sqrt(w), rcond=None)
    wd = float(width)
    for _ in range(max_halvings + 1):
        phi = _SetPlateau(mu, r.segments, D, r.omega, wd)
        defect = float(np.sum(w * np.abs(nu3 + np.einsum("ni,ni->n", phi.value(P), N))))
        if defect <= eps / 3:
            return PhiChoice(phi, defect, wd, tuple(nu3))
        wd *= 0.5
    raise ValueError("eps too small for segment geometry")


# --------------------------------------------------------------------------
# void tubes


@dataclass(frozen=True, eq=False)
class VoidTube:
    F_t: PlanarSet
    F_smooth: PlanarSet
    E: VoidSet3
    t: float
    perimeter_excess: float


def _tubes_overlap(a: PlanarSet, b: PlanarSet) -> bool:
    return Intersection([a, b]).area() > 0.0


def build_void_tube(r: FlatIsometry, D: PlanarSet | None, t: float, phi: PlanarField, h: float,
                    psi: Norm3 | None = None, dilate_void: bool = False) -> VoidTube:
    """F_t = segment tubes u D (optionally dilated), its smooth superset and E_{t,h} = f_h^{-1}(F' x (0, 1)).

    Segment tubes in the psi0°-norm are stadia or rounded parallelograms with
    C^1 boundary; F' = F_t when the pieces are pairwise disjoint. Overlapping
    pieces would need a rounding radius below the segment spacing.
    """
    if t <= 0:
        raise ValueError("tube width must be positive")
    psi = psi or Norm3.euclidean()
    N = psi.relaxed().dual()
    pieces: list[PlanarSet] = [segment_tube(s.a, s.b, t, N) for s in r.segments]
    if not is_empty(D):
        if dilate_void:
            pieces.append(_dilate(D, t, N))
        else:
            pieces.append(D)
    if not pieces:
        raise ValueError("nothing to surround: no jump segments and no void")
    for i in range(len(pieces)):
        for j in range(i):
            if _tubes_overlap(pieces[i], pieces[j]):
                raise ValueError("tube self-intersection")
    F = pieces[0] if len(pieces) == 1 else Union(pieces)
    if isinstance(phi, ZeroField):
        E = Extrusion(F, 0.0, 1.0)
    else:
        E = ShearImage(F, phi, h, r.omega)
    return VoidTube(F, F, E, float(t), 0.0)


def _dilate(D: PlanarSet, t: float, N: Norm2) -> PlanarSet:
    from .planar import Disk

    if isinstance(D, Disk) and N.is_euclidean():
        return Disk(D.center, D.radius + t)
    if isinstance(D, ConvexOffset) and N.is_euclidean():
        return ConvexOffset(D.points, D.radius + t)
    raise ValueError("unsupported dilation")


# --------------------------------------------------------------------------
# convergence harness


@dataclass(frozen=True)
class GammaRow:
    h: float
    t: float
    bulk: float
    crack_surface: float
    void_surface: float
    total: float
    limit_total: float
    gap: float
    rate: float
    sup_norm: float
    sup_bound: float
    droplet_passed: bool | None

    CSV_HEADER = ("h", "t", "bulk", "crack_surface", "void_surface", "total", "limit_total", "gap", "rate",
                  "sup_norm", "sup_bound", "droplet_pass")

    def csv_row(self):
        dp = "" if self.droplet_passed is None else int(self.droplet_passed)
        return (self.h, self.t, self.bulk, self.crack_surface, self.void_surface, self.total, self.limit_total,
                self.gap, self.rate, self.sup_norm, self.sup_bound, dp)


@dataclass(frozen=True)
class GammaStudy:
    rows: tuple
    limit: object
    droplets: tuple

    def gaps(self) -> np.ndarray:
        return np.array([r.gap for r in self.rows])


def measured_sup_norm(w: Deformation3, omega, samples: int = 4000, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    lo, hi = omega.bbox()
    x = rng.uniform([lo[0], lo[1], 0.0], [hi[0], hi[1], 1.0], (samples, 3))
    x = x[omega.contains_open(x[:, :2])]
    return float(np.linalg.norm(w(x), axis=1).max())


def t_schedule(tag, r: FlatIsometry | None = None) -> Callable[[float], float]:
    if callable(tag):
        return tag
    if tag in (None, "sqrt"):
        return lambda h: math.sqrt(h)
    if isinstance(tag, str) and tag.startswith("power:"):
        a = float(tag.split(":", 1)[1])
        return lambda h: h**a
    raise ValueError(f"unknown t-schedule {tag!r}")


def gamma_study(r: FlatIsometry, D: PlanarSet | None, material: ElasticDensity, psi: Norm3,
                h_list: Sequence[float], schedule="sqrt", phi: PlanarField | None = None,
                zeta=None, eps: float = 1e-3, s_list=(0.1, 0.25, 0.5), tol: float = 1e-5,
                t_cap: float | None = None, droplet_method: str = "analytic") -> GammaStudy:
    """E_h(w_h, E_{t,h}) against E(r, D) along h_list."""
    h_list = [float(h) for h in h_list]
    if any(not 0 < h < 1 for h in h_list) or any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be strictly decreasing in (0, 1)")
    Q3 = material.linearized()
    limit = limit_energy(r, D, Q3, psi)
    if phi is None:
        phi = choose_phi(r, D, psi, eps).phi
    tfun = t_schedule(schedule)
    rows, drops = [], []
    prev = None
    need_tube = bool(r.segments) or not is_empty(D)
    for h in h_list:
        t = tfun(h)
        if t_cap is not None:
            t = min(t, t_cap)
        w = build_w_h(r, RecoveryParams(phi=phi), h, Q3)
        E = build_void_tube(r, D, t, phi, h, psi).E if need_tube else None
        y = CutoffMap(w, r.segments, t) if r.segments else w
        en = film_energy(FilmScene(r.omega, h, y, E, material, psi), tol=tol)
        gap = en.total - limit.total
        rate = float("nan")
        if prev is not None and prev[1] != 0 and gap != 0:
            rate = math.log(abs(prev[1]) / abs(gap)) / math.log(prev[0] / h)
        dp = None
        if zeta is not None and E is not None:
            rep = droplet_check(Scaled(E, (1.0, 1.0, h)), h, s_list, psi, Zeta.from_spec(zeta) if isinstance(zeta, dict) else zeta,
                                r.omega, method=droplet_method)
            drops.append(rep)
            dp = rep.passed
        rows.append(GammaRow(h, t, en.bulk, en.crack_surface, en.void_surface, en.total, limit.total, gap, rate,
                             measured_sup_norm(w, r.omega), float(r.sup_norm() + w.c0 * h), dp))
        prev = (h, gap)
    return GammaStudy(tuple(rows), limit, tuple(drops))
