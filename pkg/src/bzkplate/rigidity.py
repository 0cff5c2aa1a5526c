"""Cube-level rigidity diagnostics on the unrescaled plate omega x (0, h):
dilation-level selection, cube classification against a dilated void,
per-cube rotation fits and the partition-of-unity interpolation of the
fitted rotations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distance import Grid, distance_transform
from .fields import smoothstep5, smoothstep5_deriv
from .forms import dist2_SO3, nearest_rotation
from .geometry3d import (
    Ball,
    Box,
    Extrusion,
    HalfSpace,
    Scaled,
    Segment3,
    Union3,
    VoidSet3,
    is_empty3,
    plate,
    tube_volume,
)
from .norms import Norm3
from .planar import ConvexOffset, Disk, PlanarSet, Polygon
from .planar import Union as PlanarUnion
from .quadrature import gauss_legendre
from .thinfilm import Deformation3, rescaled_gradient

GOOD_ELASTIC = "good-elastic"
GOOD_VOID = "good-void"
BAD_INTERIOR = "bad-interior"
BAD_BOUNDARY = "bad-boundary"
CLASSES = (GOOD_ELASTIC, GOOD_VOID, BAD_INTERIOR, BAD_BOUNDARY)


class DegenerateCubeError(ValueError):
    pass


# --------------------------------------------------------------------------
# dilation level


@dataclass(frozen=True)
class SigmaSelection:
    sigma_h: float
    s_h: float
    level: float
    perimeter: float
    bound: float
    admissible: bool
    warning: str
    levels: tuple
    perimeters: tuple


def _volume_curve(A: VoidSet3, taus, psi: Norm3, region, grid: int) -> np.ndarray:
    try:
        return np.array([tube_volume(A, t, psi, region) for t in taus])
    except ValueError:
        pass
    # one distance field serves every level
    taus = np.asarray(taus, float)
    tmax = float(taus.max())
    lo, hi = A.bbox()
    L = psi.dual().lipschitz_to_euclidean()[1]
    ext = psi.axis_extent()
    lo, hi = lo - tmax * ext, hi + tmax * ext
    if region is not None:
        rlo, rhi = region.bbox()
        lo, hi = np.maximum(lo, rlo), np.minimum(hi, rhi)
    spacing = min(float(np.max(hi - lo)) / grid, float(taus.min()) / 2)
    G = Grid.covering(lo - spacing, hi + spacing, spacing)
    c = G.centers().reshape(-1, 3)
    mask = A.contains(c).reshape(G.dims)
    seeds = A.boundary_samples(0.5 * spacing)
    D = distance_transform(psi.dual(), mask, G, seeds=seeds if len(seeds) else None, mode="feature",
                           cutoff=tmax + 2 * L * spacing)
    d = D.values.reshape(-1)
    keep = np.isfinite(d) & ~mask.reshape(-1)
    if region is not None:
        keep &= region.contains_open(c)
    d = d[keep]
    cell = float(np.prod(G.spacing))
    w = L * spacing
    return np.array([np.clip(0.5 + (t - d) / w, 0.0, 1.0).sum() * cell for t in taus])


def select_sigma_h(A: VoidSet3 | None, h: float, s: float, psi: Norm3 | None = None, region=None,
                   levels: int = 64, grid: int = 128, omega: PlanarSet | None = None) -> SigmaSelection:
    """sigma_h = tau / 3 for a level tau in (3 s^2 h, 3 s h) with psi-perimeter(A^(tau)) <= V(3 s h) / (3 s h (1 - s)).

    Perimeters are level derivatives of the tube volume. Among admissible
    levels the one of least perimeter is taken; when none is admissible the
    least violating level is returned and flagged. Volumes are taken in
    ``region``, which defaults to the plate over ``omega`` when given.
    """
    if region is None and omega is not None:
        region = plate(omega, h)
    if not 0 < s < 1.0 / 3.0:
        raise ValueError("s must lie in (0, 1/3)")
    psi = psi or Norm3.euclidean()
    a, b = 3 * s * s * h, 3 * s * h
    taus = a + (b - a) * (np.arange(levels) + 0.5) / levels
    if is_empty3(A):
        tau = taus[-1]
        return SigmaSelection(tau / 3, tau / (3 * h), tau, 0.0, 0.0, True, "", tuple(taus), (0.0,) * levels)
    step = 0.25 * (b - a) / levels
    V = _volume_curve(A, np.concatenate([taus - step, taus + step, [b]]), psi, region, grid)
    P = (V[levels:2 * levels] - V[:levels]) / (2 * step)
    bound = V[-1] / (b * (1 - s))
    ok = P <= bound
    if ok.any():
        i = int(np.flatnonzero(ok)[np.argmin(P[ok])])
        warn = ""
    else:
        i = int(np.argmin(P - bound))
        warn = "no scanned level satisfies the coarea bound"
    tau = float(taus[i])
    return SigmaSelection(tau / 3, tau / (3 * h), tau, float(P[i]), float(bound), bool(ok.any()), warn,
                          tuple(taus), tuple(P))


# --------------------------------------------------------------------------
# Euclidean distance to a void


def _planar_exact(F: PlanarSet) -> bool:
    if isinstance(F, (Disk, Polygon, ConvexOffset)):
        return True
    return isinstance(F, PlanarUnion) and all(_planar_exact(c) for c in F.children)


def _seg_dist3(x, a, b):
    d = b - a
    L2 = float(d @ d)
    lam = np.clip(((x - a) @ d) / L2, 0, 1) if L2 > 0 else np.zeros(len(x))
    return np.linalg.norm(x - a - lam[:, None] * d, axis=1)


def exact_distance(A: VoidSet3, x) -> np.ndarray:
    """Euclidean dist(x, A), zero inside; exact for primitives and their unions."""
    x = np.atleast_2d(x)
    if isinstance(A, Ball):
        return np.maximum(np.linalg.norm(x - A.center, axis=1) - A.radius, 0.0)
    if isinstance(A, Box):
        return np.linalg.norm(np.maximum(np.maximum(A.lo - x, x - A.hi), 0.0), axis=1)
    if isinstance(A, HalfSpace):
        return np.maximum(x @ A.normal - A.offset, 0.0)
    if isinstance(A, Segment3):
        return _seg_dist3(x, A.a, A.b)
    if isinstance(A, Scaled) and isinstance(A.base, Extrusion) and np.allclose(A.S[:2], 1.0):
        A = Extrusion(A.base.planar, A.base.z0 * A.S[2], A.base.z1 * A.S[2])
    if isinstance(A, Extrusion) and _planar_exact(A.planar):
        dp = np.maximum(A.planar.level(x[:, :2]), 0.0)
        dz = np.maximum.reduce([A.z0 - x[:, 2], x[:, 2] - A.z1, np.zeros(len(x))])
        return np.hypot(dp, dz)
    if isinstance(A, Union3):
        return np.min([exact_distance(c, x) for c in A.children], axis=0)
    raise NotImplementedError("no exact distance for this set")


class _VoxelDistance:
    def __init__(self, A: VoidSet3, lo, hi, spacing: float):
        G = Grid.covering(np.asarray(lo) - 2 * spacing, np.asarray(hi) + 2 * spacing, spacing)
        mask = A.contains(G.centers().reshape(-1, 3)).reshape(G.dims)
        seeds = A.boundary_samples(0.5 * spacing)
        self.field = distance_transform(Norm3.euclidean().dual(), mask, G,
                                        seeds=seeds if len(seeds) else None, mode="feature")

    def __call__(self, x):
        return self.field.interpolate(x)


# --------------------------------------------------------------------------
# cubes


@dataclass(frozen=True, eq=False)
class CubeGrid:
    """Cubes Q_h(a') = (a' + (0, h)^2) x (0, h) over the lattice covering omega's box."""

    h: float
    origin: np.ndarray
    shape: tuple
    classes: np.ndarray  # (nx, ny) array of class labels
    sigma_h: float
    omega: PlanarSet

    def base_point(self, i: int, j: int) -> np.ndarray:
        return self.origin + self.h * np.array([i, j], float)

    def indices(self, cls: str) -> np.ndarray:
        return np.argwhere(self.classes == cls)

    def counts(self) -> dict:
        return {c: int(np.count_nonzero(self.classes == c)) for c in CLASSES}

    @property
    def n_bad(self) -> int:
        c = self.counts()
        return c[BAD_INTERIOR] + c[BAD_BOUNDARY]


def _lattice(omega: PlanarSet, h: float):
    lo, hi = omega.bbox()
    i0 = np.floor(lo / h + 1e-9)
    i1 = np.ceil(hi / h - 1e-9)
    origin = i0 * h
    shape = tuple(int(n) for n in (i1 - i0))
    return origin, shape


def _square_inside_open(omega: PlanarSet, lo, h):
    """closure(a' + (0, h)^2) inside the open omega, for convex polygons and general sets."""
    corners = lo[:, None, :] + h * np.array([[0, 0], [1, 0], [0, 1], [1, 1]], float)[None]
    inside = np.all(omega.level(corners.reshape(-1, 2)).reshape(-1, 4) < 0, axis=1)
    if isinstance(omega, Polygon) and omega.is_convex():
        return inside
    g = np.linspace(0, 1, 9)
    pts = lo[:, None, :] + h * np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(1, -1, 2)
    return inside & np.all(omega.level(pts.reshape(-1, 2)).reshape(len(lo), -1) < 0, axis=1)


def _exact_ball_range(A: Ball, lo, hi):
    c = A.center
    near = np.clip(c, lo, hi)
    far = np.where(np.abs(lo - c) > np.abs(hi - c), lo, hi)
    dmin = np.maximum(np.linalg.norm(near - c, axis=1) - A.radius, 0.0)
    dmax = np.maximum(np.linalg.norm(far - c, axis=1) - A.radius, 0.0)
    return dmin, dmax


def _exact_cylinder_range(A: Extrusion, lo, hi):
    c = A.planar.center
    near = np.clip(c, lo[:, :2], hi[:, :2])
    far = np.where(np.abs(lo[:, :2] - c) > np.abs(hi[:, :2] - c), lo[:, :2], hi[:, :2])
    dmin = np.maximum(np.linalg.norm(near - c, axis=1) - A.planar.radius, 0.0)
    dmax = np.maximum(np.linalg.norm(far - c, axis=1) - A.planar.radius, 0.0)
    return dmin, dmax


def _distance_range(A: VoidSet3, lo, hi, h: float, sub: int = 5):
    """(min, max) of dist(., A) over each box [lo, hi], exact where possible."""
    if isinstance(A, Ball):
        return _exact_ball_range(A, lo, hi)
    base = A
    if isinstance(A, Scaled) and isinstance(A.base, Extrusion) and np.allclose(A.S[:2], 1.0):
        base = Extrusion(A.base.planar, A.base.z0 * A.S[2], A.base.z1 * A.S[2])
    if isinstance(base, Extrusion) and isinstance(base.planar, Disk) and base.z0 <= lo[0, 2] and base.z1 >= hi[0, 2]:
        return _exact_cylinder_range(base, lo, hi)
    g = np.linspace(0, 1, sub)
    T = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    P = lo[:, None, :] + (hi - lo)[:, None, :] * T[None]
    flat = P.reshape(-1, 3)
    try:
        d = exact_distance(A, flat)
    except NotImplementedError:
        vlo, vhi = lo.min(axis=0), hi.max(axis=0)
        d = _VoxelDistance(A, vlo, vhi, h / 8)(flat)
    d = d.reshape(len(lo), -1)
    # Lipschitz slack between samples
    slack = 0.5 * math.sqrt(3.0) * float(np.max(hi - lo)) / (sub - 1)
    return np.maximum(d.min(axis=1) - slack, 0.0), d.max(axis=1) + slack


def classify_cubes(A: VoidSet3 | None, h: float, sigma_h: float, omega: PlanarSet) -> CubeGrid:
    """Label every lattice cube.

    good: closure inside Omega_h and disjoint from the boundary of
    A^(sigma_h); good-void additionally inside A^(sigma_h). A cube whose
    closure touches the lateral boundary is bad-boundary.
    """
    if not 0 < sigma_h < h:
        raise ValueError("sigma_h must lie in (0, h)")
    origin, shape = _lattice(omega, h)
    ij = np.stack(np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij"), -1).reshape(-1, 2)
    lo2 = origin + h * ij
    inside = _square_inside_open(omega, lo2, h)
    labels = np.full(len(ij), BAD_BOUNDARY, dtype=object)
    if is_empty3(A):
        labels[inside] = GOOD_ELASTIC
    else:
        lo = np.column_stack([lo2, np.zeros(len(lo2))])
        hi = lo + h
        sel = np.flatnonzero(inside)
        dmin, dmax = _distance_range(A, lo[sel], hi[sel], h)
        lab = np.full(len(sel), BAD_INTERIOR, dtype=object)
        lab[dmin > sigma_h] = GOOD_ELASTIC
        lab[dmax < sigma_h] = GOOD_VOID
        labels[sel] = lab
    return CubeGrid(float(h), origin, shape, labels.reshape(shape), float(sigma_h), omega)


# --------------------------------------------------------------------------
# rotations per cube


@dataclass(frozen=True)
class CubeFit:
    R: np.ndarray
    c: np.ndarray
    defect_lhs: float
    defect_rhs: float


def _cube_nodes(a, h: float, order: int = 4):
    """Gauss nodes of the rescaled cube (a' + (0, h)^2) x (0, 1)."""
    x, w = gauss_legendre(order)
    P = np.stack(np.meshgrid(x, x, x, indexing="ij"), -1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", w, w, w).ravel() * h * h
    a = np.atleast_2d(a)
    nodes = np.empty((len(a), len(P), 3))
    nodes[..., :2] = a[:, None, :] + h * P[None, :, :2]
    nodes[..., 2] = P[None, :, 2]
    return nodes, W


def _fit_batch(y: Deformation3, a, h: float, order: int = 4):
    nodes, W = _cube_nodes(a, h, order)
    n, m = nodes.shape[:2]
    flat = nodes.reshape(-1, 3)
    F = rescaled_gradient(y, flat, h).reshape(n, m, 3, 3)
    Fbar = np.einsum("nmij,m->nij", F, W) / W.sum()
    sv = np.linalg.svd(Fbar, compute_uv=False)
    degenerate = sv[:, -1] <= 1e-12 * np.maximum(sv[:, 0], 1e-300)
    R = nearest_rotation(Fbar)
    lhs = np.einsum("nm,m->n", np.sum((F - R[:, None]) ** 2, axis=(2, 3)), W)
    rhs = np.einsum("nm,m->n", dist2_SO3(F), W)
    X = flat.copy()
    X[:, 2] *= h
    Y = y(flat).reshape(n, m, 3)
    c = np.einsum("nmi,m->ni", Y - np.einsum("nij,nmj->nmi", R, X.reshape(n, m, 3)), W) / W.sum()
    return R, c, lhs, rhs, degenerate


def fit_rotation(y: Deformation3, a, h: float, order: int = 4) -> CubeFit:
    """Nearest rotation to the cube average of grad_h y and both rigidity defects.

    ``a`` is the cube base point a'; y lives on the rescaled plate.
    """
    R, c, lhs, rhs, deg = _fit_batch(y, np.asarray(a, float)[None], h, order)
    if deg[0]:
        raise DegenerateCubeError("degenerate cube")
    return CubeFit(R[0], c[0], float(lhs[0]), float(rhs[0]))


@dataclass(frozen=True, eq=False)
class RotationField:
    """Per-cube rotation and translation; Id and 0 on cubes that are not good-elastic."""

    grid: CubeGrid
    R: np.ndarray  # (nx, ny, 3, 3)
    c: np.ndarray  # (nx, ny, 3)
    defect_lhs: np.ndarray
    defect_rhs: np.ndarray

    @property
    def C_emp(self) -> float:
        good = self.grid.classes == GOOD_ELASTIC
        rhs = self.defect_rhs[good]
        if rhs.sum() <= 0:
            return 0.0
        return float(self.defect_lhs[good].sum() / rhs.sum())


def fit_rotations(y: Deformation3, grid: CubeGrid, order: int = 4, chunk: int = 2048) -> RotationField:
    nx, ny = grid.shape
    R = np.broadcast_to(np.eye(3), (nx, ny, 3, 3)).copy()
    c = np.zeros((nx, ny, 3))
    lhs = np.zeros((nx, ny))
    rhs = np.zeros((nx, ny))
    idx = grid.indices(GOOD_ELASTIC)
    for s in range(0, len(idx), chunk):
        part = idx[s:s + chunk]
        a = grid.origin + grid.h * part
        Rb, cb, lb, rb, deg = _fit_batch(y, a, grid.h, order)
        if deg.any():
            raise DegenerateCubeError("degenerate cube")
        R[part[:, 0], part[:, 1]] = Rb
        c[part[:, 0], part[:, 1]] = cb
        lhs[part[:, 0], part[:, 1]] = lb
        rhs[part[:, 0], part[:, 1]] = rb
    return RotationField(grid, R, c, lhs, rhs)


# --------------------------------------------------------------------------
# partition of unity


def _bump_1d(x, origin: float, h: float, n: int, eta: float):
    """Per-point weights of the at most two active 1D bumps: (index, weight, derivative) pairs.

    Bump i rises across a' - eta/2 .. a' + eta/2 and falls across the next
    grid line; the first and last bumps do not taper at the box ends, so
    the weights sum to one on the whole box.
    """
    u = (x - origin) / h
    k = np.clip(np.floor(u + 0.5).astype(int), 0, n)  # nearest grid line
    t = (x - (origin + k * h)) / eta + 0.5  # ramp coordinate across that line
    lo_end = k == 0
    hi_end = k == n
    # box ends: no neighbour to hand weight to
    up = np.where(lo_end, 1.0, np.where(hi_end, 0.0, smoothstep5(t)))
    dup = np.where(lo_end | hi_end, 0.0, smoothstep5_deriv(t) / eta)
    idx = [np.clip(k - 1, 0, n - 1), np.clip(k, 0, n - 1)]
    return idx, [1.0 - up, up], [-dup, dup]


def _axis_nodes(origin: float, h: float, n: int, eta: float, order: int):
    """Gauss nodes on the breakpoints a' +- eta/2 of one axis."""
    brk = [origin]
    for k in range(1, n):
        g = origin + k * h
        brk += [g - eta / 2, g + eta / 2]
    brk.append(origin + n * h)
    brk = np.array(brk)
    x, w = gauss_legendre(order)
    a, b = brk[:-1], brk[1:]
    nodes = (a[:, None] + (b - a)[:, None] * x[None]).ravel()
    weights = ((b - a)[:, None] * w[None]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class InterpolationReport:
    R_L2_err: float
    r_L2_err: float
    gradR_L2: float
    gradr_L2: float
    jump_bound: float
    partition_err: float
    max_bump_grad_h: float
    omega_h_area: float


@dataclass(frozen=True, eq=False)
class InterpolatedFields:
    """R~_h and r~_h; Id and (x', 0) outside omega_h."""

    rotations: RotationField
    eta: float

    def _omega_h(self, x):
        g = self.rotations.grid
        h, eta = g.h, self.eta
        ok = g.omega.contains_open(x)
        bad = g.classes != GOOD_ELASTIC
        if not bad.any():
            return ok
        ii = np.floor((x - g.origin) / h).astype(int)
        nx, ny = g.shape
        hit = np.zeros(len(x), bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                a = np.clip(ii[:, 0] + di, 0, nx - 1)
                b = np.clip(ii[:, 1] + dj, 0, ny - 1)
                cube_lo = g.origin + h * np.column_stack([a, b]) - eta / 2
                inside = np.all((x >= cube_lo) & (x <= cube_lo + h + eta), axis=1)
                hit |= inside & bad[a, b]
        return ok & ~hit

    def _weights(self, x):
        g = self.rotations.grid
        ix, wx, dx = _bump_1d(x[:, 0], g.origin[0], g.h, g.shape[0], self.eta)
        iy, wy, dy = _bump_1d(x[:, 1], g.origin[1], g.h, g.shape[1], self.eta)
        return ix, wx, dx, iy, wy, dy

    def partition(self, x) -> tuple[np.ndarray, np.ndarray]:
        """(sum of bumps, max bump gradient) at x."""
        x = np.atleast_2d(x)
        ix, wx, dx, iy, wy, dy = self._weights(x)
        total = np.zeros(len(x))
        gmax = np.zeros(len(x))
        for a in range(2):
            for b in range(2):
                total += wx[a] * wy[b]
                gmax = np.maximum(gmax, np.hypot(dx[a] * wy[b], wx[a] * dy[b]))
        return total, gmax

    def evaluate(self, x):
        """R~(x), grad R~ (n, 3, 3, 2), r~(x), grad r~ (n, 3, 2) and the omega_h mask."""
        x = np.atleast_2d(x)
        rf = self.rotations
        ix, wx, dx, iy, wy, dy = self._weights(x)
        n = len(x)
        R = np.zeros((n, 3, 3))
        dR = np.zeros((n, 3, 3, 2))
        r = np.zeros((n, 3))
        dr = np.zeros((n, 3, 2))
        X0 = np.column_stack([x, np.zeros(n)])
        for a in range(2):
            for b in range(2):
                w = wx[a] * wy[b]
                gw = np.stack([dx[a] * wy[b], wx[a] * dy[b]], axis=-1)
                Rk = rf.R[ix[a], iy[b]]
                rk = np.einsum("nij,nj->ni", Rk, X0) + rf.c[ix[a], iy[b]]
                R += w[:, None, None] * Rk
                dR += Rk[..., None] * gw[:, None, None, :]
                r += w[:, None] * rk
                dr += rk[..., None] * gw[:, None, :] + w[:, None, None] * Rk[:, :, :2]
        m = self._omega_h(x)
        R[~m] = np.eye(3)
        dR[~m] = 0.0
        r[~m] = X0[~m]
        dr[~m] = np.eye(3)[:, :2]
        return R, dR, r, dr, m

    def piecewise(self, x):
        """R_h and r_h: the fitted cube values, Id and (x', 0) off the good-elastic cubes."""
        x = np.atleast_2d(x)
        g = self.rotations.grid
        ii = np.clip(np.floor((x - g.origin) / g.h).astype(int), 0, np.array(g.shape) - 1)
        good = g.classes[ii[:, 0], ii[:, 1]] == GOOD_ELASTIC
        R = np.where(good[:, None, None], self.rotations.R[ii[:, 0], ii[:, 1]], np.eye(3))
        X0 = np.column_stack([x, np.zeros(len(x))])
        r = np.einsum("nij,nj->ni", R, X0) + np.where(good[:, None], self.rotations.c[ii[:, 0], ii[:, 1]], 0.0)
        return R, r


def interpolate_fields(grid: CubeGrid, rotations: RotationField, eta_fraction: float = 0.2,
                       order: int = 6, chunk: int = 400000) -> tuple[InterpolatedFields, InterpolatedFields, InterpolationReport]:
    """Smoothstep partition of unity over the cubes and the interpolated fields.

    Returns the field object twice (as r~_h and R~_h) plus L2 norms over
    omega_h of the errors against the piecewise fits and of the gradients. Quadrature nodes follow the ramp breakpoints,
    so the polynomial pieces are integrated exactly.
    """
    h = grid.h
    eta = eta_fraction * h
    if not 0 < eta_fraction < 1:
        raise ValueError("eta_fraction must lie in (0, 1)")
    fields = InterpolatedFields(rotations, eta)
    nx, wx = _axis_nodes(grid.origin[0], h, grid.shape[0], eta, order)
    ny, wy = _axis_nodes(grid.origin[1], h, grid.shape[1], eta, order)
    acc = dict(R=0.0, r=0.0, gR=0.0, gr=0.0, area=0.0)
    perr = 0.0
    gmax = 0.0
    rows = max(1, chunk // len(ny))
    for s in range(0, len(nx), rows):
        X = np.stack(np.meshgrid(nx[s:s + rows], ny, indexing="ij"), -1).reshape(-1, 2)
        W = np.outer(wx[s:s + rows], wy).ravel()
        inside = grid.omega.contains_open(X)
        X, W = X[inside], W[inside]
        tot, gm = fields.partition(X)
        perr = max(perr, float(np.abs(tot - 1.0).max(initial=0.0)))
        gmax = max(gmax, float(gm.max(initial=0.0)))
        R, dR, r, dr, m = fields.evaluate(X)
        X, W, R, dR, r, dr = X[m], W[m], R[m], dR[m], r[m], dr[m]
        Rp, rp = fields.piecewise(X)
        acc["area"] += float(W.sum())
        acc["R"] += float(np.sum(W * np.sum((R - Rp) ** 2, axis=(1, 2))))
        acc["r"] += float(np.sum(W * np.sum((r - rp) ** 2, axis=1)))
        acc["gR"] += float(np.sum(W * np.sum(dR**2, axis=(1, 2, 3))))
        acc["gr"] += float(np.sum(W * np.sum(dr**2, axis=(1, 2))))
    if perr > 1e-12:
        raise RuntimeError(f"partition of unity off by {perr:.3e}")
    rep = InterpolationReport(math.sqrt(acc["R"]), math.sqrt(acc["r"]), math.sqrt(acc["gR"]), math.sqrt(acc["gr"]),
                              h * grid.n_bad, perr, gmax * h, acc["area"])
    return fields, fields, rep


@dataclass(frozen=True)
class CubeRow:
    h: float
    good_elastic: int
    good_void: int
    bad_interior: int
    bad_boundary: int
    bad_h: float
    sigma_h: float
    C_emp: float
    R_L2_err: float
    r_L2_err: float
    gradR_L2: float
    gradr_L2: float
    omega_h_area: float

    CSV_HEADER = ("h", "good_elastic", "good_void", "bad_interior", "bad_boundary", "bad_h", "sigma_h", "C_emp",
                  "R_L2_err", "r_L2_err", "gradR_L2", "gradr_L2", "omega_h_area")

    def csv_row(self):
        return tuple(getattr(self, k) for k in self.CSV_HEADER)


def cube_study(y_of_h, A_of_h, omega: PlanarSet, h_list, s: float = 0.25, psi: Norm3 | None = None,
               eta_fraction: float = 0.2) -> list[CubeRow]:
    """Classification, rotation fits and interpolation along h_list.

    ``y_of_h(h)`` gives the rescaled deformation, ``A_of_h(h)`` the
    unrescaled void (or None).
    """
    out = []
    for h in h_list:
        A = A_of_h(h)
        sel = select_sigma_h(A, h, s, psi, omega=omega)
        grid = classify_cubes(A, h, sel.sigma_h, omega)
        rot = fit_rotations(y_of_h(h), grid)
        _, _, rep = interpolate_fields(grid, rot, eta_fraction)
        c = grid.counts()
        out.append(CubeRow(h, c[GOOD_ELASTIC], c[GOOD_VOID], c[BAD_INTERIOR], c[BAD_BOUNDARY], h * grid.n_bad,
                           sel.sigma_h, rot.C_emp, rep.R_L2_err, rep.r_L2_err, rep.gradR_L2, rep.gradr_L2,
                           rep.omega_h_area))
    return out
