"""Deformations of the rescaled plate omega x (0, 1) and the energies
E_h (rescaled) and J_h (on omega x (0, h))."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distance import DistanceField, Grid
from .forms import ElasticDensity
from .geometry2d import EnergyBreakdown
from .geometry3d import PlateRegion, Scaled, VoidSet3, is_empty3, surface_energy
from .norms import Norm3
from .planar import PlanarSet, Polygon
from .quadrature import QuadratureError, gauss_legendre


class DeformationError(ValueError):
    pass


class Deformation3:
    """y: R^3 -> R^3 with an analytic or finite-difference gradient (rows = components)."""

    def __init__(self, value: Callable, grad: Callable | None = None, fd_step: float = 1e-6,
                 sup_norm: float | None = None, name: str = ""):
        self._value = value
        self._grad = grad
        self.fd_step = float(fd_step)
        self.sup_norm = sup_norm
        self.name = name

    def __call__(self, x) -> np.ndarray:
        return self._value(np.atleast_2d(np.asarray(x, float)))

    @property
    def has_analytic_gradient(self) -> bool:
        return self._grad is not None

    def gradient(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        if self._grad is not None:
            return self._grad(x)
        return self.fd_gradient(x)

    def fd_gradient(self, x, step: float | None = None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        e = self.fd_step if step is None else step
        cols = []
        for k in range(3):
            d = np.zeros(3)
            d[k] = e
            cols.append((self._value(x + d) - self._value(x - d)) / (2 * e))
        return np.stack(cols, axis=-1)

    def check_gradient(self, lo=(0, 0, 0), hi=(1, 1, 1), samples: int = 1000, seed: int = 0,
                       step: float = 1e-6) -> float:
        """Max relative deviation of the analytic gradient from central differences."""
        if self._grad is None:
            return 0.0
        rng = np.random.default_rng(seed)
        x = rng.uniform(lo, hi, (samples, 3))
        A = self._grad(x)
        B = self.fd_gradient(x, step)
        return float(np.abs(A - B).max() / max(1.0, np.abs(A).max()))

    # ------------------------------------------------------------- builders
    @classmethod
    def rest(cls, h: float) -> "Deformation3":
        S = np.diag([1.0, 1.0, h])
        return cls(lambda x: x @ S, lambda x: np.broadcast_to(S, (len(x), 3, 3)).copy(), name="rest")

    @classmethod
    def rigid(cls, R, c, h: float) -> "Deformation3":
        R = np.asarray(R, float)
        c = np.asarray(c, float)
        M = R @ np.diag([1.0, 1.0, h])
        return cls(lambda x: x @ M.T + c, lambda x: np.broadcast_to(M, (len(x), 3, 3)).copy(), name="rigid")

    @classmethod
    def from_grid(cls, grid: Grid, values: np.ndarray) -> "Deformation3":
        """Trilinear interpolation of sampled components; differences at half the spacing."""
        comps = [DistanceField(grid, values[..., k]) for k in range(3)]
        f = lambda x: np.stack([c.interpolate(x) for c in comps], axis=-1)
        return cls(f, None, fd_step=0.5 * float(min(grid.spacing)), name="grid")

    def rotated(self, R) -> "Deformation3":
        R = np.asarray(R, float)
        g = None if self._grad is None else (lambda x: np.einsum("ij,njk->nik", R, self._grad(x)))
        return Deformation3(lambda x: self._value(x) @ R.T, g, self.fd_step, self.sup_norm, self.name)

    def unrescaled(self, h: float) -> "Deformation3":
        """v(x', z) = y(x', z / h) on omega x (0, h)."""
        S = np.array([1.0, 1.0, 1.0 / h])
        g = None
        if self._grad is not None:
            g = lambda x: self._grad(x * S) * S
        return Deformation3(lambda x: self._value(x * S), g, self.fd_step * h, self.sup_norm, self.name)


def rescaled_gradient(y: Deformation3, x, h: float) -> np.ndarray:
    """(d1 y, d2 y, h^-1 d3 y)."""
    F = np.array(y.gradient(x), dtype=float)
    F[..., 2] /= h
    return F[0] if np.ndim(x) == 1 else F


@dataclass(frozen=True, eq=False)
class FilmScene:
    omega: PlanarSet
    h: float
    deformation: Deformation3
    void: VoidSet3 | None
    material: ElasticDensity
    norm: Norm3

    def __post_init__(self):
        if not 0 < self.h < 1:
            raise ValueError("plate height h must lie in (0, 1)")


# --------------------------------------------------------------------------
# adaptive cubature


def _cell_nodes(lo, size, order):
    x, w = gauss_legendre(order)
    P = np.stack(np.meshgrid(x, x, x, indexing="ij"), -1).reshape(-1, 3)
    Wt = np.einsum("i,j,k->ijk", w, w, w).ravel()
    nodes = lo[:, None, :] + size[:, None, :] * P[None]
    weights = np.prod(size, axis=1)[:, None] * Wt[None]
    return nodes, weights


def _child_offsets(mask):
    """Child corners (in units of the parent half size) for splitting along the set axes."""
    opts = [(0, 1) if m else (0,) for m in mask]
    return np.array([[a, b, c] for a in opts[0] for b in opts[1] for c in opts[2]], float)


def adaptive_volume_integral(f, indicator, lo, hi, base=(8, 8, 1), tol: float = 1e-5, atol: float = 1e-14,
                             order: int = 3, max_depth: int = 6, max_cells: int = 400000,
                             min_mixed_depth: int = 2, mixed_max_depth: int = 3) -> float:
    """int over {indicator} within the box [lo, hi] of f.

    f may assume its argument satisfies the indicator. Cells fully inside
    are bisected until their two-level estimates agree; cells that straddle
    the indicator boundary are split (only across the axes where membership
    changes) at least ``min_mixed_depth`` times and then until the estimates
    agree or ``mixed_max_depth`` is reached. Indicator cubature is first
    order near the boundary, so depths beyond 3 or 4 buy little accuracy at a
    large cost.
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    nb = np.asarray(base, int)
    size0 = (hi - lo) / nb
    idx = np.stack(np.meshgrid(*[np.arange(n) for n in nb], indexing="ij"), -1).reshape(-1, 3)
    clo = lo + idx * size0
    csize = np.broadcast_to(size0, clo.shape).copy()
    depth = np.zeros(len(clo), int)
    vol_total = float(np.prod(hi - lo))

    def estimate(clo, csize):
        nodes, w = _cell_nodes(clo, csize, order)
        flat = nodes.reshape(-1, 3)
        ind = indicator(flat)
        vals = np.zeros(len(flat))
        if ind.any():
            vals[ind] = f(flat[ind])
        if not np.all(np.isfinite(vals)):
            raise QuadratureError("integrand undefined at a quadrature node")
        return (vals.reshape(w.shape) * w).sum(axis=1), ind.reshape(w.shape)

    coarse, ind_c = estimate(clo, csize)
    scale = max(abs(float(coarse.sum())), atol)
    total = 0.0
    n = order
    while len(clo):
        half = 0.5 * csize
        kids = _child_offsets((True, True, True))
        klo = (clo[:, None, :] + kids[None] * half[:, None, :]).reshape(-1, 3)
        ksize = np.repeat(half, 8, axis=0)
        kval, kind = estimate(klo, ksize)
        fine = kval.reshape(-1, 8).sum(axis=1)
        kind = kind.reshape(len(clo), 8, n, n, n)
        mixed = ~(np.all(kind, axis=(1, 2, 3, 4)) | ~np.any(kind, axis=(1, 2, 3, 4)))
        mixed |= ~(np.all(ind_c, axis=1) | ~np.any(ind_c, axis=1))
        err = np.abs(fine - coarse)
        share = np.prod(csize, axis=1) / vol_total
        agree = err <= tol * scale * share + atol * share
        smooth_ok = agree & (~mixed | (depth >= min_mixed_depth))
        at_floor = depth >= np.where(mixed, min(mixed_max_depth, max_depth), max_depth)
        accept = smooth_ok | at_floor
        total += float(fine[accept].sum())
        ref = np.flatnonzero(~accept)
        if len(ref) == 0:
            break
        new_lo, new_size, new_depth = [], [], []
        # split mixed cells only across axes along which the membership varies
        full_grid = np.zeros((len(ref), 2 * n, 2 * n, 2 * n), bool)
        kk = kind[ref]
        for c, off in enumerate(kids.astype(int)):
            full_grid[:, off[0] * n:(off[0] + 1) * n, off[1] * n:(off[1] + 1) * n, off[2] * n:(off[2] + 1) * n] = kk[:, c]
        varies = np.stack([
            np.any(full_grid != full_grid[:, :1, :, :], axis=(1, 2, 3)),
            np.any(full_grid != full_grid[:, :, :1, :], axis=(1, 2, 3)),
            np.any(full_grid != full_grid[:, :, :, :1], axis=(1, 2, 3)),
        ], axis=1)
        varies[~mixed[ref]] = True
        for pattern in np.unique(varies, axis=0):
            sel = ref[np.all(varies == pattern, axis=1)]
            offs = _child_offsets(pattern)
            factor = np.where(pattern, 0.5, 1.0)
            sub_size = csize[sel] * factor
            slo = (clo[sel][:, None, :] + offs[None] * sub_size[:, None, :]).reshape(-1, 3)
            ssize = np.repeat(sub_size, len(offs), axis=0)
            new_lo.append(slo)
            new_size.append(ssize)
            new_depth.append(np.repeat(depth[sel] + 1, len(offs)))
        clo = np.concatenate(new_lo)
        csize = np.concatenate(new_size)
        depth = np.concatenate(new_depth)
        if len(clo) > max_cells:
            raise QuadratureError(f"volume quadrature exceeded {max_cells} cells")
        coarse, ind_c = estimate(clo, csize)
    return total


def _bulk_indicator(omega: PlanarSet, void: VoidSet3 | None, z1: float):
    def ind(x):
        ok = omega.contains_open(x[:, :2]) & (x[:, 2] > 0) & (x[:, 2] < z1)
        if not is_empty3(void):
            ok &= ~void.contains(x)
        return ok
    return ind


def film_energy(scene: FilmScene, tol: float = 1e-5, base=(8, 8, 1), max_depth: int = 6,
                mixed_max_depth: int = 3) -> EnergyBreakdown:
    """E_h = h^-2 int_{Omega \\ D} W(grad_h y) + int psi(nu', nu3 / h) over the void boundary inside Omega."""
    h = scene.h
    W = scene.material
    y = scene.deformation

    def f(x):
        return W(rescaled_gradient(y, x, h)) / (h * h)

    lo, hi = scene.omega.bbox()
    bulk = adaptive_volume_integral(
        f, _bulk_indicator(scene.omega, scene.void, 1.0), [lo[0], lo[1], 0.0], [hi[0], hi[1], 1.0],
        base, tol, max_depth=max_depth, mixed_max_depth=mixed_max_depth,
    )
    void = surface_energy(scene.void, scene.norm, PlateRegion(scene.omega, 0.0, 1.0), rescale_h=h)
    return EnergyBreakdown(float(bulk), 0.0, float(void))


def unrescaled_energy(v: Deformation3, A: VoidSet3 | None, h: float, W: ElasticDensity, psi: Norm3,
                      omega: PlanarSet | None = None, tol: float = 1e-5, base=(8, 8, 1),
                      max_depth: int = 6, mixed_max_depth: int = 3) -> float:
    """J_h = int_{Omega_h \\ A} W(grad v) + h^2 int_{Omega_h n dA} psi(nu)."""
    omega = omega or Polygon.rectangle((0, 0), (1, 1))
    lo, hi = omega.bbox()
    bulk = adaptive_volume_integral(
        lambda x: W(v.gradient(x)), _bulk_indicator(omega, A, h), [lo[0], lo[1], 0.0], [hi[0], hi[1], h],
        base, tol, max_depth=max_depth, mixed_max_depth=mixed_max_depth,
    )
    surf = surface_energy(A, psi, PlateRegion(omega, 0.0, h))
    return float(bulk + h * h * surf)


def unrescaled_scene(scene: FilmScene) -> tuple[Deformation3, VoidSet3 | None]:
    """(v, A) on omega x (0, h) corresponding to a rescaled scene."""
    h = scene.h
    A = None if is_empty3(scene.void) else Scaled(scene.void, (1.0, 1.0, h))
    return scene.deformation.unrescaled(h), A
