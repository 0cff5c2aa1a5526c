"""Voxel grids and anisotropic distance fields dist_{psi°}(., A).

Values live at voxel centres ``origin + index * spacing``. The propagation
kernel comes from the compiled extension when it is importable and from a
pure-Python heap implementation otherwise; ``BACKEND`` names the active one.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .norms import Norm3

try:  # pragma: no cover - exercised implicitly
    if os.environ.get("BZKPLATE_PURE_PYTHON"):
        raise ImportError
    from . import _distance_core as _kernel

    BACKEND = "compiled"
except ImportError:  # pragma: no cover
    from . import _distance_py as _kernel

    BACKEND = "python"

from . import _distance_py

_FAMILY_CODE = {"euclidean": 0, "weighted_l1": 1, "weighted_linf": 2, "ellipsoidal": 3}
_MAGIC = b"BZKVOX01"


def norm_code(norm: Norm3) -> tuple[int, np.ndarray]:
    """Family code and flat parameter vector understood by the kernels."""
    code = _FAMILY_CODE[norm.family]
    params = np.zeros(9)
    if norm.family == "weighted_l1":
        params[:3] = norm.params["w"]
    elif norm.family == "weighted_linf":
        params[:3] = norm.params["a"]
    elif norm.family == "ellipsoidal":
        params[:] = np.asarray(norm.params["M"]).ravel()
    return code, params


@dataclass(frozen=True)
class Grid:
    """Uniform voxel grid; ``origin`` is the centre of voxel (0, 0, 0)."""

    origin: tuple
    spacing: tuple
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        if any(s <= 0 for s in self.spacing) or any(n < 1 for n in self.dims):
            raise ValueError("grid needs positive spacing and dimensions")

    @classmethod
    def covering(cls, lo, hi, spacing: float) -> "Grid":
        """Nodes lo, lo + spacing, ... reaching at least hi on each axis."""
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        n = np.maximum(np.ceil((hi - lo) / spacing - 1e-9).astype(int), 1) + 1
        sp = (hi - lo) / (n - 1)
        sp = np.where(sp > 0, sp, spacing)
        return cls(tuple(lo), tuple(sp), tuple(n))

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def axes(self) -> list[np.ndarray]:
        return [o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.dims)]

    def centers(self) -> np.ndarray:
        X, Y, Z = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    def index_to_point(self, idx) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(idx) * np.asarray(self.spacing)


@dataclass(frozen=True, eq=False)
class DistanceField:
    grid: Grid
    values: np.ndarray
    norm: Norm3 | None = None
    cutoff: float = np.inf

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.shape != self.grid.dims:
            raise ValueError("values do not match grid dimensions")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def sublevel(self, r: float) -> np.ndarray:
        return self.values <= r

    def interpolate(self, points) -> np.ndarray:
        """Trilinear interpolation; points outside the grid are clamped."""
        pts = np.asarray(points, float)
        o = np.asarray(self.grid.origin)
        s = np.asarray(self.grid.spacing)
        n = np.asarray(self.grid.dims)
        u = (pts - o) / s
        i0 = np.clip(np.floor(u).astype(int), 0, np.maximum(n - 2, 0))
        f = np.clip(u - i0, 0.0, 1.0)
        f = np.where(n > 1, f, 0.0)
        i1 = np.minimum(i0 + 1, n - 1)
        v = self.values
        out = 0.0
        for bx in (0, 1):
            ix = i1[..., 0] if bx else i0[..., 0]
            wx = f[..., 0] if bx else 1 - f[..., 0]
            for by in (0, 1):
                iy = i1[..., 1] if by else i0[..., 1]
                wy = f[..., 1] if by else 1 - f[..., 1]
                for bz in (0, 1):
                    iz = i1[..., 2] if bz else i0[..., 2]
                    wz = f[..., 2] if bz else 1 - f[..., 2]
                    w = wx * wy * wz
                    val = v[ix, iy, iz]
                    out = out + np.where(w > 0, w * np.where(np.isfinite(val), val, 1e300), 0.0)
        return np.where(out >= 1e299, np.inf, out)

    # -------------------------------------------------------------- binary I/O
    def to_bytes(self) -> bytes:
        """Flat layout: magic, 3 x int64 dims, 3 x float64 origin, 3 x float64
        spacing, then float64 values with x varying fastest (little endian)."""
        head = _MAGIC + struct.pack("<3q3d3d", *self.grid.dims, *self.grid.origin, *self.grid.spacing)
        payload = np.asarray(self.values, dtype="<f8").ravel(order="F").tobytes()
        return head + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "DistanceField":
        if data[:8] != _MAGIC:
            raise ValueError("not a voxel distance file")
        fields = struct.unpack("<3q3d3d", data[8 : 8 + 72])
        dims, origin, spacing = fields[:3], fields[3:6], fields[6:9]
        vals = np.frombuffer(data[80:], dtype="<f8")
        if vals.size != int(np.prod(dims)):
            raise ValueError("payload size does not match header dims")
        vals = vals.reshape(dims, order="F")
        return cls(Grid(origin, spacing, dims), np.ascontiguousarray(vals))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "DistanceField":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _seed_voxels(grid: Grid, dist, feat, norm: Norm3, points: np.ndarray) -> None:
    """Register source points at the 8 voxel centres around each of them."""
    if len(points) == 0:
        return
    o = np.asarray(grid.origin)
    s = np.asarray(grid.spacing)
    n = np.asarray(grid.dims)
    base = np.floor((points - o) / s).astype(int)
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                idx = base + np.array([dx, dy, dz])
                ok = np.all((idx >= 0) & (idx < n), axis=1)
                idx, p = idx[ok], points[ok]
                if len(idx) == 0:
                    continue
                val = norm(o + idx * s - p)
                flat = np.ravel_multi_index(idx.T, grid.dims)
                order = np.lexsort((val, flat))
                flat_s, val_s = flat[order], val[order]
                first = np.ones(len(flat_s), bool)
                first[1:] = flat_s[1:] != flat_s[:-1]
                flat_s, val_s, p_s = flat_s[first], val_s[first], p[order][first]
                dv = dist.reshape(-1)
                fv = feat.reshape(-1, 3)
                better = val_s < dv[flat_s]
                dv[flat_s[better]] = val_s[better]
                fv[flat_s[better]] = p_s[better]


def distance_transform(
    psi_dual: Norm3,
    set_mask: np.ndarray | None,
    grid: Grid,
    seeds: np.ndarray | None = None,
    mode: str = "feature",
    cutoff: float = np.inf,
    backend: str | None = None,
) -> DistanceField:
    """dist_{psi_dual}(., A) at voxel centres for A given by a mask and/or source points.

    mode "stencil" is the plain 26-neighbour Dijkstra with edge cost
    psi_dual(offset); it overestimates off-lattice directions by the
    stencil anisotropy factor. mode "feature" propagates source points and
    evaluates psi_dual(centre - source) exactly, which is exact along axes,
    never below the true distance and never above the stencil value.
    Extra ``seeds`` (points on the boundary of A) sharpen the feature mode.
    """
    if mode not in ("feature", "stencil"):
        raise ValueError(f"unknown distance mode {mode!r}")
    mask = np.zeros(grid.dims, bool) if set_mask is None else np.asarray(set_mask, bool)
    if mask.shape != grid.dims:
        raise ValueError("mask shape does not match grid")
    seeds = np.zeros((0, 3)) if seeds is None else np.asarray(seeds, float).reshape(-1, 3)
    if not mask.any() and len(seeds) == 0:
        raise ValueError("empty source set")
    dist = np.full(grid.dims, np.inf)
    feat = np.zeros(grid.dims + (3,))
    dist[mask] = 0.0
    if mode == "feature":
        feat[mask] = grid.centers()[mask]
        _seed_voxels(grid, dist, feat, psi_dual, seeds)
    elif len(seeds):
        _seed_voxels(grid, dist, feat, psi_dual, seeds)
    code, params = norm_code(psi_dual)
    kern = _kernel
    if backend == "python":
        kern = _distance_py
    elif backend == "compiled" and BACKEND != "compiled":
        raise RuntimeError("compiled distance kernel is not available")
    kern.dijkstra(
        dist,
        feat,
        np.asarray(grid.origin, float),
        np.asarray(grid.spacing, float),
        code,
        params,
        float(cutoff),
        1 if mode == "feature" else 0,
    )
    dist[mask] = 0.0
    if np.isfinite(cutoff):
        dist[dist > cutoff] = np.inf
    return DistanceField(grid, dist, psi_dual, float(cutoff))
