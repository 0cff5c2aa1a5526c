"""Pure-Python Dijkstra kernels; same contract as the compiled extension."""

from __future__ import annotations

import heapq
import math

import numpy as np


def _norm_fn(family: int, p):
    if family == 0:
        return lambda x, y, z: math.sqrt(x * x + y * y + z * z)
    if family == 1:
        a, b, c = p[0], p[1], p[2]
        return lambda x, y, z: a * abs(x) + b * abs(y) + c * abs(z)
    if family == 2:
        a, b, c = p[0], p[1], p[2]
        return lambda x, y, z: max(a * abs(x), b * abs(y), c * abs(z))
    m = [float(v) for v in p[:9]]

    def ell(x, y, z):
        q = (m[0] * x * x + m[4] * y * y + m[8] * z * z
             + 2.0 * (m[1] * x * y + m[2] * x * z + m[5] * y * z))
        return math.sqrt(q) if q > 0 else 0.0

    return ell


def dijkstra(dist, feat, origin, spacing, family, params, cutoff, feature_mode):
    nx, ny, nz = dist.shape
    norm = _norm_fn(int(family), list(params))
    ox, oy, oz = (float(v) for v in origin)
    sx, sy, sz = (float(v) for v in spacing)
    offsets = [
        (di, dj, dk, norm(di * sx, dj * sy, dk * sz))
        for di in (-1, 0, 1)
        for dj in (-1, 0, 1)
        for dk in (-1, 0, 1)
        if (di, dj, dk) != (0, 0, 0)
    ]
    flat = dist.reshape(-1)
    start = np.flatnonzero(np.isfinite(flat) & (flat <= cutoff))
    heap = [(float(flat[s]), int(s)) for s in start]
    heapq.heapify(heap)
    while heap:
        d, idx = heapq.heappop(heap)
        k = idx % nz
        j = (idx // nz) % ny
        i = idx // (ny * nz)
        if d > dist[i, j, k]:
            continue
        if d > cutoff:
            break
        if feature_mode:
            px, py, pz = feat[i, j, k]
        for di, dj, dk, w in offsets:
            ii, jj, kk = i + di, j + dj, k + dk
            if not (0 <= ii < nx and 0 <= jj < ny and 0 <= kk < nz):
                continue
            if feature_mode:
                cand = norm(ox + ii * sx - px, oy + jj * sy - py, oz + kk * sz - pz)
            else:
                cand = d + w
            if cand < dist[ii, jj, kk]:
                dist[ii, jj, kk] = cand
                if feature_mode:
                    feat[ii, jj, kk] = (px, py, pz)
                if cand <= cutoff:
                    heapq.heappush(heap, (cand, (ii * ny + jj) * nz + kk))
