# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dijkstra kernels for anisotropic voxel distance fields."""

from libc.math cimport sqrt, fabs, INFINITY
from libc.stdlib cimport malloc, realloc, free

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double norm_eval(int family, double* p, double x, double y, double z) noexcept nogil:
    cdef double a, b, c
    if family == 0:
        return sqrt(x * x + y * y + z * z)
    if family == 1:
        return p[0] * fabs(x) + p[1] * fabs(y) + p[2] * fabs(z)
    if family == 2:
        a = p[0] * fabs(x)
        b = p[1] * fabs(y)
        c = p[2] * fabs(z)
        if b > a:
            a = b
        if c > a:
            a = c
        return a
    a = (p[0] * x * x + p[4] * y * y + p[8] * z * z
         + 2.0 * (p[1] * x * y + p[2] * x * z + p[5] * y * z))
    if a < 0:
        a = 0
    return sqrt(a)


cdef struct Heap:
    double* key
    Py_ssize_t* val
    Py_ssize_t size
    Py_ssize_t cap


cdef int heap_init(Heap* h, Py_ssize_t cap) noexcept nogil:
    h.key = <double*> malloc(cap * sizeof(double))
    h.val = <Py_ssize_t*> malloc(cap * sizeof(Py_ssize_t))
    h.size = 0
    h.cap = cap
    return 0 if (h.key != NULL and h.val != NULL) else -1


cdef void heap_free(Heap* h) noexcept nogil:
    free(h.key)
    free(h.val)


cdef int heap_push(Heap* h, double k, Py_ssize_t v) noexcept nogil:
    cdef Py_ssize_t i, parent
    cdef double* nk
    cdef Py_ssize_t* nv
    if h.size == h.cap:
        nk = <double*> realloc(h.key, 2 * h.cap * sizeof(double))
        if nk == NULL:
            return -1
        h.key = nk
        nv = <Py_ssize_t*> realloc(h.val, 2 * h.cap * sizeof(Py_ssize_t))
        if nv == NULL:
            return -1
        h.val = nv
        h.cap *= 2
    i = h.size
    h.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        if h.key[parent] <= k:
            break
        h.key[i] = h.key[parent]
        h.val[i] = h.val[parent]
        i = parent
    h.key[i] = k
    h.val[i] = v
    return 0


cdef void heap_pop(Heap* h, double* k, Py_ssize_t* v) noexcept nogil:
    cdef Py_ssize_t i = 0, child
    cdef double lk
    cdef Py_ssize_t lv
    k[0] = h.key[0]
    v[0] = h.val[0]
    h.size -= 1
    if h.size == 0:
        return
    lk = h.key[h.size]
    lv = h.val[h.size]
    while True:
        child = 2 * i + 1
        if child >= h.size:
            break
        if child + 1 < h.size and h.key[child + 1] < h.key[child]:
            child += 1
        if h.key[child] >= lk:
            break
        h.key[i] = h.key[child]
        h.val[i] = h.val[child]
        i = child
    h.key[i] = lk
    h.val[i] = lv


def dijkstra(double[:, :, ::1] dist, double[:, :, :, ::1] feat,
             double[::1] origin, double[::1] spacing,
             int family, double[::1] params, double cutoff, int feature_mode):
    """Propagate in place from every voxel with a finite value.

    feature_mode = 1: each voxel stores a source point and its value is the
    norm of (centre - source); neighbours inherit the source when that
    lowers their value. feature_mode = 0: plain shortest paths on the
    26-neighbour stencil graph with edge cost norm(offset).
    """
    cdef Py_ssize_t nx = dist.shape[0], ny = dist.shape[1], nz = dist.shape[2]
    cdef Py_ssize_t n = nx * ny * nz
    cdef Py_ssize_t idx, i, j, k, ii, jj, kk, nidx, pushes = 0
    cdef int di, dj, dk
    cdef double d, cand, px, py, pz
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double sx = spacing[0], sy = spacing[1], sz = spacing[2]
    cdef double p[9]
    cdef double step[27]
    cdef Heap heap
    cdef int t
    for t in range(params.shape[0]):
        p[t] = params[t]
    for di in range(-1, 2):
        for dj in range(-1, 2):
            for dk in range(-1, 2):
                step[(di + 1) * 9 + (dj + 1) * 3 + (dk + 1)] = norm_eval(
                    family, p, di * sx, dj * sy, dk * sz)
    if heap_init(&heap, 1024 + n // 4) != 0:
        raise MemoryError()
    with nogil:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    if dist[i, j, k] < INFINITY and dist[i, j, k] <= cutoff:
                        if heap_push(&heap, dist[i, j, k], (i * ny + j) * nz + k) != 0:
                            break
        while heap.size > 0:
            heap_pop(&heap, &d, &idx)
            k = idx % nz
            j = (idx // nz) % ny
            i = idx // (ny * nz)
            if d > dist[i, j, k]:
                continue
            if d > cutoff:
                break
            for di in range(-1, 2):
                ii = i + di
                if ii < 0 or ii >= nx:
                    continue
                for dj in range(-1, 2):
                    jj = j + dj
                    if jj < 0 or jj >= ny:
                        continue
                    for dk in range(-1, 2):
                        kk = k + dk
                        if kk < 0 or kk >= nz or (di == 0 and dj == 0 and dk == 0):
                            continue
                        if feature_mode:
                            px = feat[i, j, k, 0]
                            py = feat[i, j, k, 1]
                            pz = feat[i, j, k, 2]
                            cand = norm_eval(family, p, ox + ii * sx - px,
                                             oy + jj * sy - py, oz + kk * sz - pz)
                        else:
                            cand = d + step[(di + 1) * 9 + (dj + 1) * 3 + (dk + 1)]
                        if cand < dist[ii, jj, kk]:
                            dist[ii, jj, kk] = cand
                            if feature_mode:
                                feat[ii, jj, kk, 0] = px
                                feat[ii, jj, kk, 1] = py
                                feat[ii, jj, kk, 2] = pz
                            if cand <= cutoff:
                                nidx = (ii * ny + jj) * nz + kk
                                if heap_push(&heap, cand, nidx) != 0:
                                    heap.size = 0
                                    pushes = -1
                                    break
    heap_free(&heap)
    if pushes < 0:
        raise MemoryError("distance heap exhausted")
