# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Must stay arithmetically identical to _pykernels.py."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, INFINITY, isinf
from libc.stdlib cimport malloc, free

cnp.import_array()


def raycast_heightfield(origin, dirs, elev, canopy, double canopy_base, double canopy_top,
                        double cell, double max_range):
    cdef const double[:, ::1] D = np.ascontiguousarray(dirs, dtype=np.float64)
    cdef const double[:, ::1] E = np.ascontiguousarray(elev, dtype=np.float64)
    cdef const unsigned char[:, ::1] C = np.ascontiguousarray(canopy, dtype=np.uint8)
    cdef Py_ssize_t n = D.shape[0]
    cdef Py_ssize_t H = E.shape[0], W = E.shape[1]
    cdef double ox = float(origin[0]), oy = float(origin[1]), oz = float(origin[2])

    t_np = np.full(n, np.inf)
    ix_np = np.full(n, -1, dtype=np.int64)
    iy_np = np.full(n, -1, dtype=np.int64)
    kind_np = np.zeros(n, dtype=np.int8)
    cdef double[::1] t_out = t_np
    cdef long long[::1] ix_out = ix_np
    cdef long long[::1] iy_out = iy_np
    cdef signed char[::1] kind_out = kind_np

    cdef long long ix0 = <long long>floor(ox / cell)
    cdef long long iy0 = <long long>floor(oy / cell)
    if n == 0 or not (0 <= ix0 < W and 0 <= iy0 < H):
        return t_np, ix_np, iy_np, kind_np

    cdef Py_ssize_t r
    cdef double dx, dy, dz, tmax_x, tmax_y, tdelta_x, tdelta_y, t_enter, t_exit
    cdef double z0, z1, e, ts, tc
    cdef long long ix, iy, step_x, step_y
    for r in range(n):
        dx = D[r, 0]
        dy = D[r, 1]
        dz = D[r, 2]
        if dx > 0:
            step_x = 1
            tmax_x = ((ix0 + 1) * cell - ox) / dx
        elif dx < 0:
            step_x = -1
            tmax_x = (ix0 * cell - ox) / dx
        else:
            step_x = 0
            tmax_x = INFINITY
        if dy > 0:
            step_y = 1
            tmax_y = ((iy0 + 1) * cell - oy) / dy
        elif dy < 0:
            step_y = -1
            tmax_y = (iy0 * cell - oy) / dy
        else:
            step_y = 0
            tmax_y = INFINITY
        tdelta_x = cell / (dx if dx > 0 else -dx) if dx != 0 else INFINITY
        tdelta_y = cell / (dy if dy > 0 else -dy) if dy != 0 else INFINITY
        ix = ix0
        iy = iy0
        t_enter = 0.0
        while True:
            t_exit = tmax_x if tmax_x < tmax_y else tmax_y
            if max_range < t_exit:
                t_exit = max_range
            z0 = oz + dz * t_enter
            z1 = oz + dz * t_exit
            e = E[iy, ix]
            if z0 <= e:
                ts = t_enter
            elif z1 <= e:
                ts = (e - oz) / dz
            else:
                ts = INFINITY
            tc = INFINITY
            if C[iy, ix] != 0:
                if z0 >= canopy_base and z0 <= canopy_top:
                    tc = t_enter
                elif z0 > canopy_top and z1 <= canopy_top:
                    tc = (canopy_top - oz) / dz
                elif z0 < canopy_base and z1 >= canopy_base:
                    tc = (canopy_base - oz) / dz
            if ts <= tc and ts < INFINITY:
                t_out[r] = ts
                ix_out[r] = ix
                iy_out[r] = iy
                kind_out[r] = 1
                break
            if tc < INFINITY:
                t_out[r] = tc
                ix_out[r] = ix
                iy_out[r] = iy
                kind_out[r] = 2
                break
            if not (t_exit < max_range):
                break
            if tmax_x < tmax_y:
                ix += step_x
                t_enter = tmax_x
                tmax_x = tmax_x + tdelta_x
            else:
                iy += step_y
                t_enter = tmax_y
                tmax_y = tmax_y + tdelta_y
            if ix < 0 or ix >= W or iy < 0 or iy >= H:
                break
    return t_np, ix_np, iy_np, kind_np


cdef struct HeapItem:
    double key
    long long idx


cdef inline bint _less(HeapItem a, HeapItem b) nogil:
    return a.key < b.key or (a.key == b.key and a.idx < b.idx)


cdef inline void _push(HeapItem* heap, Py_ssize_t* size, double key, long long idx) nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t p
    cdef HeapItem item
    item.key = key
    item.idx = idx
    size[0] += 1
    while i > 0:
        p = (i - 1) >> 1
        if _less(item, heap[p]):
            heap[i] = heap[p]
            i = p
        else:
            break
    heap[i] = item


cdef inline HeapItem _pop(HeapItem* heap, Py_ssize_t* size) nogil:
    cdef HeapItem top = heap[0]
    cdef HeapItem last
    cdef Py_ssize_t i = 0, c, n
    size[0] -= 1
    n = size[0]
    if n > 0:
        last = heap[n]
        while True:
            c = 2 * i + 1
            if c >= n:
                break
            if c + 1 < n and _less(heap[c + 1], heap[c]):
                c += 1
            if _less(heap[c], last):
                heap[i] = heap[c]
                i = c
            else:
                break
        heap[i] = last
    return top


def grid_dijkstra(cost, start, long long goal=-1):
    cdef const double[::1] cst = np.ascontiguousarray(cost, dtype=np.float64).ravel()
    cdef Py_ssize_t H = cost.shape[0], W = cost.shape[1]
    cdef Py_ssize_t N = H * W
    dist_np = np.full(N, np.inf)
    parent_np = np.full(N, -1, dtype=np.int64)
    cdef double[::1] dist = dist_np
    cdef long long[::1] parent = parent_np
    done_np = np.zeros(N, dtype=np.uint8)
    cdef unsigned char[::1] done = done_np
    cdef long long s = <long long>int(start[0]) * W + <long long>int(start[1])
    if isinf(cst[s]):
        return dist_np.reshape(H, W), parent_np.reshape(H, W)

    cdef int[8] ndy = [-1, -1, -1, 0, 0, 1, 1, 1]
    cdef int[8] ndx = [-1, 0, 1, -1, 1, -1, 0, 1]
    cdef double diag = sqrt(2.0)
    cdef double[8] nlen = [diag, 1.0, diag, 1.0, 1.0, diag, 1.0, diag]

    cdef Py_ssize_t cap = 8 * N + 1
    cdef HeapItem* heap = <HeapItem*>malloc(cap * sizeof(HeapItem))
    if heap == NULL:
        raise MemoryError()
    cdef Py_ssize_t size = 0
    cdef HeapItem item
    cdef long long u, v, uy, ux, vy, vx
    cdef double d, nd, cu, cv
    cdef int k
    try:
        dist[s] = 0.0
        _push(heap, &size, 0.0, s)
        while size > 0:
            item = _pop(heap, &size)
            d = item.key
            u = item.idx
            if done[u]:
                continue
            done[u] = 1
            if u == goal:
                break
            uy = u // W
            ux = u - uy * W
            cu = cst[u]
            for k in range(8):
                vy = uy + ndy[k]
                vx = ux + ndx[k]
                if vy < 0 or vy >= H or vx < 0 or vx >= W:
                    continue
                v = vy * W + vx
                cv = cst[v]
                if done[v] or isinf(cv):
                    continue
                if ndy[k] != 0 and ndx[k] != 0:
                    if isinf(cst[uy * W + vx]) or isinf(cst[vy * W + ux]):
                        continue
                nd = d + nlen[k] * (0.5 * (cu + cv))
                if nd < dist[v]:
                    dist[v] = nd
                    parent[v] = u
                    _push(heap, &size, nd, v)
    finally:
        free(heap)
    return dist_np.reshape(H, W), parent_np.reshape(H, W)
