"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation so both backends
return bit-identical results. Keep the arithmetic in the same order when
editing either file.
"""

import heapq
import math

import numpy as np

MISS, SURFACE, CANOPY = 0, 1, 2

_NEIGHBORS = (
    (-1, -1, math.sqrt(2.0)),
    (-1, 0, 1.0),
    (-1, 1, math.sqrt(2.0)),
    (0, -1, 1.0),
    (0, 1, 1.0),
    (1, -1, math.sqrt(2.0)),
    (1, 0, 1.0),
    (1, 1, math.sqrt(2.0)),
)


def raycast_heightfield(origin, dirs, elev, canopy, canopy_base, canopy_top, cell, max_range):
    """Cast rays from one origin through a 2.5D heightfield with a canopy slab.

    Returns ``(t, ix, iy, kind)``: hit distance (inf on miss), hit cell
    indices (-1 on miss) and the hit kind (0 miss, 1 surface, 2 canopy).
    """
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    elev = np.ascontiguousarray(elev, dtype=np.float64)
    canopy = np.ascontiguousarray(canopy, dtype=np.uint8)
    n = dirs.shape[0]
    H, W = elev.shape
    ox, oy, oz = (float(v) for v in origin)
    cell = float(cell)
    max_range = float(max_range)

    t_out = np.full(n, np.inf)
    ix_out = np.full(n, -1, dtype=np.int64)
    iy_out = np.full(n, -1, dtype=np.int64)
    kind_out = np.zeros(n, dtype=np.int8)

    ix0 = math.floor(ox / cell)
    iy0 = math.floor(oy / cell)
    if n == 0 or not (0 <= ix0 < W and 0 <= iy0 < H):
        return t_out, ix_out, iy_out, kind_out

    dx, dy, dz = dirs[:, 0].copy(), dirs[:, 1].copy(), dirs[:, 2].copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        step_x = np.where(dx > 0, 1, np.where(dx < 0, -1, 0)).astype(np.int64)
        step_y = np.where(dy > 0, 1, np.where(dy < 0, -1, 0)).astype(np.int64)
        tmax_x = np.where(
            dx > 0, ((ix0 + 1) * cell - ox) / dx, np.where(dx < 0, (ix0 * cell - ox) / dx, np.inf)
        )
        tmax_y = np.where(
            dy > 0, ((iy0 + 1) * cell - oy) / dy, np.where(dy < 0, (iy0 * cell - oy) / dy, np.inf)
        )
        tdelta_x = np.where(dx != 0, cell / np.abs(dx), np.inf)
        tdelta_y = np.where(dy != 0, cell / np.abs(dy), np.inf)

    ix = np.full(n, ix0, dtype=np.int64)
    iy = np.full(n, iy0, dtype=np.int64)
    t_enter = np.zeros(n)
    active = np.arange(n)

    while active.size:
        with np.errstate(divide="ignore", invalid="ignore"):
            t_exit = np.minimum(np.minimum(tmax_x, tmax_y), max_range)
            z0 = oz + dz * t_enter
            z1 = oz + dz * t_exit
            e = elev[iy, ix]
            ts = np.where(z0 <= e, t_enter, np.where(z1 <= e, (e - oz) / dz, np.inf))
            has_canopy = canopy[iy, ix] != 0
            tc = np.where(
                (z0 >= canopy_base) & (z0 <= canopy_top),
                t_enter,
                np.where(
                    (z0 > canopy_top) & (z1 <= canopy_top),
                    (canopy_top - oz) / dz,
                    np.where((z0 < canopy_base) & (z1 >= canopy_base), (canopy_base - oz) / dz, np.inf),
                ),
            )
            tc = np.where(has_canopy, tc, np.inf)

        hit_s = (ts <= tc) & (ts < np.inf)
        hit_c = ~hit_s & (tc < np.inf)
        hit = hit_s | hit_c
        if hit.any():
            idx = active[hit]
            t_out[idx] = np.where(hit_s[hit], ts[hit], tc[hit])
            ix_out[idx] = ix[hit]
            iy_out[idx] = iy[hit]
            kind_out[idx] = np.where(hit_s[hit], SURFACE, CANOPY)

        go_x = tmax_x < tmax_y
        new_t = np.where(go_x, tmax_x, tmax_y)
        ix = np.where(go_x, ix + step_x, ix)
        iy = np.where(go_x, iy, iy + step_y)
        tmax_x = np.where(go_x, tmax_x + tdelta_x, tmax_x)
        tmax_y = np.where(go_x, tmax_y, tmax_y + tdelta_y)

        keep = ~hit & (t_exit < max_range) & (ix >= 0) & (ix < W) & (iy >= 0) & (iy < H)
        active = active[keep]
        ix, iy = ix[keep], iy[keep]
        t_enter = new_t[keep]
        tmax_x, tmax_y = tmax_x[keep], tmax_y[keep]
        tdelta_x, tdelta_y = tdelta_x[keep], tdelta_y[keep]
        step_x, step_y = step_x[keep], step_y[keep]
        dx, dy, dz = dx[keep], dy[keep], dz[keep]

    return t_out, ix_out, iy_out, kind_out


def grid_dijkstra(cost, start, goal=-1):
    """Single-source shortest paths on an 8-connected grid.

    ``cost`` holds per-cell traversal cost (inf = blocked). Moving between
    neighbours costs ``length * (cost[a] + cost[b]) / 2`` in cell units;
    diagonal moves may not cut blocked corners. Expansion stops once the flat
    ``goal`` index is settled. Returns ``(dist, parent)`` where parent holds
    flat indices (-1 for the start and unreached cells).
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    H, W = cost.shape
    flat_cost = cost.ravel().tolist()
    dist = [math.inf] * (H * W)
    parent = [-1] * (H * W)
    done = [False] * (H * W)
    s = int(start[0]) * W + int(start[1])
    if math.isinf(flat_cost[s]):
        return np.full((H, W), np.inf), np.full((H, W), -1, dtype=np.int64)
    dist[s] = 0.0
    heap = [(0.0, s)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == goal:
            break
        uy, ux = divmod(u, W)
        cu = flat_cost[u]
        for ddy, ddx, length in _NEIGHBORS:
            vy = uy + ddy
            vx = ux + ddx
            if vy < 0 or vy >= H or vx < 0 or vx >= W:
                continue
            v = vy * W + vx
            cv = flat_cost[v]
            if done[v] or math.isinf(cv):
                continue
            if ddy != 0 and ddx != 0:
                if math.isinf(flat_cost[uy * W + vx]) or math.isinf(flat_cost[vy * W + ux]):
                    continue
            nd = d + length * (0.5 * (cu + cv))
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
    return np.array(dist).reshape(H, W), np.array(parent, dtype=np.int64).reshape(H, W)
