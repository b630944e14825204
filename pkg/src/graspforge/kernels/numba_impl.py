"""numba-compiled implementations of the hot kernels.

Scalar loops over triangles/points, jitted with ``@njit(cache=True)`` so
the compiled artifacts persist across processes. Semantics must match
``numpy_impl`` exactly (same formulas, same branch thresholds).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def ray_mesh_first_hit(vertices, faces, origin, direction, eps=1e-9):
    best_t = np.inf
    best_i = -1
    for i in range(faces.shape[0]):
        a0 = faces[i, 0]
        a1 = faces[i, 1]
        a2 = faces[i, 2]
        e1x = vertices[a1, 0] - vertices[a0, 0]
        e1y = vertices[a1, 1] - vertices[a0, 1]
        e1z = vertices[a1, 2] - vertices[a0, 2]
        e2x = vertices[a2, 0] - vertices[a0, 0]
        e2y = vertices[a2, 1] - vertices[a0, 1]
        e2z = vertices[a2, 2] - vertices[a0, 2]

        px = direction[1] * e2z - direction[2] * e2y
        py = direction[2] * e2x - direction[0] * e2z
        pz = direction[0] * e2y - direction[1] * e2x
        det = e1x * px + e1y * py + e1z * pz
        if abs(det) <= 1e-12:
            continue
        inv_det = 1.0 / det

        tx = origin[0] - vertices[a0, 0]
        ty = origin[1] - vertices[a0, 1]
        tz = origin[2] - vertices[a0, 2]
        u = (tx * px + ty * py + tz * pz) * inv_det
        if u < -eps:
            continue

        qx = ty * e1z - tz * e1y
        qy = tz * e1x - tx * e1z
        qz = tx * e1y - ty * e1x
        v = (direction[0] * qx + direction[1] * qy + direction[2] * qz) * inv_det
        if v < -eps or u + v > 1.0 + eps:
            continue

        t = (e2x * qx + e2y * qy + e2z * qz) * inv_det
        if t < -eps:
            continue
        if t < 0.0:
            t = 0.0
        if t < best_t:
            best_t = t
            best_i = i
    return best_t, best_i


@njit(cache=True)
def _closest_on_triangle(ax, ay, az, bx, by, bz, cx, cy, cz, qx, qy, qz):
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx - ax
    acy = cy - ay
    acz = cz - az

    apx = qx - ax
    apy = qy - ay
    apz = qz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az

    bpx = qx - bx
    bpy = qy - by
    bpz = qz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz

    cpx = qx - cx
    cpy = qy - cy
    cpz = qz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)

    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (
        ax + abx * v + acx * w,
        ay + aby * v + acy * w,
        az + abz * v + acz * w,
    )


@njit(cache=True)
def closest_point_on_mesh(vertices, faces, query):
    best = np.inf
    out = np.zeros(3)
    best_i = -1
    for i in range(faces.shape[0]):
        a = faces[i, 0]
        b = faces[i, 1]
        c = faces[i, 2]
        px, py, pz = _closest_on_triangle(
            vertices[a, 0], vertices[a, 1], vertices[a, 2],
            vertices[b, 0], vertices[b, 1], vertices[b, 2],
            vertices[c, 0], vertices[c, 1], vertices[c, 2],
            query[0], query[1], query[2],
        )
        dx = px - query[0]
        dy = py - query[1]
        dz = pz - query[2]
        d = np.sqrt(dx * dx + dy * dy + dz * dz)
        if d < best:
            best = d
            out[0] = px
            out[1] = py
            out[2] = pz
            best_i = i
    return out, best, best_i


@njit(cache=True)
def update_min_dists(positions, point, min_dists):
    out = np.empty_like(min_dists)
    for i in range(positions.shape[0]):
        dx = positions[i, 0] - point[0]
        dy = positions[i, 1] - point[1]
        dz = positions[i, 2] - point[2]
        d = np.sqrt(dx * dx + dy * dy + dz * dz)
        out[i] = d if d < min_dists[i] else min_dists[i]
    return out


@njit(cache=True)
def points_in_box(points, center, axes, half_extents):
    n = points.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        dx = points[i, 0] - center[0]
        dy = points[i, 1] - center[1]
        dz = points[i, 2] - center[2]
        inside = True
        for k in range(3):
            proj = dx * axes[k, 0] + dy * axes[k, 1] + dz * axes[k, 2]
            if abs(proj) > half_extents[k] + 1e-12:
                inside = False
                break
        out[i] = inside
    return out
