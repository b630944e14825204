"""Pure-numpy reference implementations of the hot kernels.

Vectorized over triangles/points. Kept numerically interchangeable with
``numba_impl`` (same formulas, same branch thresholds).
"""

import numpy as np


def ray_mesh_first_hit(vertices, faces, origin, direction, eps=1e-9):
    """Nearest ray/triangle intersection over a whole mesh.

    Moller-Trumbore test per triangle, with `eps` slack on the barycentric
    bounds. Returns ``(t, face_index)``; ``(inf, -1)`` when no triangle is
    hit. `direction` must be normalized so `t` is a metric distance.
    """
    v0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - v0
    e2 = vertices[faces[:, 2]] - v0

    pvec = np.cross(direction[None, :], e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_det = 1.0 / det
        tvec = origin[None, :] - v0
        u = np.einsum("ij,ij->i", tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1)
        v = np.einsum("ij,j->i", qvec, direction) * inv_det
        t = np.einsum("ij,ij->i", e2, qvec) * inv_det
        valid = (
            (np.abs(det) > 1e-12)
            & (u >= -eps)
            & (v >= -eps)
            & (u + v <= 1.0 + eps)
            & (t >= -eps)
        )
    if not valid.any():
        return np.inf, -1
    t = np.where(valid, np.maximum(t, 0.0), np.inf)
    idx = int(np.argmin(t))
    return float(t[idx]), idx


def closest_point_on_mesh(vertices, faces, query):
    """Closest point on any triangle of the mesh to `query`.

    Per-triangle closest point via the barycentric region test
    (Ericson, Real-Time Collision Detection), minimized over triangles.
    Returns ``(point, distance, face_index)``.
    """
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]

    ab = b - a
    ac = c - a
    ap = query[None, :] - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)

    bp = query[None, :] - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)

    cp = query[None, :] - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
        v_in = vb * denom
        w_in = vc * denom

        conds = [
            (d1 <= 0.0) & (d2 <= 0.0),
            (d3 >= 0.0) & (d4 <= d3),
            (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0),
            (d6 >= 0.0) & (d5 <= d6),
            (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0),
            (va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0),
        ]
        points = [
            a,
            b,
            a + v_ab[:, None] * ab,
            c,
            a + w_ac[:, None] * ac,
            b + w_bc[:, None] * (c - b),
        ]
        interior = a + v_in[:, None] * ab + w_in[:, None] * ac

        closest = interior.copy()
        decided = np.zeros(len(a), dtype=bool)
        for cond, pt in zip(conds, points):
            take = cond & ~decided
            closest[take] = pt[take]
            decided |= cond

    dists = np.linalg.norm(closest - query[None, :], axis=1)
    idx = int(np.argmin(dists))
    return closest[idx].copy(), float(dists[idx]), idx


def update_min_dists(positions, point, min_dists):
    """Elementwise ``min(min_dists, ||positions - point||)`` (new array)."""
    d = np.sqrt(((positions - point[None, :]) ** 2).sum(axis=1))
    return np.minimum(min_dists, d)


def points_in_box(points, center, axes, half_extents):
    """Boolean mask of points inside an oriented box.

    `axes` are the box axes as rows (orthonormal); `half_extents` the
    half-sizes along them. Boundary points count as inside (1e-12 slack).
    """
    local = (points - center[None, :]) @ axes.T
    return (np.abs(local) <= half_extents[None, :] + 1e-12).all(axis=1)
