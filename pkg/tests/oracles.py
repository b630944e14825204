"""Independent test-side oracles.

These deliberately use different formulations from the library code
(plane-clip ray tests, barycentric grids, plain greedy replays) so the
implementations are checked against something they do not share code with.
"""

from __future__ import annotations

import numpy as np


def ray_triangle_hit(origin, direction, a, b, c, eps=1e-12):
    """Ray/triangle distance via plane intersection + barycentric signs.

    Returns t >= 0 or None. Formulation independent of Moller-Trumbore.
    """
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n)
    if nn < eps:
        return None
    n = n / nn
    denom = n @ direction
    if abs(denom) < eps:
        return None
    t = (n @ (a - origin)) / denom
    if t < -1e-9:
        return None
    p = origin + t * direction
    # barycentric coordinates via areas
    area2 = nn
    u = np.cross(c - b, p - b) @ (np.cross(b - a, c - a) / area2) / area2
    v = np.cross(a - c, p - c) @ (np.cross(b - a, c - a) / area2) / area2
    w = 1.0 - u - v
    if u >= -1e-9 and v >= -1e-9 and w >= -1e-9:
        return max(t, 0.0)
    return None


def brute_force_first_hit(mesh, origin, direction):
    """Exhaustive scan over all triangles; min distance or None."""
    best = None
    for face in mesh.faces:
        a, b, c = mesh.vertices[face]
        t = ray_triangle_hit(np.asarray(origin, dtype=float),
                             np.asarray(direction, dtype=float), a, b, c)
        if t is not None and (best is None or t < best):
            best = t
    return best


def grid_min_distance(mesh, query, n=60):
    """Upper bound on the mesh distance via a barycentric grid per face,
    together with the grid pitch (max sample spacing) for tolerances."""
    query = np.asarray(query, dtype=float)
    us = np.linspace(0.0, 1.0, n)
    best = np.inf
    max_edge = 0.0
    for face in mesh.faces:
        a, b, c = mesh.vertices[face]
        max_edge = max(max_edge, np.linalg.norm(b - a), np.linalg.norm(c - a),
                       np.linalg.norm(c - b))
        for u in us:
            vs = np.linspace(0.0, 1.0 - u, max(int((1.0 - u) * n), 1))
            pts = a + u * (b - a) + vs[:, None] * (c - a)[None, :]
            d = np.linalg.norm(pts - query, axis=1).min()
            best = min(best, d)
    return best, max_edge / n


def greedy_fps_replay(ids, positions, k, start_idx):
    """Plain-python greedy max-min replay with lowest-id tie-breaks."""
    positions = np.asarray(positions, dtype=float)
    selected = [start_idx]
    while len(selected) < k:
        best_i, best_score = None, -np.inf
        for i in range(len(ids)):
            if i in selected:
                continue
            score = min(np.linalg.norm(positions[i] - positions[j]) for j in selected)
            if score > best_score or (score == best_score and ids[i] < ids[best_i]):
                best_i, best_score = i, score
        selected.append(best_i)
    return [ids[i] for i in selected]


def greedy_cross_replay(per_instance, k):
    """Replay of round-robin cross-instance selection.

    `per_instance`: ordered dict instance_id -> (ids, class-frame positions).
    Returns dict instance_id -> ids in pick order.
    """
    chosen = {iid: [] for iid in per_instance}
    chosen_points = []
    for _ in range(k):
        for iid, (ids, positions) in per_instance.items():
            best_i, best_score = None, None
            for i, gid in enumerate(ids):
                if gid in chosen[iid]:
                    continue
                if chosen_points:
                    score = min(np.linalg.norm(np.asarray(positions[i]) - p)
                                for p in chosen_points)
                else:
                    score = np.inf
                better = best_score is None or score > best_score or (
                    score == best_score and gid < ids[best_i])
                if better:
                    best_i, best_score = i, score
            chosen[iid].append(ids[best_i])
            chosen_points.append(np.asarray(positions[best_i], dtype=float))
    return chosen


def min_pairwise_distance(points):
    pts = np.asarray(points, dtype=float)
    best = np.inf
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            best = min(best, float(np.linalg.norm(pts[i] - pts[j])))
    return best


def point_in_obb(p, center, axes, half_extents):
    """Box membership via solving for local coordinates."""
    local = np.linalg.solve(np.asarray(axes).T, np.asarray(p) - np.asarray(center))
    return bool((np.abs(local) <= np.asarray(half_extents) + 1e-12).all())
