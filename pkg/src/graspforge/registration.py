"""Classical point-cloud registration: multi-hypothesis rough alignment
plus point-to-point ICP with residual gating.

Point clouds are plain (N, 3) float arrays in meters. The residual is the
mean nearest-neighbor correspondence distance after applying the recovered
transform, and the accept gate defaults to 0.006 m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .geom import GeometryError, RigidTransform, orthonormalized

DEFAULT_GATE = 0.006

# The four diagonal sign matrices with det +1 (principal-axis ambiguity).
_SIGN_HYPOTHESES = [
    np.diag([1.0, 1.0, 1.0]),
    np.diag([1.0, -1.0, -1.0]),
    np.diag([-1.0, 1.0, -1.0]),
    np.diag([-1.0, -1.0, 1.0]),
]


@dataclass
class RegistrationResult:
    transform: RigidTransform
    residual: float
    iterations: int
    gate: float = math.inf
    residual_history: list = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.residual <= self.gate

    def to_dict(self) -> dict:
        return {
            "transform": [[float(x) for x in row] for row in self.transform.as_matrix()],
            "residual": float(self.residual),
            "iterations": int(self.iterations),
            "gate": float(self.gate) if math.isfinite(self.gate) else None,
            "accepted": bool(self.accepted),
        }


def _as_cloud(points, min_points: int) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise GeometryError("point cloud must be (N, 3)")
    if len(pts) < min_points:
        raise GeometryError(f"need at least {min_points} points, got {len(pts)}")
    if not np.isfinite(pts).all():
        raise GeometryError("non-finite point in cloud")
    return pts


def _pca_frame(points: np.ndarray) -> np.ndarray:
    """Right-handed principal frame (columns = axes, descending variance)."""
    centered = points - points.mean(axis=0)
    cov = centered.T @ centered / len(points)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    if eigvals[1] <= max(eigvals[0], 0.0) * 1e-9 + 1e-30:
        raise GeometryError("degenerate covariance (collinear cloud)")
    frame = eigvecs[:, order]
    frame[:, 2] = np.cross(frame[:, 0], frame[:, 1])
    return frame


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def mean_nn_residual(source: np.ndarray, target_tree: cKDTree, transform: RigidTransform) -> float:
    d, _ = target_tree.query(transform.apply(source))
    return float(d.mean())


def rough_align(source, target, n_starts: int = 8, seed: int = 0) -> RigidTransform:
    """Coarse source->target alignment from centroids and principal axes.

    Evaluates the 4 proper axis-sign hypotheses plus ``n_starts - 4``
    seeded random rotations, returning the hypothesis with the lowest
    one-pass nearest-neighbor residual.
    """
    source = _as_cloud(source, 10)
    target = _as_cloud(target, 10)
    if n_starts < 4:
        raise ValueError("n_starts must be >= 4")

    src_frame = _pca_frame(source)
    tgt_frame = _pca_frame(target)
    c_src = source.mean(axis=0)
    c_tgt = target.mean(axis=0)

    rotations = [orthonormalized(tgt_frame @ d @ src_frame.T) for d in _SIGN_HYPOTHESES]
    rng = np.random.default_rng(seed)
    rotations += [_random_rotation(rng) for _ in range(n_starts - 4)]

    tree = cKDTree(target)
    best = None
    best_res = math.inf
    for rot in rotations:
        cand = RigidTransform(rot, c_tgt - rot @ c_src)
        res = mean_nn_residual(source, tree, cand)
        if res < best_res:
            best_res = res
            best = cand
    return best


def _kabsch(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping src onto dst (SVD method)."""
    c_src = src.mean(axis=0)
    c_dst = dst.mean(axis=0)
    h = (src - c_src).T @ (dst - c_dst)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = orthonormalized(vt.T @ np.diag([1.0, 1.0, d]) @ u.T)
    return RigidTransform(rot, c_dst - rot @ c_src)


def icp_refine(source, target, init: RigidTransform, max_iters: int = 100,
               tol: float = 1e-7, gate: float = math.inf,
               patience: int = 5) -> RegistrationResult:
    """Point-to-point ICP from `init`.

    Each pass: nearest-neighbor correspondences against a k-d tree,
    rejection of pairs beyond 5x the median distance, closed-form SVD
    update, re-orthonormalization. The best transform seen (by mean
    correspondence distance) is reported; iteration stops on a converged
    plateau (improvement below `tol`), after `patience` consecutive
    non-improving passes, or at `max_iters`.
    """
    source = _as_cloud(source, 3)
    target = _as_cloud(target, 3)
    tree = cKDTree(target)

    current = RigidTransform(orthonormalized(init.rotation), init.translation)
    best_transform = current
    best_res = math.inf
    history = []
    iterations = 0
    stale = 0
    for _ in range(max_iters):
        moved = current.apply(source)
        dists, idx = tree.query(moved)
        res = float(dists.mean())
        iterations += 1
        improvement = best_res - res
        if improvement > 0:
            best_res = res
            best_transform = current
            history.append(res)
        if 0.0 <= improvement < tol:
            break  # fixed point / converged plateau
        if improvement < 0:
            stale += 1
            if stale >= patience:
                break
        else:
            stale = 0

        med = np.median(dists)
        keep = dists <= 5.0 * med if med > 0 else np.ones(len(dists), dtype=bool)
        if keep.sum() < 3:
            break
        step = _kabsch(moved[keep], target[idx[keep]])
        current = step.compose(current)

    return RegistrationResult(
        transform=best_transform,
        residual=best_res,
        iterations=iterations,
        gate=gate,
        residual_history=history,
    )


def register_view(object_cloud_from_view, fused_cloud, gate: float = DEFAULT_GATE,
                  n_starts: int = 8, seed: int = 0, max_iters: int = 100,
                  tol: float = 1e-7) -> RegistrationResult:
    """Register a partial view cloud against a fused object cloud.

    Rough alignment then ICP; the result is accepted iff the final mean
    residual is at or below `gate` (boundary accepted).
    """
    init = rough_align(object_cloud_from_view, fused_cloud, n_starts=n_starts, seed=seed)
    return icp_refine(object_cloud_from_view, fused_cloud, init,
                      max_iters=max_iters, tol=tol, gate=gate)


# ---------------------------------------------------------------------------
# Batch interface: directories of ASCII xyz clouds
# ---------------------------------------------------------------------------

def load_xyz(path) -> np.ndarray:
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise GeometryError(f"{path}:{lineno}: expected 'x y z'")
        rows.append([float(x) for x in parts])
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def save_xyz(path, points) -> None:
    pts = np.asarray(points, dtype=np.float64)
    Path(path).write_text(
        "\n".join(f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in pts) + "\n"
    )


def register_directory(input_dir, gate: float = DEFAULT_GATE, n_starts: int = 8,
                       seed: int = 0) -> dict:
    """Register every ``<stem>_partial.xyz`` / ``<stem>_fused.xyz`` pair.

    Returns ``{"pairs": {stem: result-dict}, "summary": counts}`` with the
    partial cloud as registration source.
    """
    input_dir = Path(input_dir)
    partials = sorted(input_dir.glob("*_partial.xyz"))
    if not partials:
        raise FileNotFoundError(f"no '*_partial.xyz' files in {input_dir}")
    pairs = {}
    n_accepted = 0
    for partial_path in partials:
        stem = partial_path.name[: -len("_partial.xyz")]
        fused_path = input_dir / f"{stem}_fused.xyz"
        if not fused_path.exists():
            raise FileNotFoundError(f"missing fused cloud for {stem!r}: {fused_path}")
        result = register_view(load_xyz(partial_path), load_xyz(fused_path),
                               gate=gate, n_starts=n_starts, seed=seed)
        pairs[stem] = result.to_dict()
        n_accepted += int(result.accepted)
    return {
        "pairs": pairs,
        "summary": {
            "n_pairs": len(pairs),
            "n_accepted": n_accepted,
            "n_rejected": len(pairs) - n_accepted,
            "gate": gate,
        },
    }
