"""Exact geometric primitives.

Similarity transforms, nearest neighbours, Chamfer distance, the Umeyama
closed-form alignment with a RANSAC wrapper, and oriented bounding boxes.
All functions are pure; distances are in meters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateConfiguration,
    EmptyCloud,
    LengthMismatch,
    NoConsensus,
)

ROTATION_TOL = 1e-9

# Below this many reference points nearest-neighbour search stays brute
# force; both paths tie-break by lowest index and agree exactly.
BRUTE_FORCE_MAX = 512


def is_rotation(m: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    """True when ``m`` is orthonormal with determinant +1 within ``tol``."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        return False
    if not np.all(np.isfinite(m)):
        return False
    if np.max(np.abs(m.T @ m - np.eye(3))) > tol:
        return False
    return abs(np.linalg.det(m) - 1.0) <= tol


def rotation_about_axis(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise DegenerateConfiguration("rotation axis must be nonzero")
    x, y, z = axis / n
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle_rad) * k + (1.0 - np.cos(angle_rad)) * (k @ k)


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of N >= 1 finite 3D points, shape (N, 3)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise EmptyCloud(f"expected (N>=1, 3) points, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise EmptyCloud("point coordinates must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class ColoredPointCloud:
    """Points plus per-point RGB colors in [0, 1]."""

    points: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        col = np.ascontiguousarray(self.colors, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise EmptyCloud(f"expected (N>=1, 3) points, got {pts.shape}")
        if col.shape != pts.shape:
            raise LengthMismatch(f"colors {col.shape} vs points {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise EmptyCloud("point coordinates must be finite")
        if col.min() < 0.0 or col.max() > 1.0:
            raise ValueError("colors must lie in [0, 1]")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "colors", col)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class SimilarityTransform:
    """p -> scale * rotation @ p + translation, with rotation in SO(3)."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.ascontiguousarray(self.rotation, dtype=float)
        tr = np.ascontiguousarray(self.translation, dtype=float).reshape(3)
        if not (np.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not is_rotation(rot):
            raise ValueError("rotation must be orthonormal with det +1")
        if not np.all(np.isfinite(tr)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @staticmethod
    def identity() -> "SimilarityTransform":
        return SimilarityTransform(1.0, np.eye(3), np.zeros(3))

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array of points."""
        pts = np.asarray(pts, dtype=float)
        return self.scale * (pts @ self.rotation.T) + self.translation

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """self after other: (self . other)(p) = self(other(p))."""
        return SimilarityTransform(
            self.scale * other.scale,
            self.rotation @ other.rotation,
            self.scale * self.rotation @ other.translation + self.translation,
        )

    def to_array(self) -> np.ndarray:
        """Flat [s, R row-major (9), t (3)] layout used by persisted poses."""
        return np.concatenate(
            ([self.scale], self.rotation.reshape(9), self.translation)
        )

    @staticmethod
    def from_array(a: np.ndarray) -> "SimilarityTransform":
        a = np.asarray(a, dtype=float).reshape(13)
        return SimilarityTransform(a[0], a[1:10].reshape(3, 3), a[10:13])


@dataclass(frozen=True)
class OrientedBox:
    """Oriented 3D box: center, rotation (local->world), full side lengths."""

    center: np.ndarray
    rotation: np.ndarray
    extents: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(self.center, dtype=float).reshape(3)
        rot = np.ascontiguousarray(self.rotation, dtype=float)
        e = np.ascontiguousarray(self.extents, dtype=float).reshape(3)
        if not is_rotation(rot):
            raise ValueError("box rotation must be orthonormal with det +1")
        if np.any(e <= 0.0) or not np.all(np.isfinite(e)):
            raise ValueError("box extents must be strictly positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "extents", e)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the (closed) box."""
        local = (np.asarray(pts, dtype=float) - self.center) @ self.rotation
        return np.all(np.abs(local) <= self.extents / 2.0, axis=1)

    def corners(self) -> np.ndarray:
        """The 8 world-frame corners, shape (8, 3)."""
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
            dtype=float,
        )
        return self.center + (signs * (self.extents / 2.0)) @ self.rotation.T


def _pts(cloud) -> np.ndarray:
    """Accept PointCloud-likes or raw (N, 3) arrays."""
    if hasattr(cloud, "points"):
        return cloud.points
    return np.asarray(cloud, dtype=float)


def apply_transform(t: SimilarityTransform, cloud: PointCloud) -> PointCloud:
    """Apply p -> s R p + t to every point, preserving order."""
    return PointCloud(t.apply_points(_pts(cloud)))


def umeyama(src, dst, with_scale: bool = True) -> SimilarityTransform:
    """Least-squares similarity transform aligning ``src`` onto ``dst``.

    Minimizes sum ||dst_i - (s R src_i + t)||^2 over s > 0, R in SO(3), t.
    The reflection case is handled by the sign-correction diagonal
    d = diag(1, 1, sign(det(U V^T))), so the result is always a proper
    rotation. ``with_scale=False`` fixes s = 1.

    Raises LengthMismatch on unequal sizes and DegenerateConfiguration when
    either centered point set spans less than a 2D subspace.
    """
    s_pts = _pts(src)
    d_pts = _pts(dst)
    if s_pts.shape != d_pts.shape:
        raise LengthMismatch(f"src {s_pts.shape} vs dst {d_pts.shape}")
    n = s_pts.shape[0]
    if n < 3:
        raise DegenerateConfiguration(f"need at least 3 correspondences, got {n}")

    mu_s = s_pts.mean(axis=0)
    mu_d = d_pts.mean(axis=0)
    sc = s_pts - mu_s
    dc = d_pts - mu_d

    for name, centered in (("src", sc), ("dst", dc)):
        sv = np.linalg.svd(centered, compute_uv=False)
        if np.sum(sv > max(sv[0] * 1e-9, 1e-12)) < 2:
            raise DegenerateConfiguration(f"{name} points span less than 2D")

    cov = dc.T @ sc / n
    u, d, vt = np.linalg.svd(cov)
    sign = np.ones(3)
    if np.linalg.det(u @ vt) < 0.0:
        sign[2] = -1.0
    rot = u @ np.diag(sign) @ vt

    if with_scale:
        var_s = np.sum(sc * sc) / n
        scale = float(np.sum(d * sign) / var_s)
        if scale <= 0.0:
            raise DegenerateConfiguration("optimal scale is not positive")
    else:
        scale = 1.0
    trans = mu_d - scale * rot @ mu_s
    return SimilarityTransform(scale, rot, trans)


def ransac_umeyama(
    src,
    dst,
    iterations: int = 128,
    inlier_threshold: float = 0.01,
    rng_seed: int = 0,
    with_scale: bool = True,
) -> tuple[SimilarityTransform, np.ndarray]:
    """Robust Umeyama fit over minimal 4-point samples.

    Scores each sampled transform by its inlier count (residual strictly
    below ``inlier_threshold`` meters), then refits on the best inlier set.
    Deterministic for a fixed ``rng_seed``. Returns the refit transform and
    the best consensus mask; raises NoConsensus when the best sample
    supports fewer than 4 inliers.
    """
    s_pts = _pts(src)
    d_pts = _pts(dst)
    if s_pts.shape != d_pts.shape:
        raise LengthMismatch(f"src {s_pts.shape} vs dst {d_pts.shape}")
    n = s_pts.shape[0]
    if n < 4:
        raise DegenerateConfiguration(f"RANSAC needs at least 4 pairs, got {n}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if inlier_threshold <= 0.0:
        raise ValueError("inlier_threshold must be positive")

    rng = np.random.default_rng(rng_seed)
    best_count = 0
    best_mask: np.ndarray | None = None
    for _ in range(iterations):
        idx = rng.choice(n, size=4, replace=False)
        try:
            t = umeyama(s_pts[idx], d_pts[idx], with_scale=with_scale)
        except DegenerateConfiguration:
            continue
        resid = np.linalg.norm(d_pts - t.apply_points(s_pts), axis=1)
        mask = resid < inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask

    if best_mask is None or best_count < 4:
        raise NoConsensus(
            f"best sample had {best_count} inliers (need >= 4) "
            f"after {iterations} iterations"
        )
    refit = umeyama(s_pts[best_mask], d_pts[best_mask], with_scale=with_scale)
    return refit, best_mask


def _brute_d2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Plain (a-b)^2 sums; the KD path reuses this arithmetic on candidate
    # subsets so tie-broken indices agree exactly between the two paths.
    return ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)


def nearest_neighbor_indices(query, reference) -> np.ndarray:
    """Index of the nearest reference point for each query point.

    Ties break to the lowest reference index. Brute force for small
    reference clouds, KD-tree with exact candidate re-ranking above
    BRUTE_FORCE_MAX points.
    """
    a = _pts(query)
    b = _pts(reference)
    if b.shape[0] == 0:
        raise EmptyCloud("reference cloud is empty")
    if a.shape[0] == 0:
        raise EmptyCloud("query cloud is empty")

    if b.shape[0] <= BRUTE_FORCE_MAX:
        out = np.empty(a.shape[0], dtype=np.int64)
        # chunk queries to bound the pairwise matrix at ~8M entries
        step = max(1, 8_000_000 // max(b.shape[0], 1))
        for lo in range(0, a.shape[0], step):
            d2 = _brute_d2(a[lo : lo + step], b)
            out[lo : lo + step] = np.argmin(d2, axis=1)
        return out

    tree = cKDTree(b)
    dist, _ = tree.query(a, k=1)
    # re-rank every candidate within a tiny margin of the reported minimum
    # using the brute-force arithmetic, so tie-breaking matches exactly
    radii = dist * (1.0 + 1e-9) + 1e-300
    candidates = tree.query_ball_point(a, radii)
    out = np.empty(a.shape[0], dtype=np.int64)
    for i, cand in enumerate(candidates):
        cand = np.sort(np.asarray(cand, dtype=np.int64))
        d2 = ((a[i] - b[cand]) ** 2).sum(axis=1)
        out[i] = cand[np.argmin(d2)]
    return out


def chamfer_distance(cloud_a, cloud_b) -> float:
    """Two-sided sum of squared nearest-neighbour distances.

    sum_{a in A} min_b ||a-b||^2 + sum_{b in B} min_a ||a-b||^2.
    Symmetric exactly (the two directional sums commute).
    """
    a = _pts(cloud_a)
    b = _pts(cloud_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyCloud("chamfer distance needs two non-empty clouds")
    ia = nearest_neighbor_indices(a, b)
    ib = nearest_neighbor_indices(b, a)
    fwd = float(np.sum(((a - b[ia]) ** 2).sum(axis=1)))
    bwd = float(np.sum(((b - a[ib]) ** 2).sum(axis=1)))
    return fwd + bwd


def rotation_error_degrees(r1: np.ndarray, r2: np.ndarray) -> float:
    """Geodesic angle between two rotations, in degrees within [0, 180]."""
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    c = (np.trace(r1.T @ r2) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
