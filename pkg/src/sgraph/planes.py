"""Point-cloud pre-filtering and sequential-RANSAC plane detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PlaneHessian, flip_to_positive


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


class EmptyCloud(ValueError):
    """All points were removed by the pre-filter."""


class TooFewPoints(ValueError):
    """Not enough points for the requested operation."""


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, 3) meters, sensor frame
    timestamp: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class FilterConfig:
    voxel_size: float = 0.1
    k_sigma: float = 2.0


@dataclass(frozen=True)
class RansacConfig:
    threshold: float = 0.03
    min_inliers: int = 100
    max_iters: int = 500
    seed: int = 0


@dataclass(frozen=True)
class PlaneDetection:
    plane: PlaneHessian  # sensor frame, d >= 0
    inlier_count: int
    inlier_rms: float
    extent: np.ndarray  # 2-vector, in-plane bounding box side lengths
    centroid: np.ndarray  # 3-vector, sensor frame
    inlier_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))


def voxel_downsample(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Keep one centroid per occupied voxel. Deterministic (sorted keys)."""
    if points.shape[0] == 0:
        return points
    keys = np.floor(points / voxel_size).astype(np.int64)
    # lexicographic unique voxel ids
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    keys_sorted = keys[order]
    pts_sorted = points[order]
    boundaries = np.any(np.diff(keys_sorted, axis=0) != 0, axis=1)
    group_starts = np.concatenate([[0], np.nonzero(boundaries)[0] + 1])
    group_ends = np.concatenate([group_starts[1:], [points.shape[0]]])
    sums = np.add.reduceat(pts_sorted, group_starts, axis=0)
    counts = (group_ends - group_starts)[:, None]
    return sums / counts


def preprocess(cloud: PointCloud, cfg: FilterConfig) -> PointCloud:
    """Voxel downsample, then reject range outliers beyond k_sigma stddevs."""
    if len(cloud) == 0:
        raise EmptyCloud("input cloud is empty")
    pts = voxel_downsample(cloud.points, cfg.voxel_size)
    if pts.shape[0] == 0:
        raise EmptyCloud("no points left after voxel filter")
    ranges = np.linalg.norm(pts, axis=1)
    mean, std = float(ranges.mean()), float(ranges.std())
    keep = np.abs(ranges - mean) <= cfg.k_sigma * std + 1e-12
    pts = pts[keep]
    if pts.shape[0] == 0:
        raise EmptyCloud("no points left after range filter")
    return PointCloud(pts, cloud.timestamp)


def _fit_plane_lsq(points: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """Least-squares plane through points: centroid + smallest scatter eigvec.

    Returns (unit normal, distance) with d >= 0, plus the centroid.
    """
    centroid = points.mean(axis=0)
    centered = points - centroid
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    normal = vecs[:, 0]
    d = float(normal @ centroid)
    normal, d = flip_to_positive(normal, d)
    return normal, d, centroid


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic in-plane orthonormal basis.

    First axis is the projection of +x onto the plane, falling back to +y
    when the normal is (nearly) aligned with x.
    """
    axis = np.array([1.0, 0.0, 0.0])
    u = axis - (axis @ normal) * normal
    if np.linalg.norm(u) < 1e-6:
        axis = np.array([0.0, 1.0, 0.0])
        u = axis - (axis @ normal) * normal
    u = u / np.linalg.norm(u)
    v = _cross3(normal, u)
    return u, v


def plane_extent(points: np.ndarray, plane: PlaneHessian) -> tuple[np.ndarray, np.ndarray]:
    """In-plane bounding-box side lengths (ascending) and the 3D centroid."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if points.shape[0] < 3:
        raise TooFewPoints(f"{points.shape[0]} inliers < 3")
    u, v = _plane_basis(plane.normal)
    pu = points @ u
    pv = points @ v
    extent = np.sort(np.array([pu.max() - pu.min(), pv.max() - pv.min()]))
    return extent, points.mean(axis=0)


def _largest_segment(coords: np.ndarray, gap: float) -> np.ndarray:
    """Indices of the biggest run of sorted 1-D coords with no gap > gap."""
    order = np.argsort(coords)
    breaks = np.nonzero(np.diff(coords[order]) > gap)[0]
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks + 1, [coords.size]])
    best = int(np.argmax(ends - starts))
    return order[starts[best]:ends[best]]


def _dominant_patch(points: np.ndarray, mask: np.ndarray, normal: np.ndarray,
                    gap: float = 2.5) -> np.ndarray:
    """Restrict an inlier mask to its dominant in-plane patch.

    Nearly-collinear walls of different rooms (and wall stripes seen through
    door openings) can satisfy the plane distance test while lying metres
    apart along the plane; a largest-gap split along each in-plane axis
    separates them without fragmenting sparse ring-sampled surfaces.
    """
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return mask
    u, v = _plane_basis(normal)
    keep = _largest_segment(points[idx] @ u, gap)
    idx = idx[keep]
    keep = _largest_segment(points[idx] @ v, gap)
    idx = idx[keep]
    out = np.zeros_like(mask)
    out[idx] = True
    return out


def _trim_fit(
    points: np.ndarray,
    mask: np.ndarray,
    cfg: RansacConfig,
    allowed: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Iteratively refit a plane and trim its inlier mask.

    The band shrinks toward 3 sigma of a robust (median-absolute-deviation)
    noise scale: points from adjacent surfaces near plane junctions sit
    inside the RANSAC band and would bias a plain least-squares fit, while
    for gaussian noise the MAD scale is consistent with sigma and the bulk
    of inliers is kept. Returns (mask, normal, d).
    """
    normal = d = None
    for _ in range(25):
        normal, d, _ = _fit_plane_lsq(points[mask])
        signed = points @ normal - d
        r_in = signed[mask]
        med = float(np.median(r_in))
        mad = float(np.median(np.abs(r_in - med)))
        band = min(max(3.0 * 1.4826 * mad, 1e-9), cfg.threshold)
        # center on the median: outliers shift the least-squares offset,
        # while the median tracks the dominant surface
        cand = np.abs(signed - med) <= band
        if allowed is not None:
            cand &= allowed
        new_mask = _dominant_patch(points, cand, normal)
        if int(new_mask.sum()) < cfg.min_inliers:
            break
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    normal, d, _ = _fit_plane_lsq(points[mask])
    return mask, normal, d


def extract_planes(cloud: PointCloud, cfg: RansacConfig) -> list[PlaneDetection]:
    """Sequential RANSAC: fit, refine, peel inliers, repeat.

    Deterministic for a fixed (cloud, cfg) pair; the RNG is seeded
    per call from cfg.seed and the cloud timestamp.
    """
    if len(cloud) < cfg.min_inliers:
        raise TooFewPoints(f"{len(cloud)} points < min_inliers {cfg.min_inliers}")
    rng = np.random.default_rng((cfg.seed, np.uint64(abs(hash(cloud.timestamp)))))
    pts = cloud.points
    remaining_idx = np.arange(len(cloud))
    fits: list[tuple[np.ndarray, float, np.ndarray]] = []  # (normal, d, index array)
    while remaining_idx.size >= max(cfg.min_inliers, 3):
        remaining = pts[remaining_idx]
        n_pts = remaining.shape[0]
        best_mask = None
        best_count = 0
        needed = cfg.max_iters
        for it in range(cfg.max_iters):
            if it >= needed:
                break
            sample = rng.choice(n_pts, size=3, replace=False)
            p0, p1, p2 = remaining[sample]
            normal = _cross3(p1 - p0, p2 - p0)
            nn = np.linalg.norm(normal)
            if nn < 1e-12:
                continue
            normal = normal / nn
            d = normal @ p0
            dist = np.abs(remaining @ normal - d)
            mask = dist <= cfg.threshold
            count = int(mask.sum())
            if count > best_count:
                best_count = count
                best_mask = mask
                # adaptive stop: trials needed to sample an all-inlier
                # triple with 99.9% confidence at the current inlier ratio
                w = count / n_pts
                if w >= 1.0 - 1e-12:
                    needed = it + 1
                else:
                    needed = min(
                        cfg.max_iters,
                        int(math.ceil(math.log(1e-3) / math.log(1.0 - w**3))),
                    )
        if best_mask is None or best_count < cfg.min_inliers:
            break
        normal, d, _ = _fit_plane_lsq(remaining[best_mask])
        dist = np.abs(remaining @ normal - d)
        mask = dist <= cfg.threshold
        if int(mask.sum()) < cfg.min_inliers:
            mask = best_mask
        mask, normal, d = _trim_fit(remaining, mask, cfg)
        fits.append((normal, d, remaining_idx[mask]))
        remaining_idx = remaining_idx[~mask]

    # joint reassignment: near junctions a point can sit inside one plane's
    # band while lying exactly on another detected plane; give every point
    # to the detection that fits it best and refit until stable
    for _ in range(3):
        if not fits:
            break
        dists = np.stack([np.abs(pts @ n - d) for n, d, _ in fits])
        owner = np.argmin(dists, axis=0)
        new_fits = []
        changed = False
        for k, (normal, d, idx) in enumerate(fits):
            owned = (owner == k) & (dists[k] <= cfg.threshold)
            mask = _dominant_patch(pts, owned, normal)
            if int(mask.sum()) < cfg.min_inliers:
                changed = True
                continue
            mask, normal, d = _trim_fit(pts, mask, cfg, allowed=owned)
            new_idx = np.nonzero(mask)[0]
            changed = changed or not np.array_equal(new_idx, idx)
            new_fits.append((normal, d, new_idx))
        fits = new_fits
        if not changed or not fits:
            break

    detections: list[PlaneDetection] = []
    for normal, d, idx in fits:
        inliers = pts[idx]
        normal, d, _ = _fit_plane_lsq(inliers)
        plane = PlaneHessian(normal, d)
        residuals = inliers @ normal - d
        rms = float(np.sqrt(np.mean(residuals**2)))
        extent, centroid = plane_extent(inliers, plane)
        detections.append(
            PlaneDetection(
                plane=plane,
                inlier_count=int(idx.size),
                inlier_rms=rms,
                extent=extent,
                centroid=centroid,
                inlier_indices=idx,
            )
        )
    return detections
